#include "vical/preintegration.hpp"

#include <stdexcept>
#include <vector>

#include <ceres/jet.h>

#include "vical/sensor_models.hpp"

namespace vical {
namespace {

template <typename T>
using V3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using V4 = Eigen::Matrix<T, 4, 1>;  // quaternion as (w, x, y, z)
template <typename T>
using M3 = Eigen::Matrix<T, 3, 3>;

using Jet = ceres::Jet<double, kPreintInputDim>;

template <typename T>
V4<T> quat_mul(const V4<T>& a, const V4<T>& b) {
  return V4<T>(a(0) * b(0) - a(1) * b(1) - a(2) * b(2) - a(3) * b(3),
               a(0) * b(1) + a(1) * b(0) + a(2) * b(3) - a(3) * b(2),
               a(0) * b(2) - a(1) * b(3) + a(2) * b(0) + a(3) * b(1),
               a(0) * b(3) + a(1) * b(2) - a(2) * b(1) + a(3) * b(0));
}

// Rotation matrix of q / |q|.
template <typename T>
M3<T> quat_rotation(const V4<T>& q_raw) {
  const V4<T> q = q_raw / q_raw.norm();
  const T w = q(0), x = q(1), y = q(2), z = q(3);
  M3<T> r;
  r << T(1.0) - T(2.0) * (y * y + z * z), T(2.0) * (x * y - w * z), T(2.0) * (x * z + w * y),
      T(2.0) * (x * y + w * z), T(1.0) - T(2.0) * (x * x + z * z), T(2.0) * (y * z - w * x),
      T(2.0) * (x * z - w * y), T(2.0) * (y * z + w * x), T(1.0) - T(2.0) * (x * x + y * y);
  return r;
}

template <typename T>
struct DeltaState {
  V4<T> q;
  V3<T> v;
  V3<T> p;
};

template <typename T>
DeltaState<T> derivative(const DeltaState<T>& s, const V3<T>& omega, const V3<T>& f) {
  DeltaState<T> d;
  d.q = T(0.5) * quat_mul<T>(s.q, V4<T>(T(0.0), omega(0), omega(1), omega(2)));
  d.v = quat_rotation<T>(s.q) * f;
  d.p = s.v;
  return d;
}

template <typename T>
DeltaState<T> axpy(const DeltaState<T>& s, double h, const DeltaState<T>& d) {
  return {s.q + T(h) * d.q, s.v + T(h) * d.v, s.p + T(h) * d.p};
}

// RK4 sub-steps per sample interval.
constexpr std::size_t kSubsteps = 3;
constexpr std::size_t kInterior = 2 * kSubsteps - 1;

// Raw readings at every sample and at the interior nodes t_k + j h / (2 kSubsteps).
struct InputTrack {
  std::vector<double> h;
  std::vector<Vec3> gyro, accel;  // at samples
  std::vector<Vec3> gyro_in, accel_in;  // kInterior per interval
  // interval midpoints (for the covariance propagation)
  const Vec3& gyro_mid(std::size_t k) const { return gyro_in[k * kInterior + kSubsteps - 1]; }
  const Vec3& accel_mid(std::size_t k) const { return accel_in[k * kInterior + kSubsteps - 1]; }
};

constexpr std::size_t kMaxStencil = 6;

InputTrack build_track(std::span<const ImuSample> samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("preintegrate: need at least two IMU samples");
  InputTrack track;
  track.h.resize(n - 1);
  track.gyro.resize(n);
  track.accel.resize(n);
  track.gyro_in.resize((n - 1) * kInterior);
  track.accel_in.resize((n - 1) * kInterior);
  for (std::size_t k = 0; k < n; ++k) {
    track.gyro[k] = samples[k].gyro;
    track.accel[k] = samples[k].accel;
    if (k + 1 < n) {
      track.h[k] = samples[k + 1].t - samples[k].t;
      if (!(track.h[k] > 0.0)) {
        throw std::invalid_argument("preintegrate: timestamps must be strictly increasing");
      }
    }
  }
  // Lagrange polynomial through up to kMaxStencil samples centred on each interval.
  const std::size_t stencil = std::min(kMaxStencil, n);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const std::size_t half = stencil / 2 - 1;
    const std::size_t first = std::min<std::size_t>(k < half ? 0 : k - half, n - stencil);
    for (std::size_t node = 0; node < kInterior; ++node) {
      const double t_node = samples[k].t + track.h[k] * static_cast<double>(node + 1) / (2 * kSubsteps);
      Vec3 g = Vec3::Zero();
      Vec3 a = Vec3::Zero();
      for (std::size_t i = first; i < first + stencil; ++i) {
        double weight = 1.0;
        for (std::size_t j = first; j < first + stencil; ++j) {
          if (j == i) continue;
          weight *= (t_node - samples[j].t) / (samples[i].t - samples[j].t);
        }
        g += weight * track.gyro[i];
        a += weight * track.accel[i];
      }
      track.gyro_in[k * kInterior + node] = g;
      track.accel_in[k * kInterior + node] = a;
    }
  }
  return track;
}

template <typename T>
DeltaState<T> integrate(const InputTrack& track, const M3<T>& gyro_inv, const M3<T>& accel_map,
                        const V3<T>& b_a, const V3<T>& b_g) {
  const auto omega_at = [&](const Vec3& raw) -> V3<T> {
    return gyro_inv * (raw.cast<T>() - b_g);
  };
  const auto force_at = [&](const Vec3& raw) -> V3<T> {
    return accel_map * (raw.cast<T>() - b_a);
  };
  DeltaState<T> s{V4<T>(T(1.0), T(0.0), T(0.0), T(0.0)), V3<T>::Zero(), V3<T>::Zero()};
  V3<T> omega0 = omega_at(track.gyro[0]);
  V3<T> force0 = force_at(track.accel[0]);
  for (std::size_t k = 0; k < track.h.size(); ++k) {
    const double h = track.h[k] / kSubsteps;
    for (std::size_t sub = 0; sub < kSubsteps; ++sub) {
      const std::size_t mid = k * kInterior + 2 * sub;
      const V3<T> omega_m = omega_at(track.gyro_in[mid]);
      const V3<T> force_m = force_at(track.accel_in[mid]);
      const bool last = sub + 1 == kSubsteps;
      const V3<T> omega1 = omega_at(last ? track.gyro[k + 1] : track.gyro_in[mid + 1]);
      const V3<T> force1 = force_at(last ? track.accel[k + 1] : track.accel_in[mid + 1]);

      const DeltaState<T> k1 = derivative<T>(s, omega0, force0);
      const DeltaState<T> k2 = derivative<T>(axpy<T>(s, 0.5 * h, k1), omega_m, force_m);
      const DeltaState<T> k3 = derivative<T>(axpy<T>(s, 0.5 * h, k2), omega_m, force_m);
      const DeltaState<T> k4 = derivative<T>(axpy<T>(s, h, k3), omega1, force1);
      const T w(h / 6.0);
      s.q += w * (k1.q + T(2.0) * k2.q + T(2.0) * k3.q + k4.q);
      s.v += w * (k1.v + T(2.0) * k2.v + T(2.0) * k3.v + k4.v);
      s.p += w * (k1.p + T(2.0) * k2.p + T(2.0) * k3.p + k4.p);
      s.q /= s.q.norm();
      omega0 = omega1;
      force0 = force1;
    }
  }
  return s;
}

// Discrete error-state propagation of [phi, v, p] driven by white sensor noise.
Mat15 propagate_covariance(const InputTrack& track, const Mat3& gyro_inv, const Mat3& accel_map,
                           const Vec3& b_a, const Vec3& b_g, const NoiseSpec& noise,
                           double duration) {
  using Mat9 = Eigen::Matrix<double, 9, 9>;
  using Mat93 = Eigen::Matrix<double, 9, 3>;
  Mat9 cov = Mat9::Zero();
  Mat3 delta_r = Mat3::Identity();
  const Mat3 gyro_shape = gyro_inv * gyro_inv.transpose();
  const Mat3 accel_shape = accel_map * accel_map.transpose();
  for (std::size_t k = 0; k < track.h.size(); ++k) {
    const double h = track.h[k];
    const Vec3 omega = gyro_inv * (track.gyro_mid(k) - b_g);
    const Vec3 force = accel_map * (track.accel_mid(k) - b_a);
    const Mat3 step_r = geometry::exp_so3(omega * h);
    Mat9 a = Mat9::Identity();
    a.block<3, 3>(0, 0) = step_r.transpose();
    a.block<3, 3>(3, 0) = -delta_r * geometry::skew(force) * h;
    a.block<3, 3>(6, 0) = -0.5 * delta_r * geometry::skew(force) * h * h;
    a.block<3, 3>(6, 3) = Mat3::Identity() * h;
    Mat93 b_gyro = Mat93::Zero();
    b_gyro.block<3, 3>(0, 0) = geometry::right_jacobian(omega * h) * h;
    Mat93 b_accel = Mat93::Zero();
    b_accel.block<3, 3>(3, 0) = delta_r * h;
    b_accel.block<3, 3>(6, 0) = 0.5 * delta_r * h * h;
    // A white density sigma sampled with period h has per-sample variance sigma^2 / h.
    const Mat3 q_gyro = gyro_shape * (noise.gyro_noise * noise.gyro_noise / h);
    const Mat3 q_accel = accel_shape * (noise.accel_noise * noise.accel_noise / h);
    cov = a * cov * a.transpose() + b_gyro * q_gyro * b_gyro.transpose() +
          b_accel * q_accel * b_accel.transpose();
    delta_r = delta_r * step_r;
  }
  // Reorder [phi, v, p] -> [phi, p, v] and append the bias random walk.
  Mat15 out = Mat15::Zero();
  const int src[3] = {0, 6, 3};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      out.block<3, 3>(3 * i, 3 * j) = cov.block<3, 3>(src[i], src[j]);
    }
  }
  out.block<3, 3>(9, 9).diagonal().setConstant(noise.accel_bias_walk * noise.accel_bias_walk *
                                                duration);
  out.block<3, 3>(12, 12).diagonal().setConstant(noise.gyro_bias_walk * noise.gyro_bias_walk *
                                                  duration);
  return 0.5 * (out + out.transpose());
}

}  // namespace

PreintegratedImu preintegrate(std::span<const ImuSample> samples, const GyroIntrinsics& gyro,
                              const AccelIntrinsics& accel, const Vec3& b_a, const Vec3& b_g,
                              const NoiseSpec& noise, bool with_jacobian, bool with_covariance) {
  const InputTrack track = build_track(samples);
  PreintegratedImu out;
  out.dt = samples.back().t - samples.front().t;

  const Mat3 gyro_inv = upper_triangular_inverse<double>(gyro.matrix());
  const Mat3 accel_map =
      accel.q_AI.conjugate().toRotationMatrix() * upper_triangular_inverse<double>(accel.matrix());

  if (with_jacobian) {
    using namespace preint_input;
    V3<Jet> ba_j, bg_j, sg_j, mg_j, sa_j, ma_j, dq_j;
    for (int i = 0; i < 3; ++i) {
      ba_j(i) = Jet(b_a(i), kAccelBias + i);
      bg_j(i) = Jet(b_g(i), kGyroBias + i);
      sg_j(i) = Jet(gyro.scale(i), kInertialCalib + 0 + i);
      mg_j(i) = Jet(gyro.misalignment(i), kInertialCalib + 3 + i);
      sa_j(i) = Jet(accel.scale(i), kInertialCalib + 6 + i);
      ma_j(i) = Jet(accel.misalignment(i), kInertialCalib + 9 + i);
      dq_j(i) = Jet(0.0, kInertialCalib + 12 + i);
    }
    const auto assemble = [](const V3<Jet>& s, const V3<Jet>& m) {
      M3<Jet> t = M3<Jet>::Zero();
      t(0, 0) = s(0);
      t(1, 1) = s(1);
      t(2, 2) = s(2);
      t(0, 1) = m(0);
      t(0, 2) = m(1);
      t(1, 2) = m(2);
      return t;
    };
    const M3<Jet> gyro_inv_j = upper_triangular_inverse<Jet>(assemble(sg_j, mg_j));
    const Eigen::Quaternion<Jet> dq = geometry::exp_quat<Jet>(dq_j);
    const Quat& q0 = accel.q_AI;
    const V4<Jet> q_ai = quat_mul<Jet>(
        V4<Jet>(Jet(q0.w()), Jet(q0.x()), Jet(q0.y()), Jet(q0.z())),
        V4<Jet>(dq.w(), dq.x(), dq.y(), dq.z()));
    const M3<Jet> accel_map_j =
        quat_rotation<Jet>(q_ai).transpose() * upper_triangular_inverse<Jet>(assemble(sa_j, ma_j));

    const DeltaState<Jet> s = integrate<Jet>(track, gyro_inv_j, accel_map_j, ba_j, bg_j);
    const Quat q(s.q(0).a, s.q(1).a, s.q(2).a, s.q(3).a);
    out.delta_q = q.normalized();
    for (int i = 0; i < 3; ++i) {
      out.delta_v(i) = s.v(i).a;
      out.delta_p(i) = s.p(i).a;
    }
    // Tangent of delta_q: 2 vec(q_bar^* (x) q)
    const V4<Jet> q_bar_conj(Jet(out.delta_q.w()), Jet(-out.delta_q.x()), Jet(-out.delta_q.y()),
                             Jet(-out.delta_q.z()));
    const V4<Jet> local = quat_mul<Jet>(q_bar_conj, s.q);
    for (int i = 0; i < 3; ++i) {
      out.jacobian.row(i) = 2.0 * local(i + 1).v.transpose();
      out.jacobian.row(3 + i) = s.p(i).v.transpose();
      out.jacobian.row(6 + i) = s.v(i).v.transpose();
    }
    out.has_jacobian = true;
  } else {
    const DeltaState<double> s = integrate<double>(track, gyro_inv, accel_map, b_a, b_g);
    out.delta_q = Quat(s.q(0), s.q(1), s.q(2), s.q(3)).normalized();
    out.delta_v = s.v;
    out.delta_p = s.p;
  }

  if (with_covariance) {
    out.covariance = propagate_covariance(track, gyro_inv, accel_map, b_a, b_g, noise, out.dt);
  }
  return out;
}

}  // namespace vical
