#include "vical/sensor_models.hpp"

#include <cmath>

namespace vical {

using geometry::skew;

Mat36 intrinsic_matrix_jacobian(const Vec3& v) {
  Mat36 j = Mat36::Zero();
  j(0, 0) = v.x();
  j(1, 1) = v.y();
  j(2, 2) = v.z();
  // misalignment order: (0,1), (0,2), (1,2)
  j(0, 3) = v.y();
  j(0, 4) = v.z();
  j(1, 5) = v.z();
  return j;
}

Vec3 gyro_measure(const Vec3& omega_I, const GyroIntrinsics& intr, const Vec3& b_g) {
  return intr.matrix() * omega_I + b_g;
}

GyroJacobians gyro_measure_jacobians(const Vec3& omega_I, const GyroIntrinsics& intr) {
  GyroJacobians j;
  j.d_omega = intr.matrix();
  j.d_intrinsic = intrinsic_matrix_jacobian(omega_I);
  j.d_bias.setIdentity();
  return j;
}

Vec3 gyro_correct(const Vec3& omega_meas, const GyroIntrinsics& intr, const Vec3& b_g) {
  return upper_triangular_inverse<double>(intr.matrix()) * (omega_meas - b_g);
}

Vec3 accel_measure(const Vec3& a_G, const Quat& q_IG, const AccelIntrinsics& intr,
                   const Vec3& b_a, const WorldModel& world) {
  return intr.matrix() * (intr.q_AI * (q_IG * (a_G - world.gravity))) + b_a;
}

AccelJacobians accel_measure_jacobians(const Vec3& a_G, const Quat& q_IG,
                                       const AccelIntrinsics& intr, const WorldModel& world) {
  const Mat3 T = intr.matrix();
  const Mat3 R_AI = intr.q_AI.toRotationMatrix();
  const Mat3 R_IG = q_IG.toRotationMatrix();
  const Vec3 f_I = R_IG * (a_G - world.gravity);
  const Vec3 f_A = R_AI * f_I;
  AccelJacobians j;
  // R_IG = (R_GI Exp(d))^T = Exp(-d) R_GI^T  ->  f_I + [f_I]x d
  j.d_rotation = T * R_AI * skew(f_I);
  j.d_accel = T * R_AI * R_IG;
  j.d_intrinsic = intrinsic_matrix_jacobian(f_A);
  j.d_q_AI = -T * R_AI * skew(f_I);
  j.d_bias.setIdentity();
  return j;
}

Vec3 accel_correct(const Vec3& a_meas, const AccelIntrinsics& intr, const Vec3& b_a) {
  return intr.q_AI.conjugate() * (upper_triangular_inverse<double>(intr.matrix()) * (a_meas - b_a));
}

namespace {

// Below this distortion value the w -> 0 series is used.
constexpr double kSmallDistortion = 1e-4;

}  // namespace

double fov_distort(double r, double w) {
  if (w < kSmallDistortion) {
    return r * (1.0 + w * w / 12.0 - w * w * r * r / 3.0);
  }
  return std::atan(2.0 * r * std::tan(0.5 * w)) / w;
}

double fov_undistort(double r_d, double w) {
  if (w < kSmallDistortion) {
    // inverse of the series above to the same order
    return r_d * (1.0 - w * w / 12.0 + w * w * r_d * r_d / 3.0);
  }
  return std::tan(r_d * w) / (2.0 * std::tan(0.5 * w));
}

FovFactor fov_factor(double r, double w) {
  FovFactor out;
  if (w < kSmallDistortion) {
    const double w2 = w * w;
    const double r2 = r * r;
    out.s = 1.0 + w2 / 12.0 - w2 * r2 / 3.0;
    out.d_r_over_r = -2.0 * w2 / 3.0;
    out.d_w = w / 6.0 - 2.0 * w * r2 / 3.0;
    return out;
  }
  const double t = std::tan(0.5 * w);
  const double a = 2.0 * t;
  const double da_dw = 1.0 + t * t;
  const double ar = a * r;
  const double k = a / w;
  if (ar < 1e-4) {
    const double a2 = a * a;
    const double r2 = r * r;
    out.s = k * (1.0 - a2 * r2 / 3.0 + a2 * a2 * r2 * r2 / 5.0);
    out.d_r_over_r = k * (-2.0 * a2 / 3.0 + 4.0 * a2 * a2 * r2 / 5.0);
  } else {
    out.s = std::atan(ar) / (w * r);
    out.d_r_over_r = (k / (1.0 + ar * ar) - out.s) / (r * r);
  }
  out.d_w = da_dw / (w * (1.0 + ar * ar)) - out.s / w;
  return out;
}

std::optional<Vec2> project_camera_point(const Vec3& p_C, const CameraIntrinsics& intr) {
  if (!(p_C.z() > kMinCameraDepth)) return std::nullopt;
  const Vec2 m = p_C.head<2>() / p_C.z();
  const FovFactor fov = fov_factor(m.norm(), intr.distortion);
  return Vec2(intr.focal.cwiseProduct(fov.s * m) + intr.principal);
}

Vec3 backproject(const Vec2& pixel, const CameraIntrinsics& intr) {
  const Vec2 u = (pixel - intr.principal).cwiseQuotient(intr.focal);
  const double r_d = u.norm();
  Vec2 m = u;
  if (r_d > 0.0) m *= fov_undistort(r_d, intr.distortion) / r_d;
  return Vec3(m.x(), m.y(), 1.0).normalized();
}

Vec3 landmark_in_camera(const Vec3& l_G, const Quat& q_GI, const Vec3& p_GI,
                        const CameraExtrinsics& extr) {
  return extr.q_CI * (q_GI.conjugate() * (l_G - p_GI)) + extr.p_CI;
}

std::optional<Vec2> project(const Vec3& l_G, const Quat& q_GI, const Vec3& p_GI,
                            const CameraExtrinsics& extr, const CameraIntrinsics& intr) {
  return project_camera_point(landmark_in_camera(l_G, q_GI, p_GI, extr), intr);
}

std::optional<Vec2> project(const Vec3& l_G, const geometry::Transform& T_IG,
                            const CameraExtrinsics& extr, const CameraIntrinsics& intr) {
  const Vec3 p_C = extr.q_CI * geometry::transform_point(T_IG, l_G) + extr.p_CI;
  return project_camera_point(p_C, intr);
}

Projection project_with_jacobians(const Vec3& l_G, const Quat& q_GI, const Vec3& p_GI,
                                  const CameraExtrinsics& extr, const CameraIntrinsics& intr,
                                  ProjectionJacobians* jacobians) {
  Projection out;
  const Mat3 R_GI = q_GI.toRotationMatrix();
  const Mat3 R_CI = extr.q_CI.toRotationMatrix();
  const Vec3 p_I = R_GI.transpose() * (l_G - p_GI);
  const Vec3 p_C = R_CI * p_I + extr.p_CI;
  out.depth = p_C.z();
  if (!(p_C.z() > kMinCameraDepth)) return out;
  out.valid = true;

  const double z_inv = 1.0 / p_C.z();
  const Vec2 m = p_C.head<2>() * z_inv;
  const FovFactor fov = fov_factor(m.norm(), intr.distortion);
  const Vec2 u = fov.s * m;
  out.pixel = intr.focal.cwiseProduct(u) + intr.principal;
  if (jacobians == nullptr) return out;

  Mat23 dm_dpc;
  dm_dpc << z_inv, 0.0, -m.x() * z_inv,  //
      0.0, z_inv, -m.y() * z_inv;
  const Mat2 du_dm = fov.s * Mat2::Identity() + fov.d_r_over_r * m * m.transpose();
  const Mat23 dpix_dpc = intr.focal.asDiagonal() * du_dm * dm_dpc;

  ProjectionJacobians& j = *jacobians;
  j.d_rotation = dpix_dpc * R_CI * skew(p_I);
  j.d_position = -dpix_dpc * R_CI * R_GI.transpose();
  j.d_landmark = -j.d_position;
  j.d_q_CI = -dpix_dpc * R_CI * skew(p_I);
  j.d_p_CI = dpix_dpc;
  j.d_focal = u.asDiagonal();
  j.d_principal.setIdentity();
  j.d_distortion = intr.focal.cwiseProduct(fov.d_w * m);
  return out;
}

}  // namespace vical
