#pragma once

#include <cmath>
#include <span>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace vical {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Rotation conventions used throughout the library:
//  - Hamilton quaternions, scalar-first (w, x, y, z).
//  - q_AB (and R_AB) maps a vector expressed in frame B into frame A.
//  - Tangent perturbations are right-local: R = R_bar * Exp(delta).
namespace geometry {

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

template <typename T>
Eigen::Matrix<T, 3, 3> skew_t(const Eigen::Matrix<T, 3, 1>& v) {
  Eigen::Matrix<T, 3, 3> m;
  const T zero(0.0);
  m << zero, -v(2), v(1), v(2), zero, -v(0), -v(1), v(0), zero;
  return m;
}

// Exponential map R^3 -> S^3. Works for double and for Jet-like scalars.
template <typename T>
Eigen::Quaternion<T> exp_quat(const Eigen::Matrix<T, 3, 1>& phi) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta_sq = phi.squaredNorm();
  T real;
  T imag_scale;
  if (theta_sq < T(1e-12)) {
    real = T(1.0) - theta_sq / T(8.0);
    imag_scale = T(0.5) - theta_sq / T(48.0);
  } else {
    const T theta = sqrt(theta_sq);
    const T half = theta / T(2.0);
    real = cos(half);
    imag_scale = sin(half) / theta;
  }
  return Eigen::Quaternion<T>(real, imag_scale * phi(0), imag_scale * phi(1),
                              imag_scale * phi(2));
}

// Logarithm S^3 -> R^3, returns the rotation vector with angle in [0, pi].
Vec3 log_quat(const Quat& q);

Mat3 exp_so3(const Vec3& phi);
Vec3 log_so3(const Mat3& rotation);

// Right Jacobian of SO(3) and its inverse.
Mat3 right_jacobian(const Vec3& phi);
Mat3 right_jacobian_inverse(const Vec3& phi);

// Canonical representative of the double cover: w >= 0.
Quat canonical(const Quat& q);

inline Quat boxplus(const Quat& q, const Vec3& delta) {
  return (q * exp_quat<double>(delta)).normalized();
}

// a ⊟ b = Log(b^-1 * a), so that b ⊞ (a ⊟ b) = a.
inline Vec3 boxminus(const Quat& a, const Quat& b) {
  return log_quat(b.conjugate() * a);
}

template <int N>
Eigen::Matrix<double, N, 1> boxminus(const Eigen::Matrix<double, N, 1>& a,
                                     const Eigen::Matrix<double, N, 1>& b) {
  return a - b;
}

// Rigid transform T_AB: p_A = R_AB * p_B + t.
struct Transform {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  static Transform identity() { return {}; }
  Transform inverse() const;
  Transform operator*(const Transform& other) const;
  Mat4 matrix() const;
};

Vec3 transform_point(const Transform& transform, const Vec3& point);

// [translation difference; rotation log-map]
Vec6 boxminus(const Transform& a, const Transform& b);
Transform boxplus(const Transform& transform, const Vec6& delta);

// Rotation angle of q in [0, pi].
double rodrigues_angle(const Quat& q);

// Maximizer of sum_i (q_i . q)^2 over unit q (dominant eigenvector of
// sum_i q_i q_i^T). Throws std::invalid_argument on an empty list.
Quat average_quaternion(std::span<const Quat> quaternions);

}  // namespace geometry
}  // namespace vical
