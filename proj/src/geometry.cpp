#include "vical/geometry.hpp"

#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace vical::geometry {

Vec3 log_quat(const Quat& q_in) {
  const Quat q = canonical(q_in);
  const Vec3 v = q.vec();
  const double s = v.norm();
  const double w = q.w();
  if (s < 1e-8) {
    // atan2(s, w) / s expanded around s = 0
    const double w_inv = 1.0 / w;
    return 2.0 * w_inv * (1.0 - s * s * w_inv * w_inv / 3.0) * v;
  }
  const double theta = 2.0 * std::atan2(s, w);
  return (theta / s) * v;
}

Mat3 exp_so3(const Vec3& phi) { return exp_quat<double>(phi).toRotationMatrix(); }

Vec3 log_so3(const Mat3& rotation) { return log_quat(Quat(rotation)); }

Mat3 right_jacobian(const Vec3& phi) {
  const double theta_sq = phi.squaredNorm();
  const Mat3 k = skew(phi);
  if (theta_sq < 1e-10) {
    return Mat3::Identity() - 0.5 * k + k * k / 6.0;
  }
  const double theta = std::sqrt(theta_sq);
  return Mat3::Identity() - (1.0 - std::cos(theta)) / theta_sq * k +
         (theta - std::sin(theta)) / (theta_sq * theta) * k * k;
}

Mat3 right_jacobian_inverse(const Vec3& phi) {
  const double theta_sq = phi.squaredNorm();
  const Mat3 k = skew(phi);
  if (theta_sq < 1e-10) {
    return Mat3::Identity() + 0.5 * k + k * k / 12.0;
  }
  const double theta = std::sqrt(theta_sq);
  const double coeff =
      1.0 / theta_sq - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * k + coeff * k * k;
}

Quat canonical(const Quat& q) {
  // Leave unit quaternions untouched so repeated calls are idempotent.
  Quat out = std::abs(q.squaredNorm() - 1.0) > 1e-13 ? q.normalized() : q;
  if (out.w() < 0.0) out.coeffs() *= -1.0;
  return out;
}

Transform Transform::inverse() const {
  Transform inv;
  inv.rotation = rotation.conjugate();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

Transform Transform::operator*(const Transform& other) const {
  Transform out;
  out.rotation = (rotation * other.rotation).normalized();
  out.translation = rotation * other.translation + translation;
  return out;
}

Mat4 Transform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation.toRotationMatrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Vec3 transform_point(const Transform& transform, const Vec3& point) {
  return transform.rotation * point + transform.translation;
}

Vec6 boxminus(const Transform& a, const Transform& b) {
  Vec6 out;
  out.head<3>() = a.translation - b.translation;
  out.tail<3>() = boxminus(a.rotation, b.rotation);
  return out;
}

Transform boxplus(const Transform& transform, const Vec6& delta) {
  Transform out;
  out.translation = transform.translation + delta.head<3>();
  out.rotation = boxplus(transform.rotation, Vec3(delta.tail<3>()));
  return out;
}

double rodrigues_angle(const Quat& q) {
  const Quat n = q.normalized();
  return 2.0 * std::atan2(n.vec().norm(), std::abs(n.w()));
}

Quat average_quaternion(std::span<const Quat> quaternions) {
  if (quaternions.empty()) {
    throw std::invalid_argument("average_quaternion: empty list");
  }
  Mat4 accum = Mat4::Zero();
  for (const Quat& q_raw : quaternions) {
    const Quat q = q_raw.normalized();
    const Vec4 v(q.w(), q.x(), q.y(), q.z());
    accum += v * v.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat4> eig(accum);
  const Vec4 best = eig.eigenvectors().col(3);  // eigenvalues sorted ascending
  return canonical(Quat(best(0), best(1), best(2), best(3)));
}

}  // namespace vical::geometry
