#pragma once

#include <optional>

#include "vical/calibration.hpp"

namespace vical {

using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

// Points closer than this to the camera plane (or behind it) produce no measurement.
inline constexpr double kMinCameraDepth = 1e-6;

// ---------------------------------------------------------------------------
// Gyroscope: omega_meas = T_g * omega_I + b_g

Vec3 gyro_measure(const Vec3& omega_I, const GyroIntrinsics& intr, const Vec3& b_g);

// d(T v)/d(scale) and d(T v)/d(misalignment) for the upper-triangular
// intrinsic matrix T; both 3x3, stacked as [scale | misalignment].
Mat36 intrinsic_matrix_jacobian(const Vec3& v);

struct GyroJacobians {
  Mat3 d_omega;       // w.r.t. omega_I
  Mat36 d_intrinsic;  // w.r.t. [s_g, m_g]
  Mat3 d_bias;        // identity
};
GyroJacobians gyro_measure_jacobians(const Vec3& omega_I, const GyroIntrinsics& intr);

// Inverse model used by the integrator: T_g^-1 (omega_meas - b_g).
Vec3 gyro_correct(const Vec3& omega_meas, const GyroIntrinsics& intr, const Vec3& b_g);

// ---------------------------------------------------------------------------
// Accelerometer: a_meas = T_a * R_AI * R_IG * (a_G - g) + b_a

Vec3 accel_measure(const Vec3& a_G, const Quat& q_IG, const AccelIntrinsics& intr,
                   const Vec3& b_a, const WorldModel& world = {});

struct AccelJacobians {
  Mat3 d_rotation;    // w.r.t. right-local perturbation of q_GI (= q_IG^-1)
  Mat3 d_accel;       // w.r.t. a_G
  Mat36 d_intrinsic;  // w.r.t. [s_a, m_a]
  Mat3 d_q_AI;        // w.r.t. right-local perturbation of q_AI
  Mat3 d_bias;        // identity
};
AccelJacobians accel_measure_jacobians(const Vec3& a_G, const Quat& q_IG,
                                       const AccelIntrinsics& intr,
                                       const WorldModel& world = {});

// Specific force in the body frame: R_IA * T_a^-1 (a_meas - b_a).
Vec3 accel_correct(const Vec3& a_meas, const AccelIntrinsics& intr, const Vec3& b_a);

// Inverse of an upper-triangular 3x3 with non-zero diagonal, in closed form.
template <typename T>
Eigen::Matrix<T, 3, 3> upper_triangular_inverse(const Eigen::Matrix<T, 3, 3>& m) {
  Eigen::Matrix<T, 3, 3> inv = Eigen::Matrix<T, 3, 3>::Zero();
  const T i00 = T(1.0) / m(0, 0);
  const T i11 = T(1.0) / m(1, 1);
  const T i22 = T(1.0) / m(2, 2);
  inv(0, 0) = i00;
  inv(1, 1) = i11;
  inv(2, 2) = i22;
  inv(0, 1) = -m(0, 1) * i00 * i11;
  inv(1, 2) = -m(1, 2) * i11 * i22;
  inv(0, 2) = (m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1)) * i00 * i11 * i22;
  return inv;
}

// ---------------------------------------------------------------------------
// Field-of-view distortion: r_d = atan(2 r tan(w/2)) / w

double fov_distort(double r, double w);
double fov_undistort(double r_d, double w);

// Ratio s = r_d / r (-> 1 as w -> 0) and its partial derivatives. `d_r_over_r`
// holds (ds/dr) / r, which stays finite as r -> 0.
struct FovFactor {
  double s;
  double d_r_over_r;
  double d_w;
};
FovFactor fov_factor(double r, double w);

// Camera-frame point -> pixel. Returns nullopt for points with z <= kMinCameraDepth.
std::optional<Vec2> project_camera_point(const Vec3& p_C, const CameraIntrinsics& intr);

// Pixel -> unit bearing in the camera frame.
Vec3 backproject(const Vec2& pixel, const CameraIntrinsics& intr);

// Landmark position in the camera frame for keyframe pose (q_GI, p_GI).
Vec3 landmark_in_camera(const Vec3& l_G, const Quat& q_GI, const Vec3& p_GI,
                        const CameraExtrinsics& extr);

std::optional<Vec2> project(const Vec3& l_G, const Quat& q_GI, const Vec3& p_GI,
                            const CameraExtrinsics& extr, const CameraIntrinsics& intr);
// Same with the pose given as T_IG (maps G-frame points into the IMU frame).
std::optional<Vec2> project(const Vec3& l_G, const geometry::Transform& T_IG,
                            const CameraExtrinsics& extr, const CameraIntrinsics& intr);

struct ProjectionJacobians {
  Mat23 d_rotation;     // keyframe orientation, right-local on q_GI
  Mat23 d_position;     // p_GI
  Mat23 d_landmark;     // l_G
  Mat23 d_q_CI;         // right-local on q_CI
  Mat23 d_p_CI;
  Mat2 d_focal;
  Mat2 d_principal;
  Vec2 d_distortion;
};

struct Projection {
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;
  bool valid = false;  // false: behind the camera, pixel and Jacobians undefined
};

Projection project_with_jacobians(const Vec3& l_G, const Quat& q_GI, const Vec3& p_GI,
                                  const CameraExtrinsics& extr, const CameraIntrinsics& intr,
                                  ProjectionJacobians* jacobians);

}  // namespace vical
