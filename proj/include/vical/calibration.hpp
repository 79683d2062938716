#pragma once

#include <array>
#include <string>
#include <string_view>

#include <json.hpp>

#include "vical/geometry.hpp"

namespace vical {

// Upper-triangular scale/misalignment matrix
//   [ s_x  m_x  m_y ]
//   [  0   s_y  m_z ]
//   [  0    0   s_z ]
Mat3 assemble_intrinsic_matrix(const Vec3& scale, const Vec3& misalignment);
// Inverse of assemble_intrinsic_matrix; throws if `matrix` is not upper-triangular
// with a positive diagonal.
void disassemble_intrinsic_matrix(const Mat3& matrix, Vec3& scale, Vec3& misalignment);

struct GyroIntrinsics {
  Vec3 scale = Vec3::Ones();
  Vec3 misalignment = Vec3::Zero();

  Mat3 matrix() const { return assemble_intrinsic_matrix(scale, misalignment); }
};

struct AccelIntrinsics {
  Vec3 scale = Vec3::Ones();
  Vec3 misalignment = Vec3::Zero();
  Quat q_AI = Quat::Identity();  // gyroscope (body) frame -> accelerometer frame

  Mat3 matrix() const { return assemble_intrinsic_matrix(scale, misalignment); }
};

// Pinhole + one-parameter field-of-view distortion.
struct CameraIntrinsics {
  Vec2 focal = Vec2(250.0, 250.0);      // px
  Vec2 principal = Vec2(320.0, 240.0);  // px
  double distortion = 0.9;              // w, rad
};

struct CameraExtrinsics {
  Quat q_CI = Quat::Identity();
  Vec3 p_CI = Vec3::Zero();  // C-frame position of the IMU origin, m
};

struct CalibrationParams {
  CameraExtrinsics extrinsics;
  CameraIntrinsics camera;
  GyroIntrinsics gyro;
  AccelIntrinsics accel;
};

// Tangent layout of the 26 calibration degrees of freedom: camera block
// first, then the inertial block.
namespace calib_index {
inline constexpr int kRotationCI = 0;      // 3, right-local
inline constexpr int kTranslationCI = 3;   // 3
inline constexpr int kFocal = 6;           // 2
inline constexpr int kPrincipal = 8;       // 2
inline constexpr int kDistortion = 10;     // 1
inline constexpr int kGyroScale = 11;      // 3
inline constexpr int kGyroMisalign = 14;   // 3
inline constexpr int kAccelScale = 17;     // 3
inline constexpr int kAccelMisalign = 20;  // 3
inline constexpr int kRotationAI = 23;     // 3, right-local
inline constexpr int kCameraBegin = 0;
inline constexpr int kCameraDim = 11;
inline constexpr int kInertialBegin = 11;
inline constexpr int kInertialDim = 15;
}  // namespace calib_index

inline constexpr int kCalibrationDim = 26;
using CalibVector = Eigen::Matrix<double, kCalibrationDim, 1>;
using CalibMatrix = Eigen::Matrix<double, kCalibrationDim, kCalibrationDim>;

// Parameter blocks in tangent order, used for naming and per-block metrics.
struct CalibBlock {
  std::string_view name;
  int offset;
  int size;
  bool rotation;
};
inline constexpr std::array<CalibBlock, 10> kCalibBlocks = {{
    {"q_CI", calib_index::kRotationCI, 3, true},
    {"p_CI", calib_index::kTranslationCI, 3, false},
    {"f", calib_index::kFocal, 2, false},
    {"c", calib_index::kPrincipal, 2, false},
    {"w", calib_index::kDistortion, 1, false},
    {"s_g", calib_index::kGyroScale, 3, false},
    {"m_g", calib_index::kGyroMisalign, 3, false},
    {"s_a", calib_index::kAccelScale, 3, false},
    {"m_a", calib_index::kAccelMisalign, 3, false},
    {"q_AI", calib_index::kRotationAI, 3, true},
}};

// e.g. "m_g[1]" for index 15.
std::string calibration_dof_name(int index);
// Inverse of calibration_dof_name; also accepts a bare block name for 1-dof
// blocks ("w"). Throws std::invalid_argument on unknown names.
int calibration_dof_index(std::string_view name);
// Block lookup by name ("m_g"); throws on unknown names.
const CalibBlock& calibration_block(std::string_view name);

// Forward-looking camera on a body with x forward, y left, z up:
// camera z = body x, camera x = -body y, camera y = -body z.
Quat nominal_camera_rotation();
// Design values: unit scales, no misalignment, identity q_AI, nominal camera
// mounting with zero lever arm and the default pinhole/FOV intrinsics.
CalibrationParams nominal_calibration();

CalibrationParams boxplus(const CalibrationParams& params, const CalibVector& delta);
CalibVector boxminus(const CalibrationParams& a, const CalibrationParams& b);

struct NoiseSpec {
  double gyro_noise = 0.0;        // rad/s/sqrt(Hz)
  double gyro_bias_walk = 0.0;    // rad/s^2/sqrt(Hz)
  double accel_noise = 0.0;       // m/s^2/sqrt(Hz)
  double accel_bias_walk = 0.0;   // m/s^3/sqrt(Hz)
  double pixel_noise = 0.0;       // px

  // Throws std::invalid_argument unless every density is strictly positive.
  void validate() const;
};

struct WorldModel {
  Vec3 gravity = Vec3(0.0, 0.0, -9.80665);  // expressed in the gravity-aligned frame G
};

// Flat JSON with a fixed key order:
//   q_CI [w,x,y,z], p_CI, f, c, w, s_g, m_g, s_a, m_a, q_AI [w,x,y,z]
// Doubles are written with 17 significant digits, so the round trip is exact.
nlohmann::ordered_json to_json(const CalibrationParams& params);
CalibrationParams calibration_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const NoiseSpec& noise);
NoiseSpec noise_from_json(const nlohmann::json& j);

}  // namespace vical
