#pragma once

#include <span>

#include "vical/types.hpp"

namespace vical {

// Number of inputs the preintegrated quantities are differentiated against:
// [b_a(3), b_g(3), s_g(3), m_g(3), s_a(3), m_a(3), d_q_AI(3)].
inline constexpr int kPreintInputDim = 21;
namespace preint_input {
inline constexpr int kAccelBias = 0;
inline constexpr int kGyroBias = 3;
inline constexpr int kInertialCalib = 6;  // maps onto calib_index::kInertialBegin..+15
}  // namespace preint_input

using Mat9x21 = Eigen::Matrix<double, 9, kPreintInputDim>;

// Relative motion between the first and the last sample, expressed in the
// body frame of the first sample and free of gravity:
//   R_j = R_i dR,  v_j = v_i + g dt + R_i dv,  p_j = p_i + v_i dt + g dt^2/2 + R_i dp
struct PreintegratedImu {
  double dt = 0.0;
  Quat delta_q = Quat::Identity();
  Vec3 delta_v = Vec3::Zero();
  Vec3 delta_p = Vec3::Zero();
  // Residual ordering [phi, p, v, b_a, b_g]; the bias block is the random walk
  // over dt.
  Mat15 covariance = Mat15::Zero();
  // Rows [phi, p, v]; the rotation row is the right-local tangent of delta_q.
  Mat9x21 jacobian = Mat9x21::Zero();
  bool has_jacobian = false;
};

// Integrates corrected gyro/accel readings with classical Runge-Kutta, three
// sub-steps per sample interval; inputs between samples come from quintic
// interpolation of the readings. Throws std::invalid_argument for fewer than two samples or
// non-increasing timestamps.
PreintegratedImu preintegrate(std::span<const ImuSample> samples, const GyroIntrinsics& gyro,
                              const AccelIntrinsics& accel, const Vec3& b_a, const Vec3& b_g,
                              const NoiseSpec& noise, bool with_jacobian = true,
                              bool with_covariance = true);

}  // namespace vical
