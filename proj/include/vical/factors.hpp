#pragma once

#include "vical/preintegration.hpp"
#include "vical/sensor_models.hpp"

namespace vical {

using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat2x11 = Eigen::Matrix<double, 2, calib_index::kCameraDim>;
using Mat46 = Eigen::Matrix<double, 4, 6>;
using Vec4d = Eigen::Matrix<double, 4, 1>;

// ---------------------------------------------------------------------------
// Inertial factor between consecutive keyframes i -> j. Residual order
// [phi, p, v, b_a, b_g], not whitened:
//   r_phi = Log(dR^T R_i^T R_j)
//   r_p   = R_i^T (p_j - p_i - v_i dt - g dt^2 / 2) - dp
//   r_v   = R_i^T (v_j - v_i - g dt) - dv
//   r_b   = b_j - b_i
struct InertialJacobians {
  Mat15 d_from;    // keyframe i tangent
  Mat15 d_to;      // keyframe j tangent
  Mat15 d_calib;   // inertial calibration dof (calib_index::kInertialBegin ..)
};

// `pre` must have been integrated with the biases of `from` and carry its Jacobian
// when `jacobians` is requested.
Vec15 inertial_residual(const PreintegratedImu& pre, const KeyframeState& from,
                        const KeyframeState& to, const WorldModel& world,
                        InertialJacobians* jacobians);

// ---------------------------------------------------------------------------
// Reprojection factor, whitened by the pixel noise: (project(...) - z) / sigma_c.
struct ReprojectionJacobians {
  Mat26 d_pose;       // [d_phi, d_p] of the observing keyframe
  Mat23 d_landmark;
  Mat2x11 d_camera;   // camera calibration dof (calib_index::kCameraBegin ..)
};

struct ReprojectionResult {
  Vec2 residual = Vec2::Zero();
  bool valid = false;  // false when the landmark is behind the camera
};

ReprojectionResult reprojection_residual(const Vec2& pixel, const KeyframeState& keyframe,
                                         const Vec3& landmark, const CalibrationParams& calib,
                                         double pixel_sigma, ReprojectionJacobians* jacobians);

// ---------------------------------------------------------------------------
// Bias random-walk bridge across removed keyframes: r = [b_a; b_g]_to - [b_a; b_g]_from
// with covariance diag(sigma_ba^2 dt, sigma_bg^2 dt). Throws for dt <= 0.
struct BiasBridge {
  Vec6 residual = Vec6::Zero();       // not whitened
  Vec6 covariance_diag = Vec6::Zero();
  Vec6 sqrt_information = Vec6::Zero();  // 1 / sqrt(covariance_diag)
};
BiasBridge bias_bridge(const Vec3& b_a_from, const Vec3& b_g_from, const Vec3& b_a_to,
                       const Vec3& b_g_to, double dt, const NoiseSpec& noise);

// ---------------------------------------------------------------------------
// Gauge prior: holds position (3) and yaw about the gravity axis (1) of a
// keyframe at a reference pose: r = [p - p_ref; e_z^T Log(R R_ref^T)], not whitened.
Vec4d gauge_residual(const KeyframeState& keyframe, const Quat& q_ref, const Vec3& p_ref,
                     Mat46* d_pose);

}  // namespace vical
