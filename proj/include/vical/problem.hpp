#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vical/factors.hpp"

namespace vical {

struct InertialFactor {
  std::int64_t from = 0;  // keyframe ids
  std::int64_t to = 0;
  std::vector<ImuSample> samples;
  // Frozen at construction from the covariance at the then-current estimate.
  Mat15 sqrt_information = Mat15::Identity();
};

struct ReprojectionFactor {
  std::int64_t keyframe = 0;
  std::int64_t landmark = 0;
  Vec2 pixel = Vec2::Zero();
};

struct BiasBridgeFactor {
  std::int64_t from = 0;
  std::int64_t to = 0;
  double dt = 0.0;
};

struct GaugePriorFactor {
  std::int64_t keyframe = 0;
  Quat q_ref = Quat::Identity();
  Vec3 p_ref = Vec3::Zero();
};

// Square-root weight of the gauge prior (information 1e8).
inline constexpr double kGaugeSqrtWeight = 1e4;

// Linearized, whitened factor blocks at one estimate. Keyframes and landmarks
// are referenced by their index in the problem.
struct LinearizedProblem {
  struct Reprojection {
    int keyframe = 0;
    int landmark = 0;
    Vec2 residual;
    Mat26 d_pose;
    Mat23 d_landmark;
    Mat2x11 d_camera;
  };
  struct Inertial {
    int from = 0;
    int to = 0;
    Vec15 residual;
    Mat15 d_from, d_to, d_calib;
  };
  struct Bridge {
    int from = 0;
    int to = 0;
    Vec6 residual;
    Vec6 weight;  // d r / d[b_a; b_g]_to = diag(weight) = -d r / d[...]_from
  };
  struct Gauge {
    int keyframe = 0;
    Vec4d residual;
    Mat46 d_pose;
  };
  std::vector<Reprojection> reprojection;
  std::vector<Inertial> inertial;
  std::vector<Bridge> bridges;
  std::vector<Gauge> gauges;
  int inactive_reprojection = 0;  // behind-camera factors left out at this estimate
  double cost = 0.0;              // 0.5 * sum of squared whitened residuals
};

// Factor graph over keyframes, landmarks and the calibration parameters.
// Keyframes carry an explicit partition label; every partition should hold
// exactly one gauge prior before solving.
class Problem {
 public:
  Problem(const CalibrationParams& calibration, const NoiseSpec& noise, const WorldModel& world = {});

  // Throws std::invalid_argument on duplicate ids or non-unit quaternions.
  void add_keyframe(const KeyframeState& keyframe, int partition = 0);
  void add_landmark(const Landmark& landmark);

  // Samples must start at the `from` keyframe time and end at the `to` keyframe time.
  void add_inertial_factor(std::int64_t from, std::int64_t to, std::vector<ImuSample> samples);
  void add_reprojection_factor(const Observation& observation);
  void add_bias_bridge(std::int64_t from, std::int64_t to, double dt);
  // Holds position and yaw of the keyframe at its current estimate. Throws if
  // the keyframe's partition already has a gauge.
  void fix_gauge(std::int64_t keyframe);

  void set_calibration_fixed(int dof, bool fixed);
  void set_calibration_fixed_all(bool fixed);
  bool calibration_fixed(int dof) const { return calib_fixed_[dof]; }
  const std::array<bool, kCalibrationDim>& calibration_fixed_mask() const { return calib_fixed_; }

  const std::vector<KeyframeState>& keyframes() const { return keyframes_; }
  const std::vector<Landmark>& landmarks() const { return landmarks_; }
  const std::vector<int>& keyframe_partitions() const { return keyframe_partition_; }
  const CalibrationParams& calibration() const { return calibration_; }
  const NoiseSpec& noise() const { return noise_; }
  const WorldModel& world() const { return world_; }
  const std::vector<InertialFactor>& inertial_factors() const { return inertial_; }
  const std::vector<ReprojectionFactor>& reprojection_factors() const { return reprojection_; }
  const std::vector<BiasBridgeFactor>& bias_bridges() const { return bridges_; }
  const std::vector<GaugePriorFactor>& gauge_priors() const { return gauges_; }

  int keyframe_index(std::int64_t id) const;  // throws std::out_of_range
  int landmark_index(std::int64_t id) const;  // throws std::out_of_range
  bool has_keyframe(std::int64_t id) const { return keyframe_lookup_.count(id) > 0; }
  bool has_landmark(std::int64_t id) const { return landmark_lookup_.count(id) > 0; }
  int partition_count() const;

  void set_calibration(const CalibrationParams& calibration) { calibration_ = calibration; }
  KeyframeState& keyframe(int index) { return keyframes_[index]; }
  Landmark& landmark(int index) { return landmarks_[index]; }

  // Residuals and (optionally) Jacobians at the current estimate.
  LinearizedProblem linearize(bool with_jacobians = true) const;
  double cost() const { return linearize(false).cost; }

  // States, factors and calibration as JSON.
  nlohmann::ordered_json snapshot() const;

 private:
  CalibrationParams calibration_;
  NoiseSpec noise_;
  WorldModel world_;
  std::vector<KeyframeState> keyframes_;
  std::vector<int> keyframe_partition_;
  std::vector<Landmark> landmarks_;
  std::unordered_map<std::int64_t, int> keyframe_lookup_;
  std::unordered_map<std::int64_t, int> landmark_lookup_;
  std::vector<InertialFactor> inertial_;
  std::vector<ReprojectionFactor> reprojection_;
  std::vector<BiasBridgeFactor> bridges_;
  std::vector<GaugePriorFactor> gauges_;
  std::array<bool, kCalibrationDim> calib_fixed_{};
};

}  // namespace vical
