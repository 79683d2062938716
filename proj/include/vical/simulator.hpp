#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vical/calibration.hpp"
#include "vical/types.hpp"

namespace vical {

enum class MotionProfile {
  kExcited,           // all six degrees of freedom, fast
  kConstantVelocity,  // straight line, fixed orientation
  kStatic,
  kPureRotation,      // fixed position, excited rotation
  kCalm,              // slow walk with gentle turns
  kMixed,             // calm base with excited stretches fading in and out
};

const char* to_string(MotionProfile profile);
MotionProfile motion_profile_from_string(const std::string& s);  // throws std::invalid_argument

// Calibration used as ground truth: the batch estimates of a handheld
// visual-inertial device (wide-angle camera, consumer-grade IMU).
CalibrationParams reference_calibration();
// Noise densities of a consumer-grade IMU and 0.5 px feature noise.
NoiseSpec reference_noise();

struct TrajectorySpec {
  double duration = 180.0;       // s
  double keyframe_rate = 10.0;   // Hz
  double imu_rate = 200.0;       // Hz, integer multiple of keyframe_rate
  MotionProfile profile = MotionProfile::kMixed;
  Vec3 room = Vec3(8.0, 6.0, 4.0);  // m; x, y centered on 0, floor at z = 0
  double mixed_period = 40.0;    // s, one calm and one excited stretch
  std::uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument
};

// Ground-truth body motion: orientation R_GI = Rz(yaw) Exp(tilt), position in G.
struct MotionSample {
  Quat q_GI = Quat::Identity();
  Vec3 p_GI = Vec3::Zero();
  Vec3 v_GI = Vec3::Zero();
  Vec3 a_GI = Vec3::Zero();
  Vec3 omega_I = Vec3::Zero();  // body-frame angular rate
};

class Trajectory {
 public:
  explicit Trajectory(const TrajectorySpec& spec);
  MotionSample sample(double t) const;

 private:
  // value, first and second derivative of one channel
  struct Channel {
    double offset = 0.0;
    std::vector<Eigen::Vector3d> base;     // (amplitude, angular frequency, phase)
    std::vector<Eigen::Vector3d> excited;  // scaled by the excitation envelope
  };
  Eigen::Vector3d evaluate(const Channel& c, double t) const;
  Eigen::Vector3d envelope(double t) const;

  TrajectorySpec spec_;
  Channel position_[3];
  Channel yaw_;
  Channel tilt_[3];
  Vec3 velocity_ = Vec3::Zero();  // constant-velocity profile
};

// Perturbation of the frontend's estimates relative to truth (1 sigma).
struct EstimateNoise {
  double position = 0.01;        // m
  double rotation_deg = 0.5;
  double velocity = 0.01;        // m/s
  double landmark = 0.02;        // m
  double accel_bias = 0.01;      // m/s^2
  double gyro_bias = 0.001;      // rad/s
};

struct Scenario {
  TrajectorySpec trajectory;
  CalibrationParams truth = reference_calibration();
  NoiseSpec noise = reference_noise();
  WorldModel world;
  ImageSize image;
  int landmarks = 190;  // about 60 observations per keyframe (median)
  std::uint64_t landmark_seed = 7;
  int max_track_length = 15;  // keyframes; a re-detected point gets a new id
  bool noisy = true;          // sensor noise and bias random walk
  EstimateNoise estimate;

  void validate() const;  // throws std::invalid_argument
};

nlohmann::ordered_json to_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& j);

struct Dataset {
  Scenario scenario;
  std::vector<KeyframeState> keyframes;        // frontend estimates
  std::vector<KeyframeState> true_keyframes;
  std::vector<Landmark> landmarks;             // frontend estimates, one per track
  std::vector<Landmark> true_landmarks;
  std::vector<ImuSample> imu;
  std::vector<Observation> observations;       // keyframe order
};

// Throws std::invalid_argument for invalid scenarios and std::runtime_error
// when some keyframe sees no landmark. Bit-identical for equal scenarios.
Dataset generate(const Scenario& scenario);

// Newline-delimited JSON: a versioned header line with the scenario, then one
// record per ground-truth calibration, keyframe, landmark, IMU sample and observation.
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);  // throws std::runtime_error on malformed input
inline constexpr int kDatasetVersion = 1;

// Consecutive, non-overlapping windows of exactly `length` keyframes. Segment
// i holds keyframes [i*length, (i+1)*length), the observations and landmark
// estimates of those keyframes, and the IMU samples up to the first keyframe
// of the next window (or its own last keyframe at the end of the stream).
// Trailing keyframes that do not fill a window are dropped.
class SegmentStream {
 public:
  SegmentStream(const Dataset& dataset, int length);
  std::optional<Segment> next();
  std::size_t size() const { return count_; }

 private:
  const Dataset& data_;
  int length_;
  std::size_t count_;
  std::size_t index_ = 0;
  std::size_t obs_cursor_ = 0;
  std::size_t imu_cursor_ = 0;
};

std::vector<Segment> all_segments(const Dataset& dataset, int length);

// Median number of observations per keyframe.
double median_observations_per_keyframe(const Dataset& dataset);

}  // namespace vical
