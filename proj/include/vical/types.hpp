#pragma once

#include <cstdint>
#include <vector>

#include "vical/calibration.hpp"

namespace vical {

using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat15 = Eigen::Matrix<double, 15, 15>;

// Tangent layout of one keyframe: [d_phi, d_p, d_v, d_b_a, d_b_g].
namespace kf_index {
inline constexpr int kRotation = 0;
inline constexpr int kPosition = 3;
inline constexpr int kVelocity = 6;
inline constexpr int kAccelBias = 9;
inline constexpr int kGyroBias = 12;
}  // namespace kf_index
inline constexpr int kKeyframeDim = 15;

struct KeyframeState {
  std::int64_t id = 0;
  double t = 0.0;               // s
  Quat q_GI = Quat::Identity();
  Vec3 p_GI = Vec3::Zero();     // m
  Vec3 v_GI = Vec3::Zero();     // m/s, expressed in G
  Vec3 b_a = Vec3::Zero();      // m/s^2
  Vec3 b_g = Vec3::Zero();      // rad/s
};

KeyframeState boxplus(const KeyframeState& state, const Vec15& delta);
Vec15 boxminus(const KeyframeState& a, const KeyframeState& b);

struct Landmark {
  std::int64_t id = 0;
  Vec3 p_G = Vec3::Zero();
};

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2
};

struct Observation {
  std::int64_t keyframe_id = 0;
  std::int64_t landmark_id = 0;
  Vec2 pixel = Vec2::Zero();
};

struct ImageSize {
  int width = 640;
  int height = 480;

  bool contains(const Vec2& pixel) const {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width && pixel.y() < height;
  }
};

// Window of consecutive keyframes. `imu` covers [keyframes.front().t, t_end],
// where t_end is the time of the first keyframe after the window when the
// stream continues (so adjacent segments can be joined without an inertial
// gap), and keyframes.back().t otherwise.
struct Segment {
  std::int64_t id = 0;
  std::vector<KeyframeState> keyframes;   // estimates handed over by the frontend
  std::vector<Landmark> landmarks;        // estimates handed over by the frontend
  std::vector<Observation> observations;
  std::vector<ImuSample> imu;

  double start_time() const { return keyframes.empty() ? 0.0 : keyframes.front().t; }
  std::int64_t first_keyframe() const { return keyframes.empty() ? -1 : keyframes.front().id; }
  std::int64_t last_keyframe() const { return keyframes.empty() ? -1 : keyframes.back().id; }
};

}  // namespace vical
