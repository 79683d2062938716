#pragma once

#include <cstdint>
#include <vector>

#include "vical/calibration.hpp"
#include "vical/problem.hpp"
#include "vical/types.hpp"

namespace vical::testing {

// Closed-form test motion: R(t) = Exp(phi(t)), p(t) a sum of sinusoids.
struct ToyMotion {
  Vec3 amp_phi{0.35, 0.25, 0.8}, freq_phi{0.55, 0.8, 0.35}, phase_phi{0.1, 0.7, 1.3};
  Vec3 amp_p{0.8, 0.6, 0.3}, freq_p{0.4, 0.6, 0.9}, phase_p{0.3, 0.2, 0.9};

  Vec3 phi(double t) const;
  Mat3 rotation(double t) const;
  Vec3 omega(double t) const;  // body frame
  Vec3 position(double t) const;
  Vec3 velocity(double t) const;
  Vec3 acceleration(double t) const;
};

struct ToyScene {
  CalibrationParams truth;
  NoiseSpec noise;
  WorldModel world;
  std::vector<KeyframeState> keyframes;  // true states, biases included
  std::vector<Landmark> landmarks;
  std::vector<Observation> observations;
  std::vector<ImuSample> imu;
};

struct ToySceneOptions {
  int keyframes = 12;
  double keyframe_period = 0.1;
  double imu_rate = 200.0;
  int landmarks = 300;
  bool noisy = false;
  std::uint64_t seed = 1;
};

// Calibration used as truth by the toy scenes: all 26 dof away from nominal.
CalibrationParams toy_calibration();
NoiseSpec toy_noise();

ToyScene make_toy_scene(const ToySceneOptions& options);

// Samples with from.t <= t <= to.t.
std::vector<ImuSample> samples_between(const std::vector<ImuSample>& imu, double t0, double t1);

// Keyframes [first, last] of the scene as a segment carrying true states. IMU
// samples run up to the next keyframe when there is one.
Segment slice_segment(const ToyScene& scene, int first, int last, std::int64_t id);

// Noisy toy scene cut to `keyframes` keyframes and at most `max_landmarks`
// landmarks, with keyframe positions and landmarks perturbed (1 cm / 2 cm).
Segment small_segment(int keyframes, int max_landmarks, std::uint64_t seed);

// Factor graph over the scene: consecutive inertial factors and all observations.
// States start at truth perturbed by `perturbation` (scaled 1 cm / 0.5 deg / 2 cm
// landmarks) and the calibration at `initial`.
Problem make_toy_problem(const ToyScene& scene, const CalibrationParams& initial,
                         double perturbation, std::uint64_t seed, bool gauge = true);

}  // namespace vical::testing
