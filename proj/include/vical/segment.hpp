#pragma once

#include <span>
#include <vector>

#include "vical/problem.hpp"
#include "vical/types.hpp"

namespace vical {

// Samples with t0 <= t <= t1 (timestamps compared with a 1e-9 s slack).
std::vector<ImuSample> samples_between(std::span<const ImuSample> imu, double t0, double t1);

struct SegmentProblemOptions {
  // Landmarks seen fewer times inside the segment are left out.
  int min_landmark_observations = 3;
  bool gauge = true;  // fix position and yaw of the first keyframe
};

// Factor graph of a single segment: inertial factors between consecutive
// keyframes, reprojection factors of retained landmarks, and a gauge prior on
// the first keyframe. Throws std::invalid_argument for segments with fewer
// than two keyframes.
Problem make_segment_problem(const Segment& segment, const CalibrationParams& calibration,
                             const NoiseSpec& noise, const WorldModel& world,
                             const SegmentProblemOptions& options = {});

}  // namespace vical
