#include "vical/segment.hpp"

#include <stdexcept>
#include <unordered_map>

namespace vical {

std::vector<ImuSample> samples_between(std::span<const ImuSample> imu, double t0, double t1) {
  constexpr double kSlack = 1e-9;
  std::vector<ImuSample> out;
  for (const ImuSample& s : imu) {
    if (s.t >= t0 - kSlack && s.t <= t1 + kSlack) out.push_back(s);
  }
  return out;
}

Problem make_segment_problem(const Segment& segment, const CalibrationParams& calibration,
                             const NoiseSpec& noise, const WorldModel& world,
                             const SegmentProblemOptions& options) {
  if (segment.keyframes.size() < 2) {
    throw std::invalid_argument("segment " + std::to_string(segment.id) +
                                " needs at least two keyframes");
  }
  Problem problem(calibration, noise, world);
  for (const KeyframeState& k : segment.keyframes) problem.add_keyframe(k);

  std::unordered_map<std::int64_t, int> seen;
  for (const Observation& o : segment.observations) {
    if (problem.has_keyframe(o.keyframe_id)) ++seen[o.landmark_id];
  }
  for (const Landmark& l : segment.landmarks) {
    const auto it = seen.find(l.id);
    if (it != seen.end() && it->second >= options.min_landmark_observations) problem.add_landmark(l);
  }
  for (std::size_t k = 0; k + 1 < segment.keyframes.size(); ++k) {
    const KeyframeState& a = segment.keyframes[k];
    const KeyframeState& b = segment.keyframes[k + 1];
    problem.add_inertial_factor(a.id, b.id, samples_between(segment.imu, a.t, b.t));
  }
  for (const Observation& o : segment.observations) {
    if (problem.has_keyframe(o.keyframe_id) && problem.has_landmark(o.landmark_id)) {
      problem.add_reprojection_factor(o);
    }
  }
  if (options.gauge) problem.fix_gauge(segment.keyframes.front().id);
  return problem;
}

}  // namespace vical
