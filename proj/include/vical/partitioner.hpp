#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "vical/problem.hpp"
#include "vical/types.hpp"

namespace vical {

// A run of temporally adjacent segments joined into one.
struct MergedSegment {
  std::vector<std::int64_t> source_ids;  // original segment ids, in time order
  Segment segment;                       // id = first source id
};

// Joins segments whose keyframe ranges are contiguous. Keyframe ids are
// consecutive integers along the stream, so segment B continues segment A
// when B's first keyframe id is A's last keyframe id + 1. Shared landmarks
// keep the first estimate seen; IMU samples at the seam are not duplicated.
// Throws std::invalid_argument for empty, unsorted or overlapping segments.
std::vector<MergedSegment> merge_temporal(const std::vector<const Segment*>& segments);

// Distinct landmark ids observed in both segments.
int shared_landmarks(const Segment& a, const Segment& b);

struct Partition {
  std::vector<int> members;  // indices into the merged segment list, ascending
  std::int64_t gauge_keyframe = -1;
};

// Connected components of the graph linking merged segments that share more
// than `threshold` landmarks (union-find). Partitions are ordered by their
// first member; the gauge is the earliest keyframe of each partition.
std::vector<Partition> partition_by_covisibility(const std::vector<MergedSegment>& merged,
                                                 int threshold);

struct BridgeGap {
  std::int64_t from = 0;  // last keyframe before the gap
  std::int64_t to = 0;    // first keyframe after the gap
  double dt = 0.0;
  int partition = 0;
};

// One bridge per gap between consecutive merged segments of the same partition.
// Throws std::invalid_argument for a gap with non-positive duration.
std::vector<BridgeGap> bridge_biases(const std::vector<MergedSegment>& merged,
                                      const std::vector<Partition>& partitions);

struct SparsifyOptions {
  int covis_threshold = 15;
  int min_landmark_observations = 3;  // per partition
};

struct SparsifiedProblem {
  Problem problem;
  std::vector<MergedSegment> merged;
  std::vector<Partition> partitions;
  std::vector<BridgeGap> bridges;
  int split_landmarks = 0;  // landmarks copied because several partitions see them
  nlohmann::ordered_json report;
};

// Factor graph over the given segments (any order): temporal merge, co-visibility
// partitioning, inertial factors inside merged segments, bias bridges across
// gaps and one gauge prior per partition. A landmark seen from several
// partitions gets an independent copy per partition (fresh ids above every
// input id), so partitions only share the calibration.
SparsifiedProblem build_sparsified_problem(const std::vector<const Segment*>& segments,
                                           const CalibrationParams& calibration,
                                           const NoiseSpec& noise, const WorldModel& world,
                                           const SparsifyOptions& options = {});

}  // namespace vical
