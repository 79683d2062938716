#include "vical/partitioner.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "vical/segment.hpp"

namespace vical {
namespace {

std::vector<std::int64_t> landmark_ids(const Segment& s) {
  std::vector<std::int64_t> ids;
  ids.reserve(s.observations.size());
  for (const Observation& o : s.observations) ids.push_back(o.landmark_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

int count_common(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  int n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void join(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<int> parent_;
};

void append(Segment& into, const Segment& from, std::unordered_set<std::int64_t>& landmarks) {
  into.keyframes.insert(into.keyframes.end(), from.keyframes.begin(), from.keyframes.end());
  into.observations.insert(into.observations.end(), from.observations.begin(), from.observations.end());
  for (const Landmark& l : from.landmarks) {
    if (landmarks.insert(l.id).second) into.landmarks.push_back(l);
  }
  constexpr double kSameSample = 1e-9;
  for (const ImuSample& s : from.imu) {
    if (into.imu.empty() || s.t > into.imu.back().t + kSameSample) into.imu.push_back(s);
  }
}

}  // namespace

std::vector<MergedSegment> merge_temporal(const std::vector<const Segment*>& segments) {
  std::vector<MergedSegment> out;
  std::unordered_set<std::int64_t> landmarks;
  for (const Segment* s : segments) {
    if (s->keyframes.empty()) {
      throw std::invalid_argument("segment " + std::to_string(s->id) + " has no keyframes");
    }
    if (!out.empty()) {
      const Segment& last = out.back().segment;
      if (s->first_keyframe() <= last.last_keyframe() || s->start_time() <= last.keyframes.back().t) {
        throw std::invalid_argument("segment " + std::to_string(s->id) +
                                    " overlaps or precedes the segment before it");
      }
      if (s->first_keyframe() == last.last_keyframe() + 1) {
        out.back().source_ids.push_back(s->id);
        append(out.back().segment, *s, landmarks);
        continue;
      }
    }
    MergedSegment m;
    m.source_ids = {s->id};
    m.segment.id = s->id;
    landmarks.clear();
    append(m.segment, *s, landmarks);
    out.push_back(std::move(m));
  }
  return out;
}

int shared_landmarks(const Segment& a, const Segment& b) {
  return count_common(landmark_ids(a), landmark_ids(b));
}

std::vector<Partition> partition_by_covisibility(const std::vector<MergedSegment>& merged,
                                                 int threshold) {
  if (threshold < 0) throw std::invalid_argument("co-visibility threshold must be >= 0");
  const int n = static_cast<int>(merged.size());
  std::vector<std::vector<std::int64_t>> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = landmark_ids(merged[i].segment);
  UnionFind uf(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (count_common(ids[i], ids[j]) > threshold) uf.join(i, j);
    }
  }
  std::map<int, int> root_to_partition;  // roots are the smallest member
  std::vector<Partition> out;
  for (int i = 0; i < n; ++i) {
    const int root = uf.find(i);
    auto [it, fresh] = root_to_partition.emplace(root, static_cast<int>(out.size()));
    if (fresh) out.emplace_back();
    out[it->second].members.push_back(i);
  }
  for (Partition& p : out) {
    const KeyframeState* earliest = nullptr;
    for (int m : p.members) {
      for (const KeyframeState& k : merged[m].segment.keyframes) {
        if (!earliest || k.t < earliest->t || (k.t == earliest->t && k.id < earliest->id)) earliest = &k;
      }
    }
    if (!earliest) throw std::invalid_argument("partition without keyframes");
    p.gauge_keyframe = earliest->id;
  }
  return out;
}

std::vector<BridgeGap> bridge_biases(const std::vector<MergedSegment>& merged,
                                      const std::vector<Partition>& partitions) {
  std::vector<BridgeGap> out;
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    std::vector<int> members = partitions[p].members;
    std::sort(members.begin(), members.end(), [&](int a, int b) {
      return merged[a].segment.start_time() < merged[b].segment.start_time();
    });
    for (std::size_t i = 0; i + 1 < members.size(); ++i) {
      const KeyframeState& a = merged[members[i]].segment.keyframes.back();
      const KeyframeState& b = merged[members[i + 1]].segment.keyframes.front();
      const double dt = b.t - a.t;
      if (!(dt > 0.0)) {
        throw std::invalid_argument("gap between keyframes " + std::to_string(a.id) + " and " +
                                    std::to_string(b.id) + " has non-positive duration");
      }
      out.push_back({a.id, b.id, dt, static_cast<int>(p)});
    }
  }
  return out;
}

SparsifiedProblem build_sparsified_problem(const std::vector<const Segment*>& segments,
                                           const CalibrationParams& calibration,
                                           const NoiseSpec& noise, const WorldModel& world,
                                           const SparsifyOptions& options) {
  std::vector<const Segment*> sorted = segments;
  std::stable_sort(sorted.begin(), sorted.end(), [](const Segment* a, const Segment* b) {
    return a->start_time() < b->start_time();
  });
  SparsifiedProblem out{Problem(calibration, noise, world), {}, {}, {}, 0, {}};
  out.merged = merge_temporal(sorted);
  out.partitions = partition_by_covisibility(out.merged, options.covis_threshold);
  out.bridges = bridge_biases(out.merged, out.partitions);
  Problem& problem = out.problem;

  std::vector<int> partition_of(out.merged.size());
  for (std::size_t p = 0; p < out.partitions.size(); ++p) {
    for (int m : out.partitions[p].members) partition_of[m] = static_cast<int>(p);
  }

  std::int64_t next_id = 0;
  for (const Segment* s : sorted) {
    for (const Landmark& l : s->landmarks) next_id = std::max(next_id, l.id + 1);
    for (const Observation& o : s->observations) next_id = std::max(next_id, o.landmark_id + 1);
  }

  // keyframes and inertial chains
  for (std::size_t m = 0; m < out.merged.size(); ++m) {
    const Segment& seg = out.merged[m].segment;
    for (const KeyframeState& k : seg.keyframes) problem.add_keyframe(k, partition_of[m]);
    for (std::size_t k = 0; k + 1 < seg.keyframes.size(); ++k) {
      const KeyframeState& a = seg.keyframes[k];
      const KeyframeState& b = seg.keyframes[k + 1];
      problem.add_inertial_factor(a.id, b.id, samples_between(seg.imu, a.t, b.t));
    }
  }

  // landmarks: one copy per partition that observes them
  std::map<std::pair<int, std::int64_t>, std::vector<const Observation*>> obs_by;
  std::map<std::int64_t, const Landmark*> estimate;
  std::map<std::int64_t, std::vector<int>> partitions_of_landmark;
  for (std::size_t m = 0; m < out.merged.size(); ++m) {
    const Segment& seg = out.merged[m].segment;
    for (const Landmark& l : seg.landmarks) estimate.emplace(l.id, &l);
    for (const Observation& o : seg.observations) {
      obs_by[{partition_of[m], o.landmark_id}].push_back(&o);
    }
  }
  for (const auto& [key, obs] : obs_by) partitions_of_landmark[key.second].push_back(key.first);
  for (const auto& [key, obs] : obs_by) {
    const auto [partition, id] = key;
    const auto e = estimate.find(id);
    if (e == estimate.end()) continue;
    if (static_cast<int>(obs.size()) < options.min_landmark_observations) continue;
    const bool shared = partitions_of_landmark[id].size() > 1;
    Landmark l = *e->second;
    if (shared && partition != partitions_of_landmark[id].front()) {
      l.id = next_id++;
      ++out.split_landmarks;
    }
    problem.add_landmark(l);
    for (const Observation* o : obs) problem.add_reprojection_factor({o->keyframe_id, l.id, o->pixel});
  }

  for (const BridgeGap& b : out.bridges) problem.add_bias_bridge(b.from, b.to, b.dt);
  for (const Partition& p : out.partitions) problem.fix_gauge(p.gauge_keyframe);

  // report
  nlohmann::ordered_json parts = nlohmann::ordered_json::array();
  for (std::size_t p = 0; p < out.partitions.size(); ++p) {
    nlohmann::ordered_json segs = nlohmann::ordered_json::array();
    int keyframes = 0;
    for (int m : out.partitions[p].members) {
      segs.push_back(out.merged[m].source_ids);
      keyframes += static_cast<int>(out.merged[m].segment.keyframes.size());
    }
    parts.push_back({{"partition", p},
                     {"merged_segments", segs},
                     {"keyframes", keyframes},
                     {"gauge_keyframe", out.partitions[p].gauge_keyframe}});
  }
  nlohmann::ordered_json shared = nlohmann::ordered_json::array();
  for (std::size_t a = 0; a < out.merged.size(); ++a) {
    for (std::size_t b = a + 1; b < out.merged.size(); ++b) {
      const int n = shared_landmarks(out.merged[a].segment, out.merged[b].segment);
      if (n > 0) shared.push_back({{"a", out.merged[a].segment.id}, {"b", out.merged[b].segment.id}, {"landmarks", n}});
    }
  }
  nlohmann::ordered_json bridges = nlohmann::ordered_json::array();
  for (const BridgeGap& b : out.bridges) {
    bridges.push_back({{"from", b.from}, {"to", b.to}, {"dt", b.dt}, {"partition", b.partition}});
  }
  out.report = {{"covis_threshold", options.covis_threshold},
                {"segments", segments.size()},
                {"merged_segments", out.merged.size()},
                {"partitions", parts},
                {"shared_landmarks", shared},
                {"bias_bridges", bridges},
                {"split_landmarks", out.split_landmarks},
                {"keyframes", problem.keyframes().size()},
                {"landmarks", problem.landmarks().size()},
                {"reprojection_factors", problem.reprojection_factors().size()},
                {"inertial_factors", problem.inertial_factors().size()}};
  return out;
}

}  // namespace vical
