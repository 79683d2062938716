#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "vical/problem.hpp"
#include "vical/types.hpp"

namespace vical {

inline constexpr double kInfiniteEntropy = std::numeric_limits<double>::infinity();

// Expected standard deviation of every calibration dof, in tangent units.
struct NormalizationRef {
  CalibVector sigma = CalibVector::Ones();
  // Throws std::invalid_argument unless every entry is finite and > 0.
  void validate() const;
};

nlohmann::ordered_json to_json(const NormalizationRef& ref);
// Accepts {"block": [values...]} keyed by calibration block names; every
// block must be present.
NormalizationRef normalization_from_json(const nlohmann::json& j);

struct ParameterGroup {
  std::string name;
  std::vector<int> indices;  // calibration tangent indices, ascending
};

// Ordered, disjoint groups over the 26 calibration dof.
struct ParameterGrouping {
  std::vector<ParameterGroup> groups;

  std::size_t size() const { return groups.size(); }
  // Throws std::invalid_argument for empty/overlapping/out-of-range groups.
  void validate() const;
};

// imu: s_g m_g s_a m_a q_AI; camera: f c w; extrinsics: q_CI p_CI.
ParameterGrouping default_grouping();
// One group over all 26 dof.
ParameterGrouping single_grouping();
// [{"name": "imu", "blocks": ["s_g", "m_g", ...]}, ...]
ParameterGrouping grouping_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ParameterGrouping& grouping);

struct MarginalCovariance {
  CalibMatrix covariance = CalibMatrix::Zero();
  bool singular = false;
  std::string reason;  // set when singular
};

// Marginal covariance of the calibration dof from the whitened Jacobian of
// `problem` at its current estimate. Multifrontal Householder QR with columns
// ordered [landmarks | keyframes by time | calibration]; the trailing
// calibration block is factored with column pivoting and inverted by
// back-substitution. Throws std::invalid_argument unless the problem has at
// least one inertial and one reprojection factor.
MarginalCovariance marginal_covariance(const Problem& problem);

// D^-1 sigma D^-1 with D = diag(ref.sigma).
CalibMatrix normalize(const CalibMatrix& covariance, const NormalizationRef& ref);

// 0.5 ln((2 pi e)^k det(sigma)) from a Cholesky factor; +inf if not SPD.
double entropy(const Eigen::MatrixXd& covariance);

struct SegmentScore {
  std::int64_t segment_id = 0;
  double start_time = 0.0;
  std::int64_t first_keyframe = -1;
  std::int64_t last_keyframe = -1;
  std::vector<double> entropies;  // one per group, nats; +inf when singular
  bool singular = false;
};

// Per-group entropies of the normalized marginal covariance of a segment.
// The segment problem is linearized at the segment's estimates and `calibration`.
SegmentScore score_segment(const Segment& segment, const CalibrationParams& calibration,
                           const NoiseSpec& noise, const WorldModel& world,
                           const ParameterGrouping& grouping, const NormalizationRef& ref);
// Same from a marginal covariance already computed.
std::vector<double> group_entropies(const MarginalCovariance& marginal,
                                    const ParameterGrouping& grouping,
                                    const NormalizationRef& ref);

// Geometric mean over segments of the per-dof marginal standard deviations.
// Singular marginals are skipped; throws if none is usable.
NormalizationRef reference_from_marginals(const std::vector<MarginalCovariance>& marginals);

// CSV with header segment_id,start_time,H_<group>...; infinite entropies are written as "inf".
void write_score_csv(std::ostream& out, const std::vector<SegmentScore>& scores,
                     const ParameterGrouping& grouping);

}  // namespace vical
