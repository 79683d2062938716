#include "vical/information.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "vical/segment.hpp"

namespace vical {

void NormalizationRef::validate() const {
  for (int i = 0; i < kCalibrationDim; ++i) {
    if (!std::isfinite(sigma(i)) || !(sigma(i) > 0.0)) {
      throw std::invalid_argument("normalization sigma for " + calibration_dof_name(i) +
                                  " must be positive");
    }
  }
}

nlohmann::ordered_json to_json(const NormalizationRef& ref) {
  nlohmann::ordered_json j;
  for (const CalibBlock& b : kCalibBlocks) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (int i = 0; i < b.size; ++i) a.push_back(ref.sigma(b.offset + i));
    j[std::string(b.name)] = a;
  }
  return j;
}

NormalizationRef normalization_from_json(const nlohmann::json& j) {
  NormalizationRef ref;
  for (const CalibBlock& b : kCalibBlocks) {
    const std::string name(b.name);
    if (!j.contains(name)) throw std::invalid_argument("sigma_ref is missing block " + name);
    const auto& a = j.at(name);
    if (!a.is_array() || static_cast<int>(a.size()) != b.size) {
      throw std::invalid_argument("sigma_ref block " + name + " must have " +
                                  std::to_string(b.size) + " entries");
    }
    for (int i = 0; i < b.size; ++i) ref.sigma(b.offset + i) = a.at(i).get<double>();
  }
  ref.validate();
  return ref;
}

void ParameterGrouping::validate() const {
  if (groups.empty()) throw std::invalid_argument("parameter grouping has no groups");
  std::array<bool, kCalibrationDim> used{};
  for (const ParameterGroup& g : groups) {
    if (g.indices.empty()) throw std::invalid_argument("parameter group '" + g.name + "' is empty");
    for (int i : g.indices) {
      if (i < 0 || i >= kCalibrationDim) {
        throw std::invalid_argument("parameter group '" + g.name + "' has an index out of range");
      }
      if (used[i]) {
        throw std::invalid_argument("parameter groups overlap at " + calibration_dof_name(i));
      }
      used[i] = true;
    }
  }
}

namespace {

ParameterGroup group_of_blocks(std::string name, std::initializer_list<std::string_view> blocks) {
  ParameterGroup g;
  g.name = std::move(name);
  for (std::string_view b : blocks) {
    const CalibBlock& blk = calibration_block(b);
    for (int i = 0; i < blk.size; ++i) g.indices.push_back(blk.offset + i);
  }
  std::sort(g.indices.begin(), g.indices.end());
  return g;
}

}  // namespace

ParameterGrouping default_grouping() {
  ParameterGrouping g;
  g.groups.push_back(group_of_blocks("imu", {"s_g", "m_g", "s_a", "m_a", "q_AI"}));
  g.groups.push_back(group_of_blocks("camera", {"f", "c", "w"}));
  g.groups.push_back(group_of_blocks("extrinsics", {"q_CI", "p_CI"}));
  return g;
}

ParameterGrouping single_grouping() {
  ParameterGrouping g;
  ParameterGroup all;
  all.name = "all";
  all.indices.resize(kCalibrationDim);
  std::iota(all.indices.begin(), all.indices.end(), 0);
  g.groups.push_back(all);
  return g;
}

ParameterGrouping grouping_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("grouping must be an array of groups");
  ParameterGrouping g;
  for (const auto& e : j) {
    ParameterGroup group;
    group.name = e.at("name").get<std::string>();
    for (const auto& b : e.at("blocks")) {
      const CalibBlock& blk = calibration_block(b.get<std::string>());
      for (int i = 0; i < blk.size; ++i) group.indices.push_back(blk.offset + i);
    }
    std::sort(group.indices.begin(), group.indices.end());
    g.groups.push_back(std::move(group));
  }
  g.validate();
  return g;
}

nlohmann::ordered_json to_json(const ParameterGrouping& grouping) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const ParameterGroup& g : grouping.groups) {
    nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
    for (const CalibBlock& b : kCalibBlocks) {
      if (std::find(g.indices.begin(), g.indices.end(), b.offset) != g.indices.end()) {
        blocks.push_back(std::string(b.name));
      }
    }
    j.push_back({{"name", g.name}, {"blocks", blocks}});
  }
  return j;
}

// ---------------------------------------------------------------------------
// Multifrontal QR

namespace {

constexpr int kB = kKeyframeDim;
constexpr double kFrontTolerance = 1e-10;  // |R_ii| relative to the column norm
constexpr double kThetaTolerance = 1e-9;   // pivot ratio after column equilibration

// Columns of one keyframe inside a row block: the pose (6) or the full state (15).
struct Span {
  int keyframe;  // elimination position
  int width;
};

// Rows over keyframe spans sorted by position, then the 26 calibration columns.
struct RowBlock {
  std::vector<Span> spans;
  Eigen::MatrixXd a;
};

struct Singular {
  std::string reason;
};

// Householder R factor of `m` (upper trapezoid, min(rows, cols) rows).
Eigen::MatrixXd r_factor(const Eigen::MatrixXd& m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  const Eigen::Index r = std::min(m.rows(), m.cols());
  Eigen::MatrixXd out = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  return out;
}

// Eliminates the first `pivots` columns of `m`; returns the remaining rows of
// R over the trailing columns, or reports a deficient pivot.
Eigen::MatrixXd eliminate(const Eigen::MatrixXd& m, int pivots, const std::string& what) {
  if (m.rows() < pivots) throw Singular{what + " has fewer residuals than unknowns"};
  const Eigen::MatrixXd r = r_factor(m);
  for (int i = 0; i < pivots; ++i) {
    const double scale = m.col(i).norm();
    if (!(scale > 0.0) || !(std::abs(r(i, i)) > kFrontTolerance * scale)) {
      throw Singular{what + " is not constrained"};
    }
  }
  return r.bottomRightCorner(r.rows() - pivots, m.cols() - pivots);
}

CalibMatrix theta_covariance(const Eigen::MatrixXd& rows) {
  if (rows.rows() < kCalibrationDim) throw Singular{"too few constraints on the calibration"};
  // equilibrate columns so the pivot test does not depend on parameter units
  Eigen::Matrix<double, kCalibrationDim, 1> scale;
  for (int c = 0; c < kCalibrationDim; ++c) {
    const double n = rows.col(c).norm();
    if (!(n > 0.0)) throw Singular{"calibration " + calibration_dof_name(c) + " is not observed"};
    scale(c) = 1.0 / n;
  }
  const Eigen::MatrixXd scaled = rows * scale.asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(kThetaTolerance);
  if (qr.rank() < kCalibrationDim) {
    const int col = qr.colsPermutation().indices()(qr.rank());
    throw Singular{"calibration rank " + std::to_string(qr.rank()) + " < 26 (first unresolved " +
                   calibration_dof_name(col) + ")"};
  }
  const CalibMatrix r = qr.matrixR().topLeftCorner(kCalibrationDim, kCalibrationDim)
                            .triangularView<Eigen::Upper>();
  // back-substitution: R X = I
  const CalibMatrix r_inv = r.triangularView<Eigen::Upper>().solve(CalibMatrix::Identity());
  const CalibMatrix permuted = r_inv * r_inv.transpose();
  const auto& perm = qr.colsPermutation();
  CalibMatrix cov = perm * permuted * perm.transpose();
  cov = scale.asDiagonal() * cov * scale.asDiagonal();
  return 0.5 * (cov + cov.transpose());
}

}  // namespace

MarginalCovariance marginal_covariance(const Problem& problem) {
  if (problem.inertial_factors().empty() || problem.reprojection_factors().empty()) {
    throw std::invalid_argument(
        "marginal covariance needs at least one inertial and one reprojection factor");
  }
  const LinearizedProblem lin = problem.linearize(true);
  const auto& kfs = problem.keyframes();
  const int n = static_cast<int>(kfs.size());
  const int m = static_cast<int>(problem.landmarks().size());

  // keyframe elimination order: time, then id
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return kfs[a].t != kfs[b].t ? kfs[a].t < kfs[b].t : kfs[a].id < kfs[b].id;
  });
  std::vector<int> position(n);
  for (int p = 0; p < n; ++p) position[order[p]] = p;

  MarginalCovariance out;
  std::vector<std::vector<RowBlock>> buckets(n);
  std::vector<RowBlock> theta_rows;
  const auto push = [&](RowBlock&& b) {
    if (b.a.rows() == 0) return;
    if (b.spans.empty()) {
      theta_rows.push_back(std::move(b));
    } else {
      buckets[b.spans.front().keyframe].push_back(std::move(b));
    }
  };
  try {
    // 1. landmarks: compact columns [3 | 6 per observer | 11 camera]
    std::vector<std::vector<int>> by_landmark(m);
    for (std::size_t i = 0; i < lin.reprojection.size(); ++i) {
      by_landmark[lin.reprojection[i].landmark].push_back(static_cast<int>(i));
    }
    for (int l = 0; l < m; ++l) {
      const auto& obs = by_landmark[l];
      const std::string what = "landmark " + std::to_string(problem.landmarks()[l].id);
      std::vector<int> observers;
      for (int i : obs) observers.push_back(position[lin.reprojection[i].keyframe]);
      std::sort(observers.begin(), observers.end());
      observers.erase(std::unique(observers.begin(), observers.end()), observers.end());
      const int nk = static_cast<int>(observers.size());
      const int cols = 3 + 6 * nk + calib_index::kCameraDim;
      Eigen::MatrixXd f = Eigen::MatrixXd::Zero(2 * static_cast<int>(obs.size()), cols);
      for (std::size_t r = 0; r < obs.size(); ++r) {
        const auto& b = lin.reprojection[obs[r]];
        const int slot = static_cast<int>(
            std::lower_bound(observers.begin(), observers.end(), position[b.keyframe]) -
            observers.begin());
        f.block<2, 3>(2 * r, 0) = b.d_landmark;
        f.block<2, 6>(2 * r, 3 + 6 * slot) = b.d_pose;
        f.block<2, calib_index::kCameraDim>(2 * r, 3 + 6 * nk) = b.d_camera;
      }
      const Eigen::MatrixXd rest = eliminate(f, 3, what);
      RowBlock blk;
      for (int k : observers) blk.spans.push_back({k, 6});
      blk.a = Eigen::MatrixXd::Zero(rest.rows(), 6 * nk + kCalibrationDim);
      blk.a.leftCols(6 * nk) = rest.leftCols(6 * nk);
      blk.a.middleCols(6 * nk, calib_index::kCameraDim) = rest.rightCols(calib_index::kCameraDim);
      push(std::move(blk));
    }

    // 2. other factors
    const auto pair_block = [&](int from, int to, const Mat15& d_from, const Mat15& d_to) {
      RowBlock blk;
      const int pf = position[from], pt = position[to];
      blk.spans = {{std::min(pf, pt), kB}, {std::max(pf, pt), kB}};
      blk.a = Eigen::MatrixXd::Zero(kB, 2 * kB + kCalibrationDim);
      const int cf = pf < pt ? 0 : kB, ct = pf < pt ? kB : 0;
      blk.a.middleCols(cf, kB) = d_from;
      blk.a.middleCols(ct, kB) = d_to;
      return blk;
    };
    for (const auto& b : lin.inertial) {
      RowBlock blk = pair_block(b.from, b.to, b.d_from, b.d_to);
      blk.a.middleCols(2 * kB + calib_index::kInertialBegin, calib_index::kInertialDim) = b.d_calib;
      push(std::move(blk));
    }
    for (const auto& b : lin.bridges) {
      Mat15 d_from = Mat15::Zero(), d_to = Mat15::Zero();
      d_from.block<6, 6>(kf_index::kAccelBias, kf_index::kAccelBias) = Vec6(-b.weight).asDiagonal();
      d_to.block<6, 6>(kf_index::kAccelBias, kf_index::kAccelBias) = b.weight.asDiagonal();
      RowBlock blk = pair_block(b.from, b.to, d_from, d_to);
      blk.a = blk.a.middleRows(kf_index::kAccelBias, 6).eval();
      push(std::move(blk));
    }
    for (const auto& b : lin.gauges) {
      RowBlock blk;
      blk.spans = {{position[b.keyframe], 6}};
      blk.a = Eigen::MatrixXd::Zero(4, 6 + kCalibrationDim);
      blk.a.leftCols<6>() = b.d_pose;
      push(std::move(blk));
    }

    // 3. keyframes in time order; later keyframes reached only through
    // landmarks carry their pose columns alone
    for (int k = 0; k < n; ++k) {
      auto& front = buckets[k];
      const std::string what = "keyframe " + std::to_string(kfs[order[k]].id);
      if (front.empty()) throw Singular{what + " has no constraints"};
      std::vector<Span> spans{{k, kB}};
      int rows = 0;
      for (const RowBlock& b : front) {
        for (const Span& s : b.spans) spans.push_back(s);
        rows += static_cast<int>(b.a.rows());
      }
      std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
        return a.keyframe != b.keyframe ? a.keyframe < b.keyframe : a.width > b.width;
      });
      spans.erase(std::unique(spans.begin(), spans.end(),
                              [](const Span& a, const Span& b) { return a.keyframe == b.keyframe; }),
                  spans.end());
      std::vector<int> offset(spans.size());
      int cols = 0;
      for (std::size_t i = 0; i < spans.size(); ++i) {
        offset[i] = cols;
        cols += spans[i].width;
      }
      Eigen::MatrixXd f = Eigen::MatrixXd::Zero(rows, cols + kCalibrationDim);
      int r0 = 0;
      for (const RowBlock& b : front) {
        int c0 = 0;
        std::size_t i = 0;
        for (const Span& s : b.spans) {
          while (spans[i].keyframe != s.keyframe) ++i;
          f.block(r0, offset[i], b.a.rows(), s.width) = b.a.middleCols(c0, s.width);
          c0 += s.width;
        }
        f.block(r0, cols, b.a.rows(), kCalibrationDim) = b.a.rightCols(kCalibrationDim);
        r0 += static_cast<int>(b.a.rows());
      }
      front.clear();
      front.shrink_to_fit();
      RowBlock next;
      next.spans.assign(spans.begin() + 1, spans.end());
      next.a = eliminate(f, kB, what);
      push(std::move(next));
    }

    // 4. calibration block
    int rows = 0;
    for (const RowBlock& b : theta_rows) rows += static_cast<int>(b.a.rows());
    Eigen::MatrixXd t(rows, kCalibrationDim);
    int r0 = 0;
    for (const RowBlock& b : theta_rows) {
      t.middleRows(r0, b.a.rows()) = b.a;
      r0 += static_cast<int>(b.a.rows());
    }
    out.covariance = theta_covariance(t);
  } catch (const Singular& s) {
    out.singular = true;
    out.reason = s.reason;
    out.covariance.setConstant(std::numeric_limits<double>::infinity());
  }
  return out;
}

CalibMatrix normalize(const CalibMatrix& covariance, const NormalizationRef& ref) {
  ref.validate();
  const CalibVector inv = ref.sigma.cwiseInverse();
  return inv.asDiagonal() * covariance * inv.asDiagonal();
}

double entropy(const Eigen::MatrixXd& covariance) {
  const Eigen::Index k = covariance.rows();
  if (k == 0 || covariance.cols() != k || !covariance.allFinite()) return kInfiniteEntropy;
  const Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) return kInfiniteEntropy;
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double d = llt.matrixLLT()(i, i);
    if (!(d > 0.0)) return kInfiniteEntropy;
    log_det += 2.0 * std::log(d);
  }
  return 0.5 * (static_cast<double>(k) * std::log(2.0 * M_PI * M_E) + log_det);
}

std::vector<double> group_entropies(const MarginalCovariance& marginal,
                                    const ParameterGrouping& grouping,
                                    const NormalizationRef& ref) {
  grouping.validate();
  std::vector<double> out(grouping.size(), kInfiniteEntropy);
  if (marginal.singular) return out;
  const CalibMatrix normalized = normalize(marginal.covariance, ref);
  for (std::size_t q = 0; q < grouping.size(); ++q) {
    const auto& idx = grouping.groups[q].indices;
    const int k = static_cast<int>(idx.size());
    Eigen::MatrixXd block(k, k);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) block(i, j) = normalized(idx[i], idx[j]);
    }
    out[q] = entropy(block);
  }
  return out;
}

SegmentScore score_segment(const Segment& segment, const CalibrationParams& calibration,
                           const NoiseSpec& noise, const WorldModel& world,
                           const ParameterGrouping& grouping, const NormalizationRef& ref) {
  SegmentScore s;
  s.segment_id = segment.id;
  s.start_time = segment.start_time();
  s.first_keyframe = segment.first_keyframe();
  s.last_keyframe = segment.last_keyframe();
  const Problem problem = make_segment_problem(segment, calibration, noise, world);
  const MarginalCovariance marginal = marginal_covariance(problem);
  s.singular = marginal.singular;
  s.entropies = group_entropies(marginal, grouping, ref);
  return s;
}

NormalizationRef reference_from_marginals(const std::vector<MarginalCovariance>& marginals) {
  CalibVector log_sum = CalibVector::Zero();
  int used = 0;
  for (const MarginalCovariance& m : marginals) {
    if (m.singular) continue;
    const CalibVector d = m.covariance.diagonal();
    if (!(d.array() > 0.0).all() || !d.allFinite()) continue;
    log_sum += 0.5 * d.array().log().matrix();
    ++used;
  }
  if (used == 0) throw std::invalid_argument("no usable reference segment");
  NormalizationRef ref;
  ref.sigma = (log_sum / used).array().exp().matrix();
  return ref;
}

void write_score_csv(std::ostream& out, const std::vector<SegmentScore>& scores,
                     const ParameterGrouping& grouping) {
  out << "segment_id,start_time";
  for (const ParameterGroup& g : grouping.groups) out << ",H_" << g.name;
  out << "\n";
  out << std::setprecision(10);
  for (const SegmentScore& s : scores) {
    out << s.segment_id << "," << s.start_time;
    for (double h : s.entropies) {
      out << ",";
      if (std::isfinite(h)) {
        out << h;
      } else {
        out << "inf";
      }
    }
    out << "\n";
  }
}

}  // namespace vical
