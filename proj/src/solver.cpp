#include "vical/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

#include "vical/linear_solver.hpp"

namespace vical {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kGradient: return "gradient";
    case Termination::kRelativeCost: return "relative_cost";
    case Termination::kStepSize: return "step_size";
    case Termination::kMaxIterations: return "max_iterations";
    case Termination::kNoProgress: return "no_progress";
    case Termination::kZeroCost: return "zero_cost";
  }
  return "unknown";
}

SolveReport levenberg_marquardt(LeastSquaresModel& model, const SolverOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  SolveReport report;
  double cost = model.linearize();
  report.initial_cost = cost;
  if (options.check_rank) model.check_rank(options.rank_tolerance);

  double lambda = options.initial_lambda;
  report.termination = Termination::kMaxIterations;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const double grad = model.gradient_norm();
    if (grad < options.gradient_tolerance) {
      report.termination = Termination::kGradient;
      break;
    }
    if (cost <= 0.0) {
      report.termination = Termination::kZeroCost;
      break;
    }
    IterationRecord rec;
    rec.iteration = it;
    rec.lambda = lambda;
    rec.gradient_norm = grad;
    const double step_norm = model.step(lambda);
    const double trial = model.evaluate_cost();
    rec.trial_cost = trial;
    report.iterations = it;
    if (std::isfinite(trial) && trial < cost) {
      const double relative = (cost - trial) / cost;
      cost = model.linearize();
      rec.accepted = true;
      rec.cost = cost;
      ++report.accepted;
      lambda /= options.lambda_decrease;
      report.history.push_back(rec);
      if (relative < options.relative_cost_tolerance) {
        report.termination = Termination::kRelativeCost;
        break;
      }
      if (step_norm < options.step_tolerance) {
        report.termination = Termination::kStepSize;
        break;
      }
    } else {
      model.revert();
      rec.cost = cost;
      report.history.push_back(rec);
      lambda = lambda > 0.0 ? lambda * options.lambda_increase : options.initial_lambda > 0.0
                                                                      ? options.initial_lambda
                                                                      : 1e-4;
      if (lambda > options.max_lambda) {
        report.termination = Termination::kNoProgress;
        break;
      }
    }
  }
  report.final_cost = cost;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------

DenseResidualModel::DenseResidualModel(Residual residual, Jacobian jacobian, Eigen::VectorXd x0)
    : residual_(std::move(residual)), jacobian_(std::move(jacobian)), x_(std::move(x0)) {}

double DenseResidualModel::evaluate_cost() { return 0.5 * residual_(x_).squaredNorm(); }

double DenseResidualModel::linearize() {
  const Eigen::VectorXd r = residual_(x_);
  const Eigen::MatrixXd j = jacobian_(x_);
  h_ = j.transpose() * j;
  g_ = j.transpose() * r;
  return 0.5 * r.squaredNorm();
}

double DenseResidualModel::gradient_norm() const { return g_.cwiseAbs().maxCoeff(); }

void DenseResidualModel::check_rank(double relative_tolerance) {
  BlockEnvelopeCholesky chol({}, 1, static_cast<int>(x_.size()));
  chol.corner() = h_;
  const int deficiency = chol.factorize(relative_tolerance);
  if (deficiency > 0) {
    const std::string block = "variable " + std::to_string(chol.deficient().front());
    throw SolverError("rank-deficient normal equations: " + std::to_string(deficiency) +
                          " unconstrained direction(s), first at " + block,
                      block, deficiency);
  }
}

double DenseResidualModel::step(double lambda) {
  Eigen::MatrixXd a = h_;
  a.diagonal() += lambda * h_.diagonal();
  previous_ = x_;
  const Eigen::VectorXd dx = a.ldlt().solve(-g_);
  x_ += dx;
  return dx.cwiseAbs().maxCoeff();
}

void DenseResidualModel::revert() { x_ = previous_; }

// ---------------------------------------------------------------------------

namespace {

using Mat63 = Eigen::Matrix<double, 6, 3>;
using Mat11x3 = Eigen::Matrix<double, calib_index::kCameraDim, 3>;
constexpr int kB = kKeyframeDim;

// Normal equations of a Problem with landmarks eliminated by a Schur
// complement and keyframes ordered by (partition, time).
class ProblemModel : public LeastSquaresModel {
 public:
  explicit ProblemModel(Problem& problem) : problem_(problem) {
    const auto& kfs = problem_.keyframes();
    const auto& parts = problem_.keyframe_partitions();
    const int n = static_cast<int>(kfs.size());
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    std::sort(order_.begin(), order_.end(), [&](int a, int b) {
      if (parts[a] != parts[b]) return parts[a] < parts[b];
      if (kfs[a].t != kfs[b].t) return kfs[a].t < kfs[b].t;
      return kfs[a].id < kfs[b].id;
    });
    position_.resize(n);
    for (int p = 0; p < n; ++p) position_[order_[p]] = p;

    std::vector<int> first(n);
    std::iota(first.begin(), first.end(), 0);
    const auto couple = [&](int a, int b) {
      const int pa = position_[a], pb = position_[b];
      const int hi = std::max(pa, pb), lo = std::min(pa, pb);
      first[hi] = std::min(first[hi], lo);
    };
    for (const InertialFactor& f : problem_.inertial_factors()) {
      couple(problem_.keyframe_index(f.from), problem_.keyframe_index(f.to));
    }
    for (const BiasBridgeFactor& f : problem_.bias_bridges()) {
      couple(problem_.keyframe_index(f.from), problem_.keyframe_index(f.to));
    }
    const int m = static_cast<int>(problem_.landmarks().size());
    std::vector<int> lowest(m, n);
    std::vector<std::vector<int>> observers(m);
    for (const ReprojectionFactor& f : problem_.reprojection_factors()) {
      const int l = problem_.landmark_index(f.landmark);
      const int p = position_[problem_.keyframe_index(f.keyframe)];
      lowest[l] = std::min(lowest[l], p);
      observers[l].push_back(p);
    }
    for (int l = 0; l < m; ++l) {
      for (int p : observers[l]) first[p] = std::min(first[p], lowest[l]);
    }
    base_ = BlockEnvelopeCholesky(first, kB, kCalibrationDim);
  }

  double evaluate_cost() override { return problem_.linearize(false).cost; }

  double linearize() override {
    const LinearizedProblem lin = problem_.linearize(true);
    inactive_ = lin.inactive_reprojection;
    const int n = static_cast<int>(order_.size());
    const int m = static_cast<int>(problem_.landmarks().size());
    base_.set_zero();
    g_x_ = Eigen::VectorXd::Zero(n * kB + kCalibrationDim);
    h_ll_.assign(m, Mat3::Zero());
    g_l_.assign(m, Vec3::Zero());
    h_cl_.assign(m, Mat11x3::Zero());
    obs_start_.assign(m + 1, 0);
    for (const auto& b : lin.reprojection) ++obs_start_[b.landmark + 1];
    for (int l = 0; l < m; ++l) obs_start_[l + 1] += obs_start_[l];
    obs_pos_.assign(lin.reprojection.size(), 0);
    obs_w_.assign(lin.reprojection.size(), Mat63::Zero());
    std::vector<int> fill(obs_start_.begin(), obs_start_.end() - 1);

    const int border = n * kB;
    for (const auto& b : lin.reprojection) {
      const int p = position_[b.keyframe];
      base_.block(p, p).topLeftCorner<6, 6>() += b.d_pose.transpose() * b.d_pose;
      base_.border_block(p).topLeftCorner<calib_index::kCameraDim, 6>() +=
          b.d_camera.transpose() * b.d_pose;
      base_.corner().topLeftCorner<calib_index::kCameraDim, calib_index::kCameraDim>() +=
          b.d_camera.transpose() * b.d_camera;
      g_x_.segment<6>(p * kB) += b.d_pose.transpose() * b.residual;
      g_x_.segment<calib_index::kCameraDim>(border) += b.d_camera.transpose() * b.residual;
      h_ll_[b.landmark] += b.d_landmark.transpose() * b.d_landmark;
      g_l_[b.landmark] += b.d_landmark.transpose() * b.residual;
      h_cl_[b.landmark] += b.d_camera.transpose() * b.d_landmark;
      const int slot = fill[b.landmark]++;
      obs_pos_[slot] = p;
      obs_w_[slot] = b.d_pose.transpose() * b.d_landmark;
    }
    constexpr int ci = calib_index::kInertialBegin;
    constexpr int cn = calib_index::kInertialDim;
    for (const auto& b : lin.inertial) {
      const int pi = position_[b.from];
      const int pj = position_[b.to];
      base_.block(pi, pi) += b.d_from.transpose() * b.d_from;
      base_.block(pj, pj) += b.d_to.transpose() * b.d_to;
      if (pj > pi) {
        base_.block(pj, pi) += b.d_to.transpose() * b.d_from;
      } else {
        base_.block(pi, pj) += b.d_from.transpose() * b.d_to;
      }
      base_.border_block(pi).middleRows<cn>(ci) += b.d_calib.transpose() * b.d_from;
      base_.border_block(pj).middleRows<cn>(ci) += b.d_calib.transpose() * b.d_to;
      base_.corner().block<cn, cn>(ci, ci) += b.d_calib.transpose() * b.d_calib;
      g_x_.segment<kB>(pi * kB) += b.d_from.transpose() * b.residual;
      g_x_.segment<kB>(pj * kB) += b.d_to.transpose() * b.residual;
      g_x_.segment<cn>(border + ci) += b.d_calib.transpose() * b.residual;
    }
    for (const auto& b : lin.bridges) {
      const int pf = position_[b.from];
      const int pt = position_[b.to];
      const Vec6 w2 = b.weight.cwiseAbs2();
      base_.block(pf, pf).bottomRightCorner<6, 6>().diagonal() += w2;
      base_.block(pt, pt).bottomRightCorner<6, 6>().diagonal() += w2;
      if (pt > pf) {
        base_.block(pt, pf).bottomRightCorner<6, 6>().diagonal() -= w2;
      } else {
        base_.block(pf, pt).bottomRightCorner<6, 6>().diagonal() -= w2;
      }
      g_x_.segment<6>(pf * kB + kf_index::kAccelBias) -= b.weight.cwiseProduct(b.residual);
      g_x_.segment<6>(pt * kB + kf_index::kAccelBias) += b.weight.cwiseProduct(b.residual);
    }
    for (const auto& b : lin.gauges) {
      const int p = position_[b.keyframe];
      base_.block(p, p).topLeftCorner<6, 6>() += b.d_pose.transpose() * b.d_pose;
      g_x_.segment<6>(p * kB) += b.d_pose.transpose() * b.residual;
    }
    const auto& fixed = problem_.calibration_fixed_mask();
    for (int c = 0; c < kCalibrationDim; ++c) {
      if (fixed[c]) g_x_(border + c) = 0.0;
    }
    return lin.cost;
  }

  double gradient_norm() const override {
    double g = g_x_.size() ? g_x_.cwiseAbs().maxCoeff() : 0.0;
    for (const Vec3& v : g_l_) g = std::max(g, v.cwiseAbs().maxCoeff());
    return g;
  }

  // Damped reduced system and right-hand side; returns the landmark block inverses.
  void build_reduced(double lambda, double rank_tolerance, BlockEnvelopeCholesky& sys,
                     Eigen::VectorXd& rhs, std::vector<Mat3>& h_ll_inv,
                     std::vector<int>* singular_landmarks) const {
    const int n = static_cast<int>(order_.size());
    const int border = n * kB;
    const int m = static_cast<int>(h_ll_.size());
    sys = base_;
    rhs = -g_x_;
    const auto& fixed = problem_.calibration_fixed_mask();
    if (lambda > 0.0) {
      for (int k = 0; k < border + kCalibrationDim; ++k) {
        sys.add_diagonal(k, lambda * base_.diagonal(k));
      }
    }
    for (int c = 0; c < kCalibrationDim; ++c) {
      if (fixed[c]) sys.add_diagonal(border + c, 1.0);
    }
    h_ll_inv.assign(m, Mat3::Zero());
    for (int l = 0; l < m; ++l) {
      Mat3 h = h_ll_[l];
      h.diagonal() *= (1.0 + lambda);
      // landmark block check with the same pivot rule as the reduced system
      BlockEnvelopeCholesky small({}, 1, 3);
      small.corner() = h;
      if (small.factorize(rank_tolerance) > 0) {
        if (singular_landmarks) singular_landmarks->push_back(l);
        continue;  // landmark pinned: contributes nothing
      }
      const Mat3 inv = h.llt().solve(Mat3::Identity());
      h_ll_inv[l] = inv;
      const Mat11x3& hc = h_cl_[l];
      const Vec3 mg = inv * g_l_[l];
      for (int a = obs_start_[l]; a < obs_start_[l + 1]; ++a) {
        const int pa = obs_pos_[a];
        const Mat63 wa_m = obs_w_[a] * inv;
        for (int b = obs_start_[l]; b < obs_start_[l + 1]; ++b) {
          const int pb = obs_pos_[b];
          if (pa < pb) continue;
          sys.block(pa, pb).topLeftCorner<6, 6>().noalias() -= wa_m * obs_w_[b].transpose();
        }
        sys.border_block(pa).topLeftCorner<calib_index::kCameraDim, 6>().noalias() -=
            hc * (obs_w_[a] * inv).transpose();
        rhs.segment<6>(pa * kB) += obs_w_[a] * mg;
      }
      sys.corner().topLeftCorner<calib_index::kCameraDim, calib_index::kCameraDim>().noalias() -=
          hc * inv * hc.transpose();
      rhs.segment<calib_index::kCameraDim>(border) += hc * mg;
    }
  }

  void check_rank(double relative_tolerance) override {
    const RankReport r = rank_report(relative_tolerance);
    if (r.deficiency > 0) {
      throw SolverError("rank-deficient normal equations: " + std::to_string(r.deficiency) +
                            " unconstrained direction(s), first at " + r.first_block,
                        r.first_block, r.deficiency);
    }
  }

  RankReport rank_report(double relative_tolerance) const {
    BlockEnvelopeCholesky sys;
    Eigen::VectorXd rhs;
    std::vector<Mat3> inv;
    std::vector<int> singular;
    build_reduced(0.0, relative_tolerance, sys, rhs, inv, &singular);
    RankReport report;
    for (int l : singular) {
      report.blocks.push_back("landmark " + std::to_string(problem_.landmarks()[l].id));
    }
    sys.factorize(relative_tolerance);
    const int border = static_cast<int>(order_.size()) * kB;
    for (int k : sys.deficient()) {
      if (k < border) {
        const int kf = order_[k / kB];
        report.blocks.push_back("keyframe " + std::to_string(problem_.keyframes()[kf].id));
      } else {
        report.blocks.push_back("calibration " + calibration_dof_name(k - border));
      }
    }
    report.deficiency = static_cast<int>(report.blocks.size());
    if (!report.blocks.empty()) report.first_block = report.blocks.front();
    return report;
  }

  double step(double lambda) override {
    BlockEnvelopeCholesky sys;
    Eigen::VectorXd rhs;
    std::vector<Mat3> inv;
    build_reduced(lambda, 1e-14, sys, rhs, inv, nullptr);
    sys.factorize(1e-14);
    const Eigen::VectorXd dx = sys.solve(rhs);

    saved_keyframes_ = problem_.keyframes();
    saved_landmarks_ = problem_.landmarks();
    saved_calibration_ = problem_.calibration();

    const int n = static_cast<int>(order_.size());
    const int border = n * kB;
    for (int p = 0; p < n; ++p) {
      KeyframeState& k = problem_.keyframe(order_[p]);
      k = boxplus(k, Vec15(dx.segment<kB>(p * kB)));
    }
    const int m = static_cast<int>(h_ll_.size());
    const Vec11 dcam = dx.segment<calib_index::kCameraDim>(border);
    double landmark_step = 0.0;
    for (int l = 0; l < m; ++l) {
      Vec3 coupling = g_l_[l] + h_cl_[l].transpose() * dcam;
      for (int a = obs_start_[l]; a < obs_start_[l + 1]; ++a) {
        coupling += obs_w_[a].transpose() * dx.segment<6>(obs_pos_[a] * kB);
      }
      const Vec3 dl = -inv[l] * coupling;
      problem_.landmark(l).p_G += dl;
      landmark_step = std::max(landmark_step, dl.cwiseAbs().maxCoeff());
    }
    CalibVector dtheta = dx.tail<kCalibrationDim>();
    const auto& fixed = problem_.calibration_fixed_mask();
    for (int c = 0; c < kCalibrationDim; ++c) {
      if (fixed[c]) dtheta(c) = 0.0;
    }
    problem_.set_calibration(boxplus(problem_.calibration(), dtheta));
    return std::max(landmark_step, dx.size() ? dx.cwiseAbs().maxCoeff() : 0.0);
  }

  void revert() override {
    for (std::size_t i = 0; i < saved_keyframes_.size(); ++i) problem_.keyframe(i) = saved_keyframes_[i];
    for (std::size_t i = 0; i < saved_landmarks_.size(); ++i) problem_.landmark(i) = saved_landmarks_[i];
    problem_.set_calibration(saved_calibration_);
  }

 private:
  using Vec11 = Eigen::Matrix<double, calib_index::kCameraDim, 1>;

  Problem& problem_;
  std::vector<int> order_;     // position -> keyframe index
  std::vector<int> position_;  // keyframe index -> position
  BlockEnvelopeCholesky base_;
  Eigen::VectorXd g_x_;
  std::vector<Mat3> h_ll_;
  std::vector<Vec3> g_l_;
  std::vector<Mat11x3> h_cl_;
  std::vector<int> obs_start_;
  std::vector<int> obs_pos_;
  std::vector<Mat63> obs_w_;
  int inactive_ = 0;
  std::vector<KeyframeState> saved_keyframes_;
  std::vector<Landmark> saved_landmarks_;
  CalibrationParams saved_calibration_;
};

}  // namespace

SolveReport solve(Problem& problem, const SolverOptions& options) {
  ProblemModel model(problem);
  return levenberg_marquardt(model, options);
}

RankReport analyze_rank(const Problem& problem, double relative_tolerance) {
  // The model only mutates the problem in step(); linearize() and the rank
  // analysis are read-only.
  ProblemModel model(const_cast<Problem&>(problem));
  model.linearize();
  return model.rank_report(relative_tolerance);
}

}  // namespace vical
