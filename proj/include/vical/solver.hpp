#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vical/problem.hpp"

namespace vical {

// Rank-deficient normal equations. `block` names the first unconstrained
// block ("keyframe 17", "landmark 4", "calibration m_g[1]").
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& message, std::string block, int deficiency)
      : std::runtime_error(message), block_(std::move(block)), deficiency_(deficiency) {}
  const std::string& block() const { return block_; }
  int deficiency() const { return deficiency_; }

 private:
  std::string block_;
  int deficiency_;
};

struct SolverOptions {
  int max_iterations = 50;
  double initial_lambda = 1e-4;  // 0 gives plain Gauss-Newton steps
  double lambda_increase = 10.0;
  double lambda_decrease = 10.0;
  double max_lambda = 1e16;
  double relative_cost_tolerance = 1e-8;
  double gradient_tolerance = 1e-8;  // infinity norm
  double step_tolerance = 1e-10;     // infinity norm of an accepted tangent step
  double rank_tolerance = 1e-11;     // pivot / original diagonal
  bool check_rank = true;
};

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;       // cost after the iteration (unchanged on rejection)
  double trial_cost = 0.0;
  double lambda = 0.0;     // damping used for this step
  double gradient_norm = 0.0;
  bool accepted = false;
};

enum class Termination { kGradient, kRelativeCost, kStepSize, kMaxIterations, kNoProgress, kZeroCost };
std::string to_string(Termination t);

struct SolveReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int accepted = 0;
  Termination termination = Termination::kMaxIterations;
  std::vector<IterationRecord> history;
  double seconds = 0.0;  // wall clock of the whole solve
  bool converged() const {
    return termination == Termination::kGradient || termination == Termination::kRelativeCost ||
           termination == Termination::kStepSize || termination == Termination::kZeroCost;
  }
};

// Interface the Levenberg-Marquardt driver works on.
class LeastSquaresModel {
 public:
  virtual ~LeastSquaresModel() = default;
  // 0.5 * ||r||^2 at the current estimate.
  virtual double evaluate_cost() = 0;
  // Builds J^T J and J^T r at the current estimate; returns the cost there.
  virtual double linearize() = 0;
  // Infinity norm of J^T r at the last linearization (free variables only).
  virtual double gradient_norm() const = 0;
  // Throws SolverError when the undamped normal equations are rank deficient.
  virtual void check_rank(double relative_tolerance) = 0;
  // Solves (H + lambda diag(H)) dx = -g and applies dx; remembers the old
  // estimate. Returns the infinity norm of dx.
  virtual double step(double lambda) = 0;
  virtual void revert() = 0;
};

SolveReport levenberg_marquardt(LeastSquaresModel& model, const SolverOptions& options);

// Small dense model: residual(x) and jacobian(x) callbacks on a vector space.
class DenseResidualModel : public LeastSquaresModel {
 public:
  using Residual = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  using Jacobian = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

  DenseResidualModel(Residual residual, Jacobian jacobian, Eigen::VectorXd x0);

  const Eigen::VectorXd& x() const { return x_; }

  double evaluate_cost() override;
  double linearize() override;
  double gradient_norm() const override;
  void check_rank(double relative_tolerance) override;
  double step(double lambda) override;
  void revert() override;

 private:
  Residual residual_;
  Jacobian jacobian_;
  Eigen::VectorXd x_, previous_;
  Eigen::MatrixXd h_;
  Eigen::VectorXd g_;
};

// Solves the factor-graph problem in place (keyframes, landmarks, free calibration dof).
SolveReport solve(Problem& problem, const SolverOptions& options = {});

// Rank diagnostics of the undamped normal equations at the current estimate:
// number of skipped pivots and the first unconstrained block. Does not throw.
struct RankReport {
  int deficiency = 0;
  std::string first_block;
  std::vector<std::string> blocks;  // one entry per skipped pivot
};
RankReport analyze_rank(const Problem& problem, double relative_tolerance = 1e-11);

}  // namespace vical
