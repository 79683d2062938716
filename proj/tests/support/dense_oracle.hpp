#pragma once

#include <Eigen/Core>

#include "vical/problem.hpp"

namespace vical::testing {

// Whitened residual and Jacobian of a Problem as dense matrices. Columns:
// landmarks (3 each, insertion order), keyframes (15 each, insertion order),
// then the 26 calibration dof. Fixed calibration columns are zero.
struct DenseSystem {
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;
  int landmark_offset = 0;
  int keyframe_offset = 0;
  int calibration_offset = 0;
};

DenseSystem dense_system(const Problem& problem);

struct DenseCovariance {
  Eigen::MatrixXd covariance;  // trailing 26 x 26 of (J^T J)^-1; meaningless when nullity > 0
  int rank = 0;
  int nullity = 0;
  double condition = 0.0;  // of the column-equilibrated J
};

// Marginal covariance of the calibration block of (J^T J)^-1, computed from an
// extended-precision SVD of the column-equilibrated Jacobian.
DenseCovariance dense_calibration_covariance(const Problem& problem, double rank_tolerance = 1e-13);

}  // namespace vical::testing
