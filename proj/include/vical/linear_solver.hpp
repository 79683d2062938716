#pragma once

#include <vector>

#include <Eigen/Core>

namespace vical {

// Symmetric positive (semi-)definite matrix made of n square blocks of size
// `block` with a variable-band ("envelope") lower profile, plus a dense
// border of `border` rows/columns at the end:
//
//   [ A_00                 ]
//   [ A_10 A_11            ]   block row i holds columns first(i) .. i
//   [  ...       ...       ]
//   [ B_0  B_1  ...  C     ]   dense border rows
//
// Only the lower triangle is stored. factorize() computes L L^T in place.
// A pivot that falls below `relative_tolerance` times the original diagonal
// entry is skipped: the variable is pinned to zero and recorded as deficient.
class BlockEnvelopeCholesky {
 public:
  using Matrix = Eigen::MatrixXd;
  using Vector = Eigen::VectorXd;

  BlockEnvelopeCholesky() = default;
  // first[i] <= i is the first non-zero block column of block row i.
  BlockEnvelopeCholesky(std::vector<int> first, int block, int border);

  int block_count() const { return static_cast<int>(first_.size()); }
  int block_size() const { return block_; }
  int border_size() const { return border_; }
  int dimension() const { return block_count() * block_ + border_; }
  int first(int i) const { return first_[i]; }

  void set_zero();

  // Block (i, j) with first(i) <= j <= i.
  Eigen::Block<Matrix> block(int i, int j) {
    return rows_[i].block(0, (j - first_[i]) * block_, block_, block_);
  }
  Eigen::Block<const Matrix> block(int i, int j) const {
    return rows_[i].block(0, (j - first_[i]) * block_, block_, block_);
  }
  // Border columns of block i: rows of the border, columns of block i.
  Eigen::Block<Matrix, Eigen::Dynamic, Eigen::Dynamic, true> border_block(int i) {
    return border_rows_.middleCols(i * block_, block_);
  }
  Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true> border_block(int i) const {
    return border_rows_.middleCols(i * block_, block_);
  }
  Matrix& corner() { return corner_; }
  const Matrix& corner() const { return corner_; }

  // Adds `value` to diagonal entry `index` (global index).
  void add_diagonal(int index, double value);
  double diagonal(int index) const;

  // In-place factorization. Returns the number of skipped pivots.
  int factorize(double relative_tolerance);
  // Global indices of skipped pivots, ascending.
  const std::vector<int>& deficient() const { return deficient_; }

  // Solves A x = rhs with the factor; skipped variables are returned as zero.
  Vector solve(const Vector& rhs) const;

  // Dense copy of the stored (lower) matrix, symmetrized. For tests.
  Matrix to_dense() const;

 private:
  void factor_diagonal(Eigen::Ref<Matrix> a, int global_offset, double relative_tolerance,
                       const Vector& original_diagonal);

  std::vector<int> first_;
  int block_ = 0;
  int border_ = 0;
  std::vector<Matrix> rows_;
  Matrix border_rows_;
  Matrix corner_;
  std::vector<int> deficient_;
  std::vector<char> pinned_;
};

}  // namespace vical
