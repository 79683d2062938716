#include "vical/linear_solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vical {

BlockEnvelopeCholesky::BlockEnvelopeCholesky(std::vector<int> first, int block, int border)
    : first_(std::move(first)), block_(block), border_(border) {
  const int n = block_count();
  rows_.resize(n);
  for (int i = 0; i < n; ++i) {
    if (first_[i] < 0 || first_[i] > i) throw std::invalid_argument("invalid envelope profile");
    rows_[i] = Matrix::Zero(block_, (i - first_[i] + 1) * block_);
  }
  border_rows_ = Matrix::Zero(border_, n * block_);
  corner_ = Matrix::Zero(border_, border_);
}

void BlockEnvelopeCholesky::set_zero() {
  for (Matrix& r : rows_) r.setZero();
  border_rows_.setZero();
  corner_.setZero();
  deficient_.clear();
  pinned_.clear();
}

void BlockEnvelopeCholesky::add_diagonal(int index, double value) {
  const int n_inner = block_count() * block_;
  if (index < n_inner) {
    const int i = index / block_;
    const int c = index % block_;
    rows_[i](c, (i - first_[i]) * block_ + c) += value;
  } else {
    corner_(index - n_inner, index - n_inner) += value;
  }
}

double BlockEnvelopeCholesky::diagonal(int index) const {
  const int n_inner = block_count() * block_;
  if (index < n_inner) {
    const int i = index / block_;
    const int c = index % block_;
    return rows_[i](c, (i - first_[i]) * block_ + c);
  }
  return corner_(index - n_inner, index - n_inner);
}

void BlockEnvelopeCholesky::factor_diagonal(Eigen::Ref<Matrix> a, int global_offset,
                                            double relative_tolerance,
                                            const Vector& original_diagonal) {
  const int m = static_cast<int>(a.rows());
  for (int c = 0; c < m; ++c) {
    double d = a(c, c);
    for (int k = 0; k < c; ++k) d -= a(c, k) * a(c, k);
    const double reference = original_diagonal(c);
    if (!(d > relative_tolerance * reference) || !(d > 0.0)) {
      deficient_.push_back(global_offset + c);
      pinned_[global_offset + c] = 1;
      a(c, c) = 1.0;
      for (int k = 0; k < c; ++k) a(c, k) = 0.0;
      for (int r = c + 1; r < m; ++r) a(r, c) = 0.0;
      continue;
    }
    const double l = std::sqrt(d);
    a(c, c) = l;
    for (int r = c + 1; r < m; ++r) {
      double s = a(r, c);
      for (int k = 0; k < c; ++k) s -= a(r, k) * a(c, k);
      a(r, c) = s / l;
    }
  }
  for (int r = 0; r < m; ++r) {
    for (int c = r + 1; c < m; ++c) a(r, c) = 0.0;
  }
}

int BlockEnvelopeCholesky::factorize(double relative_tolerance) {
  const int n = block_count();
  const int bs = block_;
  deficient_.clear();
  pinned_.assign(dimension(), 0);

  // Dense block-row kernels: for block row i and column j (first(i) <= j < i),
  //   L_ij = (A_ij - sum_{k} L_ik L_jk^T) L_jj^-T, k in [max(first(i), first(j)), j)
  for (int i = 0; i < n; ++i) {
    Matrix& row = rows_[i];
    const int fi = first_[i];
    const Vector original = block(i, i).diagonal();
    for (int j = fi; j <= i; ++j) {
      const int s = std::max(fi, first_[j]);
      auto a_ij = row.middleCols((j - fi) * bs, bs);
      if (j > s) {
        const auto l_ik = row.middleCols((s - fi) * bs, (j - s) * bs);
        const auto l_jk = rows_[j].middleCols((s - first_[j]) * bs, (j - s) * bs);
        a_ij.noalias() -= l_ik * l_jk.transpose();
      }
      if (j < i) {
        const auto l_jj = rows_[j].middleCols((j - first_[j]) * bs, bs);
        l_jj.triangularView<Eigen::Lower>().transpose().solveInPlace<Eigen::OnTheRight>(a_ij);
        for (int c = 0; c < bs; ++c) {
          if (pinned_[j * bs + c]) a_ij.col(c).setZero();
        }
      }
    }
    // diagonal block: lower triangle of a_ii holds the updated matrix
    auto a_ii = row.middleCols((i - fi) * bs, bs);
    Matrix tmp = a_ii;
    factor_diagonal(tmp, i * bs, relative_tolerance, original);
    a_ii = tmp;
  }

  if (border_ > 0) {
    const Vector original = corner_.diagonal();
    // B_i = (A_Bi - sum_{k in [first(i), i)} B_k L_ik^T) L_ii^-T
    for (int i = 0; i < n; ++i) {
      const int fi = first_[i];
      auto b_i = border_rows_.middleCols(i * bs, bs);
      if (i > fi) {
        b_i.noalias() -= border_rows_.middleCols(fi * bs, (i - fi) * bs) *
                         rows_[i].leftCols((i - fi) * bs).transpose();
      }
      const auto l_ii = rows_[i].middleCols((i - fi) * bs, bs);
      l_ii.triangularView<Eigen::Lower>().transpose().solveInPlace<Eigen::OnTheRight>(b_i);
      for (int c = 0; c < bs; ++c) {
        if (pinned_[i * bs + c]) b_i.col(c).setZero();
      }
    }
    Matrix c = corner_;
    c.triangularView<Eigen::Lower>() -= border_rows_ * border_rows_.transpose();
    factor_diagonal(c, n * bs, relative_tolerance, original);
    corner_ = c;
  }
  return static_cast<int>(deficient_.size());
}

BlockEnvelopeCholesky::Vector BlockEnvelopeCholesky::solve(const Vector& rhs) const {
  const int n = block_count();
  const int bs = block_;
  if (rhs.size() != dimension()) throw std::invalid_argument("rhs dimension mismatch");
  Vector y = rhs;
  for (std::size_t k = 0; k < pinned_.size(); ++k) {
    if (pinned_[k]) y(k) = 0.0;
  }
  // forward: L y = rhs
  for (int i = 0; i < n; ++i) {
    const int fi = first_[i];
    auto yi = y.segment(i * bs, bs);
    if (i > fi) yi.noalias() -= rows_[i].leftCols((i - fi) * bs) * y.segment(fi * bs, (i - fi) * bs);
    for (int c = 0; c < bs; ++c) {
      if (pinned_[i * bs + c]) yi(c) = 0.0;
    }
    rows_[i].middleCols((i - fi) * bs, bs).triangularView<Eigen::Lower>().solveInPlace(yi);
    for (int c = 0; c < bs; ++c) {
      if (pinned_[i * bs + c]) yi(c) = 0.0;
    }
  }
  if (border_ > 0) {
    auto yb = y.tail(border_);
    yb.noalias() -= border_rows_ * y.head(n * bs);
    for (int c = 0; c < border_; ++c) {
      if (pinned_[n * bs + c]) yb(c) = 0.0;
    }
    corner_.triangularView<Eigen::Lower>().solveInPlace(yb);
    for (int c = 0; c < border_; ++c) {
      if (pinned_[n * bs + c]) yb(c) = 0.0;
    }
    // backward through the border
    corner_.triangularView<Eigen::Lower>().transpose().solveInPlace(yb);
    for (int c = 0; c < border_; ++c) {
      if (pinned_[n * bs + c]) yb(c) = 0.0;
    }
    y.head(n * bs).noalias() -= border_rows_.transpose() * yb;
  }
  // backward: L^T x = y, block rows in reverse
  for (int i = n - 1; i >= 0; --i) {
    const int fi = first_[i];
    auto xi = y.segment(i * bs, bs);
    rows_[i].middleCols((i - fi) * bs, bs).triangularView<Eigen::Lower>().transpose().solveInPlace(xi);
    for (int c = 0; c < bs; ++c) {
      if (pinned_[i * bs + c]) xi(c) = 0.0;
    }
    if (i > fi) {
      y.segment(fi * bs, (i - fi) * bs).noalias() -= rows_[i].leftCols((i - fi) * bs).transpose() * xi;
    }
  }
  return y;
}

BlockEnvelopeCholesky::Matrix BlockEnvelopeCholesky::to_dense() const {
  const int n = block_count();
  const int bs = block_;
  Matrix d = Matrix::Zero(dimension(), dimension());
  for (int i = 0; i < n; ++i) {
    for (int j = first_[i]; j <= i; ++j) d.block(i * bs, j * bs, bs, bs) = block(i, j);
  }
  d.bottomLeftCorner(border_, n * bs) = border_rows_;
  d.bottomRightCorner(border_, border_) = corner_;
  Matrix sym = d.triangularView<Eigen::Lower>();
  sym.triangularView<Eigen::StrictlyUpper>() = sym.transpose();
  return sym;
}

}  // namespace vical
