#pragma once

/**
 * @file
 * @brief Causal (block lower-triangular) operators over a finite horizon.
 *
 * A matrix M with T block rows and T block columns of size p x q where block
 * M^{i,j} (0 <= j <= i < T) sits in block-row i, block-column i - j, i.e.
 * j counts how far left of the diagonal the block lies. Only the lower
 * triangle is stored.
 */

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlsls {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class BlockLowerTriangular {
 public:
  BlockLowerTriangular() = default;
  BlockLowerTriangular(int horizon, int block_rows, int block_cols)
      : horizon_(horizon), rows_(block_rows), cols_(block_cols) {
    if (horizon < 1 || block_rows < 0 || block_cols < 0) {
      throw std::invalid_argument("BlockLowerTriangular: invalid dimensions");
    }
    blocks_.assign(static_cast<std::size_t>(horizon) * (horizon + 1) / 2,
                   MatrixXd::Zero(block_rows, block_cols));
  }

  static BlockLowerTriangular identity(int horizon, int n) {
    BlockLowerTriangular m(horizon, n, n);
    for (int i = 0; i < horizon; ++i) m.block(i, 0).setIdentity();
    return m;
  }

  /// blkdiag(D_0, ..., D_{T-1}) stored on the j = 0 diagonal.
  static BlockLowerTriangular block_diagonal(const std::vector<MatrixXd>& diag) {
    if (diag.empty()) throw std::invalid_argument("block_diagonal: empty list");
    BlockLowerTriangular m(static_cast<int>(diag.size()), static_cast<int>(diag[0].rows()),
                           static_cast<int>(diag[0].cols()));
    for (std::size_t i = 0; i < diag.size(); ++i) {
      if (diag[i].rows() != m.rows_ || diag[i].cols() != m.cols_) {
        throw std::invalid_argument("block_diagonal: inconsistent block sizes");
      }
      m.block(static_cast<int>(i), 0) = diag[i];
    }
    return m;
  }

  static BlockLowerTriangular from_dense(const MatrixXd& dense, int horizon, int p, int q) {
    if (dense.rows() != horizon * p || dense.cols() != horizon * q) {
      throw std::invalid_argument("from_dense: dimension mismatch");
    }
    BlockLowerTriangular m(horizon, p, q);
    for (int i = 0; i < horizon; ++i) {
      for (int j = 0; j <= i; ++j) m.block(i, j) = dense.block(i * p, (i - j) * q, p, q);
    }
    return m;
  }

  int horizon() const { return horizon_; }
  int block_rows() const { return rows_; }
  int block_cols() const { return cols_; }
  std::size_t num_blocks() const { return blocks_.size(); }

  static std::size_t index(int i, int j) {
    return static_cast<std::size_t>(i) * (i + 1) / 2 + static_cast<std::size_t>(j);
  }

  MatrixXd& block(int i, int j) {
    check(i, j);
    return blocks_[index(i, j)];
  }
  const MatrixXd& block(int i, int j) const {
    check(i, j);
    return blocks_[index(i, j)];
  }

  MatrixXd dense() const {
    MatrixXd d = MatrixXd::Zero(static_cast<Eigen::Index>(horizon_) * rows_,
                                static_cast<Eigen::Index>(horizon_) * cols_);
    for (int i = 0; i < horizon_; ++i) {
      for (int j = 0; j <= i; ++j) d.block(i * rows_, (i - j) * cols_, rows_, cols_) = block(i, j);
    }
    return d;
  }

  /// Largest absolute entry.
  double max_abs() const {
    double m = 0.0;
    for (const auto& b : blocks_) {
      if (b.size() > 0) m = std::max(m, b.cwiseAbs().maxCoeff());
    }
    return m;
  }

  /// y_i = sum_{j<=i} M^{i,j} x_{i-j} for a sequence x_0..x_{T-1}.
  std::vector<VectorXd> apply(const std::vector<VectorXd>& x) const {
    if (static_cast<int>(x.size()) != horizon_) {
      throw std::invalid_argument("apply: sequence length must equal the horizon");
    }
    std::vector<VectorXd> y(x.size(), VectorXd::Zero(rows_));
    for (int i = 0; i < horizon_; ++i) {
      for (int j = 0; j <= i; ++j) y[static_cast<std::size_t>(i)] += block(i, j) * x[static_cast<std::size_t>(i - j)];
    }
    return y;
  }

  BlockLowerTriangular& operator+=(const BlockLowerTriangular& o) {
    check_same(o);
    for (std::size_t k = 0; k < blocks_.size(); ++k) blocks_[k] += o.blocks_[k];
    return *this;
  }
  BlockLowerTriangular& operator-=(const BlockLowerTriangular& o) {
    check_same(o);
    for (std::size_t k = 0; k < blocks_.size(); ++k) blocks_[k] -= o.blocks_[k];
    return *this;
  }
  BlockLowerTriangular& operator*=(double s) {
    for (auto& b : blocks_) b *= s;
    return *this;
  }

  friend BlockLowerTriangular operator+(BlockLowerTriangular a, const BlockLowerTriangular& b) {
    return a += b;
  }
  friend BlockLowerTriangular operator-(BlockLowerTriangular a, const BlockLowerTriangular& b) {
    return a -= b;
  }
  friend BlockLowerTriangular operator*(double s, BlockLowerTriangular a) { return a *= s; }

  /// Structured product; (MN)^{i,j} = sum_{l=0}^{j} M^{i,l} N^{i-l,j-l}.
  friend BlockLowerTriangular operator*(const BlockLowerTriangular& m, const BlockLowerTriangular& n) {
    if (m.horizon_ != n.horizon_ || m.cols_ != n.rows_) {
      throw std::invalid_argument("BlockLowerTriangular product: dimension mismatch");
    }
    BlockLowerTriangular out(m.horizon_, m.rows_, n.cols_);
    for (int i = 0; i < m.horizon_; ++i) {
      for (int j = 0; j <= i; ++j) {
        auto& acc = out.block(i, j);
        for (int l = 0; l <= j; ++l) acc.noalias() += m.block(i, l) * n.block(i - l, j - l);
      }
    }
    return out;
  }

 private:
  void check(int i, int j) const {
    if (i < 0 || i >= horizon_ || j < 0 || j > i) {
      throw std::out_of_range("BlockLowerTriangular: block (" + std::to_string(i) + "," +
                              std::to_string(j) + ") outside lower triangle");
    }
  }
  void check_same(const BlockLowerTriangular& o) const {
    if (o.horizon_ != horizon_ || o.rows_ != rows_ || o.cols_ != cols_) {
      throw std::invalid_argument("BlockLowerTriangular: dimension mismatch");
    }
  }

  int horizon_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<MatrixXd> blocks_;
};

}  // namespace nlsls
