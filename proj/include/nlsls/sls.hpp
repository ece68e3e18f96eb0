#pragma once

/**
 * @file
 * @brief System-level parameterization of causal linear error feedback.
 *
 * For LTV error dynamics
 *   dx_{k+1} = A_k dx_k + B_k du_k + w_k,   dx_0 = 0,
 * stacked over dx = (dx_1..dx_T), du = (du_1..du_T), w = (w_0..w_{T-1}),
 * the closed-loop maps dx = Phi_x w, du = Phi_u w are exactly the pairs on the
 * affine subspace  (I - Z A) Phi_x - Z B Phi_u = I  where A = blkdiag(A_1..A_{T-1}, 0),
 * B likewise and Z is the block down-shift. The induced feedback is
 * K = Phi_u Phi_x^{-1}.
 *
 * Throughout, "diagonal lists" hold the T diagonal blocks of A and B in that
 * convention: entry i multiplies block-row i of the shifted product, so entry i
 * is A_{i+1} and the last entry is unused by the recursion.
 */

#include "nlsls/block_lower_triangular.hpp"

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace nlsls {

/// Default certification tolerance on the affine-subspace residual.
inline constexpr double kSlpTolerance = 1e-8;

struct SystemResponse {
  BlockLowerTriangular phi_x;  ///< T blocks of n_x x n_x
  BlockLowerTriangular phi_u;  ///< T blocks of n_u x n_x

  SystemResponse() = default;
  SystemResponse(BlockLowerTriangular px, BlockLowerTriangular pu)
      : phi_x(std::move(px)), phi_u(std::move(pu)) {
    if (phi_x.horizon() != phi_u.horizon() || phi_x.block_rows() != phi_x.block_cols() ||
        phi_u.block_cols() != phi_x.block_cols()) {
      throw std::invalid_argument("SystemResponse: inconsistent dimensions");
    }
  }
  SystemResponse(int horizon, int nx, int nu)
      : phi_x(horizon, nx, nx), phi_u(horizon, nu, nx) {}

  int horizon() const { return phi_x.horizon(); }
  int state_dim() const { return phi_x.block_rows(); }
  int input_dim() const { return phi_u.block_rows(); }

  /// Stacked (Phi_x^{i,j}; Phi_u^{i,j}).
  MatrixXd stacked(int i, int j) const {
    MatrixXd s(state_dim() + input_dim(), state_dim());
    s.topRows(state_dim()) = phi_x.block(i, j);
    s.bottomRows(input_dim()) = phi_u.block(i, j);
    return s;
  }
};

/// Block down-shift Z: identity blocks on the first sub-diagonal.
inline BlockLowerTriangular shift_matrix(int horizon, int n) {
  BlockLowerTriangular z(horizon, n, n);
  for (int i = 1; i < horizon; ++i) z.block(i, 1).setIdentity();
  return z;
}

namespace detail {
inline void check_lists(const std::vector<MatrixXd>& a, const std::vector<MatrixXd>& b, int horizon,
                        int nx, int nu) {
  if (static_cast<int>(a.size()) != horizon || static_cast<int>(b.size()) != horizon) {
    throw std::invalid_argument("A/B lists must have one block per horizon step");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != nx || a[i].cols() != nx || b[i].rows() != nx || b[i].cols() != nu) {
      throw std::invalid_argument("A/B block " + std::to_string(i) + " has wrong shape");
    }
  }
}
}  // namespace detail

/// (I - Z A) Phi_x - Z B Phi_u - I.
inline BlockLowerTriangular slp_residual(const std::vector<MatrixXd>& a_blocks,
                                         const std::vector<MatrixXd>& b_blocks,
                                         const SystemResponse& resp) {
  const int t = resp.horizon(), nx = resp.state_dim(), nu = resp.input_dim();
  detail::check_lists(a_blocks, b_blocks, t, nx, nu);
  BlockLowerTriangular r = resp.phi_x;
  for (int i = 0; i < t; ++i) {
    r.block(i, 0) -= MatrixXd::Identity(nx, nx);
    for (int j = 1; j <= i; ++j) {
      r.block(i, j).noalias() -= a_blocks[static_cast<std::size_t>(i - 1)] * resp.phi_x.block(i - 1, j - 1);
      r.block(i, j).noalias() -= b_blocks[static_cast<std::size_t>(i - 1)] * resp.phi_u.block(i - 1, j - 1);
    }
  }
  return r;
}

/**
 * Response generated by a causal feedback K (du = K dx) on the LTV system,
 * built row by row: Phi_x^{i,j} = A_i Phi_x^{i-1,j-1} + B_i Phi_u^{i-1,j-1},
 * Phi_x^{i,0} = I, Phi_u = K Phi_x.
 */
inline SystemResponse response_from_feedback(const std::vector<MatrixXd>& a_blocks,
                                             const std::vector<MatrixXd>& b_blocks,
                                             const BlockLowerTriangular& k) {
  const int t = k.horizon(), nx = k.block_cols(), nu = k.block_rows();
  detail::check_lists(a_blocks, b_blocks, t, nx, nu);
  SystemResponse r(t, nx, nu);
  for (int i = 0; i < t; ++i) {
    r.phi_x.block(i, 0).setIdentity();
    for (int j = 1; j <= i; ++j) {
      r.phi_x.block(i, j) = a_blocks[static_cast<std::size_t>(i - 1)] * r.phi_x.block(i - 1, j - 1) +
                            b_blocks[static_cast<std::size_t>(i - 1)] * r.phi_u.block(i - 1, j - 1);
    }
    for (int j = 0; j <= i; ++j) {
      auto& pu = r.phi_u.block(i, j);
      for (int l = 0; l <= j; ++l) pu.noalias() += k.block(i, l) * r.phi_x.block(i - l, j - l);
    }
  }
  return r;
}

/// Phi_x consistent with a given Phi_u (exactly on the affine subspace).
inline SystemResponse response_from_input_map(const std::vector<MatrixXd>& a_blocks,
                                              const std::vector<MatrixXd>& b_blocks,
                                              const BlockLowerTriangular& phi_u) {
  const int t = phi_u.horizon(), nx = phi_u.block_cols(), nu = phi_u.block_rows();
  detail::check_lists(a_blocks, b_blocks, t, nx, nu);
  SystemResponse r(BlockLowerTriangular(t, nx, nx), phi_u);
  for (int i = 0; i < t; ++i) {
    r.phi_x.block(i, 0).setIdentity();
    for (int j = 1; j <= i; ++j) {
      r.phi_x.block(i, j) = a_blocks[static_cast<std::size_t>(i - 1)] * r.phi_x.block(i - 1, j - 1) +
                            b_blocks[static_cast<std::size_t>(i - 1)] * phi_u.block(i - 1, j - 1);
    }
  }
  return r;
}

/// Largest deviation of a diagonal block of Phi_x from the identity.
inline double diagonal_identity_defect(const SystemResponse& resp) {
  double d = 0.0;
  const int nx = resp.state_dim();
  for (int i = 0; i < resp.horizon(); ++i) {
    d = std::max(d, (resp.phi_x.block(i, 0) - MatrixXd::Identity(nx, nx)).cwiseAbs().maxCoeff());
  }
  return d;
}

/**
 * K with K Phi_x = Phi_u by block forward substitution (no inverse formed).
 * Requires identity diagonal blocks of Phi_x.
 */
inline BlockLowerTriangular extract_feedback(const SystemResponse& resp, double tol = kSlpTolerance) {
  const double defect = diagonal_identity_defect(resp);
  if (defect > tol) {
    throw std::domain_error("extract_feedback: diagonal blocks of Phi_x deviate from identity by " +
                            std::to_string(defect));
  }
  const int t = resp.horizon();
  BlockLowerTriangular k(t, resp.input_dim(), resp.state_dim());
  // Dense indices: K[a][b] = Phi_u[a][b] - sum_{c=b+1}^{a} K[a][c] Phi_x[c][b].
  for (int a = 0; a < t; ++a) {
    for (int b = a; b >= 0; --b) {
      MatrixXd kab = resp.phi_u.block(a, a - b);
      for (int c = b + 1; c <= a; ++c) kab.noalias() -= k.block(a, a - c) * resp.phi_x.block(c, c - b);
      k.block(a, a - b) = std::move(kab);
    }
  }
  return k;
}

struct ErrorTrajectory {
  std::vector<VectorXd> dx;  ///< dx_1..dx_T
  std::vector<VectorXd> du;  ///< du_1..du_T
};

/// (dx_k, du_k) = sum_j Phi^{k-1,j} d_{k-1-j} for k = 1..T.
inline ErrorTrajectory closed_loop_map(const SystemResponse& resp, const std::vector<VectorXd>& d) {
  if (static_cast<int>(d.size()) != resp.horizon()) {
    throw std::invalid_argument("closed_loop_map: disturbance sequence must have length T");
  }
  return {resp.phi_x.apply(d), resp.phi_u.apply(d)};
}

/**
 * Online error feedback without forming K. @p dx_history holds dx_1..dx_k
 * (dx_0 = 0 is implicit). The disturbance estimates are recovered from
 * dx = Phi_x w by forward substitution, then du_k = sum_j Phi_u^{k-1,j} w_{k-1-j}.
 */
inline VectorXd controller_step(const SystemResponse& resp, const std::vector<VectorXd>& dx_history) {
  const int k = static_cast<int>(dx_history.size());
  if (k > resp.horizon()) {
    throw std::invalid_argument("controller_step: history longer than the horizon");
  }
  const int nx = resp.state_dim();
  VectorXd du = VectorXd::Zero(resp.input_dim());
  if (k == 0) return du;
  std::vector<VectorXd> w(static_cast<std::size_t>(k));
  for (int m = 0; m < k; ++m) {
    VectorXd wm = dx_history[static_cast<std::size_t>(m)];
    if (wm.size() != nx) throw std::invalid_argument("controller_step: state dimension mismatch");
    for (int j = 1; j <= m; ++j) wm.noalias() -= resp.phi_x.block(m, j) * w[static_cast<std::size_t>(m - j)];
    w[static_cast<std::size_t>(m)] = std::move(wm);
  }
  for (int j = 0; j < k; ++j) du.noalias() += resp.phi_u.block(k - 1, j) * w[static_cast<std::size_t>(k - 1 - j)];
  return du;
}

/// du_k = sum_j K^{k-1,j} dx_{k-j}, the explicit-gain form of the same policy.
inline VectorXd feedback_step(const BlockLowerTriangular& k_gain, const std::vector<VectorXd>& dx_history) {
  const int k = static_cast<int>(dx_history.size());
  if (k > k_gain.horizon()) throw std::invalid_argument("feedback_step: history longer than the horizon");
  VectorXd du = VectorXd::Zero(k_gain.block_rows());
  for (int j = 0; j < k; ++j) du.noalias() += k_gain.block(k - 1, j) * dx_history[static_cast<std::size_t>(k - 1 - j)];
  return du;
}

}  // namespace nlsls
