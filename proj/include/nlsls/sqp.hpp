#pragma once

/**
 * @file
 * @brief Inexact SQP for the robust nonlinear program.
 *
 * Each iteration solves a convex QP in the step of all variables:
 *  - nominal dynamics linearized exactly in (dz, dv);
 *  - response constraints with A, B frozen at the current trajectory (their
 *    dependence on (z, v) is dropped);
 *  - every absolute value inside the 1-norm / induced inf-norm terms replaced
 *    by a slack s >= +-expr, where the bilinear Phi * tau^2 entries are
 *    linearized at the iterate;
 *  - Gauss-Newton cost Hessian plus alpha I plus a proximal gamma I.
 * Convergence is declared when the primal and dual steps are both below
 * conv_tol in the inf-norm. The duals are those of the QP with every
 * constraint row scaled to unit inf-norm.
 */

#include "nlsls/qp.hpp"
#include "nlsls/robust_ocp.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <limits>
#include <string>
#include <vector>

namespace nlsls {

enum class LineSearch { full_step, backtracking };

struct SqpOptions {
  double gamma = 1e-2;     ///< proximal weight added to the Gauss-Newton Hessian
  double conv_tol = 1e-6;  ///< bound on ||(dy, dnu)||_inf
  int max_iters = 100;
  LineSearch line_search = LineSearch::full_step;
  double qp_tol = 1e-8;
  double cert_tol = 1e-6;
  double tau_cap = 1.0;  ///< clip for the initial error-bound recursion
  /// Weight of the l1 relaxation of the tightened constraints used once a QP is
  /// infeasible; 0 reports the infeasible QP instead.
  double elastic_penalty = 0.0;
};

struct Iterate {
  std::vector<VectorXd> z;  ///< z_0..z_T
  std::vector<VectorXd> v;  ///< v_0..v_T
  SystemResponse resp;
  VectorXd tau;
  VectorXd duals;  ///< last QP multipliers (scaled rows): equalities, inequalities, lower, upper
  VectorXd dy;     ///< last primal step on the program variables
  VectorXd dnu;    ///< last dual step
  int iteration = 0;
};

/// Index bookkeeping for the QP variables and rows of one problem.
class SubproblemLayout {
 public:
  explicit SubproblemLayout(const RobustProblem& p, bool elastic = false)
      : t_(p.horizon), nx_(p.nx()), nu_(p.nu()), closed_(p.mode != ResponseMode::open_loop), elastic_(elastic) {
    const MatrixXd e = p.disturbance();
    for (Eigen::Index c = 0; c < e.cols(); ++c) {
      if (e.col(c).cwiseAbs().maxCoeff() > 0.0) columns_.push_back({false, static_cast<int>(c)});
    }
    // Without disturbance tau = 0 is optimal and the curvature columns vanish.
    if (p.mode != ResponseMode::nominal) {
      for (Eigen::Index m = 0; m < p.mu.size(); ++m) {
        if (p.mu.mu[m] > 0.0) columns_.push_back({true, static_cast<int>(m)});
      }
    }
    const int ne = nx_ + nu_;
    for (int r = 0; r < ne; ++r) unit_dir_.push_back(add_direction(VectorXd::Unit(ne, r)));
    for (int i = 0; i < p.polytope.count(); ++i) {
      const VectorXd c = p.polytope.C.row(i).transpose();
      const double s = c.cwiseAbs().maxCoeff();
      row_dir_.push_back(s > 0.0 ? add_direction(c / s) : -1);
      row_scale_.push_back(s);
    }

    int off = 0;
    off_z_ = off;
    off += t_ * nx_;
    off_v_ = off;
    off += (t_ + 1) * nu_;
    off_px_ = off;
    off += t_ * (t_ - 1) / 2 * nx_ * nx_;
    off_pu_ = off;
    if (closed_) off += t_ * (t_ + 1) / 2 * nu_ * nx_;
    off_tau_ = off;
    off += t_;
    num_program_ = off;
    // Entries without any variable dependence get no slack: the E columns of
    // the fixed blocks Phi_x^{i,0} = I (no input part or open loop), and the
    // curvature columns multiplying tau_0, which stays zero.
    const auto ncol = static_cast<int>(columns_.size());
    slack_.assign(static_cast<std::size_t>(static_cast<int>(directions_.size()) * pairs() * ncol), -1);
    for (int d = 0; d < static_cast<int>(directions_.size()); ++d) {
      const bool input_part = closed_ && directions_[static_cast<std::size_t>(d)].tail(nu_).cwiseAbs().maxCoeff() > 0.0;
      for (int k = 1; k <= t_; ++k) {
        for (int j = 0; j < k; ++j) {
          for (int c = 0; c < ncol; ++c) {
            const bool fixed = columns_[static_cast<std::size_t>(c)].curvature ? k - 1 - j == 0 : j == 0 && !input_part;
            if (!fixed) slack_[static_cast<std::size_t>(entry(d, k, j, c))] = off++;
          }
        }
      }
    }
    off_t_ = off;
    if (ncol > 0) off += t_ * (t_ - 1) / 2;
    off_e_ = off;
    if (elastic_) off += p.polytope.count() * (t_ + 1);
    num_vars_ = off;
  }

  struct Column {
    bool curvature;  ///< false: column of E, true: column of tau^2 diag(mu)
    int index;
  };

  int horizon() const { return t_; }
  int num_vars() const { return num_vars_; }
  /// Variables of the nonlinear program (z, v, Phi, tau); slacks follow.
  int num_program_vars() const { return num_program_; }
  bool has_input_response() const { return closed_; }
  const std::vector<Column>& columns() const { return columns_; }
  const std::vector<VectorXd>& directions() const { return directions_; }
  int unit_direction(int r) const { return unit_dir_[static_cast<std::size_t>(r)]; }
  int row_direction(int i) const { return row_dir_[static_cast<std::size_t>(i)]; }
  double row_scale(int i) const { return row_scale_[static_cast<std::size_t>(i)]; }
  int pairs() const { return t_ * (t_ + 1) / 2; }

  int z(int k, int a) const { return off_z_ + (k - 1) * nx_ + a; }  ///< k = 1..T
  int v(int k, int a) const { return off_v_ + k * nu_ + a; }        ///< k = 0..T
  /// Phi_x^{i,j}(r, l) for j >= 1 (the j = 0 blocks are fixed to I).
  int phix(int i, int j, int r, int l) const {
    return off_px_ + ((i * (i - 1) / 2 + j - 1) * nx_ + r) * nx_ + l;
  }
  int phiu(int i, int j, int r, int l) const {
    return off_pu_ + (static_cast<int>(BlockLowerTriangular::index(i, j)) * nu_ + r) * nx_ + l;
  }
  /// Variable of stacked entry (row, l) of Phi^{i,j}, or -1 if the entry is fixed.
  int phi(int i, int j, int row, int l) const {
    if (row < nx_) return j >= 1 ? phix(i, j, row, l) : -1;
    return closed_ ? phiu(i, j, row - nx_, l) : -1;
  }
  int tau(int k) const { return off_tau_ + k; }
  /// Linear index of the entry |d' Phi^{k-1,j} column|, k = 1..T, j < k, col indexes columns().
  int entry(int dir, int k, int j, int col) const {
    return (dir * pairs() + (k - 1) * k / 2 + j) * static_cast<int>(columns_.size()) + col;
  }
  int num_entries() const { return static_cast<int>(slack_.size()); }
  /// Slack variable of an entry, or -1 when the entry is a constant.
  int slack(int dir, int k, int j, int col) const { return slack_[static_cast<std::size_t>(entry(dir, k, j, col))]; }
  /// Epigraph of the induced norm of Phi^{k-1,j}[E, tau^2 mu], k = 1..T-1.
  int t(int k, int j) const { return off_t_ + (k - 1) * k / 2 + j; }
  bool elastic() const { return elastic_; }
  /// Violation variable of tightened constraint i at step k (elastic mode only).
  int violation(int i, int k) const { return off_e_ + i * (t_ + 1) + k; }

  /// Row of the tightened constraint i at step k in A_in (set during assembly).
  std::vector<std::vector<int>> tightened_rows;

 private:
  int add_direction(const VectorXd& d) {
    VectorXd c = d;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      if (c[i] != 0.0) {
        if (c[i] < 0.0) c = -c;
        break;
      }
    }
    for (std::size_t k = 0; k < directions_.size(); ++k) {
      if ((directions_[k] - c).cwiseAbs().maxCoeff() <= 1e-14) return static_cast<int>(k);
    }
    directions_.push_back(c);
    return static_cast<int>(directions_.size()) - 1;
  }

  int t_, nx_, nu_;
  bool closed_, elastic_;
  std::vector<Column> columns_;
  std::vector<VectorXd> directions_;
  std::vector<int> unit_dir_, row_dir_;
  std::vector<double> row_scale_;
  std::vector<int> slack_;
  int off_z_ = 0, off_v_ = 0, off_px_ = 0, off_pu_ = 0, off_tau_ = 0, off_t_ = 0, off_e_ = 0;
  int num_program_ = 0, num_vars_ = 0;
};

struct Subproblem {
  qp::QpProblem qp;  ///< in the step variables, rows not yet scaled
  SubproblemLayout layout;
  VectorXd y0;       ///< current values of all QP variables (slacks at their tight values)
};

namespace detail {

using Triplets = std::vector<Eigen::Triplet<double>>;

/// Program-variable vector of an iterate (slack part left zero).
inline VectorXd pack(const Iterate& it, const SubproblemLayout& lay, int nx, int nu) {
  VectorXd y = VectorXd::Zero(lay.num_vars());
  const int t = lay.horizon();
  for (int k = 1; k <= t; ++k)
    for (int a = 0; a < nx; ++a) y[lay.z(k, a)] = it.z[static_cast<std::size_t>(k)][a];
  for (int k = 0; k <= t; ++k)
    for (int a = 0; a < nu; ++a) y[lay.v(k, a)] = it.v[static_cast<std::size_t>(k)][a];
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j <= i; ++j) {
      for (int r = 0; r < nx; ++r) {
        for (int l = 0; l < nx; ++l) {
          if (j >= 1) y[lay.phix(i, j, r, l)] = it.resp.phi_x.block(i, j)(r, l);
        }
      }
      if (lay.has_input_response()) {
        for (int r = 0; r < nu; ++r)
          for (int l = 0; l < nx; ++l) y[lay.phiu(i, j, r, l)] = it.resp.phi_u.block(i, j)(r, l);
      }
    }
  }
  for (int k = 0; k < t; ++k) y[lay.tau(k)] = it.tau[k];
  return y;
}

inline void unpack(const VectorXd& y, const SubproblemLayout& lay, int nx, int nu, Iterate& it) {
  const int t = lay.horizon();
  for (int k = 1; k <= t; ++k)
    for (int a = 0; a < nx; ++a) it.z[static_cast<std::size_t>(k)][a] = y[lay.z(k, a)];
  for (int k = 0; k <= t; ++k)
    for (int a = 0; a < nu; ++a) it.v[static_cast<std::size_t>(k)][a] = y[lay.v(k, a)];
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j <= i; ++j) {
      if (j >= 1) {
        for (int r = 0; r < nx; ++r)
          for (int l = 0; l < nx; ++l) it.resp.phi_x.block(i, j)(r, l) = y[lay.phix(i, j, r, l)];
      }
      if (lay.has_input_response()) {
        for (int r = 0; r < nu; ++r)
          for (int l = 0; l < nx; ++l) it.resp.phi_u.block(i, j)(r, l) = y[lay.phiu(i, j, r, l)];
      }
    }
  }
  for (int k = 0; k < t; ++k) it.tau[k] = std::max(0.0, y[lay.tau(k)]);
}

inline void add_block(Triplets& t, int row0, int col0, const MatrixXd& m, double scale = 1.0) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (m(r, c) != 0.0) t.emplace_back(row0 + static_cast<int>(r), col0 + static_cast<int>(c), scale * m(r, c));
}

}  // namespace detail

/**
 * z by forward simulation with v = v_ref, Phi_x the response of the
 * linearization with Phi_u = 0, tau from the recursion (clipped), zero duals.
 */
inline Iterate initial_guess(const RobustProblem& p, double tau_cap = 1.0) {
  const int t = p.horizon;
  Iterate it;
  it.z.push_back(p.x0);
  it.v.assign(static_cast<std::size_t>(t + 1), p.cost.v_ref);
  for (int k = 0; k < t; ++k) it.z.push_back(p.model->step(it.z.back(), it.v[static_cast<std::size_t>(k)]));
  const auto jl = jacobian_lists(*p.model, it.z, it.v, t);
  it.resp = response_from_input_map(jl.a, jl.b, BlockLowerTriangular(t, p.nu(), p.nx()));
  it.tau = minimal_tau(it.resp, p.disturbance(), p.mu, tau_cap);
  return it;
}

/// Builds the QP in the step variables at the iterate.
inline Subproblem linearize_subproblem(const Iterate& it, const RobustProblem& p, const SqpOptions& opt = {},
                                       bool elastic = false) {
  Subproblem sp{{}, SubproblemLayout(p, elastic), {}};
  auto& lay = sp.layout;
  const int t = p.horizon, nx = p.nx(), nu = p.nu(), ne = nx + nu;
  const int n = lay.num_vars();
  const MatrixXd e = p.disturbance();
  const auto& cols = lay.columns();
  const auto ncol = static_cast<int>(cols.size());
  const auto ndir = static_cast<int>(lay.directions().size());

  VectorXd y0 = detail::pack(it, lay, nx, nu);

  // Jacobians along the trajectory, k = 0..T-1; entry i of the diagonal lists is jac[i].
  std::vector<Jacobians> jac;
  for (int k = 0; k < t; ++k) jac.push_back(p.model->jacobians({it.z[static_cast<std::size_t>(k)], it.v[static_cast<std::size_t>(k)]}));

  // Expression values d' Phi^{k-1,j} W_col and the tight slacks.
  auto expr_value = [&](int k, int j, int c, const Eigen::RowVectorXd& dphi) {
    const auto& col = cols[static_cast<std::size_t>(c)];
    if (!col.curvature) return dphi.dot(e.col(col.index));
    const double tau = it.tau[k - 1 - j];
    return dphi[col.index] * tau * tau * p.mu.mu[col.index];
  };
  std::vector<double> expr(static_cast<std::size_t>(lay.num_entries()), 0.0);
  auto sval = [&](int d, int k, int j, int c) { return std::abs(expr[static_cast<std::size_t>(lay.entry(d, k, j, c))]); };
  for (int k = 1; k <= t; ++k) {
    for (int j = 0; j < k; ++j) {
      const MatrixXd s = it.resp.stacked(k - 1, j);
      for (int d = 0; d < ndir; ++d) {
        const Eigen::RowVectorXd dphi = lay.directions()[static_cast<std::size_t>(d)].transpose() * s;
        for (int c = 0; c < ncol; ++c) {
          const double val = expr_value(k, j, c, dphi);
          expr[static_cast<std::size_t>(lay.entry(d, k, j, c))] = val;
          const int idx = lay.slack(d, k, j, c);
          if (idx >= 0) y0[idx] = std::abs(val);
        }
      }
    }
  }
  for (int k = 1; k < t && ncol > 0; ++k) {
    for (int j = 0; j < k; ++j) {
      double m = 0.0;
      for (int r = 0; r < ne; ++r) {
        double sum = 0.0;
        for (int c = 0; c < ncol; ++c) sum += sval(lay.unit_direction(r), k, j, c);
        m = std::max(m, sum);
      }
      y0[lay.t(k, j)] = m;
    }
  }

  // Cost.
  detail::Triplets h;
  VectorXd g = VectorXd::Zero(n);
  for (int k = 1; k <= t; ++k) {
    const MatrixXd& q = k == t ? p.cost.terminal() : p.cost.Q;
    detail::add_block(h, lay.z(k, 0), lay.z(k, 0), q, 2.0);
    g.segment(lay.z(k, 0), nx) += 2.0 * q * (it.z[static_cast<std::size_t>(k)] - p.cost.z_ref);
  }
  for (int k = 0; k < t; ++k) {
    detail::add_block(h, lay.v(k, 0), lay.v(k, 0), p.cost.R, 2.0);
    g.segment(lay.v(k, 0), nu) += 2.0 * p.cost.R * (it.v[static_cast<std::size_t>(k)] - p.cost.v_ref);
  }
  for (int i = 0; i < n; ++i) {
    double d = opt.gamma;
    if (i < lay.num_program_vars()) {
      d += 2.0 * p.cost.alpha;
      g[i] += 2.0 * p.cost.alpha * y0[i];
    }
    h.emplace_back(i, i, d);
  }

  // Equalities: dynamics, then response rows.
  detail::Triplets aeq;
  std::vector<double> beq;
  int row = 0;
  for (int k = 0; k < t; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const VectorXd rhs = p.model->step(it.z[ks], it.v[ks]) - it.z[ks + 1];
    for (int a = 0; a < nx; ++a) aeq.emplace_back(row + a, lay.z(k + 1, a), 1.0);
    if (k >= 1) detail::add_block(aeq, row, lay.z(k, 0), jac[ks].A, -1.0);
    detail::add_block(aeq, row, lay.v(k, 0), jac[ks].B, -1.0);
    for (int a = 0; a < nx; ++a) beq.push_back(rhs[a]);
    row += nx;
  }
  {
    std::vector<MatrixXd> al, bl;
    for (int i = 1; i < t; ++i) {
      al.push_back(jac[static_cast<std::size_t>(i)].A);
      bl.push_back(jac[static_cast<std::size_t>(i)].B);
    }
    al.push_back(MatrixXd::Zero(nx, nx));
    bl.push_back(MatrixXd::Zero(nx, nu));
    const auto res = slp_residual(al, bl, it.resp);
    for (int i = 1; i < t; ++i) {
      const MatrixXd& ai = al[static_cast<std::size_t>(i - 1)];
      const MatrixXd& bi = bl[static_cast<std::size_t>(i - 1)];
      for (int j = 1; j <= i; ++j) {
        for (int r = 0; r < nx; ++r) {
          for (int l = 0; l < nx; ++l) {
            aeq.emplace_back(row, lay.phix(i, j, r, l), 1.0);
            if (j - 1 >= 1) {
              for (int m = 0; m < nx; ++m) {
                if (ai(r, m) != 0.0) aeq.emplace_back(row, lay.phix(i - 1, j - 1, m, l), -ai(r, m));
              }
            }
            if (lay.has_input_response()) {
              for (int m = 0; m < nu; ++m) {
                if (bi(r, m) != 0.0) aeq.emplace_back(row, lay.phiu(i - 1, j - 1, m, l), -bi(r, m));
              }
            }
            beq.push_back(-res.block(i, j)(r, l));
            ++row;
          }
        }
      }
    }
  }
  const int meq = row;

  // Inequalities A_in dy <= b_in.
  detail::Triplets ain;
  std::vector<double> bin;
  row = 0;
  for (int k = 1; k <= t; ++k) {
    for (int j = 0; j < k; ++j) {
      const MatrixXd s = it.resp.stacked(k - 1, j);
      const double tau = it.tau[k - 1 - j];
      for (int d = 0; d < ndir; ++d) {
        const VectorXd& dv = lay.directions()[static_cast<std::size_t>(d)];
        const Eigen::RowVectorXd dphi = dv.transpose() * s;
        for (int c = 0; c < ncol; ++c) {
          const auto& col = cols[static_cast<std::size_t>(c)];
          const int sidx = lay.slack(d, k, j, c);
          if (sidx < 0) continue;
          const double val = expr[static_cast<std::size_t>(lay.entry(d, k, j, c))];
          // Gradient of the expression with respect to Phi and tau.
          detail::Triplets grad;
          for (int rr = 0; rr < ne; ++rr) {
            if (dv[rr] == 0.0) continue;
            if (!col.curvature) {
              for (int l = 0; l < nx; ++l) {
                const int var = lay.phi(k - 1, j, rr, l);
                const double w = e(l, col.index);
                if (var >= 0 && w != 0.0) grad.emplace_back(0, var, dv[rr] * w);
              }
            } else {
              const int var = lay.phi(k - 1, j, rr, col.index);
              const double w = tau * tau * p.mu.mu[col.index];
              if (var >= 0 && w != 0.0) grad.emplace_back(0, var, dv[rr] * w);
            }
          }
          if (col.curvature && tau != 0.0) {
            grad.emplace_back(0, lay.tau(k - 1 - j), dphi[col.index] * p.mu.mu[col.index] * 2.0 * tau);
          }
          for (double sign : {1.0, -1.0}) {
            // sign * (val + grad dy) <= s_hat + ds
            for (const auto& gt : grad) ain.emplace_back(row, gt.col(), sign * gt.value());
            ain.emplace_back(row, sidx, -1.0);
            bin.push_back(y0[sidx] - sign * val);
            ++row;
          }
        }
      }
    }
  }
  // Tightened constraints, k = 0..T.
  lay.tightened_rows.assign(static_cast<std::size_t>(p.polytope.count()), std::vector<int>(static_cast<std::size_t>(t + 1), -1));
  for (int i = 0; i < p.polytope.count(); ++i) {
    const VectorXd c = p.polytope.C.row(i).transpose();
    const int d = lay.row_direction(i);
    const double scale = lay.row_scale(i);
    for (int k = 0; k <= t; ++k) {
      double val = p.polytope.values(it.z[static_cast<std::size_t>(k)], it.v[static_cast<std::size_t>(k)])[i];
      if (k >= 1) {
        for (int a = 0; a < nx; ++a)
          if (c[a] != 0.0) ain.emplace_back(row, lay.z(k, a), c[a]);
      }
      for (int a = 0; a < nu; ++a)
        if (c[nx + a] != 0.0) ain.emplace_back(row, lay.v(k, a), c[nx + a]);
      if (k >= 1 && d >= 0) {
        for (int j = 0; j < k; ++j) {
          for (int cc = 0; cc < ncol; ++cc) {
            const int sidx = lay.slack(d, k, j, cc);
            if (sidx >= 0) ain.emplace_back(row, sidx, scale);
            val += scale * sval(d, k, j, cc);
          }
        }
      }
      if (lay.elastic()) ain.emplace_back(row, lay.violation(i, k), -1.0);
      lay.tightened_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = row;
      bin.push_back(-val);
      ++row;
    }
  }
  // Error-bound recursion, k = 1..T-1.
  for (int k = 1; k < t && ncol > 0; ++k) {
    for (int j = 0; j < k; ++j) {
      for (int r = 0; r < ne; ++r) {
        const int d = lay.unit_direction(r);
        double val = -y0[lay.t(k, j)];
        for (int c = 0; c < ncol; ++c) {
          const int sidx = lay.slack(d, k, j, c);
          if (sidx >= 0) ain.emplace_back(row, sidx, 1.0);
          val += sval(d, k, j, c);
        }
        ain.emplace_back(row, lay.t(k, j), -1.0);
        bin.push_back(-val);
        ++row;
      }
    }
    double val = -it.tau[k];
    for (int j = 0; j < k; ++j) {
      ain.emplace_back(row, lay.t(k, j), 1.0);
      val += y0[lay.t(k, j)];
    }
    ain.emplace_back(row, lay.tau(k), -1.0);
    bin.push_back(-val);
    ++row;
  }
  const int min = row;

  auto& q = sp.qp;
  q.H.resize(n, n);
  q.H.setFromTriplets(h.begin(), h.end());
  q.g = g;
  q.A_eq.resize(meq, n);
  q.A_eq.setFromTriplets(aeq.begin(), aeq.end());
  q.b_eq = Eigen::Map<VectorXd>(beq.data(), meq);
  q.A_in.resize(min, n);
  q.A_in.setFromTriplets(ain.begin(), ain.end());
  q.b_in = Eigen::Map<VectorXd>(bin.data(), min);
  q.lower = VectorXd::Constant(n, -qp::kInf);
  q.upper = VectorXd::Constant(n, qp::kInf);
  for (int k = 0; k < t; ++k) q.lower[lay.tau(k)] = -it.tau[k];
  for (int k = 1; k < t && ncol > 0; ++k)
    for (int j = 0; j < k; ++j) q.lower[lay.t(k, j)] = -y0[lay.t(k, j)];
  if (lay.elastic()) {
    for (int i = 0; i < p.polytope.count(); ++i) {
      for (int k = 0; k <= t; ++k) {
        q.lower[lay.violation(i, k)] = 0.0;
        q.g[lay.violation(i, k)] += opt.elastic_penalty;
      }
    }
  }
  sp.y0 = std::move(y0);
  return sp;
}

/// Cost of the program at an iterate, auxiliary term included.
inline double program_cost(const Iterate& it, const RobustProblem& p) {
  const int t = p.horizon;
  double j = 0.0;
  for (int k = 0; k < t; ++k) {
    const VectorXd dz = it.z[static_cast<std::size_t>(k)] - p.cost.z_ref;
    const VectorXd dv = it.v[static_cast<std::size_t>(k)] - p.cost.v_ref;
    j += dz.dot(p.cost.Q * dz) + dv.dot(p.cost.R * dv);
  }
  const VectorXd dz = it.z[static_cast<std::size_t>(t)] - p.cost.z_ref;
  j += dz.dot(p.cost.terminal() * dz);
  const SubproblemLayout lay(p);
  const VectorXd y = detail::pack(it, lay, p.nx(), p.nu());
  return j + p.cost.alpha * y.head(lay.num_program_vars()).squaredNorm();
}

/**
 * l1 norm of the constraint violation of the program. The response rows use
 * the given Jacobian lists when provided (the frozen ones of a subproblem),
 * the exact ones at the iterate otherwise.
 */
inline double constraint_violation(const Iterate& it, const RobustProblem& p, const JacobianLists* frozen = nullptr) {
  const int t = p.horizon;
  double v = 0.0;
  for (int k = 0; k < t; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    v += (it.z[ks + 1] - p.model->step(it.z[ks], it.v[ks])).lpNorm<1>();
  }
  const auto res = frozen ? slp_residual(frozen->a, frozen->b, it.resp) : [&] {
    const auto jl = jacobian_lists(*p.model, it.z, it.v, t);
    return slp_residual(jl.a, jl.b, it.resp);
  }();
  for (int i = 0; i < t; ++i)
    for (int j = 0; j <= i; ++j) v += res.block(i, j).lpNorm<1>();
  v += (-it.tau.array()).max(0.0).sum();
  const VectorXd tau = it.tau.cwiseMax(0.0);
  const MatrixXd e = p.disturbance();
  for (int k = 0; k <= t; ++k) {
    for (int i = 0; i < p.polytope.count(); ++i) {
      double c = p.polytope.values(it.z[static_cast<std::size_t>(k)], it.v[static_cast<std::size_t>(k)])[i];
      if (k >= 1) c += tightening_term(p.polytope.C.row(i).transpose(), it.resp, e, p.mu, tau, k);
      v += std::max(0.0, c);
    }
  }
  for (int k = 1; k < t; ++k) v += std::max(0.0, tau_constraint_lhs(it.resp, e, p.mu, tau, k) - tau[k]);
  return v;
}

struct IterationLog {
  int iteration = 0;
  double step_primal = 0.0;
  double step_dual = 0.0;
  double cost = 0.0;
  double violation = 0.0;
  /// l1 merit before and after the step, both with the Jacobians of the
  /// subproblem frozen in the response rows and the same penalty.
  double merit_before = 0.0;
  double merit = 0.0;
  double penalty = 0.0;
  double step_length = 1.0;
  qp::QpStatus qp_status = qp::QpStatus::optimal;
  int qp_iterations = 0;
  double seconds = 0.0;
};

enum class SqpStatus { converged, infeasible, max_iterations, qp_failure, line_search_failure, certification_failed };

inline std::string to_string(SqpStatus s) {
  switch (s) {
    case SqpStatus::converged: return "converged";
    case SqpStatus::infeasible: return "infeasible";
    case SqpStatus::max_iterations: return "max_iterations";
    case SqpStatus::qp_failure: return "qp_failure";
    case SqpStatus::line_search_failure: return "line_search_failure";
    case SqpStatus::certification_failed: return "certification_failed";
  }
  return "unknown";
}

struct SqpResult {
  SqpStatus status = SqpStatus::max_iterations;
  int iterations = 0;  ///< number of QPs solved
  double seconds = 0.0;
  Iterate last;  ///< last iterate before restoration
  SolutionCertificate certificate;
  CertificationReport report;
  std::vector<IterationLog> log;
  std::string message;

  bool ok() const { return status == SqpStatus::converged; }
};

/**
 * Re-simulates z from v, recomputes Phi_x from Phi_u with the exact Jacobians
 * at the final trajectory, takes the smallest tau satisfying the recursion and
 * extracts the feedback gain.
 */
inline SolutionCertificate restore(const Iterate& it, const RobustProblem& p) {
  SolutionCertificate c;
  const int t = p.horizon;
  c.v = it.v;
  c.z.push_back(p.x0);
  for (int k = 0; k < t; ++k) c.z.push_back(p.model->step(c.z.back(), c.v[static_cast<std::size_t>(k)]));
  const auto jl = jacobian_lists(*p.model, c.z, c.v, t);
  BlockLowerTriangular pu = it.resp.phi_u;
  if (p.mode == ResponseMode::open_loop) pu = BlockLowerTriangular(t, p.nu(), p.nx());
  c.resp = response_from_input_map(jl.a, jl.b, pu);
  c.tau = minimal_tau(c.resp, p.disturbance(), p.mu);
  c.K = extract_feedback(c.resp);
  return c;
}

/// Factors applied to the equality and inequality rows by scale_rows.
struct RowScaling {
  VectorXd eq;
  VectorXd in;
};

/// Scales every constraint row to unit inf-norm (zero rows are left alone).
inline RowScaling scale_rows(qp::QpProblem& q) {
  auto factors = [](const qp::SparseMatrix& a) {
    VectorXd r = VectorXd::Zero(a.rows());
    for (int k = 0; k < a.outerSize(); ++k)
      for (qp::SparseMatrix::InnerIterator itr(a, k); itr; ++itr) r[itr.row()] = std::max(r[itr.row()], std::abs(itr.value()));
    return VectorXd(r.unaryExpr([](double x) { return x > 0.0 ? 1.0 / x : 1.0; }));
  };
  RowScaling s{factors(q.A_eq), factors(q.A_in)};
  q.A_eq = s.eq.asDiagonal() * q.A_eq;
  q.b_eq = s.eq.cwiseProduct(q.b_eq);
  q.A_in = s.in.asDiagonal() * q.A_in;
  q.b_in = s.in.cwiseProduct(q.b_in);
  return s;
}

namespace detail {
inline double merit(const Iterate& it, const RobustProblem& p, double rho, const JacobianLists& frozen) {
  return program_cost(it, p) + rho * constraint_violation(it, p, &frozen);
}
}  // namespace detail

/// Runs the SQP from the initial guess; never throws on numerical outcomes.
inline SqpResult solve(const RobustProblem& p, const SqpOptions& opt = {},
                       const std::function<void(const IterationLog&)>& on_iteration = {}) {
  if (!(opt.gamma > 0.0) || !(opt.conv_tol > 0.0) || opt.max_iters < 1) {
    throw std::invalid_argument("SqpOptions: gamma and conv_tol must be positive, max_iters >= 1");
  }
  p.validate();
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  SqpResult res;
  Iterate it = initial_guess(p, opt.tau_cap);
  const int nx = p.nx(), nu = p.nu();
  VectorXd nu_prev;
  double rho = 1.0;
  bool elastic = false;

  auto finish = [&](SqpStatus status, std::string msg) {
    res.status = status;
    res.message = std::move(msg);
    res.last = it;
    res.seconds = std::chrono::duration<double>(clock::now() - start).count();
    return res;
  };

  for (int iter = 1; iter <= opt.max_iters; ++iter) {
    auto sp = linearize_subproblem(it, p, opt, elastic);
    auto& q = sp.qp;
    const auto& lay = sp.layout;
    const auto [re, ri] = scale_rows(q);
    const auto sol = qp::solve_qp(q, opt.qp_tol);
    IterationLog log;
    log.iteration = iter;
    log.qp_status = sol.status;
    log.qp_iterations = sol.iterations;
    res.iterations = iter;
    if (sol.status == qp::QpStatus::infeasible) {
      log.seconds = std::chrono::duration<double>(clock::now() - start).count();
      res.log.push_back(log);
      if (on_iteration) on_iteration(log);
      if (elastic || !(opt.elastic_penalty > 0.0)) {
        return finish(SqpStatus::infeasible, "QP subproblem infeasible at iteration " + std::to_string(iter));
      }
      // Relax the tightened constraints from here on.
      elastic = true;
      nu_prev.resize(0);
      continue;
    }
    if (sol.status != qp::QpStatus::optimal) {
      log.seconds = std::chrono::duration<double>(clock::now() - start).count();
      res.log.push_back(log);
      if (on_iteration) on_iteration(log);
      return finish(SqpStatus::qp_failure, "QP subproblem failed (" + std::to_string(static_cast<int>(sol.status)) +
                                               ") at iteration " + std::to_string(iter));
    }
    VectorXd duals(sol.nu_eq.size() + sol.nu_in.size() + sol.nu_lower.size() + sol.nu_upper.size());
    duals << sol.nu_eq, sol.nu_in, sol.nu_lower, sol.nu_upper;
    const VectorXd dnu = nu_prev.size() == duals.size() ? VectorXd(duals - nu_prev) : duals;
    const VectorXd dy = sol.y.head(lay.num_program_vars());

    double step = 1.0;
    Iterate trial = it;
    const VectorXd y0 = sp.y0;
    // Penalty above the multipliers of the unscaled rows.
    double numax = 0.0;
    if (sol.nu_eq.size() > 0) numax = std::max(numax, sol.nu_eq.cwiseProduct(re).cwiseAbs().maxCoeff());
    if (sol.nu_in.size() > 0) numax = std::max(numax, sol.nu_in.cwiseProduct(ri).cwiseAbs().maxCoeff());
    rho = std::max(rho, 2.0 * numax);
    const auto frozen = jacobian_lists(*p.model, it.z, it.v, p.horizon);
    log.penalty = rho;
    log.merit_before = detail::merit(it, p, rho, frozen);
    if (opt.line_search == LineSearch::backtracking) {
      for (;;) {
        detail::unpack(y0 + step * sol.y, lay, nx, nu, trial);
        if (detail::merit(trial, p, rho, frozen) <= log.merit_before) break;
        step *= 0.5;
        if (step < 1e-8) {
          log.step_primal = dy.cwiseAbs().maxCoeff();
          res.log.push_back(log);
          if (on_iteration) on_iteration(log);
          return finish(SqpStatus::line_search_failure, "no merit decrease along the QP step");
        }
      }
    } else {
      detail::unpack(y0 + sol.y, lay, nx, nu, trial);
    }
    it = std::move(trial);
    it.iteration = iter;
    it.dy = step * dy;
    it.dnu = dnu;
    it.duals = duals;
    nu_prev = duals;

    log.step_primal = it.dy.size() > 0 ? it.dy.cwiseAbs().maxCoeff() : 0.0;
    log.step_dual = dnu.size() > 0 ? dnu.cwiseAbs().maxCoeff() : 0.0;
    log.step_length = step;
    log.cost = program_cost(it, p);
    log.violation = constraint_violation(it, p);
    log.merit = detail::merit(it, p, rho, frozen);
    log.seconds = std::chrono::duration<double>(clock::now() - start).count();
    res.log.push_back(log);
    if (on_iteration) on_iteration(log);

    if (log.step_primal <= opt.conv_tol && log.step_dual <= opt.conv_tol) {
      if (elastic && log.violation > opt.cert_tol) {
        return finish(SqpStatus::infeasible, "locally infeasible: the l1 relaxation converged with constraint violation " +
                                                 std::to_string(log.violation));
      }
      res.certificate = restore(it, p);
      res.report = certify(res.certificate, p, opt.cert_tol);
      if (!res.report.certified) {
        return finish(SqpStatus::certification_failed,
                      "converged but certification failed: " + res.report.failures.front());
      }
      return finish(SqpStatus::converged, "converged in " + std::to_string(iter) + " iterations");
    }
  }
  return finish(SqpStatus::max_iterations, "no convergence within " + std::to_string(opt.max_iters) + " iterations");
}

}  // namespace nlsls
