#pragma once

/**
 * @file
 * @brief Robust nonlinear finite-horizon problem: constraint polytope,
 * disturbance model, tightened constraints, the auxiliary error-bound
 * recursion, reachable-set tubes and certification of candidate solutions.
 *
 * Time indexing. z_0..z_T and v_0..v_T are the nominal trajectory (z_0 = x0).
 * The error e_k = (dx_k, du_k), k = 1..T, is sum_j Phi^{k-1,j} w_{k-1-j} where
 * Phi^{i,j} stacks the state and input response blocks. tau_0..tau_{T-1}
 * bound ||e_k||_inf and the linearization remainder after step k is bounded
 * componentwise by tau_k^2 mu.
 */

#include "nlsls/curvature.hpp"
#include "nlsls/dynamics.hpp"
#include "nlsls/qp.hpp"
#include "nlsls/sls.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlsls {

/**
 * {(x, u) : C (x, u) + b <= 0}. Optional declared box bounds record a priori
 * knowledge of coordinates the rows do not bound (e.g. a unit quaternion);
 * they take part in the compactness check only and are not imposed as
 * constraints.
 */
struct Polytope {
  MatrixXd C;
  VectorXd b;
  VectorXd box_lower;
  VectorXd box_upper;

  /// Rows for every finite entry of [lower, upper].
  static Polytope from_bounds(const VectorXd& lower, const VectorXd& upper) {
    if (lower.size() != upper.size()) throw std::invalid_argument("from_bounds: size mismatch");
    std::vector<std::pair<Eigen::Index, double>> rows;
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (std::isfinite(upper[i])) rows.emplace_back(i, upper[i]);
    }
    const auto n_upper = rows.size();
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (std::isfinite(lower[i])) rows.emplace_back(i, lower[i]);
    }
    Polytope p;
    p.C = MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), lower.size());
    p.b.resize(p.C.rows());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      const double sign = r < n_upper ? 1.0 : -1.0;
      p.C(row, rows[r].first) = sign;
      p.b[row] = -sign * rows[r].second;
    }
    return p;
  }

  int count() const { return static_cast<int>(C.rows()); }
  Eigen::Index dim() const { return C.cols(); }

  VectorXd values(const VectorXd& x, const VectorXd& u) const {
    VectorXd xi(x.size() + u.size());
    xi << x, u;
    return C * xi + b;
  }

  bool has_box() const { return box_lower.size() > 0; }

  /// Dimension checks and compactness of the set intersected with the declared box.
  void validate(int nx, int nu) const {
    const Eigen::Index n = nx + nu;
    if (C.cols() != n || b.size() != C.rows()) {
      throw std::invalid_argument("polytope: rows must have n_x + n_u = " + std::to_string(n) + " columns");
    }
    if (has_box() && (box_lower.size() != n || box_upper.size() != n)) {
      throw std::invalid_argument("polytope: declared box has wrong dimension");
    }
    if (has_box() && (box_lower.array() > box_upper.array()).any()) {
      throw std::invalid_argument("polytope: declared box is empty");
    }
    check_compact();
  }

 private:
  // Nonempty: a strictly convex projection problem is feasible. Bounded: the
  // recession cone {d : C d <= 0, d respecting the declared box} is {0}.
  void check_compact() const {
    const Eigen::Index n = C.cols();
    const double inf = std::numeric_limits<double>::infinity();
    qp::QpProblem proj;
    proj.H = qp::sparse(MatrixXd::Identity(n, n));
    proj.g = VectorXd::Zero(n);
    proj.A_in = C.sparseView();
    proj.b_in = -b;
    proj.lower = has_box() ? box_lower : VectorXd::Constant(n, -inf);
    proj.upper = has_box() ? box_upper : VectorXd::Constant(n, inf);
    const auto feas = qp::solve_qp(proj, 1e-9);
    if (feas.status == qp::QpStatus::infeasible) throw std::invalid_argument("polytope is empty");
    if (feas.status != qp::QpStatus::optimal) throw std::runtime_error("polytope: emptiness check failed to solve");

    qp::QpProblem cone;
    cone.H.resize(n, n);
    cone.A_in = C.sparseView();
    cone.b_in = VectorXd::Zero(C.rows());
    cone.lower = VectorXd::Constant(n, -1.0);
    cone.upper = VectorXd::Constant(n, 1.0);
    if (has_box()) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::isfinite(box_lower[i])) cone.lower[i] = 0.0;
        if (std::isfinite(box_upper[i])) cone.upper[i] = 0.0;
      }
    }
    for (Eigen::Index m = 0; m < n; ++m) {
      for (double sign : {1.0, -1.0}) {
        cone.g = VectorXd::Zero(n);
        cone.g[m] = -sign;
        const auto sol = qp::solve_qp(cone, 1e-10);
        if (sol.status != qp::QpStatus::optimal) {
          throw std::runtime_error("polytope: compactness check failed to solve");
        }
        if (sign * sol.y[m] > 1e-6) {
          throw std::invalid_argument("polytope is unbounded in coordinate " + std::to_string(m) +
                                      " (add constraint rows or declared box bounds)");
        }
      }
    }
  }
};

struct DisturbanceModel {
  MatrixXd E;  ///< n_x by n_w; w = E d with ||d||_inf <= 1
  Eigen::Index nw() const { return E.cols(); }
};

enum class ResponseMode { closed_loop, open_loop, nominal };

inline std::string to_string(ResponseMode m) {
  switch (m) {
    case ResponseMode::closed_loop: return "closed_loop";
    case ResponseMode::open_loop: return "open_loop";
    case ResponseMode::nominal: return "nominal";
  }
  return "unknown";
}

inline ResponseMode response_mode_from_string(const std::string& s) {
  if (s == "closed_loop") return ResponseMode::closed_loop;
  if (s == "open_loop") return ResponseMode::open_loop;
  if (s == "nominal") return ResponseMode::nominal;
  throw std::invalid_argument("unknown mode '" + s + "' (expected closed_loop, open_loop or nominal)");
}

/// sum_{k<T} l(z_k, v_k) + (z_T - z_ref)' Q_T (z_T - z_ref) + alpha y'y.
struct CostWeights {
  MatrixXd Q;
  MatrixXd R;
  MatrixXd Q_terminal;  ///< defaults to Q when empty
  VectorXd z_ref;
  VectorXd v_ref;
  double alpha = 1e-2;

  const MatrixXd& terminal() const { return Q_terminal.size() > 0 ? Q_terminal : Q; }
};

struct RobustProblem {
  ModelPtr model;
  Polytope polytope;
  DisturbanceModel dist;
  CurvatureBound mu;
  int horizon = 1;
  VectorXd x0;
  CostWeights cost;
  ResponseMode mode = ResponseMode::closed_loop;

  int nx() const { return model->state_dim(); }
  int nu() const { return model->input_dim(); }

  /// E with the mode applied (zero in nominal mode).
  MatrixXd disturbance() const {
    if (mode == ResponseMode::nominal) return MatrixXd::Zero(dist.E.rows(), dist.E.cols());
    return dist.E;
  }

  void validate() const {
    if (!model) throw std::invalid_argument("problem: no model");
    const int n = nx(), m = nu();
    if (horizon < 1) throw std::invalid_argument("problem: horizon must be >= 1");
    if (x0.size() != n) throw std::invalid_argument("problem: initial state has wrong dimension");
    if (dist.E.rows() != n) throw std::invalid_argument("problem: E must have n_x rows");
    if (mu.size() != n) throw std::invalid_argument("problem: mu must have n_x entries");
    if ((mu.mu.array() < 0.0).any()) throw std::invalid_argument("problem: mu must be nonnegative");
    auto check_psd = [](const MatrixXd& w, Eigen::Index d, const char* name) {
      if (w.rows() != d || w.cols() != d) throw std::invalid_argument(std::string("problem: ") + name + " has wrong size");
      if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw std::invalid_argument(std::string("problem: ") + name + " must be symmetric");
      }
      if (d > 0 && Eigen::SelfAdjointEigenSolver<MatrixXd>(w).eigenvalues().minCoeff() < -1e-12) {
        throw std::invalid_argument(std::string("problem: ") + name + " must be positive semidefinite");
      }
    };
    check_psd(cost.Q, n, "Q");
    check_psd(cost.R, m, "R");
    check_psd(cost.terminal(), n, "terminal Q");
    if (cost.z_ref.size() != n || cost.v_ref.size() != m) {
      throw std::invalid_argument("problem: references have wrong dimension");
    }
    if (cost.alpha < 0.0) throw std::invalid_argument("problem: alpha must be nonnegative");
    polytope.validate(n, m);
  }
};

/// A_blocks / B_blocks in the diagonal-list convention for the trajectory (z, v).
struct JacobianLists {
  std::vector<MatrixXd> a;
  std::vector<MatrixXd> b;
};

inline JacobianLists jacobian_lists(const SystemModel& model, const std::vector<VectorXd>& z,
                                    const std::vector<VectorXd>& v, int horizon) {
  JacobianLists j;
  const int nx = model.state_dim(), nu = model.input_dim();
  for (int i = 1; i < horizon; ++i) {
    auto jac = model.jacobians({z[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(i)]});
    j.a.push_back(std::move(jac.A));
    j.b.push_back(std::move(jac.B));
  }
  j.a.push_back(MatrixXd::Zero(nx, nx));
  j.b.push_back(MatrixXd::Zero(nx, nu));
  return j;
}

/// [E, tau^2 diag(mu)].
inline MatrixXd uncertainty_columns(const MatrixXd& e, const CurvatureBound& mu, double tau) {
  MatrixXd cols(e.rows(), e.cols() + mu.size());
  cols << e, MatrixXd(tau * tau * mu.mu.asDiagonal());
  return cols;
}

namespace detail {
inline void check_tau_args(const SystemResponse& resp, const VectorXd& tau, int k) {
  if (k < 1 || k > resp.horizon()) {
    throw std::invalid_argument("step k = " + std::to_string(k) + " outside 1..T");
  }
  if (tau.size() < k) throw std::invalid_argument("tau has too few entries");
  if ((tau.head(k).array() < 0.0).any()) throw std::invalid_argument("tau entries must be nonnegative");
}
}  // namespace detail

/// sum_{j<k} || c' Phi^{k-1,j} [E, tau_{k-1-j}^2 mu] ||_1.
inline double tightening_term(const VectorXd& c, const SystemResponse& resp, const MatrixXd& e,
                              const CurvatureBound& mu, const VectorXd& tau, int k) {
  detail::check_tau_args(resp, tau, k);
  if (c.size() != resp.state_dim() + resp.input_dim()) {
    throw std::invalid_argument("tightening_term: constraint row has wrong dimension");
  }
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    const Eigen::RowVectorXd row = c.transpose() * resp.stacked(k - 1, j);
    total += (row * uncertainty_columns(e, mu, tau[k - 1 - j])).cwiseAbs().sum();
  }
  return total;
}

/// sum_{j<k} || Phi^{k-1,j} [E, tau_{k-1-j}^2 mu] ||_inf (induced norm); k = 0 gives 0.
inline double tau_constraint_lhs(const SystemResponse& resp, const MatrixXd& e, const CurvatureBound& mu,
                                 const VectorXd& tau, int k) {
  if (k == 0) return 0.0;
  detail::check_tau_args(resp, tau, k);
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    const MatrixXd m = resp.stacked(k - 1, j) * uncertainty_columns(e, mu, tau[k - 1 - j]);
    total += m.cols() > 0 ? m.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
  }
  return total;
}

/**
 * Smallest tau satisfying the recursion with equality, tau_0 = 0. Entries are
 * clipped to @p cap (the recursion can diverge for unstable responses).
 */
inline VectorXd minimal_tau(const SystemResponse& resp, const MatrixXd& e, const CurvatureBound& mu,
                            double cap = std::numeric_limits<double>::infinity()) {
  VectorXd tau = VectorXd::Zero(resp.horizon());
  for (int k = 1; k < resp.horizon(); ++k) tau[k] = std::min(cap, tau_constraint_lhs(resp, e, mu, tau, k));
  return tau;
}

struct CertificateResiduals {
  double slp = 0.0;         ///< ||(I - ZA)Phi_x - ZB Phi_u - I||_inf with exact Jacobians
  double dynamics = 0.0;    ///< max_k ||z_{k+1} - f(z_k, v_k)||_inf
  double tightening = 0.0;  ///< max over (i, k) of the tightened constraint value (<= 0 wanted)
  double tau = 0.0;         ///< max_k (lhs_k - tau_k) (<= 0 wanted)
  double tau_min = 0.0;     ///< min_k tau_k (>= 0 wanted)
};

struct SolutionCertificate {
  std::vector<VectorXd> z;  ///< z_0..z_T
  std::vector<VectorXd> v;  ///< v_0..v_T
  SystemResponse resp;
  VectorXd tau;             ///< tau_0..tau_{T-1}
  BlockLowerTriangular K;
  CertificateResiduals residuals;

  int horizon() const { return resp.horizon(); }
};

/// c_i'(z_k, v_k) + b_i plus the tightening (k >= 1), for constraint i at step k = 0..T.
inline double tightened_constraint(const RobustProblem& p, const SolutionCertificate& s, int i, int k) {
  const VectorXd c = p.polytope.C.row(i).transpose();
  double val = p.polytope.values(s.z[static_cast<std::size_t>(k)], s.v[static_cast<std::size_t>(k)])[i];
  if (k >= 1) val += tightening_term(c, s.resp, p.disturbance(), p.mu, s.tau, k);
  return val;
}

struct CertificationReport {
  bool certified = false;
  double tol = 1e-6;
  CertificateResiduals residuals;
  std::vector<std::string> failures;
};

/// Evaluates every certificate condition; failures are collected, not thrown.
inline CertificationReport certify(const SolutionCertificate& s, const RobustProblem& p, double tol = 1e-6) {
  CertificationReport rep;
  rep.tol = tol;
  const int t = p.horizon, nx = p.nx(), nu = p.nu();
  auto fail = [&](std::string msg) { rep.failures.push_back(std::move(msg)); };

  if (static_cast<int>(s.z.size()) != t + 1 || static_cast<int>(s.v.size()) != t + 1 ||
      s.resp.horizon() != t || s.tau.size() != t || s.resp.state_dim() != nx || s.resp.input_dim() != nu) {
    fail("certificate dimensions do not match the problem");
    return rep;
  }
  auto& r = rep.residuals;
  r.dynamics = (s.z[0] - p.x0).cwiseAbs().maxCoeff();
  for (int k = 0; k < t; ++k) {
    const auto i = static_cast<std::size_t>(k);
    r.dynamics = std::max(r.dynamics, (s.z[i + 1] - p.model->step(s.z[i], s.v[i])).cwiseAbs().maxCoeff());
  }
  const auto jl = jacobian_lists(*p.model, s.z, s.v, t);
  r.slp = slp_residual(jl.a, jl.b, s.resp).max_abs();
  r.tau_min = s.tau.minCoeff();
  if (r.tau_min < -tol) fail("negative tau entry " + std::to_string(r.tau_min));
  if (p.mode == ResponseMode::open_loop && s.resp.phi_u.max_abs() != 0.0) fail("open-loop mode requires Phi_u = 0");

  if (r.tau_min >= 0.0) {
    r.tightening = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= t; ++k) {
      for (int i = 0; i < p.polytope.count(); ++i) r.tightening = std::max(r.tightening, tightened_constraint(p, s, i, k));
    }
    if (p.polytope.count() == 0) r.tightening = 0.0;
    r.tau = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < t; ++k) {
      r.tau = std::max(r.tau, tau_constraint_lhs(s.resp, p.disturbance(), p.mu, s.tau, k) - s.tau[k]);
    }
  }
  if (r.dynamics > tol) fail("dynamics residual " + std::to_string(r.dynamics));
  if (r.slp > tol) fail("response residual " + std::to_string(r.slp));
  if (r.tightening > tol) fail("tightened constraint violated by " + std::to_string(r.tightening));
  if (r.tau > tol) fail("error-bound recursion violated by " + std::to_string(r.tau));
  rep.certified = rep.failures.empty();
  return rep;
}

/// Per-step zonotopes D_k = center_k + G_k B_inf.
struct Tube {
  std::vector<VectorXd> center;      ///< k = 0..T
  std::vector<MatrixXd> generators;  ///< G_0 has zero columns

  int horizon() const { return static_cast<int>(center.size()) - 1; }

  VectorXd half_width(int k) const {
    const auto& g = generators[static_cast<std::size_t>(k)];
    if (g.cols() == 0) return VectorXd::Zero(g.rows());
    return g.cwiseAbs().rowwise().sum();
  }
  VectorXd lower(int k) const { return center[static_cast<std::size_t>(k)] - half_width(k); }
  VectorXd upper(int k) const { return center[static_cast<std::size_t>(k)] + half_width(k); }

  /// Interval-hull test, then an exact LP test if the hull test fails.
  bool contains(int k, const VectorXd& x, double slack = 1e-8) const {
    const VectorXd r = x - center[static_cast<std::size_t>(k)];
    const VectorXd hw = half_width(k);
    if ((r.cwiseAbs().array() > hw.array() + slack).any()) return false;
    const auto& g = generators[static_cast<std::size_t>(k)];
    if (g.cols() == 0) return true;
    return lp_contains(g, r, slack);
  }

  /// Exact membership of center + r: exists d in [-1,1]^m with |G d - r| <= slack.
  static bool lp_contains(const MatrixXd& g, const VectorXd& r, double slack) {
    const Eigen::Index m = g.cols();
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      if (g.row(i).cwiseAbs().maxCoeff() > 0.0) {
        rows.push_back(i);
      } else if (std::abs(r[i]) > slack) {
        return false;
      }
    }
    if (rows.empty()) return true;
    const auto nr = static_cast<Eigen::Index>(rows.size());
    MatrixXd a(2 * nr, m);
    VectorXd bb(2 * nr);
    for (Eigen::Index i = 0; i < nr; ++i) {
      a.row(i) = g.row(rows[static_cast<std::size_t>(i)]);
      a.row(nr + i) = -g.row(rows[static_cast<std::size_t>(i)]);
      bb[i] = r[rows[static_cast<std::size_t>(i)]] + slack;
      bb[nr + i] = -r[rows[static_cast<std::size_t>(i)]] + slack;
    }
    qp::QpProblem lp;
    lp.H = qp::sparse(1e-6 * MatrixXd::Identity(m, m));
    lp.g = VectorXd::Zero(m);
    lp.A_in = qp::sparse(a);
    lp.b_in = bb;
    lp.lower = VectorXd::Constant(m, -1.0);
    lp.upper = VectorXd::Constant(m, 1.0);
    const auto sol = qp::solve_qp(lp, 1e-10);
    return sol.status == qp::QpStatus::optimal;
  }
};

/// G_k = [Phi_x^{k-1,0} [E, tau_{k-1}^2 mu], ..., Phi_x^{k-1,k-1} [E, tau_0^2 mu]].
inline Tube build_tube(const SolutionCertificate& s, const MatrixXd& e, const CurvatureBound& mu) {
  Tube tube;
  const int t = s.horizon(), nx = s.resp.state_dim();
  const Eigen::Index w = e.cols() + mu.size();
  tube.center = s.z;
  tube.generators.emplace_back(nx, 0);
  for (int k = 1; k <= t; ++k) {
    MatrixXd g(nx, k * w);
    for (int j = 0; j < k; ++j) g.middleCols(j * w, w) = s.resp.phi_x.block(k - 1, j) * uncertainty_columns(e, mu, s.tau[k - 1 - j]);
    tube.generators.push_back(std::move(g));
  }
  return tube;
}

}  // namespace nlsls
