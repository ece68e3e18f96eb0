#pragma once

/**
 * @file
 * @brief Convex quadratic programming backend.
 *
 *   minimize    1/2 y'Hy + g'y
 *   subject to  A_eq y  = b_eq
 *               A_in y <= b_in
 *               lower <= y <= upper
 *
 * Solutions satisfy the KKT conditions
 *   H y + g + A_eq' nu_eq + A_in' nu_in - nu_lower + nu_upper = 0,
 * with nonnegative inequality multipliers. QpSolver is the pluggable contract;
 * InteriorPointSolver is the built-in backend (Mehrotra predictor-corrector on
 * the sparse quasi-definite KKT system, factored with a simplicial LDL').
 */

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlsls::qp {

using Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QpProblem {
  SparseMatrix H;
  VectorXd g;
  SparseMatrix A_eq;
  VectorXd b_eq;
  SparseMatrix A_in;
  VectorXd b_in;
  VectorXd lower;  ///< empty or size n; -inf for free
  VectorXd upper;  ///< empty or size n; +inf for free

  Eigen::Index num_vars() const { return g.size(); }

  /// Fills empty members with consistently sized defaults and checks shapes.
  void normalize() {
    const auto n = g.size();
    if (H.rows() == 0 && H.cols() == 0) H.resize(n, n);
    if (A_eq.rows() == 0) A_eq.resize(0, n);
    if (A_in.rows() == 0) A_in.resize(0, n);
    if (lower.size() == 0) lower = VectorXd::Constant(n, -kInf);
    if (upper.size() == 0) upper = VectorXd::Constant(n, kInf);
    validate();
  }

  void validate() const {
    const auto n = g.size();
    if (H.rows() != n || H.cols() != n) throw std::invalid_argument("QpProblem: H must be n x n");
    if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) {
      throw std::invalid_argument("QpProblem: equality block has inconsistent dimensions");
    }
    if (A_in.cols() != n || A_in.rows() != b_in.size()) {
      throw std::invalid_argument("QpProblem: inequality block has inconsistent dimensions");
    }
    if (lower.size() != n || upper.size() != n) throw std::invalid_argument("QpProblem: bounds size");
    if ((lower.array() > upper.array()).any()) throw std::invalid_argument("QpProblem: lower > upper");
  }
};

enum class QpStatus { optimal, infeasible, max_iterations, numerical_failure };

inline std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iterations: return "max_iterations";
    case QpStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

struct QpSettings {
  double tol = 1e-8;
  /// Residual level at which a stalled or broken-down solve still counts as optimal.
  double acceptable_tol = 0.0;
  int max_iterations = 200;
  double primal_regularization = 1e-10;
  double dual_regularization = 1e-10;
  int refinement_steps = 3;
};

struct KktResiduals {
  double primal_eq = 0.0;       ///< ||A_eq y - b_eq||_inf
  double primal_in = 0.0;       ///< ||max(A_in y - b_in, 0)||_inf, bounds included
  double stationarity = 0.0;    ///< ||H y + g + A' nu||_inf
  double complementarity = 0.0; ///< max over rows of |multiplier * constraint slack|
  double dual_sign = 0.0;       ///< largest negative inequality multiplier magnitude

  double max() const {
    return std::max({primal_eq, primal_in, stationarity, complementarity, dual_sign});
  }
};

struct QpSolution {
  VectorXd y;
  VectorXd nu_eq;
  VectorXd nu_in;
  VectorXd nu_lower;
  VectorXd nu_upper;
  QpStatus status = QpStatus::numerical_failure;
  int iterations = 0;
  KktResiduals kkt;
};

/// KKT residuals of a candidate solution, computed from the problem data only.
inline KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& s) {
  QpProblem qp = problem;
  qp.normalize();
  KktResiduals r;
  const auto n = qp.num_vars();
  VectorXd stat = qp.H * s.y + qp.g;
  if (qp.A_eq.rows() > 0) {
    stat += qp.A_eq.transpose() * s.nu_eq;
    r.primal_eq = (qp.A_eq * s.y - qp.b_eq).cwiseAbs().maxCoeff();
  }
  if (qp.A_in.rows() > 0) {
    stat += qp.A_in.transpose() * s.nu_in;
    const VectorXd slack = qp.A_in * s.y - qp.b_in;
    r.primal_in = std::max(0.0, slack.maxCoeff());
    r.complementarity = (s.nu_in.array() * slack.array()).abs().maxCoeff();
    r.dual_sign = std::max(r.dual_sign, std::max(0.0, -s.nu_in.minCoeff()));
  }
  stat -= s.nu_lower;
  stat += s.nu_upper;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(qp.lower[i])) {
      r.primal_in = std::max(r.primal_in, qp.lower[i] - s.y[i]);
      r.complementarity = std::max(r.complementarity, std::abs(s.nu_lower[i] * (s.y[i] - qp.lower[i])));
    }
    if (std::isfinite(qp.upper[i])) {
      r.primal_in = std::max(r.primal_in, s.y[i] - qp.upper[i]);
      r.complementarity = std::max(r.complementarity, std::abs(s.nu_upper[i] * (qp.upper[i] - s.y[i])));
    }
    r.dual_sign = std::max({r.dual_sign, -s.nu_lower[i], -s.nu_upper[i]});
  }
  r.stationarity = n > 0 ? stat.cwiseAbs().maxCoeff() : 0.0;
  return r;
}

class QpSolver {
 public:
  virtual ~QpSolver() = default;
  virtual std::string name() const = 0;
  virtual QpSolution solve(const QpProblem& qp, const QpSettings& settings) const = 0;
};

class InteriorPointSolver final : public QpSolver {
 public:
  std::string name() const override { return "interior_point"; }

  QpSolution solve(const QpProblem& problem, const QpSettings& settings) const override {
    QpProblem qp = problem;
    qp.normalize();
    // Solve with the cost normalized to unit magnitude; multipliers are mapped
    // back afterwards, and the tolerance is tightened so the residuals of the
    // original problem stay within settings.tol.
    double c = qp.g.size() > 0 ? qp.g.cwiseAbs().maxCoeff() : 0.0;
    for (int k = 0; k < qp.H.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator itr(qp.H, k); itr; ++itr) c = std::max(c, std::abs(itr.value()));
    }
    if (!(c > 0.0) || !std::isfinite(c)) c = 1.0;
    qp.H /= c;
    qp.g /= c;
    QpSettings inner = settings;
    inner.tol = 1e-2 * settings.tol / std::max(1.0, c);
    inner.acceptable_tol = std::max(inner.tol, settings.tol / std::max(1.0, c));
    Workspace ws(qp, inner);
    QpSolution sol = ws.run();
    sol.nu_eq *= c;
    sol.nu_in *= c;
    sol.nu_lower *= c;
    sol.nu_upper *= c;
    if (sol.status == QpStatus::optimal || sol.status == QpStatus::max_iterations) {
      sol.kkt = kkt_residuals(problem, sol);
    }
    if (sol.status == QpStatus::max_iterations || sol.status == QpStatus::numerical_failure) {
      if (min_violation(qp, settings) > 1e-6 * std::max(1.0, rhs_scale(qp))) sol.status = QpStatus::infeasible;
    }
    return sol;
  }

  /// Smallest l1 violation of the constraints (elastic LP); NaN if that LP fails.
  static double min_violation(const QpProblem& qp, const QpSettings& settings) {
    const auto n = qp.num_vars();
    const auto me = qp.A_eq.rows(), mi = qp.A_in.rows();
    std::vector<Eigen::Index> lo, up;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::isfinite(qp.lower[i])) lo.push_back(i);
      if (std::isfinite(qp.upper[i])) up.push_back(i);
    }
    const auto nb = static_cast<Eigen::Index>(lo.size() + up.size());
    const Eigen::Index ne = 2 * me + mi + nb;
    if (ne == 0) return 0.0;
    // Variables (y, e); A_eq y + e+ - e- = b_eq, A_in y - e_in <= b_in, bounds shifted by e.
    QpProblem el;
    const Eigen::Index m = n + ne;
    Triplets h, teq, tin;
    for (Eigen::Index i = 0; i < n; ++i) h.emplace_back(static_cast<int>(i), static_cast<int>(i), 1e-8);
    el.g = VectorXd::Zero(m);
    el.g.tail(ne).setOnes();
    for (int k = 0; k < qp.A_eq.outerSize(); ++k)
      for (SparseMatrix::InnerIterator itr(qp.A_eq, k); itr; ++itr)
        teq.emplace_back(static_cast<int>(itr.row()), static_cast<int>(itr.col()), itr.value());
    for (Eigen::Index r = 0; r < me; ++r) {
      teq.emplace_back(static_cast<int>(r), static_cast<int>(n + 2 * r), 1.0);
      teq.emplace_back(static_cast<int>(r), static_cast<int>(n + 2 * r + 1), -1.0);
    }
    for (int k = 0; k < qp.A_in.outerSize(); ++k)
      for (SparseMatrix::InnerIterator itr(qp.A_in, k); itr; ++itr)
        tin.emplace_back(static_cast<int>(itr.row()), static_cast<int>(itr.col()), itr.value());
    Eigen::Index col = n + 2 * me;
    std::vector<double> b(qp.b_in.data(), qp.b_in.data() + mi);
    for (Eigen::Index r = 0; r < mi; ++r) tin.emplace_back(static_cast<int>(r), static_cast<int>(col++), -1.0);
    Eigen::Index row = mi;
    for (auto i : lo) {
      tin.emplace_back(static_cast<int>(row), static_cast<int>(i), -1.0);
      tin.emplace_back(static_cast<int>(row++), static_cast<int>(col++), -1.0);
      b.push_back(-qp.lower[i]);
    }
    for (auto i : up) {
      tin.emplace_back(static_cast<int>(row), static_cast<int>(i), 1.0);
      tin.emplace_back(static_cast<int>(row++), static_cast<int>(col++), -1.0);
      b.push_back(qp.upper[i]);
    }
    el.H.resize(m, m);
    el.H.setFromTriplets(h.begin(), h.end());
    el.A_eq.resize(me, m);
    el.A_eq.setFromTriplets(teq.begin(), teq.end());
    el.b_eq = qp.b_eq;
    el.A_in.resize(row, m);
    el.A_in.setFromTriplets(tin.begin(), tin.end());
    el.b_in = Eigen::Map<VectorXd>(b.data(), row);
    el.lower = VectorXd::Constant(m, -kInf);
    el.lower.tail(ne).setZero();
    el.upper = VectorXd::Constant(m, kInf);
    QpSettings s = settings;
    s.tol = 1e-9;
    s.acceptable_tol = 1e-7;
    Workspace ws(el, s);
    const QpSolution sol = ws.run();
    if (sol.status != QpStatus::optimal) return std::numeric_limits<double>::quiet_NaN();
    return sol.y.tail(ne).sum();
  }

  static double rhs_scale(const QpProblem& qp) {
    double s = 0.0;
    if (qp.b_eq.size() > 0) s = std::max(s, qp.b_eq.cwiseAbs().maxCoeff());
    if (qp.b_in.size() > 0) s = std::max(s, qp.b_in.cwiseAbs().maxCoeff());
    return s;
  }

 private:
  // Inequalities are gathered as G y <= h with G = [A_in; -I_lower; I_upper].
  class Workspace {
   public:
    Workspace(const QpProblem& qp, const QpSettings& s) : qp_(qp), set_(s) {
      n_ = qp.num_vars();
      me_ = qp.A_eq.rows();
      build_inequalities();
      mi_ = g_.rows();
      build_kkt();
    }

    QpSolution run() {
      QpSolution sol;
      VectorXd y, nu, lam, w;
      if (!initial_point(y, nu, lam, w)) return failure(sol, 0);

      for (int it = 0; it <= set_.max_iterations; ++it) {
        const VectorXd rd = dual_residual(y, nu, lam);
        const VectorXd re = me_ > 0 ? VectorXd(qp_.A_eq * y - qp_.b_eq) : VectorXd();
        const VectorXd ri = mi_ > 0 ? VectorXd(g_ * y + w - h_) : VectorXd();
        const double gap = mi_ > 0 ? w.dot(lam) : 0.0;
        const double cmax = mi_ > 0 ? (w.array() * lam.array()).maxCoeff() : 0.0;
        const double mu = mi_ > 0 ? gap / static_cast<double>(mi_) : 0.0;

        const double res = std::max({inf_norm(rd), inf_norm(re), inf_norm(ri), cmax});
        if (res <= set_.tol) return finish(sol, y, nu, lam, QpStatus::optimal, it);
        last_residual_ = std::min(last_residual_, res);
        // Stalled: no 1% decrease of the best residual over 30 iterations.
        if (res < 0.99 * best_) {
          best_ = res;
          best_it_ = it;
        } else if (it - best_it_ >= 30) {
          return finish(sol, y, nu, lam, QpStatus::max_iterations, it);
        }
        if (it == set_.max_iterations) break;
        if (farkas_certificate(nu, lam)) return finish(sol, y, nu, lam, QpStatus::infeasible, it);

        if (!factor(w, lam)) return finish(sol, y, nu, lam, QpStatus::numerical_failure, it);

        // Predictor.
        VectorXd dy, dnu, dlam, dw;
        VectorXd rc = mi_ > 0 ? VectorXd((-(w.array() * lam.array())).matrix()) : VectorXd();
        newton(rd, re, ri, rc, lam, w, dy, dnu, dlam, dw);
        if (mi_ == 0) {
          y += dy;
          nu += dnu;
          continue;
        }
        const double ap_aff = max_step(w, dw);
        const double ad_aff = max_step(lam, dlam);
        const double mu_aff =
            (w + ap_aff * dw).dot(lam + ad_aff * dlam) / static_cast<double>(mi_);
        const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

        // Corrector.
        rc = (-(w.array() * lam.array()) - dw.array() * dlam.array() + sigma * mu).matrix();
        newton(rd, re, ri, rc, lam, w, dy, dnu, dlam, dw);
        if (!dy.allFinite() || !dlam.allFinite()) {
          return finish(sol, y, nu, lam, QpStatus::numerical_failure, it);
        }
        const double alpha = std::min(1.0, 0.99 * std::min(max_step(w, dw), max_step(lam, dlam)));
        y += alpha * dy;
        nu += alpha * dnu;
        lam += alpha * dlam;
        w += alpha * dw;
        // Keep strictly interior against round-off.
        w = w.cwiseMax(1e-300);
        lam = lam.cwiseMax(1e-300);
      }
      return finish(sol, y, nu, lam, QpStatus::max_iterations, set_.max_iterations);
    }

   private:
    static double inf_norm(const VectorXd& v) { return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0; }

    static double max_step(const VectorXd& x, const VectorXd& dx) {
      double a = 1.0 / 0.99;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (dx[i] < 0.0) a = std::min(a, -x[i] / dx[i]);
      }
      return a;
    }

    void build_inequalities() {
      Triplets t;
      t.reserve(static_cast<std::size_t>(qp_.A_in.nonZeros() + 2 * n_));
      std::vector<double> h;
      for (int k = 0; k < qp_.A_in.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator itr(qp_.A_in, k); itr; ++itr) {
          t.emplace_back(static_cast<int>(itr.row()), static_cast<int>(itr.col()), itr.value());
        }
      }
      Eigen::Index row = qp_.A_in.rows();
      h.assign(qp_.b_in.data(), qp_.b_in.data() + qp_.b_in.size());
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (std::isfinite(qp_.lower[i])) {
          t.emplace_back(static_cast<int>(row++), static_cast<int>(i), -1.0);
          h.push_back(-qp_.lower[i]);
          lower_idx_.push_back(i);
        }
      }
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (std::isfinite(qp_.upper[i])) {
          t.emplace_back(static_cast<int>(row++), static_cast<int>(i), 1.0);
          h.push_back(qp_.upper[i]);
          upper_idx_.push_back(i);
        }
      }
      g_.resize(row, n_);
      g_.setFromTriplets(t.begin(), t.end());
      gt_ = g_.transpose();
      h_ = Eigen::Map<VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
    }

    void build_kkt() {
      const Eigen::Index dim = n_ + me_ + mi_;
      Triplets t;
      t.reserve(static_cast<std::size_t>(qp_.H.nonZeros() + qp_.A_eq.nonZeros() + g_.nonZeros() + dim));
      for (int k = 0; k < qp_.H.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator itr(qp_.H, k); itr; ++itr) {
          if (itr.row() >= itr.col()) t.emplace_back(static_cast<int>(itr.row()), static_cast<int>(itr.col()), itr.value());
        }
      }
      for (int k = 0; k < qp_.A_eq.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator itr(qp_.A_eq, k); itr; ++itr) {
          t.emplace_back(static_cast<int>(n_ + itr.row()), static_cast<int>(itr.col()), itr.value());
        }
      }
      for (int k = 0; k < g_.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator itr(g_, k); itr; ++itr) {
          t.emplace_back(static_cast<int>(n_ + me_ + itr.row()), static_cast<int>(itr.col()), itr.value());
        }
      }
      for (Eigen::Index i = 0; i < n_; ++i) t.emplace_back(static_cast<int>(i), static_cast<int>(i), set_.primal_regularization);
      for (Eigen::Index i = 0; i < me_ + mi_; ++i) {
        t.emplace_back(static_cast<int>(n_ + i), static_cast<int>(n_ + i), -set_.dual_regularization);
      }
      kkt_.resize(dim, dim);
      kkt_.setFromTriplets(t.begin(), t.end());
      kkt_.makeCompressed();
      ineq_diag_.resize(static_cast<std::size_t>(mi_));
      for (Eigen::Index i = 0; i < mi_; ++i) {
        ineq_diag_[static_cast<std::size_t>(i)] = &kkt_.coeffRef(n_ + me_ + i, n_ + me_ + i);
      }
      ldlt_.analyzePattern(kkt_);
      d_ = VectorXd::Ones(mi_);
    }

    bool factor(const VectorXd& w, const VectorXd& lam) {
      d_ = (w.array() / lam.array()).matrix();
      for (Eigen::Index i = 0; i < mi_; ++i) {
        *ineq_diag_[static_cast<std::size_t>(i)] = -d_[i] - set_.dual_regularization;
      }
      ldlt_.factorize(kkt_);
      return ldlt_.info() == Eigen::Success;
    }

    // Unregularized KKT operator [H A_eq' G'; A_eq 0 0; G 0 -D].
    VectorXd kkt_apply(const VectorXd& x) const {
      VectorXd out(x.size());
      const auto y = x.head(n_);
      const auto nu = x.segment(n_, me_);
      const auto lam = x.tail(mi_);
      VectorXd top = qp_.H * y;
      if (me_ > 0) top += qp_.A_eq.transpose() * nu;
      if (mi_ > 0) top += gt_ * lam;
      out.head(n_) = top;
      if (me_ > 0) out.segment(n_, me_) = qp_.A_eq * y;
      if (mi_ > 0) out.tail(mi_) = g_ * y - (d_.array() * lam.array()).matrix();
      return out;
    }

    VectorXd kkt_solve(const VectorXd& rhs) const {
      VectorXd x = ldlt_.solve(rhs);
      for (int k = 0; k < set_.refinement_steps; ++k) {
        const VectorXd r = rhs - kkt_apply(x);
        x += ldlt_.solve(r);
      }
      return x;
    }

    void newton(const VectorXd& rd, const VectorXd& re, const VectorXd& ri, const VectorXd& rc,
                const VectorXd& lam, const VectorXd& w, VectorXd& dy, VectorXd& dnu, VectorXd& dlam,
                VectorXd& dw) const {
      VectorXd rhs(n_ + me_ + mi_);
      rhs.head(n_) = -rd;
      if (me_ > 0) rhs.segment(n_, me_) = -re;
      if (mi_ > 0) rhs.tail(mi_) = -ri - (rc.array() / lam.array()).matrix();
      const VectorXd sol = kkt_solve(rhs);
      dy = sol.head(n_);
      dnu = sol.segment(n_, me_);
      dlam = sol.tail(mi_);
      if (mi_ > 0) dw = -ri - g_ * dy;
      (void)w;
    }

    VectorXd dual_residual(const VectorXd& y, const VectorXd& nu, const VectorXd& lam) const {
      VectorXd rd = qp_.H * y + qp_.g;
      if (me_ > 0) rd += qp_.A_eq.transpose() * nu;
      if (mi_ > 0) rd += gt_ * lam;
      return rd;
    }

    bool initial_point(VectorXd& y, VectorXd& nu, VectorXd& lam, VectorXd& w) {
      d_ = VectorXd::Ones(mi_);
      for (Eigen::Index i = 0; i < mi_; ++i) {
        *ineq_diag_[static_cast<std::size_t>(i)] = -1.0 - set_.dual_regularization;
      }
      ldlt_.factorize(kkt_);
      if (ldlt_.info() != Eigen::Success) return false;
      VectorXd rhs(n_ + me_ + mi_);
      rhs.head(n_) = -qp_.g;
      if (me_ > 0) rhs.segment(n_, me_) = qp_.b_eq;
      if (mi_ > 0) rhs.tail(mi_) = h_;
      const VectorXd sol = kkt_solve(rhs);
      if (!sol.allFinite()) return false;
      y = sol.head(n_);
      nu = sol.segment(n_, me_);
      if (mi_ == 0) {
        lam.resize(0);
        w.resize(0);
        return true;
      }
      const VectorXd z = sol.tail(mi_);  // G y - z = h, so the slack is -z
      w = -z;
      lam = z;
      const double ap = -w.minCoeff();
      if (ap >= 0.0) w.array() += 1.0 + ap;
      const double ad = -lam.minCoeff();
      if (ad >= 0.0) lam.array() += 1.0 + ad;
      return true;
    }

    // (nu, lam) with A_eq' nu + G' lam ~ 0 and b_eq' nu + h' lam < 0 proves
    // infeasibility: any feasible y would need ||y||_1 >= |b| / ||a||_inf.
    bool farkas_certificate(const VectorXd& nu, const VectorXd& lam) const {
      if (mi_ == 0) return false;
      const double scale = std::max(inf_norm(nu), inf_norm(lam));
      if (scale < 1e3) return false;
      VectorXd a = gt_ * lam;
      if (me_ > 0) a += qp_.A_eq.transpose() * nu;
      double b = h_.dot(lam);
      if (me_ > 0) b += qp_.b_eq.dot(nu);
      return b < -1e-7 * scale && inf_norm(a) <= 1e-6 * -b;
    }

    QpSolution& finish(QpSolution& sol, const VectorXd& y, const VectorXd& nu, const VectorXd& lam,
                       QpStatus status, int iterations) const {
      if ((status == QpStatus::numerical_failure || status == QpStatus::max_iterations) &&
          last_residual_ <= set_.acceptable_tol) {
        status = QpStatus::optimal;
      }
      sol.y = y;
      sol.nu_eq = nu;
      sol.nu_in = lam.head(qp_.A_in.rows());
      sol.nu_lower = VectorXd::Zero(n_);
      sol.nu_upper = VectorXd::Zero(n_);
      Eigen::Index row = qp_.A_in.rows();
      for (auto i : lower_idx_) sol.nu_lower[i] = lam[row++];
      for (auto i : upper_idx_) sol.nu_upper[i] = lam[row++];
      sol.status = status;
      sol.iterations = iterations;
      sol.kkt = kkt_residuals(qp_, sol);
      return sol;
    }

    QpSolution& failure(QpSolution& sol, int iterations) const {
      sol.y = VectorXd::Zero(n_);
      sol.nu_eq = VectorXd::Zero(me_);
      sol.nu_in = VectorXd::Zero(qp_.A_in.rows());
      sol.nu_lower = VectorXd::Zero(n_);
      sol.nu_upper = VectorXd::Zero(n_);
      sol.status = QpStatus::numerical_failure;
      sol.iterations = iterations;
      return sol;
    }

    const QpProblem& qp_;
    QpSettings set_;
    double last_residual_ = std::numeric_limits<double>::infinity();
    double best_ = std::numeric_limits<double>::infinity();
    int best_it_ = 0;
    Eigen::Index n_ = 0, me_ = 0, mi_ = 0;
    SparseMatrix g_, gt_;
    VectorXd h_;
    std::vector<Eigen::Index> lower_idx_, upper_idx_;
    SparseMatrix kkt_;
    std::vector<double*> ineq_diag_;
    VectorXd d_;
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower> ldlt_;
  };
};

inline QpSolution solve_qp(const QpProblem& qp, double tol = 1e-8) {
  QpSettings s;
  s.tol = tol;
  return InteriorPointSolver{}.solve(qp, s);
}

/// Builds a sparse matrix from a dense one (test and small-problem helper).
inline SparseMatrix sparse(const Eigen::MatrixXd& m) { return m.sparseView(); }

}  // namespace nlsls::qp
