#pragma once

// Monte-Carlo closed-loop rollouts of a certified policy and the audit of
// constraint values, tube membership and error-bound margins along them.
// A clean report is evidence, not proof; one bad rollout is a counterexample.

#include "nlsls/robust_ocp.hpp"
#include "nlsls/sls.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nlsls {

/**
 * uniform: d ~ U[-1,1]^{n_w}. vertex: independent random signs per entry.
 * worst_axis: d = s * 1 with one random sign s per step, so every entry of d
 * pushes the same way.
 */
enum class DisturbanceMode { uniform, vertex, worst_axis };

inline std::string to_string(DisturbanceMode m) {
  switch (m) {
    case DisturbanceMode::uniform: return "uniform";
    case DisturbanceMode::vertex: return "vertex";
    case DisturbanceMode::worst_axis: return "worst_axis";
  }
  return "unknown";
}

inline DisturbanceMode disturbance_mode_from_string(const std::string& s) {
  if (s == "uniform") return DisturbanceMode::uniform;
  if (s == "vertex") return DisturbanceMode::vertex;
  if (s == "worst_axis") return DisturbanceMode::worst_axis;
  throw std::invalid_argument("unknown disturbance mode '" + s + "' (expected uniform, vertex or worst_axis)");
}

/// Normalized disturbances d_0..d_{T-1} in [-1,1]^{n_w}.
inline std::vector<VectorXd> sample_unit_disturbances(Eigen::Index nw, int horizon, DisturbanceMode mode,
                                                      std::uint64_t seed) {
  if (horizon < 0) throw std::invalid_argument("sample_disturbances: negative horizon");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<VectorXd> d(static_cast<std::size_t>(horizon), VectorXd(nw));
  for (auto& dk : d) {
    switch (mode) {
      case DisturbanceMode::uniform:
        for (Eigen::Index i = 0; i < nw; ++i) dk[i] = unit(rng);
        break;
      case DisturbanceMode::vertex:
        for (Eigen::Index i = 0; i < nw; ++i) dk[i] = coin(rng) ? 1.0 : -1.0;
        break;
      case DisturbanceMode::worst_axis:
        dk.setConstant(coin(rng) ? 1.0 : -1.0);
        break;
    }
  }
  return d;
}

/// w_k = E d_k for k = 0..T-1; deterministic in @p seed.
inline std::vector<VectorXd> sample_disturbances(const DisturbanceModel& dist, int horizon, DisturbanceMode mode,
                                                 std::uint64_t seed) {
  auto d = sample_unit_disturbances(dist.nw(), horizon, mode, seed);
  std::vector<VectorXd> w;
  w.reserve(d.size());
  for (const auto& dk : d) w.emplace_back(dist.E * dk);
  return w;
}

/// Seed of rollout @p index in a batch seeded with @p seed.
inline std::uint64_t rollout_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 of the pair
  std::uint64_t x = seed * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Trajectory {
  std::vector<VectorXd> x;  ///< x_0..x_T
  std::vector<VectorXd> u;  ///< u_0..u_T (u_T from the policy, not applied)
};

/**
 * x_0 = z_0, u_k = v_k + du_k with du_k from controller_step on dx_1..dx_k,
 * x_{k+1} = f(x_k, u_k) + w_k.
 */
inline Trajectory rollout(const SystemModel& model, const SolutionCertificate& sol, const std::vector<VectorXd>& w) {
  const int t = sol.horizon();
  if (static_cast<int>(w.size()) != t) throw std::invalid_argument("rollout: disturbance sequence must have length T");
  Trajectory tr;
  tr.x.reserve(static_cast<std::size_t>(t) + 1);
  tr.u.reserve(static_cast<std::size_t>(t) + 1);
  tr.x.push_back(sol.z[0]);
  std::vector<VectorXd> dx;
  for (int k = 0; k <= t; ++k) {
    const auto i = static_cast<std::size_t>(k);
    tr.u.push_back(sol.v[i] + controller_step(sol.resp, dx));
    if (k == t) break;
    if (w[i].size() != sol.z[0].size()) throw std::invalid_argument("rollout: disturbance has wrong dimension");
    tr.x.push_back(model.step(tr.x[i], tr.u[i]) + w[i]);
    dx.push_back(tr.x[i + 1] - sol.z[i + 1]);
  }
  return tr;
}

struct RolloutRecord {
  double max_violation = -std::numeric_limits<double>::infinity();  ///< max_{i,k} c_i'(x_k,u_k) + b_i
  std::vector<bool> inside;   ///< x_k in D_k, k = 0..T
  VectorXd error_norm;        ///< ||(x_k - z_k, u_k - v_k)||_inf, k = 0..T
  VectorXd tau_margin;        ///< tau_k - error_norm_k, k = 0..T-1
};

struct RolloutReport {
  double slack = 1e-8;
  std::vector<RolloutRecord> rollouts;
  int violating_rollouts = 0;  ///< rollouts with max_violation > slack
  int tube_exits = 0;          ///< (rollout, k) pairs outside D_k
  int tau_exceedances = 0;     ///< (rollout, k) pairs with tau_margin < -slack
  double worst_violation = -std::numeric_limits<double>::infinity();
  double min_tau_margin = std::numeric_limits<double>::infinity();

  bool clean() const { return violating_rollouts == 0 && tube_exits == 0 && tau_exceedances == 0; }
};

inline RolloutRecord audit_one(const Trajectory& tr, const SolutionCertificate& sol, const RobustProblem& p,
                               const Tube& tube, double slack) {
  const int t = sol.horizon();
  if (static_cast<int>(tr.x.size()) != t + 1 || static_cast<int>(tr.u.size()) != t + 1) {
    throw std::invalid_argument("audit: trajectory length does not match the horizon");
  }
  RolloutRecord r;
  r.inside.resize(static_cast<std::size_t>(t) + 1);
  r.error_norm.resize(t + 1);
  r.tau_margin.resize(t);
  for (int k = 0; k <= t; ++k) {
    const auto i = static_cast<std::size_t>(k);
    if (p.polytope.count() > 0) r.max_violation = std::max(r.max_violation, p.polytope.values(tr.x[i], tr.u[i]).maxCoeff());
    r.inside[i] = tube.contains(k, tr.x[i], slack);
    const double ex = (tr.x[i] - sol.z[i]).cwiseAbs().maxCoeff();
    const double eu = tr.u[i].size() > 0 ? (tr.u[i] - sol.v[i]).cwiseAbs().maxCoeff() : 0.0;
    r.error_norm[k] = std::max(ex, eu);
    if (k < t) r.tau_margin[k] = sol.tau[k] - r.error_norm[k];
  }
  return r;
}

inline void add_record(RolloutReport& rep, RolloutRecord r) {
  if (r.max_violation > rep.slack) ++rep.violating_rollouts;
  rep.worst_violation = std::max(rep.worst_violation, r.max_violation);
  for (bool in : r.inside) rep.tube_exits += in ? 0 : 1;
  for (Eigen::Index k = 0; k < r.tau_margin.size(); ++k) {
    if (r.tau_margin[k] < -rep.slack) ++rep.tau_exceedances;
    rep.min_tau_margin = std::min(rep.min_tau_margin, r.tau_margin[k]);
  }
  rep.rollouts.push_back(std::move(r));
}

/// Audits every trajectory against the problem rows, the tube of @p sol and tau.
inline RolloutReport audit(const std::vector<Trajectory>& trajectories, const SolutionCertificate& sol,
                           const RobustProblem& p, double slack = 1e-8) {
  RolloutReport rep;
  rep.slack = slack;
  const Tube tube = build_tube(sol, p.disturbance(), p.mu);
  for (const auto& tr : trajectories) add_record(rep, audit_one(tr, sol, p, tube, slack));
  return rep;
}

struct ValidationRun {
  std::vector<Trajectory> trajectories;
  RolloutReport report;
};

/**
 * @p n rollouts with disturbances drawn from rollout_seed(seed, r). The result
 * does not depend on @p threads.
 */
inline ValidationRun validate(const RobustProblem& p, const SolutionCertificate& sol, int n, DisturbanceMode mode,
                              std::uint64_t seed, double slack = 1e-8, unsigned threads = 0) {
  if (n < 0) throw std::invalid_argument("validate: negative rollout count");
  if (sol.horizon() != p.horizon) throw std::invalid_argument("validate: solution horizon does not match the problem");
  ValidationRun run;
  run.trajectories.resize(static_cast<std::size_t>(n));
  std::vector<RolloutRecord> records(static_cast<std::size_t>(n));
  const Tube tube = build_tube(sol, p.disturbance(), p.mu);
  const DisturbanceModel dist{p.disturbance()};
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::max(1, std::min<int>(static_cast<int>(threads), n)));
  auto work = [&](unsigned t) {
    for (int r = static_cast<int>(t); r < n; r += static_cast<int>(threads)) {
      const auto i = static_cast<std::size_t>(r);
      const auto w = sample_disturbances(dist, p.horizon, mode, rollout_seed(seed, i));
      run.trajectories[i] = rollout(*p.model, sol, w);
      records[i] = audit_one(run.trajectories[i], sol, p, tube, slack);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  run.report.slack = slack;
  for (auto& r : records) add_record(run.report, std::move(r));
  return run;
}

}  // namespace nlsls
