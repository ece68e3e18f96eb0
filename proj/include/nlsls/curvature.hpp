#pragma once

// Element-wise worst-case curvature constants mu_i bounding the second-order
// Taylor remainder of each output of f: |r_i| <= ||e||_inf^2 mu_i.

#include "nlsls/dynamics.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nlsls {

enum class CurvatureSource { monte_carlo, abs_sum, user_supplied };

inline std::string to_string(CurvatureSource s) {
  switch (s) {
    case CurvatureSource::monte_carlo: return "monte_carlo";
    case CurvatureSource::abs_sum: return "abs_sum";
    case CurvatureSource::user_supplied: return "user_supplied";
  }
  return "unknown";
}

struct CurvatureBound {
  VectorXd mu;  ///< diagonal of the curvature matrix, entries >= 0
  CurvatureSource source = CurvatureSource::user_supplied;
  long long samples = 0;
  std::uint64_t seed = 0;

  static CurvatureBound user(VectorXd diag) {
    if ((diag.array() < 0.0).any()) {
      throw std::invalid_argument("curvature bound entries must be nonnegative");
    }
    return {std::move(diag), CurvatureSource::user_supplied, 0, 0};
  }
  static CurvatureBound zero(int n) { return user(VectorXd::Zero(n)); }

  Eigen::Index size() const { return mu.size(); }
  MatrixXd matrix() const { return mu.asDiagonal(); }
};

/**
 * Box over xi = (x, u) on which curvature is sampled. Coordinates listed in a
 * unit-norm block are drawn from the box and then scaled to unit Euclidean
 * norm (e.g. an attitude quaternion).
 */
struct SampleDomain {
  struct Block {
    int start = 0;
    int length = 0;
  };

  VectorXd lower;
  VectorXd upper;
  std::vector<Block> unit_norm_blocks;

  void validate(Eigen::Index dim) const {
    if (lower.size() != dim || upper.size() != dim) {
      throw std::invalid_argument("sample domain has wrong dimension");
    }
    if ((lower.array() > upper.array()).any()) {
      throw std::invalid_argument("sample domain is empty (lower > upper)");
    }
    if (!lower.allFinite() || !upper.allFinite()) {
      throw std::invalid_argument("sample domain must be bounded");
    }
    for (const auto& b : unit_norm_blocks) {
      if (b.start < 0 || b.length < 1 || b.start + b.length > dim) {
        throw std::invalid_argument("sample domain: unit-norm block out of range");
      }
    }
  }
};

/// (1/2) sum_jk |H_jk|, an upper bound of (1/2) max_{|h|_inf<=1} |h' H h|.
inline double half_abs_sum(const MatrixXd& h) { return 0.5 * h.cwiseAbs().sum(); }

/// Per-component abs-sum curvature at a single point.
inline VectorXd curvature_at(const SystemModel& model, const VectorXd& xi) {
  const auto hs = model.hessians(xi);
  VectorXd out(static_cast<Eigen::Index>(hs.size()));
  for (std::size_t i = 0; i < hs.size(); ++i) out[static_cast<Eigen::Index>(i)] = half_abs_sum(hs[i]);
  return out;
}

/**
 * Draws the i-th point of the sample stream for @p seed. Sample i does not
 * depend on how many samples are requested, so sample sets for increasing
 * counts are nested.
 */
inline VectorXd sample_point(const SampleDomain& dom, std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VectorXd xi(dom.lower.size());
  for (Eigen::Index k = 0; k < xi.size(); ++k) {
    xi[k] = dom.lower[k] + (dom.upper[k] - dom.lower[k]) * unit(rng);
  }
  for (const auto& b : dom.unit_norm_blocks) {
    auto seg = xi.segment(b.start, b.length);
    const double n = seg.norm();
    if (n > 0.0) seg /= n;
  }
  return xi;
}

/**
 * Monte-Carlo estimate of mu: the maximum over uniform samples of the
 * abs-sum Hessian bound. Deterministic in (seed, n_samples) and independent of
 * @p threads (reduction by max).
 */
inline CurvatureBound mu_monte_carlo(const SystemModel& model, const SampleDomain& dom,
                                     long long n_samples, std::uint64_t seed,
                                     unsigned threads = 0) {
  if (n_samples < 1) throw std::invalid_argument("mu_monte_carlo: n_samples must be >= 1");
  dom.validate(model.state_dim() + model.input_dim());
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<long long>(threads, n_samples));

  std::vector<VectorXd> partial(threads, VectorXd::Zero(model.state_dim()));
  auto work = [&](unsigned t) {
    for (long long s = t; s < n_samples; s += threads) {
      const auto xi = sample_point(dom, seed, static_cast<std::uint64_t>(s));
      partial[t] = partial[t].cwiseMax(curvature_at(model, xi));
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  VectorXd mu = VectorXd::Zero(model.state_dim());
  for (const auto& p : partial) mu = mu.cwiseMax(p);
  return {mu, CurvatureSource::monte_carlo, n_samples, seed};
}

/// Deterministic abs-sum bound maximized over an explicit list of points.
inline CurvatureBound mu_abs_sum(const SystemModel& model, const std::vector<VectorXd>& points) {
  if (points.empty()) throw std::invalid_argument("mu_abs_sum: no points");
  VectorXd mu = VectorXd::Zero(model.state_dim());
  for (const auto& xi : points) mu = mu.cwiseMax(curvature_at(model, xi));
  return {mu, CurvatureSource::abs_sum, static_cast<long long>(points.size()), 0};
}

/// Componentwise e_inf^2 * mu_i.
inline VectorXd remainder_bound(const CurvatureBound& mu, double e_inf) {
  if (e_inf < 0.0) throw std::invalid_argument("remainder_bound: e_inf must be nonnegative");
  return e_inf * e_inf * mu.mu;
}

}  // namespace nlsls
