#pragma once

// Satellite attitude benchmark: RK4 rigid body, rate and torque limits,
// disturbance on the rates.

#include "nlsls/robust_ocp.hpp"

#include <cmath>

namespace nlsls {

/// Published curvature diagonal for the benchmark.
inline VectorXd satellite_reference_mu() {
  VectorXd mu(7);
  mu << 3.699, 3.703, 3.717, 3.635, 0.649, 4.608, 5.635;
  return mu;
}

/// Sampling box for curvature estimation: unit quaternion, rates and torques in [-0.1, 0.1].
inline SampleDomain satellite_sample_domain() {
  SampleDomain d;
  d.lower = VectorXd::Constant(10, -0.1);
  d.upper = VectorXd::Constant(10, 0.1);
  d.lower.head(4).setConstant(-1.0);
  d.upper.head(4).setConstant(1.0);
  d.unit_norm_blocks.push_back({0, 4});
  return d;
}

/// Initial state: attitude from Euler angles (180, 45, 45) deg, rates (-1, -4.5, 4.5) deg/s.
inline VectorXd satellite_initial_state() {
  constexpr double deg = 3.14159265358979323846 / 180.0;
  VectorXd x(7);
  x.head(4) = quaternion_from_euler(180.0 * deg, 45.0 * deg, 45.0 * deg);
  x.tail(3) << -1.0 * deg, -4.5 * deg, 4.5 * deg;
  return x;
}

inline RobustProblem satellite_problem(ResponseMode mode = ResponseMode::closed_loop, int horizon = 10) {
  RobustProblem p;
  p.model = make_satellite_model();
  p.horizon = horizon;
  p.mode = mode;
  p.x0 = satellite_initial_state();

  const double inf = std::numeric_limits<double>::infinity();
  VectorXd lo = VectorXd::Constant(10, -0.1), hi = VectorXd::Constant(10, 0.1);
  lo.head(4).setConstant(-inf);
  hi.head(4).setConstant(inf);
  p.polytope = Polytope::from_bounds(lo, hi);
  p.polytope.box_lower = VectorXd::Constant(10, -inf);
  p.polytope.box_upper = VectorXd::Constant(10, inf);
  p.polytope.box_lower.head(4).setConstant(-1.0);
  p.polytope.box_upper.head(4).setConstant(1.0);

  p.dist.E = MatrixXd::Zero(7, 3);
  p.dist.E.bottomRows(3) = 5e-3 * MatrixXd::Identity(3, 3);
  p.mu = CurvatureBound::user(satellite_reference_mu());

  p.cost.Q = 0.7 * MatrixXd::Identity(7, 7);
  p.cost.R = MatrixXd::Identity(3, 3);
  p.cost.z_ref = VectorXd::Unit(7, 0);
  p.cost.v_ref = VectorXd::Zero(3);
  p.cost.alpha = 1e-2;
  return p;
}

}  // namespace nlsls
