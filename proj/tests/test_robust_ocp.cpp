#include "nlsls/benchmark.hpp"
#include "nlsls/robust_ocp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace {

using nlsls::BlockLowerTriangular;
using nlsls::CurvatureBound;
using nlsls::Polytope;
using nlsls::RobustProblem;
using nlsls::SolutionCertificate;
using nlsls::SystemResponse;
using Eigen::MatrixXd;
using Eigen::VectorXd;

using oracles::randn;
using oracles::random_instance;
using oracles::vertex_enumeration;

TEST(TighteningTerm, ZeroUncertaintyGivesZero) {
  std::mt19937 rng(1);
  const auto s = random_instance(3, 2, 1, rng);
  const VectorXd tau = VectorXd::Constant(3, 0.7);
  for (int k = 1; k <= 3; ++k) {
    EXPECT_EQ(nlsls::tightening_term(VectorXd::Ones(3), s.resp, MatrixXd::Zero(2, 1), CurvatureBound::zero(2), tau, k), 0.0);
  }
}

TEST(TighteningTerm, ScalarSingleTerm) {
  const SystemResponse r(BlockLowerTriangular::identity(1, 1), BlockLowerTriangular(1, 1, 1));
  const double v = nlsls::tightening_term((VectorXd(2) << 1.0, 0.0).finished(), r, MatrixXd::Ones(1, 1),
                                          CurvatureBound::zero(1), VectorXd::Zero(1), 1);
  EXPECT_EQ(v, 1.0);
}

TEST(TighteningTerm, EqualsVertexEnumerationWithCurvatureChannels) {
  std::mt19937 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = random_instance(3, 2, 1, rng);
    const MatrixXd e = randn(2, 1, rng);
    const auto mu = CurvatureBound::user(randn(2, 1, rng).cwiseAbs());
    const VectorXd tau = randn(3, 1, rng).cwiseAbs();
    const VectorXd c = randn(3, 1, rng);
    for (int k = 1; k <= 3; ++k) {
      const double oracle = vertex_enumeration(s, c, e, mu, tau, k);
      EXPECT_NEAR(nlsls::tightening_term(c, s.resp, e, mu, tau, k), oracle, 1e-9 * std::max(1.0, std::abs(oracle)));
    }
  }
}

TEST(TighteningTerm, LinearTightnessOnRandomInstances) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int nx = 1 + trial % 3, nu = 1 + trial % 2, nw = 1 + (trial / 3) % 2, t = 1 + trial % 4;
    const auto s = random_instance(t, nx, nu, rng);
    const MatrixXd e = randn(nx, nw, rng);
    const auto mu = CurvatureBound::zero(nx);
    const VectorXd tau = VectorXd::Zero(t);
    const VectorXd c = randn(nx + nu, 1, rng);
    for (int k = 1; k <= t; ++k) {
      const double oracle = vertex_enumeration(s, c, e, mu, tau, k);
      EXPECT_NEAR(nlsls::tightening_term(c, s.resp, e, mu, tau, k), oracle, 1e-9);
    }
  }
}

TEST(TighteningTerm, RejectsBadArguments) {
  const SystemResponse r(BlockLowerTriangular::identity(2, 1), BlockLowerTriangular(2, 1, 1));
  const auto mu = CurvatureBound::zero(1);
  const VectorXd c = VectorXd::Ones(2);
  EXPECT_THROW(nlsls::tightening_term(c, r, MatrixXd::Ones(1, 1), mu, (VectorXd(2) << 0.1, -0.1).finished(), 2),
               std::invalid_argument);
  EXPECT_THROW(nlsls::tightening_term(c, r, MatrixXd::Ones(1, 1), mu, VectorXd::Zero(2), 0), std::invalid_argument);
  EXPECT_THROW(nlsls::tightening_term(c, r, MatrixXd::Ones(1, 1), mu, VectorXd::Zero(2), 3), std::invalid_argument);
  EXPECT_THROW(nlsls::tightening_term(VectorXd::Ones(3), r, MatrixXd::Ones(1, 1), mu, VectorXd::Zero(2), 1),
               std::invalid_argument);
}

TEST(TauConstraint, NominalRecovery) {
  std::mt19937 rng(4);
  const auto s = random_instance(4, 2, 2, rng);
  const auto mu = CurvatureBound::user(VectorXd::Constant(2, 3.0));
  const VectorXd tau = VectorXd::Zero(4);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(nlsls::tau_constraint_lhs(s.resp, MatrixXd::Zero(2, 1), mu, tau, k), 0.0);
}

TEST(TauConstraint, InducedInfinityNormOfSingleTerm) {
  const SystemResponse r(BlockLowerTriangular::identity(1, 2), BlockLowerTriangular(1, 0, 2));
  MatrixXd m(2, 2);
  m << 1, -2, 0, 3;
  EXPECT_EQ(nlsls::tau_constraint_lhs(r, m, CurvatureBound::zero(2), VectorXd::Zero(1), 1), 3.0);
}

TEST(TauConstraint, IncludesInputRows) {
  BlockLowerTriangular pu(1, 1, 1);
  pu.block(0, 0)(0, 0) = 4.0;
  const SystemResponse r(BlockLowerTriangular::identity(1, 1), pu);
  EXPECT_EQ(nlsls::tau_constraint_lhs(r, MatrixXd::Ones(1, 1), CurvatureBound::zero(1), VectorXd::Zero(1), 1), 4.0);
}

TEST(TauConstraint, MonotoneInTauAndDisturbance) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_instance(4, 2, 1, rng);
    const MatrixXd e = randn(2, 2, rng);
    const auto mu = CurvatureBound::user(randn(2, 1, rng).cwiseAbs());
    const VectorXd tau = randn(4, 1, rng).cwiseAbs();
    const VectorXd c = randn(3, 1, rng);
    VectorXd tau_up = tau;
    tau_up[trial % 4] += u(rng);
    MatrixXd e_up = e;
    e_up.col(trial % 2) *= 1.0 + u(rng);
    for (int k = 1; k <= 4; ++k) {
      const double base_t = nlsls::tightening_term(c, s.resp, e, mu, tau, k);
      const double base_l = nlsls::tau_constraint_lhs(s.resp, e, mu, tau, k);
      EXPECT_GE(nlsls::tightening_term(c, s.resp, e, mu, tau_up, k), base_t - 1e-14);
      EXPECT_GE(nlsls::tau_constraint_lhs(s.resp, e, mu, tau_up, k), base_l - 1e-14);
      EXPECT_GE(nlsls::tightening_term(c, s.resp, e_up, mu, tau, k), base_t - 1e-14);
      EXPECT_GE(nlsls::tau_constraint_lhs(s.resp, e_up, mu, tau, k), base_l - 1e-14);
    }
  }
}

TEST(Polytope, FromBoundsAndValues) {
  const double inf = std::numeric_limits<double>::infinity();
  const Polytope p = Polytope::from_bounds((VectorXd(3) << -1, -inf, 0).finished(), (VectorXd(3) << 2, 5, inf).finished());
  EXPECT_EQ(p.count(), 4);
  const VectorXd vals = p.values((VectorXd(2) << 0.5, 1.0).finished(), (VectorXd(1) << 0.25).finished());
  EXPECT_TRUE((vals.array() <= 0.0).all());
  EXPECT_DOUBLE_EQ(vals.maxCoeff(), -0.25);
  const VectorXd out = p.values((VectorXd(2) << 3.0, 1.0).finished(), (VectorXd(1) << 0.25).finished());
  EXPECT_DOUBLE_EQ(out.maxCoeff(), 1.0);
}

TEST(Polytope, CompactnessCheck) {
  const double inf = std::numeric_limits<double>::infinity();
  Polytope open = Polytope::from_bounds((VectorXd(2) << -1, -inf).finished(), (VectorXd(2) << 1, inf).finished());
  EXPECT_THROW(open.validate(1, 1), std::invalid_argument);
  open.box_lower = (VectorXd(2) << -inf, -3).finished();
  open.box_upper = (VectorXd(2) << inf, 3).finished();
  EXPECT_NO_THROW(open.validate(1, 1));

  // A bounded set from non-axis rows: |x + u| <= 1, |x - u| <= 1.
  Polytope diamond;
  diamond.C.resize(4, 2);
  diamond.C << 1, 1, -1, -1, 1, -1, -1, 1;
  diamond.b = -VectorXd::Ones(4);
  EXPECT_NO_THROW(diamond.validate(1, 1));

  Polytope empty = Polytope::from_bounds(VectorXd::Constant(2, -1.0), VectorXd::Constant(2, 1.0));
  empty.b[0] = 2.0;  // x <= -2 together with x >= -1
  EXPECT_THROW(empty.validate(1, 1), std::invalid_argument);
  EXPECT_THROW(diamond.validate(2, 1), std::invalid_argument);
}

TEST(Polytope, SatelliteBenchmarkIsCompactWithDeclaredBox) {
  auto p = nlsls::satellite_problem();
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.polytope.count(), 12);
  p.polytope.box_lower.resize(0);
  p.polytope.box_upper.resize(0);
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

// Double integrator with a fixed gain: a certificate assembled by hand.
struct LinearSetup {
  RobustProblem problem;
  SolutionCertificate sol;
};

LinearSetup linear_setup(double mu_value, double e_scale) {
  LinearSetup s;
  MatrixXd a(2, 2), b(2, 1);
  a << 1, 1, 0, 1;
  b << 0.5, 1;
  auto& p = s.problem;
  p.model = std::make_shared<nlsls::LinearModel>(a, b);
  p.horizon = 5;
  p.x0 = (VectorXd(2) << 1.0, -0.5).finished();
  p.polytope = Polytope::from_bounds(VectorXd::Constant(3, -10.0), VectorXd::Constant(3, 10.0));
  p.dist.E = e_scale * MatrixXd::Identity(2, 2);
  p.mu = CurvatureBound::user(VectorXd::Constant(2, mu_value));
  p.cost.Q = MatrixXd::Identity(2, 2);
  p.cost.R = MatrixXd::Identity(1, 1);
  p.cost.z_ref = VectorXd::Zero(2);
  p.cost.v_ref = VectorXd::Zero(1);

  MatrixXd gain(1, 2);
  gain << -0.4, -1.0;
  auto& sol = s.sol;
  sol.v.assign(6, VectorXd::Zero(1));
  sol.z.push_back(p.x0);
  for (int k = 0; k < 5; ++k) {
    sol.v[static_cast<std::size_t>(k)] = gain * sol.z.back();
    sol.z.push_back(p.model->step(sol.z.back(), sol.v[static_cast<std::size_t>(k)]));
  }
  BlockLowerTriangular k(5, 1, 2);
  for (int i = 0; i < 5; ++i) k.block(i, 0) = gain;
  const auto jl = nlsls::jacobian_lists(*p.model, sol.z, sol.v, 5);
  sol.resp = nlsls::response_from_feedback(jl.a, jl.b, k);
  sol.K = k;
  sol.tau = nlsls::minimal_tau(sol.resp, p.disturbance(), p.mu);
  return s;
}

TEST(Certify, HandBuiltLinearCertificatePasses) {
  const auto s = linear_setup(0.5, 0.05);
  const auto rep = nlsls::certify(s.sol, s.problem);
  EXPECT_TRUE(rep.certified) << (rep.failures.empty() ? "" : rep.failures[0]);
  EXPECT_LE(rep.residuals.slp, 1e-12);
  EXPECT_LE(rep.residuals.dynamics, 1e-12);
  EXPECT_LE(rep.residuals.tau, 1e-12);
  EXPECT_LT(rep.residuals.tightening, 0.0);
}

TEST(Certify, ShrunkTauIsReported) {
  auto s = linear_setup(0.5, 0.05);
  s.sol.tau *= 0.9;
  const auto rep = nlsls::certify(s.sol, s.problem);
  EXPECT_FALSE(rep.certified);
  EXPECT_GT(rep.residuals.tau, 1e-6);
}

TEST(Certify, ReportsDynamicsAndConstraintViolations) {
  auto s = linear_setup(0.0, 0.05);
  s.sol.z[3][0] += 1e-3;
  auto rep = nlsls::certify(s.sol, s.problem);
  EXPECT_FALSE(rep.certified);
  EXPECT_NEAR(rep.residuals.dynamics, 1e-3, 1e-12);

  auto t = linear_setup(0.0, 5.0);
  rep = nlsls::certify(t.sol, t.problem);
  EXPECT_FALSE(rep.certified);
  EXPECT_GT(rep.residuals.tightening, 0.0);
}

TEST(Certify, NominalModeNeedsNoErrorBound) {
  auto s = linear_setup(2.0, 0.05);
  s.problem.mode = nlsls::ResponseMode::nominal;
  s.sol.tau = nlsls::minimal_tau(s.sol.resp, s.problem.disturbance(), s.problem.mu);
  EXPECT_EQ(s.sol.tau, VectorXd::Zero(5));
  const auto rep = nlsls::certify(s.sol, s.problem);
  EXPECT_TRUE(rep.certified);
  const auto tube = nlsls::build_tube(s.sol, s.problem.disturbance(), s.problem.mu);
  for (int k = 0; k <= 5; ++k) EXPECT_EQ(tube.half_width(k), VectorXd::Zero(2));
}

TEST(Tube, InitialStepIsDegenerate) {
  const auto s = linear_setup(0.5, 0.05);
  const auto tube = nlsls::build_tube(s.sol, s.problem.disturbance(), s.problem.mu);
  EXPECT_EQ(tube.generators[0].cols(), 0);
  EXPECT_TRUE(tube.contains(0, s.problem.x0));
  EXPECT_FALSE(tube.contains(0, s.problem.x0 + VectorXd::Constant(2, 1e-6)));
  EXPECT_EQ(tube.generators[3].cols(), 3 * 4);
}

TEST(Tube, IntervalHullEqualsEnumeratedReachableHull) {
  auto s = linear_setup(0.0, 0.05);
  s.problem.dist.E = (MatrixXd(2, 1) << 0.1, 0.3).finished();
  s.sol.tau = VectorXd::Zero(5);
  const auto tube = nlsls::build_tube(s.sol, s.problem.dist.E, s.problem.mu);
  for (int k = 1; k <= 4; ++k) {
    VectorXd lo = VectorXd::Constant(2, std::numeric_limits<double>::infinity()), hi = -lo;
    for (int mask = 0; mask < (1 << k); ++mask) {
      VectorXd x = s.problem.x0;
      std::vector<VectorXd> hist;
      for (int i = 0; i < k; ++i) {
        const VectorXd du = nlsls::feedback_step(s.sol.K, hist);
        const double d = (mask >> i) & 1 ? 1.0 : -1.0;
        x = s.problem.model->step(x, s.sol.v[static_cast<std::size_t>(i)] + du) + s.problem.dist.E * d;
        hist.push_back(x - s.sol.z[static_cast<std::size_t>(i + 1)]);
      }
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
    EXPECT_LE((tube.lower(k) - lo).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((tube.upper(k) - hi).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Tube, LpFallbackRejectsPointsOutsideZonotope) {
  nlsls::Tube tube;
  tube.center = {VectorXd::Zero(2)};
  tube.generators = {(MatrixXd(2, 2) << 1, 1, 1, -1).finished()};
  EXPECT_TRUE(tube.contains(0, (VectorXd(2) << 1.9, 0.0).finished()));
  EXPECT_TRUE(tube.contains(0, (VectorXd(2) << 0.9, 0.9).finished()));
  EXPECT_FALSE(tube.contains(0, (VectorXd(2) << 1.5, 1.5).finished()));
  EXPECT_FALSE(tube.contains(0, (VectorXd(2) << 2.5, 0.0).finished()));
  EXPECT_TRUE(tube.contains(0, (VectorXd(2) << 2.0 + 5e-9, 0.0).finished()));
}

}  // namespace
