#include "nlsls/benchmark.hpp"
#include "nlsls/sqp.hpp"
#include "nlsls/validation.hpp"

#include <gtest/gtest.h>

namespace {

using nlsls::DisturbanceMode;
using nlsls::RobustProblem;
using nlsls::SolutionCertificate;
using Eigen::MatrixXd;
using Eigen::VectorXd;

RobustProblem linear_problem() {
  RobustProblem p;
  MatrixXd a(2, 2), b(2, 1);
  a << 1, 1, 0, 1;
  b << 0.5, 1;
  p.model = std::make_shared<nlsls::LinearModel>(a, b);
  p.horizon = 5;
  p.x0 = (VectorXd(2) << 2.0, 0.5).finished();
  p.polytope = nlsls::Polytope::from_bounds((VectorXd(3) << -5.0, -0.8, -0.6).finished(),
                                            (VectorXd(3) << 5.0, 0.8, 0.6).finished());
  p.dist.E = (MatrixXd(2, 1) << 0.02, 0.05).finished();
  p.mu = nlsls::CurvatureBound::zero(2);
  p.cost.Q = MatrixXd::Identity(2, 2);
  p.cost.R = MatrixXd::Identity(1, 1);
  p.cost.z_ref = VectorXd::Zero(2);
  p.cost.v_ref = VectorXd::Zero(1);
  return p;
}

const RobustProblem& satellite() {
  static const RobustProblem p = nlsls::satellite_problem(nlsls::ResponseMode::closed_loop, 5);
  return p;
}

const SolutionCertificate& satellite_solution() {
  static const SolutionCertificate s = [] {
    const auto res = nlsls::solve(satellite());
    if (!res.ok()) throw std::runtime_error("satellite solve failed: " + res.message);
    return res.certificate;
  }();
  return s;
}

TEST(SampleDisturbances, ZeroEGivesZero) {
  nlsls::DisturbanceModel dist{MatrixXd::Zero(3, 2)};
  for (auto mode : {DisturbanceMode::uniform, DisturbanceMode::vertex, DisturbanceMode::worst_axis}) {
    for (const auto& w : nlsls::sample_disturbances(dist, 6, mode, 3)) EXPECT_EQ(w, VectorXd::Zero(3));
  }
}

TEST(SampleDisturbances, VertexEntriesAreSigns) {
  for (const auto& d : nlsls::sample_unit_disturbances(4, 50, DisturbanceMode::vertex, 11)) {
    EXPECT_EQ(d.cwiseAbs(), VectorXd::Ones(4));
  }
}

TEST(SampleDisturbances, WorstAxisSharesOneSign) {
  int positive = 0;
  for (const auto& d : nlsls::sample_unit_disturbances(3, 200, DisturbanceMode::worst_axis, 5)) {
    EXPECT_TRUE(d == VectorXd::Ones(3) || d == -VectorXd::Ones(3));
    positive += d[0] > 0;
  }
  EXPECT_GT(positive, 50);
  EXPECT_LT(positive, 150);
}

TEST(SampleDisturbances, UniformFillsTheBox) {
  const auto d = nlsls::sample_unit_disturbances(1, 10000, DisturbanceMode::uniform, 2);
  double hi = -1.0, lo = 1.0;
  for (const auto& dk : d) {
    hi = std::max(hi, dk[0]);
    lo = std::min(lo, dk[0]);
  }
  EXPECT_LE(hi, 1.0);
  EXPECT_GE(lo, -1.0);
  EXPECT_GT(hi, 0.999);
  EXPECT_LT(lo, -0.999);
}

TEST(SampleDisturbances, DeterministicPerSeed) {
  nlsls::DisturbanceModel dist{MatrixXd::Random(3, 2)};
  const auto a = nlsls::sample_disturbances(dist, 8, DisturbanceMode::uniform, 42);
  const auto b = nlsls::sample_disturbances(dist, 8, DisturbanceMode::uniform, 42);
  const auto c = nlsls::sample_disturbances(dist, 8, DisturbanceMode::uniform, 43);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(SampleDisturbances, ParsesModeNames) {
  for (auto mode : {DisturbanceMode::uniform, DisturbanceMode::vertex, DisturbanceMode::worst_axis}) {
    EXPECT_EQ(nlsls::disturbance_mode_from_string(nlsls::to_string(mode)), mode);
  }
  EXPECT_THROW(nlsls::disturbance_mode_from_string("gaussian"), std::invalid_argument);
}

TEST(Rollout, ZeroDisturbanceFollowsNominal) {
  const auto& s = satellite_solution();
  const auto tr = nlsls::rollout(*satellite().model, s, std::vector<VectorXd>(5, VectorXd::Zero(7)));
  for (int k = 0; k <= 5; ++k) {
    EXPECT_LE((tr.x[k] - s.z[k]).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((tr.u[k] - s.v[k]).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Rollout, LinearErrorMatchesConvolution) {
  const auto p = linear_problem();
  const auto res = nlsls::solve(p);
  ASSERT_TRUE(res.ok()) << res.message;
  const auto& s = res.certificate;
  ASSERT_GT(s.resp.phi_u.max_abs(), 0.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto w = nlsls::sample_disturbances(p.dist, p.horizon, DisturbanceMode::uniform, seed);
    const auto tr = nlsls::rollout(*p.model, s, w);
    const auto e = nlsls::closed_loop_map(s.resp, w);
    for (int k = 1; k <= p.horizon; ++k) {
      EXPECT_LE((tr.x[k] - s.z[k] - e.dx[k - 1]).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LE((tr.u[k] - s.v[k] - e.du[k - 1]).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Rollout, RejectsWrongLength) {
  const auto& s = satellite_solution();
  EXPECT_THROW(nlsls::rollout(*satellite().model, s, std::vector<VectorXd>(4, VectorXd::Zero(7))),
               std::invalid_argument);
}

TEST(Audit, NominalRolloutIsInsideWithZeroError) {
  const auto& s = satellite_solution();
  const auto tr = nlsls::rollout(*satellite().model, s, std::vector<VectorXd>(5, VectorXd::Zero(7)));
  const auto rep = nlsls::audit({tr}, s, satellite());
  ASSERT_EQ(rep.rollouts.size(), 1u);
  EXPECT_TRUE(rep.clean());
  EXPECT_LE(rep.rollouts[0].error_norm.maxCoeff(), 1e-10);
  EXPECT_LE(rep.worst_violation, 0.0);
}

TEST(Audit, CoversEveryStepOfEveryRollout) {
  const auto run = nlsls::validate(satellite(), satellite_solution(), 7, DisturbanceMode::vertex, 1);
  ASSERT_EQ(run.report.rollouts.size(), 7u);
  ASSERT_EQ(run.trajectories.size(), 7u);
  for (const auto& r : run.report.rollouts) {
    EXPECT_EQ(r.inside.size(), 6u);
    EXPECT_EQ(r.error_norm.size(), 6);
    EXPECT_EQ(r.tau_margin.size(), 5);
  }
}

TEST(Audit, FlagsConstraintViolation) {
  const auto p = linear_problem();
  const auto res = nlsls::solve(p);
  ASSERT_TRUE(res.ok()) << res.message;
  auto tr = nlsls::rollout(*p.model, res.certificate, std::vector<VectorXd>(5, VectorXd::Zero(2)));
  tr.u[2][0] = 0.7;  // input limit is 0.6
  const auto rep = nlsls::audit({tr}, res.certificate, p);
  EXPECT_EQ(rep.violating_rollouts, 1);
  EXPECT_NEAR(rep.worst_violation, 0.1, 1e-12);
  EXPECT_FALSE(rep.clean());
}

TEST(Audit, SatelliteUniformRolloutsAreClean) {
  const auto run = nlsls::validate(satellite(), satellite_solution(), 1000, DisturbanceMode::uniform, 0);
  EXPECT_TRUE(run.report.clean()) << run.report.violating_rollouts << " violating, " << run.report.tube_exits
                                  << " tube exits, " << run.report.tau_exceedances << " tau exceedances";
  EXPECT_LE(run.report.worst_violation, 1e-8);
  EXPECT_GE(run.report.min_tau_margin, -1e-8);
}

TEST(Audit, SatelliteVertexAndWorstAxisRolloutsAreClean) {
  for (auto mode : {DisturbanceMode::vertex, DisturbanceMode::worst_axis}) {
    const auto run = nlsls::validate(satellite(), satellite_solution(), 200, mode, 9);
    EXPECT_TRUE(run.report.clean()) << nlsls::to_string(mode);
  }
}

TEST(Audit, HalvedTauIsCaughtOnVertexSequences) {
  auto s = satellite_solution();
  s.tau *= 0.5;
  const auto run = nlsls::validate(satellite(), s, 200, DisturbanceMode::vertex, 4);
  EXPECT_GT(run.report.tau_exceedances, 0);
  EXPECT_LT(run.report.min_tau_margin, -1e-8);
  EXPECT_FALSE(run.report.clean());
}

TEST(Validate, IndependentOfThreadCount) {
  const auto a = nlsls::validate(satellite(), satellite_solution(), 12, DisturbanceMode::uniform, 3, 1e-8, 1);
  const auto b = nlsls::validate(satellite(), satellite_solution(), 12, DisturbanceMode::uniform, 3, 1e-8, 4);
  ASSERT_EQ(a.trajectories.size(), b.trajectories.size());
  for (std::size_t r = 0; r < a.trajectories.size(); ++r) EXPECT_EQ(a.trajectories[r].x, b.trajectories[r].x);
  EXPECT_EQ(a.report.min_tau_margin, b.report.min_tau_margin);
}

}  // namespace
