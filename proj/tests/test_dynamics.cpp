#include "nlsls/dynamics.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace {

using nlsls::AttitudeField;
using nlsls::LinearModel;
using nlsls::ModelPtr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kPi = 3.14159265358979323846;

VectorXd random_satellite_point(std::mt19937& rng) {
  std::uniform_real_distribution<double> q(-1.0, 1.0), s(-0.1, 0.1);
  VectorXd xi(10);
  for (int i = 0; i < 4; ++i) xi[i] = q(rng);
  for (int i = 4; i < 10; ++i) xi[i] = s(rng);
  return xi;
}

VectorXd step_xi(const nlsls::SystemModel& m, const VectorXd& xi) {
  return m.step(xi.head(m.state_dim()), xi.tail(m.input_dim()));
}

MatrixXd fd_jacobian(const nlsls::SystemModel& m, const VectorXd& xi, double h) {
  MatrixXd j(m.state_dim(), xi.size());
  for (Eigen::Index c = 0; c < xi.size(); ++c) {
    VectorXd p = xi, q = xi;
    p[c] += h;
    q[c] -= h;
    j.col(c) = (step_xi(m, p) - step_xi(m, q)) / (2.0 * h);
  }
  return j;
}

MatrixXd ad_jacobian(const nlsls::SystemModel& m, const VectorXd& xi) {
  const auto jac = m.jacobians({xi.head(m.state_dim()), xi.tail(m.input_dim())});
  MatrixXd j(m.state_dim(), xi.size());
  j << jac.A, jac.B;
  return j;
}

// Classical RK4 on the continuous field with many small sub-steps.
VectorXd fine_integrate(const AttitudeField& field, const VectorXd& x, const VectorXd& u, double t,
                        int substeps) {
  const double h = t / substeps;
  std::vector<double> xs(x.data(), x.data() + x.size());
  const std::vector<double> us(u.data(), u.data() + u.size());
  auto add = [](const std::vector<double>& a, double s, const std::vector<double>& b) {
    std::vector<double> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + s * b[i];
    return r;
  };
  for (int k = 0; k < substeps; ++k) {
    const auto k1 = field(xs, us);
    const auto k2 = field(add(xs, 0.5 * h, k1), us);
    const auto k3 = field(add(xs, 0.5 * h, k2), us);
    const auto k4 = field(add(xs, h, k3), us);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return Eigen::Map<VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

TEST(SatelliteModel, IdentityAttitudeAtRestIsFixedPoint) {
  const auto m = nlsls::make_satellite_model();
  VectorXd x = VectorXd::Zero(7);
  x[0] = 1.0;
  EXPECT_EQ(m->step(x, VectorXd::Zero(3)), x);
}

TEST(SatelliteModel, StepMatchesFineIntegration) {
  const auto m = nlsls::make_satellite_model();
  VectorXd x(7);
  x << 1, 0, 0, 0, 0.05, 0, 0;
  const VectorXd u = VectorXd::Zero(3);
  const AttitudeField field(Eigen::Vector3d(5, 2, 1));
  const VectorXd fine = fine_integrate(field, x, u, 1.0, 10000);
  EXPECT_LE((m->step(x, u) - fine).cwiseAbs().maxCoeff(), 1e-6);
  // Pure spin about the first body axis: closed form rotation by 0.05 rad.
  EXPECT_NEAR(fine[0], std::cos(0.025), 1e-12);
  EXPECT_NEAR(fine[1], std::sin(0.025), 1e-12);
}

TEST(SatelliteModel, StepMatchesFineIntegrationWithTorque) {
  const auto m = nlsls::make_satellite_model();
  std::mt19937 rng(5);
  const AttitudeField field(Eigen::Vector3d(5, 2, 1));
  for (int t = 0; t < 5; ++t) {
    VectorXd xi = random_satellite_point(rng);
    xi.head(4).normalize();
    const VectorXd fine = fine_integrate(field, xi.head(7), xi.tail(3), 1.0, 2000);
    // RK4 with unit step has local error O(h^5 |w|^5); rates are small here.
    EXPECT_LE((step_xi(*m, xi) - fine).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(SatelliteModel, StepIsDeterministic) {
  const auto m = nlsls::make_satellite_model();
  std::mt19937 rng(1);
  const VectorXd xi = random_satellite_point(rng);
  const VectorXd a = step_xi(*m, xi);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(step_xi(*m, xi), a);
}

TEST(SatelliteModel, DimensionMismatchThrows) {
  const auto m = nlsls::make_satellite_model();
  EXPECT_THROW(m->step(VectorXd::Zero(6), VectorXd::Zero(3)), std::invalid_argument);
  EXPECT_THROW(m->step(VectorXd::Zero(7), VectorXd::Zero(2)), std::invalid_argument);
  EXPECT_THROW(m->jacobians({VectorXd::Zero(7), VectorXd::Zero(4)}), std::invalid_argument);
  EXPECT_THROW(m->hessians(VectorXd::Zero(9)), std::invalid_argument);
}

TEST(SatelliteModel, JacobianShapes) {
  const auto m = nlsls::make_satellite_model();
  VectorXd z = VectorXd::Zero(7);
  z[0] = 1.0;
  const auto jac = m->jacobians({z, VectorXd::Zero(3)});
  EXPECT_EQ(jac.A.rows(), 7);
  EXPECT_EQ(jac.A.cols(), 7);
  EXPECT_EQ(jac.B.rows(), 7);
  EXPECT_EQ(jac.B.cols(), 3);
}

TEST(SatelliteModel, JacobianAtEquilibriumMatchesCentralDifferences) {
  const auto m = nlsls::make_satellite_model();
  VectorXd xi = VectorXd::Zero(10);
  xi[0] = 1.0;
  const MatrixXd diff = ad_jacobian(*m, xi) - fd_jacobian(*m, xi, 1e-6);
  EXPECT_LE(diff.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SatelliteModel, JacobiansMatchCentralDifferencesAtRandomPoints) {
  const auto m = nlsls::make_satellite_model();
  std::mt19937 rng(42);
  for (int t = 0; t < 100; ++t) {
    const VectorXd xi = random_satellite_point(rng);
    const MatrixXd ad = ad_jacobian(*m, xi);
    const MatrixXd fd = fd_jacobian(*m, xi, 1e-6);
    for (Eigen::Index r = 0; r < ad.rows(); ++r) {
      for (Eigen::Index c = 0; c < ad.cols(); ++c) {
        EXPECT_LE(std::abs(ad(r, c) - fd(r, c)), 1e-5 * std::max(1.0, std::abs(fd(r, c))))
            << "point " << t << " entry (" << r << "," << c << ")";
      }
    }
  }
}

TEST(SatelliteModel, HessiansMatchDifferencesOfJacobians) {
  const auto m = nlsls::make_satellite_model();
  std::mt19937 rng(7);
  const double h = 1e-5;
  for (int t = 0; t < 20; ++t) {
    const VectorXd xi = random_satellite_point(rng);
    const auto hs = m->hessians(xi);
    for (Eigen::Index c = 0; c < xi.size(); ++c) {
      VectorXd p = xi, q = xi;
      p[c] += h;
      q[c] -= h;
      const MatrixXd dj = (ad_jacobian(*m, p) - ad_jacobian(*m, q)) / (2.0 * h);
      for (int i = 0; i < 7; ++i) {
        EXPECT_LE((hs[static_cast<std::size_t>(i)].col(c) - dj.row(i).transpose()).cwiseAbs().maxCoeff(), 1e-3);
      }
    }
  }
}

TEST(SatelliteModel, HessianComponentsMatchSecondOrderDifferences) {
  const auto m = nlsls::make_satellite_model();
  std::mt19937 rng(8);
  const double h = 1e-4;
  for (int t = 0; t < 5; ++t) {
    const VectorXd xi = random_satellite_point(rng);
    for (int i = 0; i < 7; ++i) {
      const MatrixXd hi = m->hessian_component(i, xi);
      for (Eigen::Index a = 0; a < 10; ++a) {
        for (Eigen::Index b = 0; b < 10; ++b) {
          VectorXd pp = xi, pm = xi, mp = xi, mm = xi;
          pp[a] += h; pp[b] += h;
          pm[a] += h; pm[b] -= h;
          mp[a] -= h; mp[b] += h;
          mm[a] -= h; mm[b] -= h;
          const double fd = (step_xi(*m, pp)[i] - step_xi(*m, pm)[i] - step_xi(*m, mp)[i] +
                             step_xi(*m, mm)[i]) / (4.0 * h * h);
          EXPECT_NEAR(hi(a, b), fd, 1e-4) << "component " << i << " entry (" << a << "," << b << ")";
        }
      }
    }
  }
}

TEST(SatelliteModel, HessiansAreExactlySymmetric) {
  const auto m = nlsls::make_satellite_model();
  std::mt19937 rng(9);
  const VectorXd xi = random_satellite_point(rng);
  for (int i = 0; i < 7; ++i) {
    const MatrixXd hi = m->hessian_component(i, xi);
    EXPECT_EQ((hi - hi.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_THROW(m->hessian_component(7, xi), std::out_of_range);
  EXPECT_THROW(m->hessian_component(-1, xi), std::out_of_range);
}

TEST(SatelliteModel, QuaternionNormDriftIsSmallWithoutTorque) {
  const auto m = nlsls::make_satellite_model();
  std::mt19937 rng(10);
  std::uniform_real_distribution<double> s(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    VectorXd x(7);
    for (int i = 0; i < 7; ++i) x[i] = s(rng);
    x.head(4).normalize();
    Eigen::Vector3d w = x.tail(3);
    x.tail(3) = 0.1 * s(rng) * w.normalized();
    const VectorXd next = m->step(x, VectorXd::Zero(3));
    EXPECT_LT(std::abs(next.head(4).norm() - 1.0), 1e-6);
  }
}

TEST(LinearModel, ReturnsItsMatricesAndZeroHessians) {
  MatrixXd a(2, 2), b(2, 1);
  a << 1, 2, -3, 0.5;
  b << 0.25, -1;
  const LinearModel m(a, b);
  const auto jac = m.jacobians({VectorXd::Ones(2), VectorXd::Ones(1)});
  EXPECT_EQ(jac.A, a);
  EXPECT_EQ(jac.B, b);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(m.hessian_component(i, VectorXd::Random(3)), MatrixXd::Zero(3, 3));
}

TEST(LinearModel, ComposedStepsEqualPowerExpansion) {
  MatrixXd a(3, 3), b(3, 2);
  a << 1, 2, 0, -1, 1, 3, 0, 1, -2;
  b << 1, 0, 2, -1, 0, 3;
  const LinearModel m(a, b);
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> d(-5, 5);
  VectorXd x0(3);
  for (int i = 0; i < 3; ++i) x0[i] = d(rng);
  const int horizon = 6;
  std::vector<VectorXd> u(horizon, VectorXd(2));
  for (auto& uk : u)
    for (int i = 0; i < 2; ++i) uk[i] = d(rng);
  VectorXd x = x0;
  for (int k = 0; k < horizon; ++k) x = m.step(x, u[static_cast<std::size_t>(k)]);
  // Integer data keeps every intermediate exact.
  VectorXd expansion = VectorXd::Zero(3);
  MatrixXd p = MatrixXd::Identity(3, 3);
  for (int k = horizon - 1; k >= 0; --k) {
    expansion += p * b * u[static_cast<std::size_t>(k)];
    p = p * a;
  }
  expansion += p * x0;
  EXPECT_EQ(x, expansion);
}

TEST(OmegaMatrix, ZeroRateGivesZeroMatrix) {
  EXPECT_EQ(nlsls::omega_matrix(Eigen::Vector3d::Zero()), Eigen::Matrix4d::Zero());
}

TEST(OmegaMatrix, IsSkewSymmetric) {
  std::mt19937 rng(2);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 20; ++t) {
    const Eigen::Vector3d w(nd(rng), nd(rng), nd(rng));
    const Eigen::Matrix4d o = nlsls::omega_matrix(w);
    EXPECT_EQ(o + o.transpose(), Eigen::Matrix4d::Zero());
  }
}

TEST(OmegaMatrix, FirstAxisLayout) {
  Eigen::Matrix4d expected;
  expected << 0, -1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, -1, 0;
  EXPECT_EQ(nlsls::omega_matrix(Eigen::Vector3d(2, 0, 0)), expected);
}

TEST(OmegaMatrix, AgreesWithAttitudeField) {
  const AttitudeField field(Eigen::Vector3d(5, 2, 1));
  const std::vector<double> x{0.3, -0.5, 0.2, 0.7, 0.04, -0.08, 0.02};
  const auto dx = field(x, std::vector<double>{0, 0, 0});
  const Eigen::Vector4d q(x[0], x[1], x[2], x[3]);
  const Eigen::Vector4d qd = nlsls::omega_matrix(Eigen::Vector3d(x[4], x[5], x[6])) * q;
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(dx[static_cast<std::size_t>(i)], qd[i], 1e-15);
}

TEST(QuaternionFromEuler, BenchmarkInitialAttitude) {
  const Eigen::Vector4d q = nlsls::quaternion_from_euler(kPi, kPi / 4, kPi / 4);
  EXPECT_NEAR(q[0], 0.1464466, 1e-6);
  EXPECT_NEAR(q[1], 0.8535534, 1e-6);
  EXPECT_NEAR(q[2], 0.3535534, 1e-6);
  EXPECT_NEAR(q[3], -0.3535534, 1e-6);
  EXPECT_NEAR(q.norm(), 1.0, 1e-14);
}

}  // namespace
