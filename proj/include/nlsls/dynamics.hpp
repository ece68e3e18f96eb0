#pragma once

/**
 * @file
 * @brief Discrete-time nonlinear system interface and the models shipped with
 * the library (linear, RK4-discretized rigid-body attitude).
 *
 * Every model exposes its one-step map x+ = f(x, u), the Jacobians of that map
 * and the Hessian of each output component with respect to xi = (x, u). For
 * RK4 models the derivatives are those of the full discrete step, obtained by
 * forward-mode differentiation through the integrator stages.
 */

#include "nlsls/autodiff.hpp"

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlsls {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Point (z, v) about which the dynamics are linearized.
struct LinearizationPoint {
  VectorXd z;
  VectorXd v;
};

struct Jacobians {
  MatrixXd A;  ///< df/dx, n_x by n_x
  MatrixXd B;  ///< df/du, n_x by n_u
};

class SystemModel {
 public:
  virtual ~SystemModel() = default;

  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual std::string name() const = 0;

  /// Nominal one-step map f(x, u).
  VectorXd step(const VectorXd& x, const VectorXd& u) const {
    check_dims(x, u);
    return step_impl(x, u);
  }

  Jacobians jacobians(const LinearizationPoint& p) const {
    check_dims(p.z, p.v);
    return jacobians_impl(p.z, p.v);
  }

  /// Hessians of all output components at xi = (x, u), each symmetrized.
  std::vector<MatrixXd> hessians(const VectorXd& xi) const {
    if (xi.size() != state_dim() + input_dim()) {
      throw std::invalid_argument("hessians: point has dimension " + std::to_string(xi.size()) +
                                  ", expected " + std::to_string(state_dim() + input_dim()));
    }
    auto hs = hessians_impl(xi);
    for (auto& h : hs) h = 0.5 * (h + h.transpose()).eval();
    return hs;
  }

  MatrixXd hessian_component(int i, const VectorXd& xi) const {
    if (i < 0 || i >= state_dim()) {
      throw std::out_of_range("hessian_component: index " + std::to_string(i) + " out of range");
    }
    return hessians(xi)[static_cast<std::size_t>(i)];
  }

 protected:
  virtual VectorXd step_impl(const VectorXd& x, const VectorXd& u) const = 0;
  virtual Jacobians jacobians_impl(const VectorXd& z, const VectorXd& v) const = 0;
  virtual std::vector<MatrixXd> hessians_impl(const VectorXd& xi) const = 0;

 private:
  void check_dims(const VectorXd& x, const VectorXd& u) const {
    if (x.size() != state_dim() || u.size() != input_dim()) {
      throw std::invalid_argument("dimension mismatch: got (" + std::to_string(x.size()) + ", " +
                                  std::to_string(u.size()) + "), model " + name() + " expects (" +
                                  std::to_string(state_dim()) + ", " + std::to_string(input_dim()) +
                                  ")");
    }
  }
};

using ModelPtr = std::shared_ptr<const SystemModel>;

/// f(x, u) = A0 x + B0 u.
class LinearModel final : public SystemModel {
 public:
  LinearModel(MatrixXd a, MatrixXd b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.rows() != a_.cols() || b_.rows() != a_.rows()) {
      throw std::invalid_argument("LinearModel: A must be square and B must have as many rows");
    }
  }

  int state_dim() const override { return static_cast<int>(a_.rows()); }
  int input_dim() const override { return static_cast<int>(b_.cols()); }
  std::string name() const override { return "linear"; }
  const MatrixXd& a() const { return a_; }
  const MatrixXd& b() const { return b_; }

 protected:
  VectorXd step_impl(const VectorXd& x, const VectorXd& u) const override { return a_ * x + b_ * u; }
  Jacobians jacobians_impl(const VectorXd&, const VectorXd&) const override { return {a_, b_}; }
  std::vector<MatrixXd> hessians_impl(const VectorXd&) const override {
    const auto n = a_.cols() + b_.cols();
    return std::vector<MatrixXd>(static_cast<std::size_t>(a_.rows()), MatrixXd::Zero(n, n));
  }

 private:
  MatrixXd a_;
  MatrixXd b_;
};

/**
 * Adapts a discrete map written as a template over the scalar type into a
 * SystemModel with AD derivatives.
 *
 * Map must provide state_dim(), input_dim(), name() and
 *   template <class S> std::vector<S> operator()(const std::vector<S>& x,
 *                                                const std::vector<S>& u) const;
 */
template <class Map>
class AutodiffModel final : public SystemModel {
 public:
  explicit AutodiffModel(Map map) : map_(std::move(map)) {}

  int state_dim() const override { return map_.state_dim(); }
  int input_dim() const override { return map_.input_dim(); }
  std::string name() const override { return map_.name(); }
  const Map& map() const { return map_; }

 protected:
  VectorXd step_impl(const VectorXd& x, const VectorXd& u) const override {
    const std::vector<double> xs(x.data(), x.data() + x.size());
    const std::vector<double> us(u.data(), u.data() + u.size());
    const auto out = map_(xs, us);
    return Eigen::Map<const VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
  }

  Jacobians jacobians_impl(const VectorXd& z, const VectorXd& v) const override {
    const Eigen::Index nx = z.size();
    const Eigen::Index nu = v.size();
    const Eigen::Index n = nx + nu;
    std::vector<ad::Dual> xs, us;
    xs.reserve(static_cast<std::size_t>(nx));
    us.reserve(static_cast<std::size_t>(nu));
    for (Eigen::Index i = 0; i < nx; ++i) xs.push_back(ad::Dual::variable(z[i], n, i));
    for (Eigen::Index i = 0; i < nu; ++i) us.push_back(ad::Dual::variable(v[i], n, nx + i));
    const auto out = map_(xs, us);
    Jacobians jac{MatrixXd(nx, nx), MatrixXd(nx, nu)};
    for (Eigen::Index i = 0; i < nx; ++i) {
      const auto& g = out[static_cast<std::size_t>(i)].g;
      jac.A.row(i) = g.head(nx).transpose();
      jac.B.row(i) = g.tail(nu).transpose();
    }
    return jac;
  }

  std::vector<MatrixXd> hessians_impl(const VectorXd& xi) const override {
    const Eigen::Index nx = state_dim();
    const Eigen::Index n = xi.size();
    std::vector<ad::Jet2> xs, us;
    for (Eigen::Index i = 0; i < n; ++i) {
      (i < nx ? xs : us).push_back(ad::Jet2::variable(xi[i], n, i));
    }
    const auto out = map_(xs, us);
    std::vector<MatrixXd> hs;
    hs.reserve(out.size());
    for (const auto& o : out) hs.push_back(o.h);
    return hs;
  }

 private:
  Map map_;
};

/// Explicit fourth-order Runge-Kutta discretization of a continuous field.
template <class Field>
class Rk4 {
 public:
  Rk4(Field field, double dt) : field_(std::move(field)), dt_(dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("Rk4: time step must be positive");
  }

  int state_dim() const { return field_.state_dim(); }
  int input_dim() const { return field_.input_dim(); }
  std::string name() const { return field_.name(); }
  double dt() const { return dt_; }
  const Field& field() const { return field_; }

  template <class S>
  std::vector<S> operator()(const std::vector<S>& x, const std::vector<S>& u) const {
    const std::size_t n = x.size();
    auto axpy = [n](const std::vector<S>& base, double a, const std::vector<S>& k) {
      std::vector<S> r;
      r.reserve(n);
      for (std::size_t i = 0; i < n; ++i) r.push_back(base[i] + a * k[i]);
      return r;
    };
    const auto k1 = field_(x, u);
    const auto k2 = field_(axpy(x, 0.5 * dt_, k1), u);
    const auto k3 = field_(axpy(x, 0.5 * dt_, k2), u);
    const auto k4 = field_(axpy(x, dt_, k3), u);
    std::vector<S> next;
    next.reserve(n);
    const double w = dt_ / 6.0;
    for (std::size_t i = 0; i < n; ++i) {
      next.push_back(x[i] + w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    return next;
  }

 private:
  Field field_;
  double dt_;
};

/// Omega(w) such that dq/dt = Omega(w) q for a scalar-first quaternion.
inline Eigen::Matrix4d omega_matrix(const Eigen::Vector3d& w) {
  Eigen::Matrix4d m;
  // clang-format off
  m <<  0.0,  -w[0], -w[1], -w[2],
        w[0],  0.0,   w[2], -w[1],
        w[1], -w[2],  0.0,   w[0],
        w[2],  w[1], -w[0],  0.0;
  // clang-format on
  return 0.5 * m;
}

/**
 * Rigid-body attitude dynamics, state (q, w) with q scalar-first, input torque:
 *   dq/dt = Omega(w) q,   dw/dt = I^-1 (u - w x (I w)),  I = diag(inertia).
 */
class AttitudeField {
 public:
  explicit AttitudeField(Eigen::Vector3d inertia) : inertia_(inertia) {
    if ((inertia_.array() <= 0.0).any()) {
      throw std::invalid_argument("AttitudeField: inertia entries must be positive");
    }
  }

  int state_dim() const { return 7; }
  int input_dim() const { return 3; }
  std::string name() const { return "satellite"; }
  const Eigen::Vector3d& inertia() const { return inertia_; }

  template <class S>
  std::vector<S> operator()(const std::vector<S>& x, const std::vector<S>& u) const {
    const S& q0 = x[0];
    const S& q1 = x[1];
    const S& q2 = x[2];
    const S& q3 = x[3];
    const S& w1 = x[4];
    const S& w2 = x[5];
    const S& w3 = x[6];
    const double i1 = inertia_[0], i2 = inertia_[1], i3 = inertia_[2];
    std::vector<S> dx;
    dx.reserve(7);
    dx.push_back(0.5 * (-(w1 * q1) - w2 * q2 - w3 * q3));
    dx.push_back(0.5 * (w1 * q0 + w3 * q2 - w2 * q3));
    dx.push_back(0.5 * (w2 * q0 - w3 * q1 + w1 * q3));
    dx.push_back(0.5 * (w3 * q0 + w2 * q1 - w1 * q2));
    // w x (I w) = (w2 w3 (i3 - i2), w3 w1 (i1 - i3), w1 w2 (i2 - i1))
    dx.push_back((u[0] - (i3 - i2) * (w2 * w3)) / i1);
    dx.push_back((u[1] - (i1 - i3) * (w3 * w1)) / i2);
    dx.push_back((u[2] - (i2 - i1) * (w1 * w2)) / i3);
    return dx;
  }

 private:
  Eigen::Vector3d inertia_;
};

using SatelliteModel = AutodiffModel<Rk4<AttitudeField>>;

inline ModelPtr make_satellite_model(const Eigen::Vector3d& inertia = Eigen::Vector3d(5.0, 2.0, 1.0),
                                     double dt = 1.0) {
  return std::make_shared<SatelliteModel>(Rk4<AttitudeField>(AttitudeField(inertia), dt));
}

/// Scalar-first unit quaternion from roll-pitch-yaw angles (intrinsic Z-Y-X).
inline Eigen::Vector4d quaternion_from_euler(double roll, double pitch, double yaw) {
  const double cr = std::cos(0.5 * roll), sr = std::sin(0.5 * roll);
  const double cp = std::cos(0.5 * pitch), sp = std::sin(0.5 * pitch);
  const double cy = std::cos(0.5 * yaw), sy = std::sin(0.5 * yaw);
  return {cr * cp * cy + sr * sp * sy, sr * cp * cy - cr * sp * sy, cr * sp * cy + sr * cp * sy,
          cr * cp * sy - sr * sp * cy};
}

}  // namespace nlsls
