#pragma once

// Forward-mode automatic differentiation scalars.
//
// Dual carries a value and a gradient, Jet2 additionally carries the Hessian.
// Both are plain value types so user dynamics can be written once as a
// template over the scalar type and evaluated with double, Dual or Jet2.

#include <Eigen/Core>

#include <cmath>

namespace nlsls::ad {

struct Dual {
  double v = 0.0;
  Eigen::VectorXd g;

  Dual() = default;
  Dual(double value, Eigen::Index n) : v(value), g(Eigen::VectorXd::Zero(n)) {}
  Dual(double value, Eigen::VectorXd grad) : v(value), g(std::move(grad)) {}

  static Dual variable(double value, Eigen::Index n, Eigen::Index index) {
    Dual d(value, n);
    d.g[index] = 1.0;
    return d;
  }
};

struct Jet2 {
  double v = 0.0;
  Eigen::VectorXd g;
  Eigen::MatrixXd h;

  Jet2() = default;
  Jet2(double value, Eigen::Index n)
      : v(value), g(Eigen::VectorXd::Zero(n)), h(Eigen::MatrixXd::Zero(n, n)) {}
  Jet2(double value, Eigen::VectorXd grad, Eigen::MatrixXd hess)
      : v(value), g(std::move(grad)), h(std::move(hess)) {}

  static Jet2 variable(double value, Eigen::Index n, Eigen::Index index) {
    Jet2 j(value, n);
    j.g[index] = 1.0;
    return j;
  }
};

// ---- Dual arithmetic -------------------------------------------------------

inline Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.g + b.g}; }
inline Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.g - b.g}; }
inline Dual operator-(const Dual& a) { return {-a.v, -a.g}; }
inline Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, b.v * a.g + a.v * b.g}; }
inline Dual operator/(const Dual& a, const Dual& b) {
  const double inv = 1.0 / b.v;
  return {a.v * inv, (a.g - (a.v * inv) * b.g) * inv};
}
inline Dual operator+(const Dual& a, double s) { return {a.v + s, a.g}; }
inline Dual operator+(double s, const Dual& a) { return {a.v + s, a.g}; }
inline Dual operator-(const Dual& a, double s) { return {a.v - s, a.g}; }
inline Dual operator-(double s, const Dual& a) { return {s - a.v, -a.g}; }
inline Dual operator*(const Dual& a, double s) { return {a.v * s, a.g * s}; }
inline Dual operator*(double s, const Dual& a) { return {a.v * s, a.g * s}; }
inline Dual operator/(const Dual& a, double s) { return {a.v / s, a.g / s}; }

inline Dual sin(const Dual& a) { return {std::sin(a.v), std::cos(a.v) * a.g}; }
inline Dual cos(const Dual& a) { return {std::cos(a.v), -std::sin(a.v) * a.g}; }
inline Dual sqrt(const Dual& a) {
  const double r = std::sqrt(a.v);
  return {r, a.g / (2.0 * r)};
}

// ---- Jet2 arithmetic -------------------------------------------------------

inline Jet2 operator+(const Jet2& a, const Jet2& b) { return {a.v + b.v, a.g + b.g, a.h + b.h}; }
inline Jet2 operator-(const Jet2& a, const Jet2& b) { return {a.v - b.v, a.g - b.g, a.h - b.h}; }
inline Jet2 operator-(const Jet2& a) { return {-a.v, -a.g, -a.h}; }
inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  Eigen::MatrixXd h = b.v * a.h + a.v * b.h;
  h.noalias() += a.g * b.g.transpose();
  h.noalias() += b.g * a.g.transpose();
  return {a.v * b.v, b.v * a.g + a.v * b.g, std::move(h)};
}
inline Jet2 operator+(const Jet2& a, double s) { return {a.v + s, a.g, a.h}; }
inline Jet2 operator+(double s, const Jet2& a) { return {a.v + s, a.g, a.h}; }
inline Jet2 operator-(const Jet2& a, double s) { return {a.v - s, a.g, a.h}; }
inline Jet2 operator-(double s, const Jet2& a) { return {s - a.v, -a.g, -a.h}; }
inline Jet2 operator*(const Jet2& a, double s) { return {a.v * s, a.g * s, a.h * s}; }
inline Jet2 operator*(double s, const Jet2& a) { return {a.v * s, a.g * s, a.h * s}; }
inline Jet2 operator/(const Jet2& a, double s) { return {a.v / s, a.g / s, a.h / s}; }

// Applies a scalar function with derivatives (f, f', f'') to a jet.
inline Jet2 chain(const Jet2& a, double f0, double f1, double f2) {
  Eigen::MatrixXd h = f1 * a.h;
  h.noalias() += f2 * (a.g * a.g.transpose());
  return {f0, f1 * a.g, std::move(h)};
}
inline Jet2 operator/(const Jet2& a, const Jet2& b) {
  const double inv = 1.0 / b.v;
  return a * chain(b, inv, -inv * inv, 2.0 * inv * inv * inv);
}
inline Jet2 sin(const Jet2& a) { return chain(a, std::sin(a.v), std::cos(a.v), -std::sin(a.v)); }
inline Jet2 cos(const Jet2& a) { return chain(a, std::cos(a.v), -std::sin(a.v), -std::cos(a.v)); }
inline Jet2 sqrt(const Jet2& a) {
  const double r = std::sqrt(a.v);
  return chain(a, r, 0.5 / r, -0.25 / (r * a.v));
}

inline double value(double x) { return x; }
inline double value(const Dual& x) { return x.v; }
inline double value(const Jet2& x) { return x.v; }

}  // namespace nlsls::ad
