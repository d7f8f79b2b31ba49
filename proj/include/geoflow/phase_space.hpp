#pragma once

#include "geoflow/metric.hpp"

#include <cmath>
#include <string>

namespace geoflow {

/// A point (x, p) of the cotangent bundle in chart coordinates.
template <typename Scalar>
struct CotangentState {
  Vector2<Scalar> x = Vector2<Scalar>::Zero();
  Vector2<Scalar> p = Vector2<Scalar>::Zero();

  CotangentState() = default;
  CotangentState(const Vector2<Scalar>& x_, const Vector2<Scalar>& p_) : x(x_), p(p_) {}
  explicit CotangentState(const Vector4<Scalar>& z) : x(z.template head<2>()), p(z.template tail<2>()) {}

  Vector4<Scalar> coords() const {
    Vector4<Scalar> z;
    z << x, p;
    return z;
  }
};

/// H(x, p) = 1/2 <A(x) p, p>.
template <typename Scalar>
Scalar hamiltonian(const MetricField<Scalar>& metric, const CotangentState<Scalar>& s) {
  const Matrix2<Scalar> A = metric.contravariant(s.x);
  return Scalar(0.5) * s.p.dot(A * s.p);
}

/// Canonical equations: dx/dt = A(x) p, dp_k/dt = -1/2 p^T (dA/dx_k) p.
template <typename Scalar>
Vector4<Scalar> hamiltonian_vector_field(const MetricField<Scalar>& metric,
                                         const CotangentState<Scalar>& s) {
  const MetricJet<Scalar> j = metric.jet(s.x, 1);
  Vector4<Scalar> out;
  out.template head<2>() = j.A * s.p;
  for (int k = 0; k < 2; ++k) out[2 + k] = Scalar(-0.5) * s.p.dot(j.dA[k] * s.p);
  return out;
}

/// Gradient of H with respect to (x, p).
template <typename Scalar>
Vector4<Scalar> energy_gradient(const MetricField<Scalar>& metric, const CotangentState<Scalar>& s) {
  const MetricJet<Scalar> j = metric.jet(s.x, 1);
  Vector4<Scalar> out;
  for (int k = 0; k < 2; ++k) out[k] = Scalar(0.5) * s.p.dot(j.dA[k] * s.p);
  out.template tail<2>() = j.A * s.p;
  return out;
}

/// Vector field and its Jacobian from one metric jet.
template <typename Scalar>
struct FieldLinearization {
  Vector4<Scalar> field;
  Matrix4<Scalar> jacobian;
};

template <typename Scalar>
FieldLinearization<Scalar> linearize_field(const MetricField<Scalar>& metric,
                                           const CotangentState<Scalar>& s) {
  const MetricJet<Scalar> j = metric.jet(s.x, 2);
  FieldLinearization<Scalar> out;
  const Vector2<Scalar> Ap = j.A * s.p;
  out.field.template head<2>() = Ap;
  Vector2<Scalar> dAp[2] = {j.dA[0] * s.p, j.dA[1] * s.p};
  for (int k = 0; k < 2; ++k) out.field[2 + k] = Scalar(-0.5) * s.p.dot(dAp[k]);

  Matrix4<Scalar>& J = out.jacobian;
  for (int k = 0; k < 2; ++k) J.template block<2, 1>(0, k) = dAp[k];
  J.template block<2, 2>(0, 2) = j.A;
  for (int r = 0; r < 2; ++r) {
    for (int k = 0; k < 2; ++k) J(2 + r, k) = Scalar(-0.5) * s.p.dot(j.d2A[r][k] * s.p);
    J.template block<1, 2>(2 + r, 2) = -dAp[r].transpose();
  }
  return out;
}

/// Legendre transform (x, v) -> (x, A(x)^{-1} v).
template <typename Scalar>
CotangentState<Scalar> legendre(const MetricField<Scalar>& metric, const Vector2<Scalar>& x,
                                const Vector2<Scalar>& v) {
  return {x, metric.covariant(x) * v};
}

/// Inverse Legendre transform: v = A(x) p.
template <typename Scalar>
Vector2<Scalar> inverse_legendre(const MetricField<Scalar>& metric, const CotangentState<Scalar>& s) {
  return metric.contravariant(s.x) * s.p;
}

/// g_x(v, v).
template <typename Scalar>
Scalar metric_norm_squared(const MetricField<Scalar>& metric, const Vector2<Scalar>& x,
                           const Vector2<Scalar>& v) {
  return v.dot(metric.covariant(x) * v);
}

/// d((x,p),(x',p')) = max(chart distance of x, x'; |p - p'|).
template <typename Scalar>
Scalar state_distance(const SurfaceChart<Scalar>& chart, const CotangentState<Scalar>& a,
                      const CotangentState<Scalar>& b) {
  return std::max(chart.distance(a.x, b.x), (a.p - b.p).norm());
}

/// Componentwise difference a - b with periodic coordinates wrapped.
template <typename Scalar>
Vector4<Scalar> state_difference(const SurfaceChart<Scalar>& chart, const CotangentState<Scalar>& a,
                                 const CotangentState<Scalar>& b) {
  Vector4<Scalar> d;
  d << chart.difference(a.x, b.x), a.p - b.p;
  return d;
}

/// A cotangent state on the unit cotangent bundle H = 1/2 of `metric`.
template <typename Scalar>
class UnitCotangentState {
 public:
  static constexpr double shell_tolerance = 1e-9;

  UnitCotangentState(MetricField<Scalar> metric, const CotangentState<Scalar>& state)
      : metric_(std::move(metric)), state_(state) {
    const Scalar h = hamiltonian(metric_, state_);
    if (!(std::abs(2 * h - 1) <= Scalar(shell_tolerance))) {
      throw DomainError("state is not on the unit cotangent bundle: 2H - 1 = " +
                        std::to_string(double(2 * h - 1)));
    }
  }

  /// For states produced by the integrator, whose energy drift has already
  /// been checked against the caller's shell tolerance.
  static UnitCotangentState unchecked(MetricField<Scalar> metric, const CotangentState<Scalar>& state) {
    return UnitCotangentState(std::move(metric), state, Unchecked{});
  }

  const CotangentState<Scalar>& state() const { return state_; }
  const MetricField<Scalar>& metric() const { return metric_; }
  const Vector2<Scalar>& x() const { return state_.x; }
  const Vector2<Scalar>& p() const { return state_.p; }
  Vector4<Scalar> coords() const { return state_.coords(); }

 private:
  struct Unchecked {};
  UnitCotangentState(MetricField<Scalar> metric, const CotangentState<Scalar>& state, Unchecked)
      : metric_(std::move(metric)), state_(state) {}

  MetricField<Scalar> metric_;
  CotangentState<Scalar> state_;
};

}  // namespace geoflow
