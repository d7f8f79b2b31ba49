#pragma once

#include "geoflow/phase_space.hpp"

#include <Eigen/LU>

#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

namespace geoflow {

struct FlowSettings {
  double step = 1e-3;          ///< base step size
  double tol = 1e-13;          ///< Newton increment tolerance for the implicit stage
  int max_newton_iters = 25;
  double shell_tolerance = 1e-6;  ///< largest |2H - 1| accepted on returned unit states

  void validate() const {
    if (!(step > 0) || !std::isfinite(step)) throw DomainError("flow step must be positive");
    if (!(tol > 0)) throw DomainError("flow tolerance must be positive");
    if (max_newton_iters < 1) throw DomainError("max_newton_iters must be >= 1");
    if (!(shell_tolerance > 0)) throw DomainError("shell tolerance must be positive");
  }
};

/// Derivative of the time-t flow in chart coordinates (x, p).
template <typename Scalar>
struct MonodromyRecord {
  CotangentState<Scalar> end_state;  ///< lifted (unwrapped) chart coordinates
  Matrix4<Scalar> matrix = Matrix4<Scalar>::Identity();
  Scalar elapsed = 0;
};

/// det M by pivoted LU. Eigen's fixed-size 4x4 determinant() expands
/// cofactors and loses ~|M|^2 eps to cancellation on stretched monodromies.
template <typename Scalar>
Scalar monodromy_determinant(const Matrix4<Scalar>& m) {
  return m.partialPivLu().determinant();
}

/// One implicit-midpoint step z -> z + h X_H((z + z')/2). When `tangent` is
/// given it is advanced by the exact derivative of the discrete step,
/// (I - h/2 J)^{-1} (I + h/2 J) with J the field Jacobian at the midpoint.
template <typename Scalar>
Vector4<Scalar> midpoint_step(const MetricField<Scalar>& metric, const Vector4<Scalar>& z, Scalar h,
                              const FlowSettings& settings, Matrix4<Scalar>* tangent = nullptr) {
  const Scalar half = h / 2;
  Vector4<Scalar> mid = z + half * hamiltonian_vector_field(metric, CotangentState<Scalar>(z));
  bool converged = false;
  Scalar last_increment = 0;
  FieldLinearization<Scalar> lin;
  for (int it = 0; it < settings.max_newton_iters; ++it) {
    lin = linearize_field(metric, CotangentState<Scalar>(mid));
    const Vector4<Scalar> residual = mid - z - half * lin.field;
    const Matrix4<Scalar> J = Matrix4<Scalar>::Identity() - half * lin.jacobian;
    const Vector4<Scalar> delta = J.partialPivLu().solve(residual);
    mid -= delta;
    last_increment = delta.cwiseAbs().maxCoeff();
    const Scalar scale = std::max(Scalar(1), mid.cwiseAbs().maxCoeff());
    if (!std::isfinite(last_increment)) break;
    if (last_increment <= Scalar(settings.tol) * scale) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "implicit midpoint stage did not converge: step " << double(h) << ", last increment "
        << double(last_increment) << ", state (" << z.transpose() << ")";
    throw IntegrationError(msg.str());
  }
  if (tangent) {
    lin = linearize_field(metric, CotangentState<Scalar>(mid));
    const Matrix4<Scalar> lhs = Matrix4<Scalar>::Identity() - half * lin.jacobian;
    const Matrix4<Scalar> rhs = Matrix4<Scalar>::Identity() + half * lin.jacobian;
    *tangent = lhs.partialPivLu().solve(rhs * (*tangent));
  }
  return Scalar(2) * mid - z;
}

/// Sequential integrator of the discrete flow. Coordinates are kept lifted
/// (periodic coordinates are not wrapped) so crossings and windings stay
/// continuous; the metric is evaluated on the lifted point directly.
template <typename Scalar>
class FlowStepper {
 public:
  FlowStepper(MetricField<Scalar> metric, const CotangentState<Scalar>& start, FlowSettings settings,
              bool track_monodromy = false)
      : metric_(std::move(metric)), z_(start.coords()), settings_(settings),
        track_(track_monodromy) {
    settings_.validate();
  }

  /// Integrate from the current time to `t` in equal substeps of at most `step`.
  void advance_to(Scalar t) {
    const Scalar span = t - time_;
    if (span == 0) return;
    if (!std::isfinite(double(span))) throw DomainError("flow time must be finite");
    const auto n = static_cast<long long>(std::ceil(std::abs(double(span)) / settings_.step - 1e-9));
    const long long steps = std::max<long long>(n, 1);
    const Scalar h = span / Scalar(steps);
    for (long long i = 0; i < steps; ++i) {
      z_ = midpoint_step(metric_, z_, h, settings_, track_ ? &tangent_ : nullptr);
    }
    time_ = t;
  }

  /// Single step of size h (used by crossing searches).
  void step(Scalar h) {
    z_ = midpoint_step(metric_, z_, h, settings_, track_ ? &tangent_ : nullptr);
    time_ += h;
  }

  Scalar time() const { return time_; }
  const Vector4<Scalar>& coords() const { return z_; }
  CotangentState<Scalar> state() const { return CotangentState<Scalar>(z_); }
  const Matrix4<Scalar>& monodromy() const { return tangent_; }
  const MetricField<Scalar>& metric() const { return metric_; }
  const FlowSettings& settings() const { return settings_; }

 private:
  MetricField<Scalar> metric_;
  Vector4<Scalar> z_;
  FlowSettings settings_;
  bool track_ = false;
  Scalar time_ = 0;
  Matrix4<Scalar> tangent_ = Matrix4<Scalar>::Identity();
};

/// Wrap periodic coordinates of a lifted state into the chart.
template <typename Scalar>
CotangentState<Scalar> wrap_state(const SurfaceChart<Scalar>& chart, const CotangentState<Scalar>& s) {
  return {chart.wrap(s.x), s.p};
}

/// phi^t on T*M, lifted coordinates.
template <typename Scalar>
CotangentState<Scalar> flow_lifted(const MetricField<Scalar>& metric, const CotangentState<Scalar>& s,
                                   Scalar t, const FlowSettings& settings) {
  FlowStepper<Scalar> stepper(metric, s, settings);
  stepper.advance_to(t);
  return stepper.state();
}

/// phi^t on the unit cotangent bundle.
template <typename Scalar>
UnitCotangentState<Scalar> flow(const MetricField<Scalar>& metric,
                                const UnitCotangentState<Scalar>& s, Scalar t,
                                const FlowSettings& settings) {
  const CotangentState<Scalar> end = flow_lifted(metric, s.state(), t, settings);
  const CotangentState<Scalar> wrapped = wrap_state(metric.chart(), end);
  const Scalar drift = std::abs(2 * hamiltonian(metric, wrapped) - 1);
  if (!(drift <= Scalar(settings.shell_tolerance))) {
    throw IntegrationError("energy drift " + std::to_string(double(drift)) +
                           " exceeds the shell tolerance");
  }
  return UnitCotangentState<Scalar>::unchecked(metric, wrapped);
}

/// phi^t together with its derivative (variational flow).
template <typename Scalar>
MonodromyRecord<Scalar> flow_with_monodromy(const MetricField<Scalar>& metric,
                                            const CotangentState<Scalar>& s, Scalar t,
                                            const FlowSettings& settings) {
  FlowStepper<Scalar> stepper(metric, s, settings, true);
  stepper.advance_to(t);
  return {stepper.state(), stepper.monodromy(), t};
}

template <typename Scalar>
MonodromyRecord<Scalar> flow_with_monodromy(const MetricField<Scalar>& metric,
                                            const UnitCotangentState<Scalar>& s, Scalar t,
                                            const FlowSettings& settings) {
  return flow_with_monodromy(metric, s.state(), t, settings);
}

/// Rescale p by the positive factor that puts (x, p) on H = 1/2.
template <typename Scalar>
UnitCotangentState<Scalar> renormalize_energy(const MetricField<Scalar>& metric,
                                              const CotangentState<Scalar>& s) {
  const Scalar h = hamiltonian(metric, s);
  if (!(h > 0)) throw DomainError("cannot renormalize a state with p = 0");
  CotangentState<Scalar> out = s;
  out.p /= std::sqrt(2 * h);
  // One correction pass removes the rounding left by the square root.
  const Scalar h2 = hamiltonian(metric, out);
  out.p /= std::sqrt(2 * h2);
  return UnitCotangentState<Scalar>(metric, out);
}

/// One row of a trajectory dump.
template <typename Scalar>
struct TrajectorySample {
  Scalar t;
  CotangentState<Scalar> state;  ///< wrapped chart coordinates
  Scalar energy;
};

/// Trajectory of phi^t sampled every `sample_every` time units on [0, t_end].
template <typename Scalar>
std::vector<TrajectorySample<Scalar>> integrate_trajectory(const MetricField<Scalar>& metric,
                                                           const CotangentState<Scalar>& s,
                                                           Scalar t_end, Scalar sample_every,
                                                           const FlowSettings& settings) {
  if (!(sample_every > 0)) throw DomainError("sample spacing must be positive");
  std::vector<TrajectorySample<Scalar>> out;
  FlowStepper<Scalar> stepper(metric, s, settings);
  const auto count = static_cast<long long>(std::floor(double(t_end / sample_every) + 1e-9));
  out.reserve(static_cast<std::size_t>(count + 2));
  auto record = [&]() {
    const CotangentState<Scalar> w = wrap_state(metric.chart(), stepper.state());
    out.push_back({stepper.time(), w, hamiltonian(metric, w)});
  };
  record();
  for (long long i = 1; i <= count; ++i) {
    stepper.advance_to(sample_every * Scalar(i));
    record();
  }
  if (stepper.time() < t_end) {
    stepper.advance_to(t_end);
    record();
  }
  return out;
}

}  // namespace geoflow
