#pragma once

#include "geoflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace geoflow {

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

/// Local transversal Sigma = { z : a.z - c = 0 (mod period) } within the energy
/// shell, crossed in the direction of the flow at the base point.
template <typename Scalar>
class TransversalSection {
 public:
  using Frame = Eigen::Matrix<Scalar, 4, 2>;

  TransversalSection(const MetricField<Scalar>& metric, const UnitCotangentState<Scalar>& base,
                     const Vector4<Scalar>& normal, Scalar period, std::string descriptor)
      : base_(base), normal_(normal), offset_(normal.dot(base.coords())), period_(period),
        descriptor_(std::move(descriptor)) {
    const Vector4<Scalar> field = hamiltonian_vector_field(metric, base.state());
    const Scalar pairing = normal_.dot(field);
    if (!(std::abs(pairing) > Scalar(1e-8) * normal_.norm() * field.norm())) {
      throw TransversalityError("section '" + descriptor_ + "' is tangent to the flow at its base");
    }
    orientation_ = pairing > 0 ? 1 : -1;
    frame_ = in_plane_frame(metric, base.state());
  }

  /// Level set {z_k = value} crossed with the given orientation, without a
  /// base point (used for scatter plots; no in-plane frame).
  static TransversalSection level(const MetricField<Scalar>& metric, int k, Scalar value,
                                  int orientation) {
    if (k < 0 || k > 3) throw DomainError("section coordinate index must be in 0..3");
    if (orientation != 1 && orientation != -1) throw DomainError("orientation must be +1 or -1");
    TransversalSection s;
    s.normal_ = Vector4<Scalar>::Zero();
    s.normal_[k] = 1;
    s.offset_ = value;
    s.period_ = (k < 2 && metric.chart().periodic(k)) ? metric.chart().extent(k) : Scalar(0);
    s.orientation_ = orientation;
    static const char* names[] = {"u", "v", "p_u", "p_v"};
    std::ostringstream d;
    d.precision(17);
    d << names[k] << " = " << double(value);
    s.descriptor_ = d.str();
    return s;
  }

  /// Coordinate section {z_k = z_k(base)} with k indexing (u, v, p_u, p_v).
  static TransversalSection coordinate(const MetricField<Scalar>& metric,
                                       const UnitCotangentState<Scalar>& base, int k) {
    if (k < 0 || k > 3) throw DomainError("section coordinate index must be in 0..3");
    Vector4<Scalar> a = Vector4<Scalar>::Zero();
    a[k] = 1;
    const Scalar period =
        (k < 2 && metric.chart().periodic(k)) ? metric.chart().extent(k) : Scalar(0);
    static const char* names[] = {"u", "v", "p_u", "p_v"};
    std::ostringstream d;
    d.precision(17);
    d << names[k] << " = " << double(base.coords()[k]);
    return TransversalSection(metric, base, a, period, d.str());
  }

  /// Coordinate section through `base` along the chart coordinate the flow
  /// moves fastest in.
  static TransversalSection through(const MetricField<Scalar>& metric,
                                    const UnitCotangentState<Scalar>& base) {
    const Vector4<Scalar> f = hamiltonian_vector_field(metric, base.state());
    return coordinate(metric, base, std::abs(f[0]) >= std::abs(f[1]) ? 0 : 1);
  }

  /// Signed distance to the section, reduced to (-period/2, period/2].
  Scalar value(const Vector4<Scalar>& z) const {
    Scalar s = normal_.dot(z) - offset_;
    if (period_ > 0) s -= period_ * std::round(s / period_);
    return s;
  }

  /// Orthonormal basis of the tangent plane to Sigma within T(S*M) at z.
  Frame in_plane_frame(const MetricField<Scalar>& metric, const CotangentState<Scalar>& z) const {
    Eigen::Matrix<Scalar, 2, 4> c;
    c.row(0) = normal_.transpose();
    c.row(1) = energy_gradient(metric, z).transpose();
    Eigen::JacobiSVD<Eigen::Matrix<Scalar, 2, 4>> svd(c, Eigen::ComputeFullV);
    const auto sv = svd.singularValues();
    if (!(sv[1] > Scalar(1e-10) * sv[0])) {
      throw FrameError("section normal is parallel to the energy gradient");
    }
    return svd.matrixV().template rightCols<2>();
  }

  const UnitCotangentState<Scalar>& base() const {
    if (!base_) throw FrameError("section '" + descriptor_ + "' has no base point");
    return *base_;
  }
  const Vector4<Scalar>& normal() const { return normal_; }
  Scalar offset() const { return offset_; }
  Scalar period() const { return period_; }
  int orientation() const { return orientation_; }
  const Frame& frame() const {
    if (!base_) throw FrameError("section '" + descriptor_ + "' has no base point");
    return frame_;
  }
  const std::string& descriptor() const { return descriptor_; }

 private:
  TransversalSection() = default;

  std::optional<UnitCotangentState<Scalar>> base_;
  Vector4<Scalar> normal_;
  Scalar offset_ = 0;
  Scalar period_ = 0;
  std::string descriptor_;
  int orientation_ = 1;
  Frame frame_;
};

struct ReturnOptions {
  double max_time = 1000;       ///< budget before NoReturnError
  double min_time_steps = 10;   ///< crossings earlier than this many steps are ignored
  double crossing_tol = 1e-13;  ///< residual of the refined crossing
};

template <typename Scalar>
struct ReturnResult {
  UnitCotangentState<Scalar> state;  ///< wrapped chart coordinates
  CotangentState<Scalar> lifted;     ///< unwrapped end point
  Scalar time;                       ///< return time Theta
  Scalar residual;                   ///< |section value| at the returned point
};

/// First return of `start` to `section` (first oriented crossing after the
/// minimum time), refined to the crossing time by a safeguarded secant search
/// on the length of the last step.
template <typename Scalar>
ReturnResult<Scalar> return_map(const MetricField<Scalar>& metric,
                                const TransversalSection<Scalar>& section,
                                const CotangentState<Scalar>& start, const FlowSettings& settings,
                                const ReturnOptions& options = {}) {
  settings.validate();
  const Scalar h = settings.step;
  const Scalar min_time = h * Scalar(options.min_time_steps);
  const int sigma = section.orientation();
  const Scalar period = section.period();
  Vector4<Scalar> z = start.coords();
  Scalar t = 0;
  Scalar s_prev = sigma * section.value(z);
  while (t < Scalar(options.max_time)) {
    const Vector4<Scalar> next = midpoint_step(metric, z, h, settings);
    const Scalar s_next = sigma * section.value(next);
    const bool continuous = period <= 0 || std::abs(s_next - s_prev) < period / 2;
    if (s_prev < 0 && s_next >= 0 && continuous && t + h >= min_time) {
      // Regula falsi (Illinois) on the partial step length.
      Scalar lo = 0, hi = h, g_lo = s_prev, g_hi = s_next;
      Vector4<Scalar> w = next;
      Scalar g = s_next;
      Scalar tau = h;
      for (int it = 0; it < 100 && std::abs(g) > Scalar(options.crossing_tol); ++it) {
        tau = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if (!(tau > lo && tau < hi)) tau = (lo + hi) / 2;
        w = midpoint_step(metric, z, tau, settings);
        g = sigma * section.value(w);
        if (g < 0) {
          lo = tau;
          g_lo = g;
          g_hi /= 2;
        } else {
          hi = tau;
          g_hi = g;
          g_lo /= 2;
        }
        if (hi - lo < Scalar(1e-17)) break;
      }
      const CotangentState<Scalar> lifted(w);
      const Vector4<Scalar> field = hamiltonian_vector_field(metric, lifted);
      if (!(std::abs(section.normal().dot(field)) >
            Scalar(1e-8) * section.normal().norm() * field.norm())) {
        throw TransversalityError("grazing crossing of section '" + section.descriptor() + "'");
      }
      const CotangentState<Scalar> wrapped = wrap_state(metric.chart(), lifted);
      return {UnitCotangentState<Scalar>::unchecked(metric, wrapped), lifted, t + tau, std::abs(g)};
    }
    z = next;
    t += h;
    s_prev = s_next;
  }
  throw NoReturnError("no return to section '" + section.descriptor() + "' within time " +
                      std::to_string(options.max_time));
}

/// n successive first returns; Theta_total is the sum of the individual times.
template <typename Scalar>
ReturnResult<Scalar> return_map_iterate(const MetricField<Scalar>& metric,
                                        const TransversalSection<Scalar>& section,
                                        const CotangentState<Scalar>& start, int count,
                                        const FlowSettings& settings,
                                        const ReturnOptions& options = {}) {
  if (count < 1) throw DomainError("return count must be positive");
  ReturnResult<Scalar> r = return_map(metric, section, start, settings, options);
  Scalar total = r.time;
  for (int i = 1; i < count; ++i) {
    r = return_map(metric, section, r.state.state(), settings, options);
    total += r.time;
  }
  r.time = total;
  return r;
}

// ---------------------------------------------------------------------------
// Closed orbits
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ClosedOrbit {
  UnitCotangentState<Scalar> start;
  Scalar period;
  Scalar residual;  ///< d(phi^period(start), start)
  std::vector<CotangentState<Scalar>> samples;
  bool period_flagged = false;  ///< period differs from the guess by more than 10%
  int sub_period_factor = 1;    ///< > 1 when the converged period was a multiple
  int newton_iterations = 0;
};

struct PeriodicSearchOptions {
  int max_iterations = 40;
  double target_residual = 1e-11;
  double accept_residual = 1e-8;
  int max_sub_period = 8;
  int samples = 256;
};

template <typename Scalar>
Scalar closure_residual(const MetricField<Scalar>& metric, const CotangentState<Scalar>& z,
                        Scalar period, const FlowSettings& settings) {
  const CotangentState<Scalar> end = flow_lifted(metric, z, period, settings);
  return state_distance(metric.chart(), end, z);
}

/// Shooting search for a closed orbit near `seed`: Gauss-Newton on
/// (phi^T(z) - z, phase condition, H(z) - 1/2) in the unknowns (z, T), with
/// minimum-norm steps so that families of closed orbits are handled.
template <typename Scalar>
ClosedOrbit<Scalar> find_periodic_orbit(const MetricField<Scalar>& metric,
                                        const UnitCotangentState<Scalar>& seed, Scalar period_guess,
                                        const FlowSettings& settings,
                                        const PeriodicSearchOptions& options = {}) {
  if (!(period_guess > 0)) throw DomainError("period guess must be positive");
  const auto& chart = metric.chart();
  const Vector4<Scalar> seed_z = seed.coords();
  Vector4<Scalar> phase = hamiltonian_vector_field(metric, seed.state());
  phase.normalize();

  using Mat64 = Eigen::Matrix<Scalar, 6, 5>;
  using Vec6 = Eigen::Matrix<Scalar, 6, 1>;
  auto evaluate = [&](const Vector4<Scalar>& z, Scalar T, Mat64* jac) {
    Vec6 r;
    const CotangentState<Scalar> s(z);
    if (jac) {
      const MonodromyRecord<Scalar> rec = flow_with_monodromy(metric, s, T, settings);
      r.template head<4>() = state_difference(chart, rec.end_state, s);
      jac->setZero();
      jac->template block<4, 4>(0, 0) = rec.matrix - Matrix4<Scalar>::Identity();
      jac->template block<4, 1>(0, 4) = hamiltonian_vector_field(metric, rec.end_state);
      jac->template block<1, 4>(4, 0) = phase.transpose();
      jac->template block<1, 4>(5, 0) = energy_gradient(metric, s).transpose();
    } else {
      r.template head<4>() = state_difference(chart, flow_lifted(metric, s, T, settings), s);
    }
    r[4] = phase.dot(z - seed_z);
    r[5] = hamiltonian(metric, s) - Scalar(0.5);
    return r;
  };

  Vector4<Scalar> z = seed_z;
  Scalar T = period_guess;
  Mat64 J;
  Vec6 r = evaluate(z, T, &J);
  std::ostringstream trace;
  int iter = 0;
  for (; iter < options.max_iterations && r.norm() > Scalar(options.target_residual); ++iter) {
    trace << "  iter " << iter << ": |F| = " << double(r.norm()) << ", T = " << double(T) << "\n";
    Eigen::JacobiSVD<Mat64> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
    svd.setThreshold(Scalar(1e-10));
    Eigen::Matrix<Scalar, 5, 1> step = -svd.solve(r);
    // Trust region on the step: never move the period or the state by more than a fraction.
    const Scalar cap = Scalar(0.2) * std::max(Scalar(1), T);
    if (step.norm() > cap) step *= cap / step.norm();
    Scalar lambda = 1;
    bool improved = false;
    for (int ls = 0; ls < 12; ++ls) {
      const Vector4<Scalar> z_try = z + lambda * step.template head<4>();
      const Scalar T_try = T + lambda * step[4];
      if (T_try > 0) {
        try {
          const Vec6 r_try = evaluate(z_try, T_try, nullptr);
          if (r_try.norm() < r.norm()) {
            z = z_try;
            T = T_try;
            improved = true;
            break;
          }
        } catch (const DomainError&) {
        } catch (const IntegrationError&) {
        }
      }
      lambda /= 2;
    }
    if (!improved) break;
    r = evaluate(z, T, &J);
  }

  CotangentState<Scalar> zs(z);
  zs.x = chart.wrap(zs.x);
  const UnitCotangentState<Scalar> start = renormalize_energy(metric, zs);
  Scalar residual = closure_residual(metric, start.state(), T, settings);
  if (!(residual <= Scalar(options.accept_residual))) {
    std::ostringstream msg;
    msg << "periodic orbit search failed: residual " << double(residual) << " after " << iter
        << " iterations\n"
        << trace.str();
    throw SearchFailure(msg.str());
  }

  ClosedOrbit<Scalar> orbit{start, T, residual, {}, false, 1, iter};
  for (int k = options.max_sub_period; k >= 2; --k) {
    const Scalar sub = closure_residual(metric, start.state(), T / Scalar(k), settings);
    if (sub <= Scalar(options.accept_residual)) {
      orbit.period = T / Scalar(k);
      orbit.residual = sub;
      orbit.sub_period_factor = k;
      break;
    }
  }
  orbit.period_flagged = std::abs(orbit.period - period_guess) > Scalar(0.1) * period_guess;

  FlowStepper<Scalar> stepper(metric, start.state(), settings);
  orbit.samples.reserve(static_cast<std::size_t>(options.samples) + 1);
  for (int i = 0; i <= options.samples; ++i) {
    stepper.advance_to(orbit.period * Scalar(i) / Scalar(options.samples));
    orbit.samples.push_back(wrap_state(chart, stepper.state()));
  }
  return orbit;
}

/// The same closed orbit re-based at its crossing with `section` and
/// re-converged there.
template <typename Scalar>
ClosedOrbit<Scalar> orbit_on_section(const MetricField<Scalar>& metric,
                                     const ClosedOrbit<Scalar>& orbit,
                                     const TransversalSection<Scalar>& section,
                                     const FlowSettings& settings,
                                     const PeriodicSearchOptions& options = {}) {
  ReturnOptions ropt;
  ropt.max_time = double(orbit.period) * 1.5;
  ropt.min_time_steps = 0;
  const ReturnResult<Scalar> hit = return_map(metric, section, orbit.start.state(), settings, ropt);
  const UnitCotangentState<Scalar> seed = renormalize_energy(metric, hit.state.state());
  return find_periodic_orbit(metric, seed, orbit.period, settings, options);
}

// ---------------------------------------------------------------------------
// Linear Poincare map and classification
// ---------------------------------------------------------------------------

template <typename Scalar>
struct LinearPoincareMap {
  Matrix2<Scalar> matrix;
  Eigen::Matrix<Scalar, 4, 2> frame;
  Matrix4<Scalar> monodromy;
  Scalar determinant;
  std::string section;
};

/// 2x2 transversal linear Poincare map of a closed orbit: the period
/// monodromy restricted to the section plane, with the flow-direction
/// component removed by projection along X_H.
template <typename Scalar>
LinearPoincareMap<Scalar> transversal_linear_poincare(const MetricField<Scalar>& metric,
                                                      const ClosedOrbit<Scalar>& orbit,
                                                      const TransversalSection<Scalar>& section,
                                                      const FlowSettings& settings) {
  const Vector4<Scalar> z0 = orbit.start.coords();
  if (!(std::abs(section.value(z0)) <= Scalar(1e-7))) {
    throw FrameError("orbit start is not on section '" + section.descriptor() +
                     "'; re-base the orbit first");
  }
  const MonodromyRecord<Scalar> rec =
      flow_with_monodromy(metric, orbit.start.state(), orbit.period, settings);
  const Vector4<Scalar> field_end = hamiltonian_vector_field(metric, rec.end_state);
  const Vector4<Scalar>& a = section.normal();
  const Scalar pairing = a.dot(field_end);
  if (!(std::abs(pairing) > Scalar(1e-6) * a.norm() * field_end.norm())) {
    throw FrameError("section nearly tangent to the flow at the orbit");
  }
  const Matrix4<Scalar> projection =
      Matrix4<Scalar>::Identity() - field_end * a.transpose() / pairing;
  const auto E = section.in_plane_frame(metric, orbit.start.state());
  LinearPoincareMap<Scalar> out;
  out.frame = E;
  out.monodromy = rec.matrix;
  out.matrix = E.transpose() * projection * rec.matrix * E;
  out.determinant = out.matrix.determinant();
  out.section = section.descriptor();
  return out;
}

template <typename Scalar>
LinearPoincareMap<Scalar> transversal_linear_poincare(const MetricField<Scalar>& metric,
                                                      const ClosedOrbit<Scalar>& orbit,
                                                      const FlowSettings& settings) {
  return transversal_linear_poincare(metric, orbit,
                                     TransversalSection<Scalar>::through(metric, orbit.start),
                                     settings);
}

/// T_gamma(g) = tr DP_g restricted to gamma.
template <typename Scalar>
Scalar trace_map(const MetricField<Scalar>& metric, const ClosedOrbit<Scalar>& orbit,
                 const FlowSettings& settings) {
  return transversal_linear_poincare(metric, orbit, settings).matrix.trace();
}

enum class OrbitKind { Hyperbolic, EllipticIrrational, EllipticRationalOrUnresolved, Parabolic };

inline const char* to_string(OrbitKind k) {
  switch (k) {
    case OrbitKind::Hyperbolic: return "Hyperbolic";
    case OrbitKind::EllipticIrrational: return "EllipticIrrational";
    case OrbitKind::EllipticRationalOrUnresolved: return "EllipticRationalOrUnresolved";
    case OrbitKind::Parabolic: return "Parabolic";
  }
  return "Unknown";
}

struct ClassifyOptions {
  int denominator_bound = 64;  ///< Q of the rational sieve
  double rational_tol = 1e-10;
  double parabolic_tol = 1e-7;  ///< half-width of the band |trace| = 2
  double det_tol = 1e-4;
};

template <typename Scalar>
struct OrbitClassification {
  OrbitKind kind;
  Scalar trace;
  Scalar determinant;
  std::complex<Scalar> eigenvalues[2];
  Scalar multiplier = 0;       ///< Hyperbolic: lambda with |lambda| > 1, lambda + 1/lambda = trace
  Scalar rotation_number = 0;  ///< elliptic: arccos(trace/2) / 2 pi, in (0, 1/2)
  int nearest_numerator = 0;   ///< elliptic: best p/q with q <= Q
  int nearest_denominator = 0;
  int parabolic_sign = 0;
  int denominator_bound = 0;
};

/// Floquet type of a 2x2 area-preserving matrix from its trace.
template <typename Scalar>
OrbitClassification<Scalar> classify_orbit(const Matrix2<Scalar>& dp,
                                           const ClassifyOptions& options = {}) {
  const Scalar det = dp.determinant();
  if (!(std::abs(det - 1) <= Scalar(options.det_tol))) {
    throw Refusal("classify_orbit: det DP = " + std::to_string(double(det)) +
                  " is not 1 within tolerance");
  }
  OrbitClassification<Scalar> out{};
  out.trace = dp.trace();
  out.determinant = det;
  out.denominator_bound = options.denominator_bound;
  const Scalar tr = out.trace;
  const Scalar disc = tr * tr / 4 - 1;
  if (disc >= 0) {
    const Scalar root = std::sqrt(disc);
    out.eigenvalues[0] = {tr / 2 + root, 0};
    out.eigenvalues[1] = {tr / 2 - root, 0};
  } else {
    const Scalar root = std::sqrt(-disc);
    out.eigenvalues[0] = {tr / 2, root};
    out.eigenvalues[1] = {tr / 2, -root};
  }
  const Scalar band = Scalar(options.parabolic_tol);
  if (std::abs(tr) > 2 + band) {
    out.kind = OrbitKind::Hyperbolic;
    const Scalar root = std::sqrt(disc);
    out.multiplier = tr > 0 ? tr / 2 + root : tr / 2 - root;
  } else if (std::abs(tr) < 2 - band) {
    const Scalar rho = std::acos(tr / 2) / constants::two_pi<Scalar>;
    out.rotation_number = rho;
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (int q = 1; q <= options.denominator_bound; ++q) {
      const Scalar p = std::round(rho * q);
      const Scalar gap = std::abs(rho - p / q);
      if (gap < best) {
        best = gap;
        out.nearest_numerator = static_cast<int>(p);
        out.nearest_denominator = q;
      }
    }
    out.kind = best > Scalar(options.rational_tol) ? OrbitKind::EllipticIrrational
                                                   : OrbitKind::EllipticRationalOrUnresolved;
  } else {
    out.kind = OrbitKind::Parabolic;
    out.parabolic_sign = tr >= 0 ? 1 : -1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stable / unstable directions and hyperbolicity certificates
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ManifoldSeeds {
  Vector2<Scalar> stable;
  Vector2<Scalar> unstable;
  Scalar stable_multiplier;
  Scalar unstable_multiplier;
};

namespace detail {
template <typename Scalar>
Vector2<Scalar> eigenvector_2x2(const Matrix2<Scalar>& m, Scalar lambda) {
  // Rows of (m - lambda I) are orthogonal to the eigenvector; use the larger one.
  const Vector2<Scalar> r0(m(0, 0) - lambda, m(0, 1));
  const Vector2<Scalar> r1(m(1, 0), m(1, 1) - lambda);
  const Vector2<Scalar> row = r0.norm() >= r1.norm() ? r0 : r1;
  if (row.norm() == 0) return Vector2<Scalar>(1, 0);
  Vector2<Scalar> v(-row[1], row[0]);
  v.normalize();
  // Fix the sign so the largest component is positive.
  Eigen::Index i;
  v.cwiseAbs().maxCoeff(&i);
  if (v[i] < 0) v = -v;
  return v;
}
}  // namespace detail

/// Unit eigenvectors of a hyperbolic DP for |lambda| < 1 and |lambda| > 1.
template <typename Scalar>
ManifoldSeeds<Scalar> local_manifold_seeds(const Matrix2<Scalar>& dp,
                                           const ClassifyOptions& options = {}) {
  const OrbitClassification<Scalar> c = classify_orbit(dp, options);
  if (c.kind != OrbitKind::Hyperbolic) {
    throw Refusal(std::string("local_manifold_seeds: orbit is ") + to_string(c.kind));
  }
  const Scalar lu = c.multiplier;
  const Scalar ls = c.determinant / lu;
  return {detail::eigenvector_2x2(dp, ls), detail::eigenvector_2x2(dp, lu), ls, lu};
}

template <typename Scalar>
struct HyperbolicOrbitInput {
  Scalar period;
  Matrix2<Scalar> dp;
};

template <typename Scalar>
struct OrbitHyperbolicity {
  Vector2<Scalar> stable;
  Vector2<Scalar> unstable;
  Scalar contraction;  ///< |lambda_s|^(m / period)
  Scalar expansion_inverse;  ///< |lambda_u|^(-m / period)
  Scalar margin;  ///< theta - max(contraction, expansion_inverse)
  Scalar verified_power_error;  ///< mismatch of |DP^n v| against |lambda|^n
};

template <typename Scalar>
struct HyperbolicityCertificate {
  Scalar theta;
  Scalar m;
  bool valid = false;
  bool empty = false;
  Scalar achieved_theta = 0;
  std::vector<OrbitHyperbolicity<Scalar>> orbits;
};

/// Uniform hyperbolicity of a finite union of closed orbits with rate
/// (theta, m). Per-orbit rates are brought to the common time m by
/// fractional powers of the multipliers.
template <typename Scalar>
HyperbolicityCertificate<Scalar> certify_hyperbolic_set(
    const std::vector<HyperbolicOrbitInput<Scalar>>& orbits, Scalar theta, Scalar m,
    const ClassifyOptions& options = {}) {
  if (!(theta > 0 && theta < 1)) throw DomainError("theta must lie in (0, 1)");
  if (!(m > 0)) throw DomainError("m must be positive");
  HyperbolicityCertificate<Scalar> cert;
  cert.theta = theta;
  cert.m = m;
  if (orbits.empty()) {
    cert.valid = true;
    cert.empty = true;
    return cert;
  }
  for (std::size_t i = 0; i < orbits.size(); ++i) {
    const auto c = classify_orbit(orbits[i].dp, options);
    if (c.kind != OrbitKind::Hyperbolic) {
      throw Refusal("certify_hyperbolic_set: orbit " + std::to_string(i) + " is " +
                    to_string(c.kind));
    }
  }
  cert.valid = true;
  for (const auto& o : orbits) {
    const ManifoldSeeds<Scalar> seeds = local_manifold_seeds(o.dp, options);
    OrbitHyperbolicity<Scalar> h;
    h.stable = seeds.stable;
    h.unstable = seeds.unstable;
    const Scalar ratio = m / o.period;
    h.contraction = std::pow(std::abs(seeds.stable_multiplier), ratio);
    h.expansion_inverse = std::pow(std::abs(seeds.unstable_multiplier), -ratio);
    h.margin = theta - std::max(h.contraction, h.expansion_inverse);
    // Check the eigen-splitting on integer powers of DP.
    const int n = std::max(1, static_cast<int>(std::ceil(double(ratio))));
    Matrix2<Scalar> power = Matrix2<Scalar>::Identity();
    for (int k = 0; k < n; ++k) power = o.dp * power;
    const Scalar es = (power * h.stable).norm() / std::pow(std::abs(seeds.stable_multiplier), n);
    const Scalar inv_u = (power.inverse() * h.unstable).norm() *
                         std::pow(std::abs(seeds.unstable_multiplier), n);
    h.verified_power_error = std::max(std::abs(es - 1), std::abs(inv_u - 1));
    cert.achieved_theta = std::max(cert.achieved_theta, std::max(h.contraction, h.expansion_inverse));
    if (h.margin < 0) cert.valid = false;
    cert.orbits.push_back(h);
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Trace under conformal perturbation
// ---------------------------------------------------------------------------

template <typename Scalar>
struct SweepEntry {
  Scalar amplitude;
  Scalar c2_size;
  Scalar trace;
  Scalar period;
  Scalar residual;
};

template <typename Scalar>
struct TraceSweep {
  Scalar unperturbed_trace;
  std::vector<SweepEntry<Scalar>> entries;  ///< ascending amplitude
  bool truncated = false;
  std::string truncation_reason;
};

struct SweepOptions {
  int c2_samples = 161;
  PeriodicSearchOptions search;
};

/// Traces of the continued closed orbit along a family of conformal bumps
/// (center and radius from `bump_template`, amplitude from the list). Each
/// amplitude is continued from its neighbour closer to zero.
template <typename Scalar>
TraceSweep<Scalar> trace_perturbation_sweep(const MetricField<Scalar>& metric,
                                            const ClosedOrbit<Scalar>& orbit,
                                            const ConformalBump<Scalar>& bump_template,
                                            std::vector<Scalar> amplitudes,
                                            const FlowSettings& settings,
                                            const SweepOptions& options = {}) {
  TraceSweep<Scalar> out;
  out.unperturbed_trace = trace_map(metric, orbit, settings);
  std::sort(amplitudes.begin(), amplitudes.end());
  amplitudes.erase(std::unique(amplitudes.begin(), amplitudes.end()), amplitudes.end());

  auto evaluate = [&](Scalar a, const ClosedOrbit<Scalar>& previous) -> std::pair<SweepEntry<Scalar>, ClosedOrbit<Scalar>> {
    ConformalBump<Scalar> bump = bump_template;
    bump.amplitude = a;
    const MetricField<Scalar> perturbed = apply_conformal_bump(metric, bump);
    if (a == 0) {
      return {{a, Scalar(0), out.unperturbed_trace, orbit.period, orbit.residual}, orbit};
    }
    const UnitCotangentState<Scalar> seed = renormalize_energy(perturbed, previous.start.state());
    ClosedOrbit<Scalar> continued =
        find_periodic_orbit(perturbed, seed, previous.period, settings, options.search);
    if (continued.sub_period_factor != 1 || continued.period_flagged) {
      throw SearchFailure("continuation jumped to a different orbit");
    }
    const Scalar tr = trace_map(perturbed, continued, settings);
    return {{a, perturbation_c2_size(perturbed, options.c2_samples), tr, continued.period,
             continued.residual},
            continued};
  };

  std::vector<SweepEntry<Scalar>> negative, positive;
  // Outward from zero in both directions.
  for (int dir : {-1, 1}) {
    ClosedOrbit<Scalar> current = orbit;
    std::vector<Scalar> chain;
    for (Scalar a : amplitudes) {
      if ((dir < 0 && a < 0) || (dir > 0 && a >= 0)) chain.push_back(a);
    }
    if (dir < 0) std::reverse(chain.begin(), chain.end());
    for (Scalar a : chain) {
      try {
        auto [entry, next] = evaluate(a, current);
        (dir < 0 ? negative : positive).push_back(entry);
        current = std::move(next);
      } catch (const Error& e) {
        out.truncated = true;
        out.truncation_reason += "amplitude " + std::to_string(double(a)) + ": " + e.what() + "\n";
        break;
      }
    }
  }
  std::reverse(negative.begin(), negative.end());
  out.entries = std::move(negative);
  out.entries.insert(out.entries.end(), positive.begin(), positive.end());
  return out;
}

}  // namespace geoflow
