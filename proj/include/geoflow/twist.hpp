#pragma once

#include "geoflow/types.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace geoflow {

// ---------------------------------------------------------------------------
// Map families on the annulus T x [r_lo, r_hi], theta in R/Z
// ---------------------------------------------------------------------------

/// Q(theta, r) = (theta + tau r, r).
template <typename Scalar>
struct IntegrableNormalForm {
  Scalar tau = 1;
};

/// Normal form generated by S(theta, r') = theta r' + tau r'^2 / 2 + eps r'^2 V(theta)
/// with V = cos(2 pi m theta) / (2 pi m): r = r' + eps V'(theta) r'^2,
/// theta' = theta + tau r' + 2 eps r' V(theta). F, G = O(r) and r = 0 is fixed.
template <typename Scalar>
struct PerturbedNormalForm {
  Scalar tau = 1;
  Scalar eps = 0;
  int mode = 1;
};

/// r' = r + (k / 2 pi) sin(2 pi theta), theta' = theta + r'.
template <typename Scalar>
struct StandardMap {
  Scalar k = 0;
};

template <typename Scalar>
using TwistFamily = std::variant<IntegrableNormalForm<Scalar>, PerturbedNormalForm<Scalar>, StandardMap<Scalar>>;

template <typename Scalar>
struct TwistMapParams {
  TwistFamily<Scalar> family;
  Scalar r_lo = -10;
  Scalar r_hi = 10;

  bool in_domain(Scalar r) const { return std::isfinite(r) && r >= r_lo && r <= r_hi; }
};

/// theta reduced into [0, 1).
template <typename Scalar>
Scalar wrap_unit(Scalar theta) {
  Scalar t = theta - std::floor(theta);
  return t >= 1 ? Scalar(0) : t;
}

/// Shortest signed difference a - b on R/Z.
template <typename Scalar>
Scalar circle_difference(Scalar a, Scalar b) {
  const Scalar d = a - b;
  return d - std::round(d);
}

/// Wrapped Euclidean distance on T x R.
template <typename Scalar>
Scalar annulus_distance(const Vector2<Scalar>& a, const Vector2<Scalar>& b) {
  return std::hypot(circle_difference(a[0], b[0]), a[1] - b[1]);
}

namespace detail {

template <typename Scalar>
struct NormalFormTerms {
  Scalar V, dV, d2V;
};

template <typename Scalar>
NormalFormTerms<Scalar> normal_form_terms(const PerturbedNormalForm<Scalar>& f, Scalar theta) {
  const Scalar w = constants::two_pi<Scalar> * Scalar(f.mode);
  return {std::cos(w * theta) / w, -std::sin(w * theta), -w * std::cos(w * theta)};
}

/// Solves r = r' + c r'^2 for the root continuous at c = 0.
template <typename Scalar>
Scalar solve_quadratic_root(Scalar c, Scalar r) {
  const Scalar disc = 1 + 4 * c * r;
  if (disc < 0) return std::numeric_limits<Scalar>::quiet_NaN();
  return 2 * r / (1 + std::sqrt(disc));
}

}  // namespace detail

/// Lifted image (theta not reduced). NaN r signals a point outside the
/// family's natural domain.
template <typename Scalar>
Vector2<Scalar> twist_forward(const TwistMapParams<Scalar>& params, const Vector2<Scalar>& z) {
  const Scalar theta = z[0], r = z[1];
  return std::visit(
      [&](const auto& f) -> Vector2<Scalar> {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, IntegrableNormalForm<Scalar>>) {
          return {theta + f.tau * r, r};
        } else if constexpr (std::is_same_v<F, PerturbedNormalForm<Scalar>>) {
          const auto t = detail::normal_form_terms(f, theta);
          const Scalar rn = detail::solve_quadratic_root(f.eps * t.dV, r);
          return {theta + f.tau * rn + 2 * f.eps * rn * t.V, rn};
        } else {
          const Scalar rn = r + f.k / constants::two_pi<Scalar> * std::sin(constants::two_pi<Scalar> * theta);
          return {theta + rn, rn};
        }
      },
      params.family);
}

/// Lifted preimage.
template <typename Scalar>
Vector2<Scalar> twist_inverse(const TwistMapParams<Scalar>& params, const Vector2<Scalar>& z) {
  const Scalar theta1 = z[0], r1 = z[1];
  return std::visit(
      [&](const auto& f) -> Vector2<Scalar> {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, IntegrableNormalForm<Scalar>>) {
          return {theta1 - f.tau * r1, r1};
        } else if constexpr (std::is_same_v<F, PerturbedNormalForm<Scalar>>) {
          // theta' = theta + tau r' + 2 eps r' V(theta): Newton in theta.
          Scalar theta = theta1 - f.tau * r1;
          for (int it = 0; it < 50; ++it) {
            const auto t = detail::normal_form_terms(f, theta);
            const Scalar g = theta + f.tau * r1 + 2 * f.eps * r1 * t.V - theta1;
            const Scalar step = g / (1 + 2 * f.eps * r1 * t.dV);
            theta -= step;
            if (std::abs(step) < Scalar(1e-16)) break;
          }
          const auto t = detail::normal_form_terms(f, theta);
          return {theta, r1 + f.eps * t.dV * r1 * r1};
        } else {
          const Scalar theta = theta1 - r1;
          return {theta, r1 - f.k / constants::two_pi<Scalar> * std::sin(constants::two_pi<Scalar> * theta)};
        }
      },
      params.family);
}

/// Jacobian d(theta', r') / d(theta, r).
template <typename Scalar>
Matrix2<Scalar> twist_jacobian(const TwistMapParams<Scalar>& params, const Vector2<Scalar>& z) {
  const Scalar theta = z[0], r = z[1];
  return std::visit(
      [&](const auto& f) -> Matrix2<Scalar> {
        using F = std::decay_t<decltype(f)>;
        Matrix2<Scalar> J;
        if constexpr (std::is_same_v<F, IntegrableNormalForm<Scalar>>) {
          J << 1, f.tau, 0, 1;
        } else if constexpr (std::is_same_v<F, PerturbedNormalForm<Scalar>>) {
          const auto t = detail::normal_form_terms(f, theta);
          const Scalar c = f.eps * t.dV;
          const Scalar rn = detail::solve_quadratic_root(c, r);
          const Scalar denom = 1 + 2 * c * rn;
          const Scalar drn_dr = 1 / denom;
          const Scalar drn_dth = -f.eps * t.d2V * rn * rn / denom;
          const Scalar a = f.tau + 2 * f.eps * t.V;
          J << 1 + a * drn_dth + 2 * f.eps * rn * t.dV, a * drn_dr, drn_dth, drn_dr;
        } else {
          const Scalar kc = f.k * std::cos(constants::two_pi<Scalar> * theta);
          J << 1 + kc, 1, kc, 1;
        }
        return J;
      },
      params.family);
}

template <typename Scalar>
struct TwistStep {
  Vector2<Scalar> point;  ///< theta reduced mod 1
  Scalar theta_increment;  ///< lifted theta' - theta
  Matrix2<Scalar> jacobian;
  bool in_domain;
};

/// One application of Q. Leaving the annulus is reported through
/// `in_domain`, not thrown.
template <typename Scalar>
TwistStep<Scalar> twist_step(const TwistMapParams<Scalar>& params, const Vector2<Scalar>& z) {
  TwistStep<Scalar> out;
  const Vector2<Scalar> img = twist_forward(params, z);
  out.theta_increment = img[0] - z[0];
  out.point = {wrap_unit(img[0]), img[1]};
  out.jacobian = twist_jacobian(params, z);
  out.in_domain = params.in_domain(z[1]) && params.in_domain(img[1]) && std::isfinite(img[0]);
  return out;
}

// ---------------------------------------------------------------------------
// Rotation numbers
// ---------------------------------------------------------------------------

enum class RotationMethod { Plain, WeightedBirkhoff };

template <typename Scalar>
struct RotationEstimate {
  Scalar rho;
  Scalar error_bar;  ///< Plain: 1/N. Weighted: |estimate(N) - estimate(N/2)|.
  long iterations;
  bool partial = false;  ///< the orbit left the annulus before N steps
  int exit_direction = 0;  ///< +1 above r_hi, -1 below r_lo
};

namespace detail {
inline double birkhoff_weight(double x) {
  if (x <= 0 || x >= 1) return 0;
  return std::exp(-1 / (x * (1 - x)));
}

template <typename Scalar>
RotationEstimate<Scalar> rotation_pass(const TwistMapParams<Scalar>& params, Vector2<Scalar> z, long N,
                                       RotationMethod method) {
  RotationEstimate<Scalar> out{0, 0, 0};
  long double plain = 0, weighted = 0, wsum = 0;
  for (long n = 0; n < N; ++n) {
    const Vector2<Scalar> img = twist_forward(params, z);
    if (!params.in_domain(img[1]) || !std::isfinite(img[0])) {
      out.partial = true;
      out.exit_direction = img[1] > params.r_hi ? 1 : -1;
      break;
    }
    const long double inc = img[0] - z[0];
    plain += inc;
    if (method == RotationMethod::WeightedBirkhoff) {
      const long double w = birkhoff_weight((double(n) + 0.5) / double(N));
      weighted += w * inc;
      wsum += w;
    }
    z = {img[0] - std::floor(img[0]), img[1]};
    ++out.iterations;
  }
  if (out.iterations == 0) return out;
  if (method == RotationMethod::WeightedBirkhoff && !out.partial) {
    out.rho = Scalar(weighted / wsum);
  } else {
    out.rho = Scalar(plain / out.iterations);
  }
  out.error_bar = Scalar(1) / Scalar(out.iterations);
  return out;
}
}  // namespace detail

/// Average lifted theta increment over N iterations.
template <typename Scalar>
RotationEstimate<Scalar> rotation_number(const TwistMapParams<Scalar>& params, const Vector2<Scalar>& point,
                                         long N, RotationMethod method = RotationMethod::Plain) {
  if (N < 1) throw DomainError("rotation_number needs N >= 1");
  RotationEstimate<Scalar> est = detail::rotation_pass(params, point, N, method);
  if (method == RotationMethod::WeightedBirkhoff && !est.partial && N >= 4) {
    const auto half = detail::rotation_pass(params, point, N / 2, method);
    est.error_bar = std::abs(est.rho - half.rho);
  }
  return est;
}

// ---------------------------------------------------------------------------
// Invariant circles
// ---------------------------------------------------------------------------

template <typename Scalar>
struct InvariantCircleEstimate {
  Scalar rotation_number;
  Vector2<Scalar> seed;  ///< orbit point used to trace the circle
  std::vector<Scalar> graph;  ///< psi(j / J), j = 0..J-1
  Scalar invariance_residual;
  Scalar lipschitz_bound;
  long orbit_points;

  /// psi(theta) by periodic linear interpolation of the graph samples.
  Scalar height(Scalar theta) const {
    const std::size_t J = graph.size();
    const Scalar x = wrap_unit(theta) * Scalar(J);
    const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(x), J - 1);
    const Scalar w = x - Scalar(j);
    return (1 - w) * graph[j] + w * graph[(j + 1) % J];
  }
};

template <typename Scalar>
struct CircleAbsence {
  Scalar target_rho;
  Vector2<Scalar> seed;
  Scalar r_min;  ///< radial extent of the traced orbit
  Scalar r_max;
  long order_violations;  ///< cyclic-order breaks: the orbit is not on a circle
  Scalar invariance_residual;
  Scalar lipschitz_bound;
  std::string reason;
};

struct CircleSearchOptions {
  double theta0 = 0;
  double r_lo = 0;  ///< radial bracket searched along theta = theta0
  double r_hi = 1;
  long bisection_iterations = 20000;
  int bisection_steps = 60;
  long orbit_points = 200000;
  int graph_samples = 1024;
  double tolerance = 1e-8;
  double max_lipschitz = 1e3;
};

template <typename Scalar>
struct CircleDetection {
  std::optional<InvariantCircleEstimate<Scalar>> circle;
  std::optional<CircleAbsence<Scalar>> absence;
  bool found() const { return circle.has_value(); }
};

namespace detail {

/// Sorted (theta, r) samples of an orbit with periodic interpolation.
template <typename Scalar>
struct SortedOrbit {
  std::vector<Scalar> theta;
  std::vector<Scalar> r;

  Scalar interpolate(Scalar t) const {
    const std::size_t n = theta.size();
    t = wrap_unit(t);
    const auto it = std::upper_bound(theta.begin(), theta.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - theta.begin()) % n;
    const std::size_t lo = (hi + n - 1) % n;
    Scalar span = theta[hi] - theta[lo];
    Scalar off = t - theta[lo];
    if (span <= 0) span += 1;
    if (off < 0) off += 1;
    if (span == 0) return r[lo];
    return r[lo] + (r[hi] - r[lo]) * off / span;
  }
};

}  // namespace detail

/// Locates the circle with rotation number `target_rho` by bisection of the
/// weighted Birkhoff rotation number along theta = theta0, then traces it by
/// a long orbit and tests the graph property and one-step invariance.
template <typename Scalar>
CircleDetection<Scalar> detect_invariant_circle(const TwistMapParams<Scalar>& params, Scalar target_rho,
                                                const CircleSearchOptions& options = {}) {
  const Scalar theta0 = Scalar(options.theta0);
  auto rho_at = [&](Scalar r) -> Scalar {
    const auto est = rotation_number(params, Vector2<Scalar>(theta0, r), options.bisection_iterations,
                                     RotationMethod::WeightedBirkhoff);
    if (est.partial) return est.exit_direction > 0 ? std::numeric_limits<Scalar>::infinity()
                                                   : -std::numeric_limits<Scalar>::infinity();
    return est.rho;
  };
  Scalar lo = Scalar(options.r_lo), hi = Scalar(options.r_hi);
  Scalar f_lo = rho_at(lo) - target_rho, f_hi = rho_at(hi) - target_rho;
  // Orientation of the twist decides which end of the bracket lies below.
  const bool increasing = f_hi > f_lo;
  if ((f_lo > 0 && f_hi > 0) || (f_lo < 0 && f_hi < 0)) {
    CircleAbsence<Scalar> a{target_rho, Vector2<Scalar>(theta0, lo), lo, hi, 0, 0, 0,
                            "target rotation number not bracketed by the radial search interval"};
    return {std::nullopt, a};
  }
  Scalar r_star = (lo + hi) / 2;
  for (int it = 0; it < options.bisection_steps; ++it) {
    r_star = (lo + hi) / 2;
    const Scalar f = rho_at(r_star) - target_rho;
    if (f == 0) break;
    if ((f < 0) == increasing) lo = r_star; else hi = r_star;
  }

  // Trace the orbit.
  const long N = options.orbit_points;
  std::vector<Vector2<Scalar>> pts;
  pts.reserve(static_cast<std::size_t>(N));
  Vector2<Scalar> z(wrap_unit(theta0), r_star);
  bool exited = false;
  bool closed = false;  // periodic orbit: stop at the first return, pts[M - 1] maps to pts[0]
  for (long n = 0; n < N; ++n) {
    pts.push_back(z);
    const Vector2<Scalar> img = twist_forward(params, z);
    if (!params.in_domain(img[1])) {
      exited = true;
      break;
    }
    z = {wrap_unit(img[0]), img[1]};
    if (annulus_distance(z, pts.front()) <= Scalar(1e-12)) {
      closed = true;
      break;
    }
  }
  const long M = static_cast<long>(pts.size());
  std::vector<long> order(static_cast<std::size_t>(M));
  std::iota(order.begin(), order.end(), 0L);
  std::sort(order.begin(), order.end(), [&](long a, long b) { return pts[a][0] < pts[b][0]; });
  std::vector<long> rank(static_cast<std::size_t>(M));
  for (long k = 0; k < M; ++k) rank[order[k]] = k;

  detail::SortedOrbit<Scalar> sorted;
  sorted.theta.resize(static_cast<std::size_t>(M));
  sorted.r.resize(static_cast<std::size_t>(M));
  Scalar r_min = std::numeric_limits<Scalar>::infinity(), r_max = -r_min;
  for (long k = 0; k < M; ++k) {
    sorted.theta[k] = pts[order[k]][0];
    sorted.r[k] = pts[order[k]][1];
    r_min = std::min(r_min, sorted.r[k]);
    r_max = std::max(r_max, sorted.r[k]);
  }
  // A circle homeomorphism keeps cyclic order: images of theta-neighbours
  // stay neighbours (up to the point entering / leaving the sample).
  long violations = 0;
  Scalar lipschitz = 0;
  for (long k = 0; k < M; ++k) {
    const long a = order[k], b = order[(k + 1) % M];
    const long na = a + 1 < M ? a + 1 : (closed ? 0 : -1);
    const long nb = b + 1 < M ? b + 1 : (closed ? 0 : -1);
    if (na >= 0 && nb >= 0) {
      const long gap = ((rank[nb] - rank[na]) % M + M) % M;
      if (gap > 2) ++violations;
    }
    Scalar dth = sorted.theta[(k + 1) % M] - sorted.theta[k];
    if (dth < 0) dth += 1;
    if (dth > Scalar(1e-12)) lipschitz = std::max(lipschitz, std::abs(sorted.r[(k + 1) % M] - sorted.r[k]) / dth);
  }

  const int J = options.graph_samples;
  std::vector<Scalar> graph(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) graph[j] = sorted.interpolate(Scalar(j) / Scalar(J));
  Scalar residual = 0;
  for (int j = 0; j < J; ++j) {
    const Vector2<Scalar> img = twist_forward(params, Vector2<Scalar>(Scalar(j) / Scalar(J), graph[j]));
    residual = std::max(residual, std::abs(img[1] - sorted.interpolate(img[0])));
  }

  const auto est = rotation_number(params, Vector2<Scalar>(wrap_unit(theta0), r_star),
                                   options.bisection_iterations, RotationMethod::WeightedBirkhoff);
  std::string reason;
  if (exited) reason = "orbit left the annulus";
  else if (violations > 0) reason = "orbit breaks cyclic order (not a circle homeomorphism)";
  else if (!(residual <= Scalar(options.tolerance))) reason = "invariance residual above tolerance";
  else if (!(lipschitz <= Scalar(options.max_lipschitz))) reason = "graph not Lipschitz at the declared bound";
  if (!reason.empty()) {
    CircleAbsence<Scalar> a{target_rho, Vector2<Scalar>(wrap_unit(theta0), r_star), r_min, r_max,
                            violations, residual, lipschitz, reason};
    return {std::nullopt, a};
  }
  InvariantCircleEstimate<Scalar> c{est.rho, Vector2<Scalar>(wrap_unit(theta0), r_star), std::move(graph),
                                    residual, lipschitz, M};
  return {c, std::nullopt};
}

/// Minimum wrapped distance between two circle graphs.
template <typename Scalar>
Scalar circle_distance(const InvariantCircleEstimate<Scalar>& a, const InvariantCircleEstimate<Scalar>& b) {
  const std::size_t Ja = a.graph.size(), Jb = b.graph.size();
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (std::size_t i = 0; i < Ja; ++i) {
    const Vector2<Scalar> p(Scalar(i) / Scalar(Ja), a.graph[i]);
    for (std::size_t j = 0; j < Jb; ++j) {
      best = std::min(best, annulus_distance(p, Vector2<Scalar>(Scalar(j) / Scalar(Jb), b.graph[j])));
    }
  }
  return best;
}

/// eps' = 1/2 min_{i != j} d(Gamma_i, Gamma_j).
template <typename Scalar>
Scalar separation_radius(const std::vector<InvariantCircleEstimate<Scalar>>& circles) {
  if (circles.size() < 2) throw DomainError("separation radius needs at least two circles");
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (std::size_t i = 0; i < circles.size(); ++i) {
    for (std::size_t j = i + 1; j < circles.size(); ++j) best = std::min(best, circle_distance(circles[i], circles[j]));
  }
  return best / 2;
}

/// Exact circle r = r0 of an integrable instance (or any flat graph).
template <typename Scalar>
InvariantCircleEstimate<Scalar> flat_circle(Scalar r0, Scalar rho, int samples = 1024) {
  return {rho, Vector2<Scalar>(0, r0), std::vector<Scalar>(static_cast<std::size_t>(samples), r0), 0, 0, 0};
}

// ---------------------------------------------------------------------------
// Climbing pseudo-orbits
// ---------------------------------------------------------------------------

enum class JumpType { Climb, ZoneTransit, HeteroclinicHop };

inline const char* to_string(JumpType t) {
  switch (t) {
    case JumpType::Climb: return "climb";
    case JumpType::ZoneTransit: return "zone-transit";
    case JumpType::HeteroclinicHop: return "heteroclinic-hop";
  }
  return "unknown";
}

template <typename Scalar>
struct JumpRecord {
  long index;  ///< points[index] = Q(points[index - 1]) + (0, size)
  Scalar size;
  JumpType type;
  long waited;  ///< true iterates since the previous jump
};

template <typename Scalar>
struct TwistPseudoOrbit {
  std::vector<Vector2<Scalar>> points;
  std::vector<JumpRecord<Scalar>> jumps;
  Scalar delta_prime;
  long spacing;
  std::vector<long> zone_iterations;  ///< iterates spent between consecutive circles
};

struct ClimbOptions {
  long lead_in = -1;        ///< true iterates on the first circle before climbing; -1 means spacing
  long tail = -1;           ///< true iterates after reaching the last circle; -1 means spacing
  long iteration_cap = 20000000;
  double ratchet = 0.5;     ///< jump only when height >= record - ratchet * delta'
  double above_margin = 1e-9;
  std::vector<std::array<double, 2>> hyperbolic_points;  ///< (theta, r) for heteroclinic tagging
  double hop_radius = 0.05;
};

/// Pseudo-orbit from circles[0] to circles.back(): true iterates between
/// jumps, each jump an upward radial kick 0 < dr < delta' at least `spacing`
/// iterates after the previous one. Inside a zone the jump waits until the
/// height above the lower circle is back near its record, so the true
/// dynamics does the transit and jumps only ratchet.
template <typename Scalar>
TwistPseudoOrbit<Scalar> build_climbing_pseudo_orbit(const TwistMapParams<Scalar>& params,
                                                     const std::vector<InvariantCircleEstimate<Scalar>>& circles,
                                                     Scalar delta_prime, long spacing,
                                                     const ClimbOptions& options = {}) {
  if (circles.size() < 2) throw DomainError("climbing needs at least two circles");
  if (!(delta_prime > 0)) throw DomainError("delta' must be positive");
  if (spacing < 1) throw DomainError("jump spacing must be >= 1");
  for (std::size_t i = 0; i + 1 < circles.size(); ++i) {
    for (std::size_t j = 0; j < circles[i].graph.size(); ++j) {
      const Scalar th = Scalar(j) / Scalar(circles[i].graph.size());
      if (!(circles[i + 1].height(th) > circles[i].height(th))) {
        throw DomainError("circles must be ordered as graphs, lowest first");
      }
    }
  }
  const Scalar kick = delta_prime * (1 - Scalar(1e-9));
  TwistPseudoOrbit<Scalar> po;
  po.delta_prime = delta_prime;
  po.spacing = spacing;
  const long lead = options.lead_in >= 0 ? options.lead_in : spacing;
  const long tail = options.tail >= 0 ? options.tail : spacing;

  Vector2<Scalar> z = circles.front().seed;
  po.points.push_back(z);
  auto advance = [&]() {
    const Vector2<Scalar> img = twist_forward(params, z);
    if (!params.in_domain(img[1])) throw SearchFailure("climbing pseudo-orbit left the annulus");
    return Vector2<Scalar>(wrap_unit(img[0]), img[1]);
  };
  for (long n = 0; n < lead; ++n) {
    z = advance();
    po.points.push_back(z);
  }
  std::size_t zone = 0;  // between circles[zone] and circles[zone + 1]
  Scalar record = z[1] - circles[0].height(z[0]);
  long since_jump = 0;
  long zone_start = static_cast<long>(po.points.size()) - 1;
  long iterations = 0;
  while (true) {
    if (++iterations > options.iteration_cap) {
      std::ostringstream msg;
      msg << "transit search exceeded " << options.iteration_cap << " iterations in the zone between circles "
          << zone << " and " << zone + 1 << " (last point " << double(z[0]) << ", " << double(z[1]) << ")";
      throw SearchFailure(msg.str());
    }
    Vector2<Scalar> img = advance();
    ++since_jump;
    const auto& lower = circles[zone];
    const auto& upper = circles[zone + 1];
    const Scalar height = img[1] - lower.height(img[0]);
    const bool last_zone = zone + 2 == circles.size();
    if (since_jump >= spacing && height >= record - Scalar(options.ratchet) * delta_prime) {
      Scalar dr = kick;
      bool lands = false;
      if (last_zone) {
        const Scalar gap = upper.height(img[0]) - img[1];
        if (gap <= kick) {
          dr = gap;
          lands = true;
        }
      }
      if (dr > 0) {
        JumpType type = since_jump > spacing ? JumpType::ZoneTransit : JumpType::Climb;
        for (const auto& h : options.hyperbolic_points) {
          if (annulus_distance(img, Vector2<Scalar>(Scalar(h[0]), Scalar(h[1]))) <= Scalar(options.hop_radius)) {
            type = JumpType::HeteroclinicHop;
          }
        }
        img[1] += dr;
        po.jumps.push_back({static_cast<long>(po.points.size()), dr, type, since_jump});
        since_jump = 0;
      }
      po.points.push_back(img);
      z = img;
      if (lands || (last_zone && dr <= 0)) break;
    } else {
      po.points.push_back(img);
      z = img;
    }
    const Scalar h_now = z[1] - circles[zone].height(z[0]);
    record = std::max(record, h_now);
    if (!last_zone && z[1] > circles[zone + 1].height(z[0]) + Scalar(options.above_margin)) {
      po.zone_iterations.push_back(static_cast<long>(po.points.size()) - 1 - zone_start);
      zone_start = static_cast<long>(po.points.size()) - 1;
      ++zone;
      record = z[1] - circles[zone].height(z[0]);
    }
  }
  po.zone_iterations.push_back(static_cast<long>(po.points.size()) - 1 - zone_start);
  for (long n = 0; n < tail; ++n) {
    z = advance();
    po.points.push_back(z);
  }
  return po;
}

/// Integrable ladder: with r conserved the jumps do all the climbing.
template <typename Scalar>
long ladder_jump_count(Scalar r_start, Scalar r_end, Scalar delta_prime) {
  return static_cast<long>(std::floor(double((r_end - r_start) / (delta_prime * (1 - Scalar(1e-9)))))) + 1;
}

// ---------------------------------------------------------------------------
// Non-shadowability certificates
// ---------------------------------------------------------------------------

enum class ShadowConclusion { Shadowed, NotShadowedAtResolution, Inconclusive };

inline const char* to_string(ShadowConclusion c) {
  switch (c) {
    case ShadowConclusion::Shadowed: return "shadowed";
    case ShadowConclusion::NotShadowedAtResolution: return "not-shadowed-at-resolution";
    case ShadowConclusion::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

struct CertificateOptions {
  int grid_theta = 1024;
  int grid_r = 1024;
  double r_lo = std::numeric_limits<double>::quiet_NaN();  ///< NaN: pseudo-orbit range +- eps'
  double r_hi = std::numeric_limits<double>::quiet_NaN();
  int offset_slack = 5;  ///< S
  unsigned threads = 1;
  bool keep_cells = true;
};

template <typename Scalar>
struct NonShadowCertificate {
  Scalar eps_prime;
  int grid_theta, grid_r;
  Scalar r_lo, r_hi;
  Scalar spacing_theta, spacing_r;
  int offset_slack;
  std::vector<float> cell_best;  ///< lower bound of the best matching distance per cell (row-major in r)
  Scalar min_distance;
  Vector2<Scalar> best_cell;
  ShadowConclusion conclusion;
  long cells_early_exit = 0;
  long domain_exits = 0;
  long long map_evaluations = 0;
  double wall_time = 0;
};

/// Brute-force sweep: for every cell centre c and offset s in [-S, S],
/// sup_n d(Q^{n+s}(c), P_n) over the pseudo-orbit; the cell's best is the
/// minimum over s. Not-shadowed iff every cell's best is >= eps'. A cell
/// stops as soon as all offsets have reached eps' (its value is then a
/// lower bound).
template <typename Scalar>
NonShadowCertificate<Scalar> certify_non_shadowable(const TwistMapParams<Scalar>& params,
                                                    const std::vector<Vector2<Scalar>>& pseudo_orbit,
                                                    const std::vector<InvariantCircleEstimate<Scalar>>& circles,
                                                    const CertificateOptions& options = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  if (pseudo_orbit.empty()) throw DomainError("empty pseudo-orbit");
  NonShadowCertificate<Scalar> cert{};
  cert.eps_prime = separation_radius(circles);
  const Scalar eps = cert.eps_prime;
  Scalar lo = std::numeric_limits<Scalar>::infinity(), hi = -lo;
  for (const auto& p : pseudo_orbit) {
    lo = std::min(lo, p[1]);
    hi = std::max(hi, p[1]);
  }
  cert.r_lo = std::isnan(options.r_lo) ? lo - eps : Scalar(options.r_lo);
  cert.r_hi = std::isnan(options.r_hi) ? hi + eps : Scalar(options.r_hi);
  cert.grid_theta = options.grid_theta;
  cert.grid_r = options.grid_r;
  cert.offset_slack = options.offset_slack;
  cert.spacing_theta = Scalar(1) / Scalar(options.grid_theta);
  cert.spacing_r = (cert.r_hi - cert.r_lo) / Scalar(options.grid_r);
  if (std::max(cert.spacing_theta, cert.spacing_r) > eps / 4) {
    std::ostringstream msg;
    msg << "grid spacing " << double(std::max(cert.spacing_theta, cert.spacing_r)) << " exceeds eps'/4 = "
        << double(eps / 4);
    throw Refusal(msg.str());
  }
  const int S = options.offset_slack;
  const long L = static_cast<long>(pseudo_orbit.size());
  const std::size_t cells = static_cast<std::size_t>(options.grid_theta) * static_cast<std::size_t>(options.grid_r);
  std::vector<Scalar> best(cells);

  std::atomic<long> early{0}, exits{0};
  std::atomic<long long> evaluations{0};
  auto run_rows = [&](int row_begin, int row_end) {
    std::vector<Scalar> running(static_cast<std::size_t>(2 * S + 1));
    long local_early = 0, local_exits = 0;
    long long local_evals = 0;
    for (int ir = row_begin; ir < row_end; ++ir) {
      const Scalar r = cert.r_lo + (Scalar(ir) + Scalar(0.5)) * cert.spacing_r;
      for (int it = 0; it < options.grid_theta; ++it) {
        const Vector2<Scalar> c((Scalar(it) + Scalar(0.5)) * cert.spacing_theta, r);
        std::fill(running.begin(), running.end(), Scalar(0));
        long remaining = 2 * S + 1;  // offsets whose running sup is still < eps
        bool exited = false;
        // y_m = Q^m(c) for m from -S upward; compared with P_{m - s}.
        Vector2<Scalar> y = c;
        for (int m = 0; m < S; ++m) {
          y = twist_inverse(params, y);
          y[0] = wrap_unit(y[0]);
          ++local_evals;
          if (!params.in_domain(y[1])) exited = true;
        }
        long m = -S;
        while (!exited && remaining > 0 && m <= L - 1 + S) {
          for (int s = -S; s <= S; ++s) {
            const long n = m - s;
            if (n < 0 || n >= L) continue;
            Scalar& run = running[static_cast<std::size_t>(s + S)];
            if (run >= eps) continue;
            run = std::max(run, annulus_distance(y, pseudo_orbit[static_cast<std::size_t>(n)]));
            if (run >= eps) --remaining;
          }
          if (remaining == 0 || m == L - 1 + S) break;
          const Vector2<Scalar> img = twist_forward(params, y);
          ++local_evals;
          if (!params.in_domain(img[1])) {
            exited = true;
            break;
          }
          y = {wrap_unit(img[0]), img[1]};
          ++m;
        }
        Scalar cell = std::numeric_limits<Scalar>::infinity();
        for (Scalar v : running) cell = std::min(cell, v);
        if (remaining == 0 && m < L - 1 + S) ++local_early;
        if (exited && remaining > 0) {
          ++local_exits;
          cell = std::numeric_limits<Scalar>::quiet_NaN();
        }
        best[static_cast<std::size_t>(ir) * static_cast<std::size_t>(options.grid_theta) + static_cast<std::size_t>(it)] =
            cell;
      }
    }
    early += local_early;
    exits += local_exits;
    evaluations += local_evals;
  };

  const unsigned threads = std::max(1u, options.threads);
  if (threads == 1) {
    run_rows(0, options.grid_r);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      const int b = static_cast<int>(static_cast<long>(options.grid_r) * t / threads);
      const int e = static_cast<int>(static_cast<long>(options.grid_r) * (t + 1) / threads);
      pool.emplace_back(run_rows, b, e);
    }
    for (auto& th : pool) th.join();
  }

  cert.cells_early_exit = early;
  cert.domain_exits = exits;
  cert.map_evaluations = evaluations;
  cert.min_distance = std::numeric_limits<Scalar>::infinity();
  for (std::size_t k = 0; k < cells; ++k) {
    if (!std::isnan(best[k]) && best[k] < cert.min_distance) {
      cert.min_distance = best[k];
      const int ir = static_cast<int>(k / static_cast<std::size_t>(options.grid_theta));
      const int it = static_cast<int>(k % static_cast<std::size_t>(options.grid_theta));
      cert.best_cell = {(Scalar(it) + Scalar(0.5)) * cert.spacing_theta,
                        cert.r_lo + (Scalar(ir) + Scalar(0.5)) * cert.spacing_r};
    }
  }
  if (cert.min_distance < eps) {
    cert.conclusion = ShadowConclusion::Shadowed;
  } else if (cert.domain_exits > 0) {
    cert.conclusion = ShadowConclusion::Inconclusive;
  } else {
    cert.conclusion = ShadowConclusion::NotShadowedAtResolution;
  }
  if (options.keep_cells) cert.cell_best.assign(best.begin(), best.end());
  cert.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cert;
}

}  // namespace geoflow
