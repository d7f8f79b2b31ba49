// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "geoflow/embedding.hpp"
#include "geoflow/poincare.hpp"
#include "geoflow/shadowing.hpp"
#include "geoflow/twist.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace geoflow;

namespace {

const double pi = constants::pi<double>;
const double two_pi = constants::two_pi<double>;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

MetricField<double> bumped_torus(double amplitude) {
  ConformalBump<double> b;
  b.center = {pi, pi};
  b.radius = 0.5;
  b.amplitude = amplitude;
  return apply_conformal_bump(torus_of_revolution(2.0, 1.0), b);
}

struct EquatorOrbits {
  MetricField<double> torus = torus_of_revolution(2.0, 1.0);
  FlowSettings fs;
  ClosedOrbit<double> inner = find_periodic_orbit(
      torus, renormalize_energy(torus, CotangentState<double>({0.0, pi}, {1.0, 0.0})), 6.3, fs);
  ClosedOrbit<double> outer = find_periodic_orbit(
      torus, renormalize_energy(torus, CotangentState<double>({0.0, 0.0}, {1.0, 0.0})), 18.8, fs);
};

const EquatorOrbits& equators() {
  static const EquatorOrbits e;
  return e;
}

// ---------------------------------------------------------------------------

void energy_and_symplecticity(Outcome& o) {
  FlowSettings fs;
  struct Case {
    const char* name;
    MetricField<double> metric;
    CotangentState<double> start;
  };
  const std::vector<Case> corpus{
      {"flat torus", flat_torus<double>(), CotangentState<double>({0.1, 0.2}, {0.6, 0.8})},
      {"torus of revolution", torus_of_revolution(2.0, 1.0), CotangentState<double>({0.0, 0.5}, {1.2, 0.6})},
      // Starts inside the bump and keeps crossing it.
      {"bumped torus", bumped_torus(0.1), CotangentState<double>({pi - 0.3, pi - 0.1}, {0.9, 0.35})}};
  for (const auto& c : corpus) {
    const auto s = renormalize_energy(c.metric, c.start);
    const auto samples = integrate_trajectory(c.metric, s.state(), 1000.0, 0.5, fs);
    double drift = 0;
    for (const auto& r : samples) drift = std::max(drift, std::abs(r.energy - 0.5));
    const auto rec = flow_with_monodromy(c.metric, s, 100.0, fs);
    const double det = std::abs(monodromy_determinant(rec.matrix) - 1);
    o.detail << c.name << ": |H-1/2| " << drift << ", |det-1| " << det << "; ";
    o.require(drift <= 1e-6, std::string(c.name) + " energy");
    o.require(det <= 1e-6, std::string(c.name) + " determinant");
  }
}

void clairaut(Outcome& o) {
  const auto m = torus_of_revolution(2.0, 1.0);
  FlowSettings fs;
  const auto s = renormalize_energy(m, CotangentState<double>({0.0, 0.5}, {1.2, 0.6}));
  const auto samples = integrate_trajectory(m, s.state(), 1000.0, 0.1, fs);
  double drift = 0;
  for (const auto& r : samples) drift = std::max(drift, std::abs(r.state.p[0] - s.p()[0]));
  o.detail << "max |p_u - p_u(0)| over t <= 1000: " << drift;
  o.require(drift <= 1e-8, "p_u drift");
}

void jacobi_oracle(Outcome& o) {
  const auto& e = equators();
  const double inner_expect = 2 * std::cosh(two_pi);
  const double outer_expect = 2 * std::cos(two_pi * std::sqrt(3.0));
  const auto inner = classify_orbit(transversal_linear_poincare(e.torus, e.inner, e.fs).matrix);
  const auto outer = classify_orbit(transversal_linear_poincare(e.torus, e.outer, e.fs).matrix);
  const double ei = std::abs(inner.trace - inner_expect) / inner_expect;
  const double eo = std::abs(outer.trace - outer_expect) / std::abs(outer_expect);
  o.detail << "inner " << inner.trace << " (rel err " << ei << ", " << to_string(inner.kind) << "), outer "
           << outer.trace << " (rel err " << eo << ", " << to_string(outer.kind) << ")";
  o.require(ei <= 1e-3, "inner trace");
  o.require(eo <= 1e-3, "outer trace");
  o.require(inner.kind == OrbitKind::Hyperbolic, "inner kind");
  o.require(outer.kind == OrbitKind::EllipticIrrational, "outer kind");

  const auto sphere = sphere_zone(0.5);
  const auto eq = find_periodic_orbit(
      sphere, renormalize_energy(sphere, CotangentState<double>({0.0, pi / 2}, {1.0, 0.0})), 6.3, e.fs);
  ClassifyOptions band;
  band.parabolic_tol = 1e-4;
  const auto k1 = classify_orbit(transversal_linear_poincare(sphere, eq, e.fs).matrix, band);
  o.detail << ", K = 1 trace " << k1.trace << " (" << to_string(k1.kind) << ")";
  o.require(std::abs(k1.trace - 2) <= 1e-4, "K = 1 trace");
  o.require(k1.kind == OrbitKind::Parabolic, "K = 1 kind");
}

void section_independence(Outcome& o) {
  const auto& e = equators();
  const auto sphere = sphere_zone(0.5);
  const auto flat = flat_torus<double>();
  struct Item {
    const char* name;
    const MetricField<double>* metric;
    ClosedOrbit<double> orbit;
  };
  std::vector<Item> corpus{{"inner equator", &e.torus, e.inner}, {"outer equator", &e.torus, e.outer}};
  corpus.push_back({"sphere equator", &sphere,
                    find_periodic_orbit(sphere, renormalize_energy(sphere, CotangentState<double>({0.0, pi / 2}, {1.0, 0.0})),
                                        6.3, e.fs)});
  corpus.push_back({"flat torus", &flat,
                    find_periodic_orbit(flat, UnitCotangentState<double>(flat, CotangentState<double>({0.2, 0.3}, {1.0, 0.0})),
                                        6.0, e.fs)});
  for (const auto& item : corpus) {
    const double a = transversal_linear_poincare(*item.metric, item.orbit, e.fs).matrix.trace();
    const TransversalSection<double> oblique(*item.metric, item.orbit.start, Vector4<double>(1, 0.7, 0.2, -0.3), 0.0,
                                             "oblique");
    const double b = transversal_linear_poincare(*item.metric, item.orbit, oblique, e.fs).matrix.trace();
    o.detail << item.name << " |dt| " << std::abs(a - b) << "; ";
    o.require(std::abs(a - b) <= 1e-6, item.name);
  }
}

void sweep_continuity(Outcome& o) {
  const auto& e = equators();
  ConformalBump<double> bump;
  bump.center = {pi, pi};
  bump.radius = 0.5;
  const double step = 0.005, probe = step / 10;
  std::vector<double> grid, all;
  for (int k = -10; k <= 10; ++k) grid.push_back(k * step);
  all = grid;
  for (double a : grid) all.push_back(a + probe);
  std::sort(all.begin(), all.end());
  const auto sweep = trace_perturbation_sweep(e.torus, e.inner, bump, all, e.fs);
  o.require(!sweep.truncated, "sweep truncated: " + sweep.truncation_reason);
  if (sweep.entries.size() != all.size()) {
    o.require(false, "sweep incomplete");
    return;
  }
  auto trace_at = [&](double a) {
    for (const auto& s : sweep.entries) {
      if (std::abs(s.amplitude - a) <= 1e-15) return s.trace;
    }
    throw SearchFailure("amplitude missing from sweep");
  };
  // Local step response: derivative probe at each end times the step.
  double worst_ratio = 0, lo = trace_at(grid.front()), hi = lo;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double gap = std::abs(trace_at(grid[k + 1]) - trace_at(grid[k]));
    const double slope_a = std::abs(trace_at(grid[k] + probe) - trace_at(grid[k])) / probe;
    const double slope_b = std::abs(trace_at(grid[k + 1] + probe) - trace_at(grid[k + 1])) / probe;
    const double response = std::max(slope_a, slope_b) * step;
    worst_ratio = std::max(worst_ratio, gap / response);
    lo = std::min(lo, trace_at(grid[k + 1]));
    hi = std::max(hi, trace_at(grid[k + 1]));
  }
  const double t0 = sweep.unperturbed_trace;
  o.detail << "traces in [" << lo << ", " << hi << "] around " << t0 << ", width " << hi - lo
           << ", worst gap / step response " << worst_ratio;
  o.require(worst_ratio <= 5, "gap exceeds 5x the local step response");
  o.require(lo < t0 && t0 < hi, "unperturbed trace not strictly inside the covered interval");
  o.require(trace_at(0.0) == t0, "zero amplitude differs from the unperturbed trace");
}

void positive_control(Outcome& o) {
  const auto m = torus_of_revolution(2.0, 1.0);
  FlowSettings fs;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1, 1);
  const auto x0 = renormalize_energy(m, CotangentState<double>({0.3, pi}, {1.0, 0.0}));
  auto w = orbit_window(m, x0, -8, 8, std::vector<double>(17, 1.0), fs);
  const long zero = -w.first_index;
  for (long k = zero + 1; k < static_cast<long>(w.states.size()); ++k) {
    Vector4<double> z = flow_lifted(m, w.states[k - 1].state(), 1.0, fs).coords();
    for (int c = 0; c < 4; ++c) z[c] += 7.5e-6 * U(rng);
    w.states[k] = renormalize_energy(m, wrap_state(m.chart(), CotangentState<double>(z)));
  }
  for (long k = zero - 1; k >= 0; --k) {
    Vector4<double> z = flow_lifted(m, w.states[k + 1].state(), -1.0, fs).coords();
    for (int c = 0; c < 4; ++c) z[c] += 7.5e-6 * U(rng);
    w.states[k] = renormalize_energy(m, wrap_state(m.chart(), CotangentState<double>(z)));
  }
  const PseudoGeodesic<double> chain(m, w, 1e-4, 1.0, fs);
  ShadowSearchOptions opts;
  opts.horizon = 10;
  opts.rep_eps = 0.05;
  const auto r = shadow_search(chain, 0.01, opts);
  const double slope = r.reparam ? r.reparam->max_slope_deviation() : 1.0;
  o.detail << "chain worst jump " << chain.validation().worst_jump << ", verdict " << to_string(r.verdict)
           << ", sup " << r.achieved_sup << " (refined " << r.refined_sup << "), max |tau' - 1| " << slope;
  o.require(r.verdict == Verdict::Found, "not found");
  o.require(r.refined_sup < 0.01, "refined sup");
  o.require(slope < 0.05, "tau outside Rep(0.05)");
}

void negative_control(Outcome& o) {
  const auto m = flat_torus<double>();
  FlowSettings fs;
  const double eps = 0.02, total = 10 * eps;
  const long first = -20, last = 20;
  // Momentum turns by a fixed angle per vertex; |p_last - p_first| = total.
  const double span = 2 * std::asin(total / 2);
  const double angle = span / double(last - first);
  ChainWindow<double> w;
  w.first_index = first;
  auto p_of = [&](long i) {
    const double a = i * angle;
    return Vector2<double>(std::cos(a), std::sin(a));
  };
  Vector2<double> x(0.0, 0.0);
  for (long i = -1; i >= first; --i) x -= p_of(i);
  for (long i = first; i <= last; ++i) {
    w.states.emplace_back(m, CotangentState<double>(m.chart().wrap(x), p_of(i)));
    w.times.push_back(1.0);
    x += p_of(i);
  }
  const PseudoGeodesic<double> chain(m, w, 0.01, 1.0, fs);
  ShadowSearchOptions opts;
  opts.horizon = 22;
  const auto r = shadow_search(chain, eps, opts);
  // Oracle: a flat-torus orbit has one momentum p, and tau(t) with |t| <= 22
  // reaches every vertex, so sup >= min_p max_i |p - p_i| = sin(span / 2).
  const double bound = std::sin(span / 2);
  o.detail << "verdict " << to_string(r.verdict) << " at " << r.resolution << ", best sup " << r.achieved_sup
           << ", constant-momentum bound " << bound;
  o.require(r.verdict == Verdict::NotFound, "verdict");
  o.require(bound > eps, "oracle bound does not exceed eps");
  o.require(r.achieved_sup >= bound * (1 - 1e-9), "search beat the analytic bound");
  o.require(std::abs((p_of(last) - p_of(first)).norm() - total) <= 1e-12, "total drift");
}

std::vector<InvariantCircleEstimate<double>> ladder_circles() {
  return {flat_circle(0.1, 0.05), flat_circle(0.2, 0.1), flat_circle(0.3, 0.15)};
}

void integrable_ladder(Outcome& o) {
  const TwistMapParams<double> q{IntegrableNormalForm<double>{0.5}, -1.0, 2.0};
  const auto circles = ladder_circles();
  const double eps = separation_radius(circles);
  const auto po = build_climbing_pseudo_orbit(q, circles, eps / 10, 50);
  CertificateOptions opts;
  opts.grid_theta = opts.grid_r = 512;
  opts.r_lo = 0.0;
  opts.r_hi = 0.5;
  opts.threads = std::max(1u, std::thread::hardware_concurrency());
  const auto cert = certify_non_shadowable(q, po.points, circles, opts);

  std::vector<Vector2<double>> control{po.points.front()};
  for (int n = 1; n < 60; ++n) control.push_back(twist_step(q, control.back()).point);
  const auto ctrl = certify_non_shadowable(q, control, circles, opts);

  // r is conserved: an orbit is eps'-close to both ends only if their r differ by < 2 eps'.
  auto r_span = [](const std::vector<Vector2<double>>& pts) {
    double lo = pts.front()[1], hi = lo;
    for (const auto& p : pts) {
      lo = std::min(lo, p[1]);
      hi = std::max(hi, p[1]);
    }
    return hi - lo;
  };
  const bool ladder_shadowable = !(r_span(po.points) >= 2 * eps);
  const bool control_shadowable = !(r_span(control) >= 2 * eps);
  o.detail << "eps' " << eps << ", climb " << r_span(po.points) << " = " << r_span(po.points) / eps << " eps', "
           << po.jumps.size() << " jumps; ladder " << to_string(cert.conclusion) << " (min " << cert.min_distance
           << "), control " << to_string(ctrl.conclusion) << " (min " << ctrl.min_distance << ")";
  o.require(std::abs(r_span(po.points) - 4 * eps) <= 1e-12, "climb is not 4 eps'");
  o.require(cert.conclusion == ShadowConclusion::NotShadowedAtResolution, "ladder conclusion");
  o.require(ctrl.conclusion == ShadowConclusion::Shadowed, "control conclusion");
  o.require(!ladder_shadowable && control_shadowable, "r-conservation argument");
}

struct StandardDemo {
  TwistMapParams<double> q{StandardMap<double>{0.9}, -2.0, 3.0};
  std::vector<InvariantCircleEstimate<double>> circles;
  TwistPseudoOrbit<double> po;
  double eps = 0;
};

const StandardDemo& standard_demo() {
  static const StandardDemo d = [] {
    StandardDemo out;
    const double g = (std::sqrt(5.0) - 1) / 2;
    for (double rho : {1 - g, g, 2 - g}) {
      CircleSearchOptions cs;
      cs.r_lo = rho - 0.3;
      cs.r_hi = rho + 0.3;
      cs.tolerance = 1e-6;
      const auto det = detect_invariant_circle(out.q, rho, cs);
      if (!det.circle) throw SearchFailure("circle with rho " + std::to_string(rho) + " not detected: " +
                                           det.absence->reason);
      out.circles.push_back(*det.circle);
    }
    out.eps = separation_radius(out.circles);
    ClimbOptions climb;
    climb.hyperbolic_points = {{0.0, 1.0}, {0.0, 0.0}};
    out.po = build_climbing_pseudo_orbit(out.q, out.circles, out.eps / 10, 50, climb);
    return out;
  }();
  return d;
}

void standard_map_demo(Outcome& o) {
  const auto& d = standard_demo();
  long min_gap = std::numeric_limits<long>::max();
  for (std::size_t k = 1; k < d.po.jumps.size(); ++k) min_gap = std::min(min_gap, d.po.jumps[k].index - d.po.jumps[k - 1].index);
  CertificateOptions opts;
  opts.grid_theta = opts.grid_r = 1024;
  opts.threads = std::max(1u, std::thread::hardware_concurrency());
  opts.keep_cells = false;
  const auto cert = certify_non_shadowable(d.q, d.po.points, d.circles, opts);
  o.detail << "3 circles, eps' " << d.eps << ", " << d.po.points.size() << " points, " << d.po.jumps.size()
           << " jumps (min spacing " << min_gap << "), zones " << d.po.zone_iterations[0] << "/"
           << d.po.zone_iterations[1] << " iterates; grid " << cert.grid_theta << "x" << cert.grid_r << ": "
           << to_string(cert.conclusion) << ", min distance " << cert.min_distance << ", " << opts.threads
           << " threads";
  o.require(d.po.jumps.size() < 2 || min_gap >= 50, "jump spacing");
  o.require(long(cert.grid_theta) * cert.grid_r >= 1000000, "grid size");
  o.require(cert.conclusion == ShadowConclusion::NotShadowedAtResolution, "conclusion");
}

void embedding_fidelity(Outcome& o) {
  const auto& d = standard_demo();
  const auto m = torus_of_revolution(2.0, 1.0);
  FlowSettings fs;
  const auto orbit = find_periodic_orbit(m, renormalize_energy(m, CotangentState<double>({0.0, 0.0}, {1.0, 0.0})),
                                         18.8, fs);
  const PolarSectionMap<double> map(m, orbit.start, 0, 0.04, 0.1);
  const auto e = embed_as_pseudo_geodesic(map, orbit.period, d.po.points, fs);
  const double l = orbit.period;
  const auto [tmin, tmax] = std::minmax_element(e.return_times.begin(), e.return_times.end());
  o.detail << e.return_times.size() << " vertices, t_n in [" << *tmin << ", " << *tmax << "], l " << l << ", eta "
           << e.eta << ", delta " << e.delta << ", T " << e.chain.min_time();
  o.require(e.chain.validation().valid, "chain does not validate");
  o.require(*tmin >= 0.5 * l && *tmax <= 1.5 * l, "return times outside [l/2, 3l/2]");
  o.require(std::abs(e.chain.min_time() - l / 2) <= 1e-12, "T != l/2");
}

void classification_honesty(Outcome& o) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> T(-6, 6), E(-2, 2), Q(0, 1);
  const ClassifyOptions opts;
  long violations = 0, checked_rho = 0;
  double worst_rho = 0;
  for (int n = 0; n < 10000; ++n) {
    double t = T(rng);
    if (n % 50 == 0) t = (n % 100 == 0) ? 2.0 : -2.0;  // exact parabolic traces
    if (n % 50 != 0 && std::abs(std::abs(t) - 2) <= 1e-6) t = 0.5;  // stay out of the parabolic band
    Matrix2<double> c;
    c << t, -1, 1, 0;
    Matrix2<double> P;
    do {
      P << E(rng), E(rng), E(rng), E(rng);
    } while (std::abs(P.determinant()) < 0.5);
    Matrix2<double> M = P * c * P.inverse();
    if (n % 50 == 0) {
      M << t / 2, Q(rng), 0, t / 2;  // +-I plus a nilpotent shear
    }
    const auto k = classify_orbit(M, opts);
    const bool ok = std::abs(t) > 2 ? k.kind == OrbitKind::Hyperbolic
                    : std::abs(t) < 2 ? (k.kind == OrbitKind::EllipticIrrational ||
                                         k.kind == OrbitKind::EllipticRationalOrUnresolved)
                                      : k.kind == OrbitKind::Parabolic;
    if (!ok) ++violations;
    if (std::abs(t) < 2) {
      const double expect = std::acos(t / 2) / two_pi;
      worst_rho = std::max(worst_rho, std::abs(k.rotation_number - expect));
      ++checked_rho;
    }
  }
  o.detail << "10000 matrices, " << violations << " trichotomy violations, " << checked_rho
           << " elliptic, worst rho error " << worst_rho;
  o.require(violations == 0, "violations");
  o.require(worst_rho <= 1e-10, "rotation numbers");
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "energy and symplectic structure", 120, energy_and_symplecticity},
      {2, "Clairaut conservation", 30, clairaut},
      {3, "Jacobi classification oracle", 60, jacobi_oracle},
      {4, "section independence", 60, section_independence},
      {5, "trace-perturbation sweep continuity", 300, sweep_continuity},
      {6, "shadowing positive control", 120, positive_control},
      {7, "shadowing negative control", 120, negative_control},
      {8, "twist integrable ladder", 60, integrable_ladder},
      {9, "twist standard-map demonstration", 600, standard_map_demo},
      {10, "embedding fidelity", 180, embedding_fidelity},
      {11, "classification honesty", 60, classification_honesty},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[threw: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail << " [over the " << c.budget_s << " s budget]";
    }
    if (!o.pass) ++failed;
    std::printf("criterion %2d %s: %s (%.1f s) %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
