#include "geoflow/poincare.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace geoflow;

namespace {

const double pi = constants::pi<double>;
const double two_pi = constants::two_pi<double>;

struct TorusOrbits {
  MetricField<double> metric = torus_of_revolution(2.0, 1.0);
  FlowSettings fs;
  ClosedOrbit<double> inner = find_periodic_orbit(
      metric, renormalize_energy(metric, CotangentState<double>({0.0, pi}, {1.0, 0.0})), 6.3, fs);
  ClosedOrbit<double> outer = find_periodic_orbit(
      metric, renormalize_energy(metric, CotangentState<double>({0.0, 0.0}, {1.0, 0.0})), 18.8, fs);
};

const TorusOrbits& torus_orbits() {
  static const TorusOrbits o;
  return o;
}

}  // namespace

TEST_CASE("flat torus first return to {u = 0}") {
  const auto m = flat_torus<double>();
  FlowSettings fs;
  const UnitCotangentState<double> s(m, CotangentState<double>({0.0, 1.3}, {1.0, 0.0}));
  const auto section = TransversalSection<double>::coordinate(m, s, 0);
  const auto r = return_map(m, section, s.state(), fs);
  CHECK(r.time == doctest::Approx(two_pi).epsilon(1e-12));
  CHECK(std::abs(r.state.x()[1] - 1.3) <= 1e-12);
  CHECK((r.state.p() - s.p()).norm() <= 1e-12);
}

TEST_CASE("successive returns compose") {
  const auto m = torus_of_revolution(2.0, 1.0);
  FlowSettings fs;
  const auto s = renormalize_energy(m, CotangentState<double>({0.0, 0.4}, {1.5, 0.5}));
  const auto section = TransversalSection<double>::coordinate(m, s, 0);
  const auto one = return_map(m, section, s.state(), fs);
  const auto two = return_map(m, section, one.state.state(), fs);
  const auto both = return_map_iterate(m, section, s.state(), 2, fs);
  CHECK(std::abs(both.time - (one.time + two.time)) <= 1e-9);
  CHECK(state_distance(m.chart(), both.state.state(), two.state.state()) <= 1e-12);
}

TEST_CASE("a point of a closed orbit returns to itself") {
  const auto& o = torus_orbits();
  const auto section = TransversalSection<double>::through(o.metric, o.inner.start);
  const auto r = return_map(o.metric, section, o.inner.start.state(), o.fs);
  CHECK(state_distance(o.metric.chart(), r.state.state(), o.inner.start.state()) <= 1e-8);
  CHECK(r.time == doctest::Approx(o.inner.period).epsilon(1e-9));
}

TEST_CASE("a section tangent to the flow is rejected") {
  const auto m = torus_of_revolution(2.0, 1.0);
  const auto s = renormalize_energy(m, CotangentState<double>({0.0, 0.0}, {1.0, 0.0}));
  CHECK_THROWS_AS(TransversalSection<double>::coordinate(m, s, 3), TransversalityError);
}

TEST_CASE("equator periods") {
  const auto& o = torus_orbits();
  CHECK(o.inner.period == doctest::Approx(two_pi).epsilon(1e-9));
  CHECK(o.outer.period == doctest::Approx(3 * two_pi).epsilon(1e-9));
  CHECK(o.inner.residual <= 1e-8);

  const auto flat = flat_torus<double>();
  const auto f = find_periodic_orbit(flat, UnitCotangentState<double>(flat, CotangentState<double>({0.2, 0.3}, {1.0, 0.0})),
                                     6.0, o.fs);
  CHECK(f.period == doctest::Approx(two_pi).epsilon(1e-9));
}

TEST_CASE("period search from a multiple of the period reports the sub-period") {
  const auto& o = torus_orbits();
  const auto twice = find_periodic_orbit(
      o.metric, renormalize_energy(o.metric, CotangentState<double>({0.0, pi}, {1.0, 0.0})), 12.6, o.fs);
  CHECK(twice.period == doctest::Approx(two_pi).epsilon(1e-9));
  CHECK(twice.sub_period_factor == 2);
}

TEST_CASE("Jacobi oracle for the equator traces") {
  const auto& o = torus_orbits();
  const double inner = trace_map(o.metric, o.inner, o.fs);
  const double outer = trace_map(o.metric, o.outer, o.fs);
  // Constant curvature K along the equator: trace 2cosh(sqrt(-K) l) or 2cos(sqrt(K) l).
  const double inner_expect = 2 * std::cosh(two_pi);
  const double outer_expect = 2 * std::cos(two_pi * std::sqrt(3.0));
  MESSAGE("inner " << inner << " vs " << inner_expect << ", outer " << outer << " vs " << outer_expect);
  CHECK(std::abs(inner - inner_expect) / inner_expect <= 1e-3);
  CHECK(std::abs(outer - outer_expect) / std::abs(outer_expect) <= 1e-3);

  const auto flat = flat_torus<double>();
  const auto f = find_periodic_orbit(flat, UnitCotangentState<double>(flat, CotangentState<double>({0.2, 0.3}, {1.0, 0.0})),
                                     6.0, o.fs);
  CHECK(trace_map(flat, f, o.fs) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("constant curvature one gives the identity map") {
  const auto m = sphere_zone(0.5);
  FlowSettings fs;
  const auto orbit = find_periodic_orbit(
      m, renormalize_energy(m, CotangentState<double>({0.0, pi / 2}, {1.0, 0.0})), 6.3, fs);
  CHECK(orbit.period == doctest::Approx(two_pi).epsilon(1e-9));
  const auto dp = transversal_linear_poincare(m, orbit, fs);
  CHECK((dp.matrix - Matrix2<double>::Identity()).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("trace does not depend on the section") {
  const auto& o = torus_orbits();
  for (const auto* orbit : {&o.inner, &o.outer}) {
    const auto a = transversal_linear_poincare(o.metric, *orbit, o.fs);
    const TransversalSection<double> oblique(o.metric, orbit->start, Vector4<double>(1, 0.7, 0.2, -0.3), 0.0,
                                             "oblique");
    const auto b = transversal_linear_poincare(o.metric, *orbit, oblique, o.fs);
    CHECK(std::abs(a.matrix.trace() - b.matrix.trace()) <= 1e-6 * std::max(1.0, std::abs(a.matrix.trace())));
    CHECK(a.determinant == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("classification of known traces") {
  auto with_trace = [](double t) {
    Matrix2<double> m;
    m << t, -1, 1, 0;
    return m;
  };
  const auto h = classify_orbit(with_trace(2 * std::cosh(two_pi)));
  CHECK(h.kind == OrbitKind::Hyperbolic);
  CHECK(h.multiplier == doctest::Approx(std::exp(two_pi)).epsilon(1e-12));

  const auto p = classify_orbit(with_trace(2.0));
  CHECK(p.kind == OrbitKind::Parabolic);
  CHECK(p.parabolic_sign == 1);
  CHECK(classify_orbit(with_trace(-2.0)).parabolic_sign == -1);

  const auto e = classify_orbit(with_trace(2 * std::cos(two_pi * std::sqrt(3.0))));
  CHECK(e.kind == OrbitKind::EllipticIrrational);
  // Reported in (0, 1/2); the angle sqrt(3) mod 1 is its reflection.
  CHECK(e.rotation_number == doctest::Approx(std::acos(std::cos(two_pi * std::sqrt(3.0))) / two_pi).epsilon(1e-12));
  CHECK(1 - e.rotation_number == doctest::Approx(std::sqrt(3.0) - 1).epsilon(1e-9));

  const auto r = classify_orbit(with_trace(2 * std::cos(two_pi / 5)));
  CHECK(r.kind == OrbitKind::EllipticRationalOrUnresolved);
  CHECK(r.nearest_numerator == 1);
  CHECK(r.nearest_denominator == 5);

  Matrix2<double> not_area;
  not_area << 2, 0, 0, 2;
  CHECK_THROWS_AS(classify_orbit(not_area), Refusal);
}

TEST_CASE("hyperbolicity certificates") {
  const auto& o = torus_orbits();
  const auto dp = transversal_linear_poincare(o.metric, o.inner, o.fs);
  const auto cert = certify_hyperbolic_set<double>({{o.inner.period, dp.matrix}}, 0.5, o.inner.period);
  CHECK(cert.valid);
  CHECK(cert.achieved_theta == doctest::Approx(std::exp(-two_pi)).epsilon(1e-5));

  const auto dp_outer = transversal_linear_poincare(o.metric, o.outer, o.fs);
  CHECK_THROWS_AS(certify_hyperbolic_set<double>({{o.inner.period, dp.matrix}, {o.outer.period, dp_outer.matrix}},
                                                 0.5, 1.0),
                  Refusal);

  const auto empty = certify_hyperbolic_set<double>({}, 0.5, 1.0);
  CHECK(empty.valid);
  CHECK(empty.empty);
}

TEST_CASE("local manifold seeds") {
  Matrix2<double> diag = Matrix2<double>::Zero();
  diag(0, 0) = std::exp(two_pi);
  diag(1, 1) = std::exp(-two_pi);
  const auto s = local_manifold_seeds(diag);
  CHECK(std::abs(std::abs(s.unstable[0]) - 1) <= 1e-12);
  CHECK(std::abs(s.stable[1]) == doctest::Approx(1.0));

  const auto& o = torus_orbits();
  const Matrix2<double> dp = transversal_linear_poincare(o.metric, o.inner, o.fs).matrix;
  const auto seeds = local_manifold_seeds(dp);
  CHECK((dp * seeds.stable - seeds.stable_multiplier * seeds.stable).norm() <= 1e-8);
  CHECK((dp * seeds.unstable - seeds.unstable_multiplier * seeds.unstable).norm() <= 1e-8 * std::abs(seeds.unstable_multiplier));

  // Independent decomposition: general real eigen-solver.
  Eigen::EigenSolver<Matrix2<double>> es(dp);
  for (int k = 0; k < 2; ++k) {
    const double lambda = es.eigenvalues()[k].real();
    const Vector2<double> v = es.eigenvectors().col(k).real().normalized();
    const Vector2<double>& ours = std::abs(lambda) > 1 ? seeds.unstable : seeds.stable;
    CHECK(std::abs(std::abs(v.dot(ours.normalized())) - 1) <= 1e-8);
  }
}

TEST_CASE("trace sweep") {
  const auto& o = torus_orbits();
  ConformalBump<double> bump;
  bump.center = {pi, pi};
  bump.radius = 0.5;
  const auto zero = trace_perturbation_sweep(o.metric, o.inner, bump, {0.0}, o.fs);
  REQUIRE(zero.entries.size() == 1);
  CHECK(zero.entries[0].trace == trace_map(o.metric, o.inner, o.fs));
  CHECK(zero.entries[0].c2_size == 0.0);

  const auto pm = trace_perturbation_sweep(o.metric, o.inner, bump, {-0.01, 0.0, 0.01}, o.fs);
  REQUIRE(pm.entries.size() == 3);
  const double t0 = pm.unperturbed_trace;
  CHECK((pm.entries[0].trace - t0) * (pm.entries[2].trace - t0) < 0);
}
