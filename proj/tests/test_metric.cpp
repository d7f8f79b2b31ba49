#include "geoflow/phase_space.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace geoflow;

namespace {

const double pi = constants::pi<double>;

MetricField<double> bumped_torus(double amplitude) {
  ConformalBump<double> b;
  b.center = {pi, pi};
  b.radius = 0.5;
  b.amplitude = amplitude;
  return apply_conformal_bump(torus_of_revolution(2.0, 1.0), b);
}

}  // namespace

TEST_CASE("hamiltonian on the flat torus is half the squared momentum") {
  const auto m = flat_torus<double>();
  CHECK(hamiltonian(m, CotangentState<double>({1.0, 2.0}, {0.6, 0.8})) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("hamiltonian on the torus of revolution at the outer equator") {
  const auto m = torus_of_revolution(2.0, 1.0);
  CHECK(hamiltonian(m, CotangentState<double>({0.4, 0.0}, {3.0, 0.0})) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("zero-amplitude bump leaves the hamiltonian unchanged") {
  const auto base = torus_of_revolution(2.0, 1.0);
  const auto m = bumped_torus(0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0, 2 * pi), P(-2, 2);
  for (int i = 0; i < 50; ++i) {
    const CotangentState<double> s({pi + 0.4 * std::cos(U(rng)), pi + 0.4 * std::sin(U(rng))}, {P(rng), P(rng)});
    CHECK(hamiltonian(m, s) == hamiltonian(base, s));
  }
}

TEST_CASE("vector field: flat torus is (p, 0) and torus of revolution has dp_u = 0") {
  const auto flat = flat_torus<double>();
  const auto f = hamiltonian_vector_field(flat, CotangentState<double>({0.3, 0.2}, {0.6, -0.8}));
  CHECK(f[0] == 0.6);
  CHECK(f[1] == -0.8);
  CHECK(f[2] == 0.0);
  CHECK(f[3] == 0.0);

  const auto torus = torus_of_revolution(2.0, 1.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0, 2 * pi), P(-2, 2);
  for (int i = 0; i < 100; ++i) {
    const auto g = hamiltonian_vector_field(torus, CotangentState<double>({U(rng), U(rng)}, {P(rng), P(rng)}));
    CHECK(g[2] == 0.0);
  }
}

TEST_CASE("vector field of a bumped metric matches finite differences of H") {
  const auto m = bumped_torus(0.3);
  const double h = 1e-5;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-0.3, 0.3), P(-1.5, 1.5);
  for (int i = 0; i < 40; ++i) {
    const CotangentState<double> s({pi + U(rng), pi + U(rng)}, {P(rng), P(rng)});
    const Vector4<double> field = hamiltonian_vector_field(m, s);
    Vector4<double> fd;
    for (int k = 0; k < 4; ++k) {
      Vector4<double> zp = s.coords(), zm = s.coords();
      zp[k] += h;
      zm[k] -= h;
      const double d = (hamiltonian(m, CotangentState<double>(zp)) - hamiltonian(m, CotangentState<double>(zm))) / (2 * h);
      // x' = dH/dp, p' = -dH/dx
      if (k < 2) fd[2 + k] = -d; else fd[k - 2] = d;
    }
    CHECK((field - fd).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("legendre transform") {
  const auto flat = flat_torus<double>();
  const Vector2<double> v(0.3, -1.7);
  const auto s = legendre(flat, Vector2<double>(1.0, 1.0), v);
  CHECK(s.p == v);

  const auto torus = torus_of_revolution(2.0, 1.0);
  const auto t = legendre(torus, Vector2<double>(0.0, 0.0), Vector2<double>(1.0, 0.0));
  CHECK(t.p[0] == doctest::Approx(9.0).epsilon(1e-14));
  CHECK(t.p[1] == doctest::Approx(0.0));

  const auto bumped = bumped_torus(0.2);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-0.45, 0.45), V(-2, 2);
  for (int i = 0; i < 100; ++i) {
    const Vector2<double> x(pi + U(rng), pi + U(rng)), w(V(rng), V(rng));
    const auto z = legendre(bumped, x, w);
    CHECK(metric_norm_squared(bumped, x, w) == doctest::Approx(2 * hamiltonian(bumped, z)).epsilon(1e-12));
    CHECK((inverse_legendre(bumped, z) - w).norm() <= 1e-12 * (1 + w.norm()));
  }
}

TEST_CASE("gaussian curvature oracles") {
  const auto flat = flat_torus<double>();
  CHECK(gaussian_curvature(flat, Vector2<double>(1.0, 2.0)) == 0.0);

  const auto torus = torus_of_revolution(2.0, 1.0);
  CHECK(gaussian_curvature(torus, Vector2<double>(0.7, 0.0)) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(gaussian_curvature(torus, Vector2<double>(0.7, pi)) == doctest::Approx(-1.0).epsilon(1e-12));
  // cos v / (r (R + r cos v)) away from the equators
  for (double v : {0.5, 1.3, 2.2, 4.0}) {
    CHECK(gaussian_curvature(torus, Vector2<double>(0.0, v)) ==
          doctest::Approx(std::cos(v) / (2 + std::cos(v))).epsilon(1e-10));
  }
  const auto sphere = sphere_zone(0.3);
  for (double v : {0.4, 1.0, 1.57, 2.5}) {
    CHECK(gaussian_curvature(sphere, Vector2<double>(1.0, v)) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("conformal bump identities") {
  const auto base = torus_of_revolution(2.0, 1.0);
  CHECK(perturbation_c2_size(bumped_torus(0.0)) == 0.0);
  CHECK(c2_distance(base, bumped_torus(0.0), Vector2<double>(pi - 0.5, pi - 0.5), Vector2<double>(pi + 0.5, pi + 0.5),
                    41) == 0.0);

  const Vector2<double> c(pi, pi);
  const Matrix2<double> up = bumped_torus(0.05).covariant(c), down = bumped_torus(-0.05).covariant(c);
  const Matrix2<double> g = base.covariant(c);
  CHECK(up(0, 0) * down(0, 0) == doctest::Approx(g(0, 0) * g(0, 0)).epsilon(1e-14));
  CHECK(up(1, 1) * down(1, 1) == doctest::Approx(g(1, 1) * g(1, 1)).epsilon(1e-14));

  // Outside the support the metric is untouched.
  const Vector2<double> far(pi + 0.6, pi);
  CHECK(bumped_torus(0.05).contravariant(far) == base.contravariant(far));
}

TEST_CASE("C2 size of a bump agrees with a dense finite-difference sampling") {
  const auto base = torus_of_revolution(2.0, 1.0);
  const auto bumped = bumped_torus(0.05);
  const double reported = perturbation_c2_size(bumped);

  // Dense grid, derivatives by central differences of A only.
  auto delta = [&](const Vector2<double>& x) -> Matrix2<double> {
    return bumped.contravariant(x) - base.contravariant(x);
  };
  const double h = 1e-4;
  double sup = 0;
  const int n = 401;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vector2<double> x(pi - 0.5 + i / double(n - 1), pi - 0.5 + j / double(n - 1));
      const Matrix2<double> d0 = delta(x);
      sup = std::max(sup, d0.cwiseAbs().maxCoeff());
      for (int k = 0; k < 2; ++k) {
        Vector2<double> e = Vector2<double>::Zero();
        e[k] = h;
        sup = std::max(sup, ((delta(x + e) - delta(x - e)) / (2 * h)).cwiseAbs().maxCoeff());
        for (int l = 0; l < 2; ++l) {
          Vector2<double> f = Vector2<double>::Zero();
          f[l] = h;
          const Matrix2<double> d2 =
              (delta(x + e + f) - delta(x + e - f) - delta(x - e + f) + delta(x - e - f)) / (4 * h * h);
          sup = std::max(sup, d2.cwiseAbs().maxCoeff());
        }
      }
    }
  }
  MESSAGE("C2 size: jets on 161^2 " << reported << ", finite differences on 401^2 " << sup);
  CHECK(reported == doctest::Approx(sup).epsilon(0.02));
}

TEST_CASE("unit cotangent states are checked on construction") {
  const auto m = torus_of_revolution(2.0, 1.0);
  CHECK_THROWS_AS(UnitCotangentState<double>(m, CotangentState<double>({0.0, 0.0}, {1.0, 0.0})), DomainError);
  CHECK_NOTHROW(UnitCotangentState<double>(m, CotangentState<double>({0.0, 0.0}, {3.0, 0.0})));
  CHECK_THROWS_AS(torus_of_revolution(1.0, 2.0), DomainError);
  CHECK_THROWS_AS(sphere_zone(2.0), DomainError);
}
