#include "geoflow/twist.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace geoflow;

namespace {

const double golden = (std::sqrt(5.0) - 1) / 2;

TwistMapParams<double> integrable(double tau, double lo = -1, double hi = 2) {
  return {IntegrableNormalForm<double>{tau}, lo, hi};
}

TwistMapParams<double> standard(double k, double lo = -2, double hi = 3) {
  return {StandardMap<double>{k}, lo, hi};
}

TwistMapParams<double> perturbed(double tau, double eps, int mode) {
  return {PerturbedNormalForm<double>{tau, eps, mode}, -0.5, 0.5};
}

CircleSearchOptions bracket(double lo, double hi, double tol) {
  CircleSearchOptions o;
  o.r_lo = lo;
  o.r_hi = hi;
  o.tolerance = tol;
  return o;
}

std::vector<InvariantCircleEstimate<double>> standard_circles(const TwistMapParams<double>& q) {
  std::vector<InvariantCircleEstimate<double>> out;
  for (double rho : {1 - golden, golden, 2 - golden}) {
    const auto d = detect_invariant_circle(q, rho, bracket(rho - 0.3, rho + 0.3, 1e-6));
    REQUIRE(d.circle);
    out.push_back(*d.circle);
  }
  return out;
}

}  // namespace

TEST_CASE("r = 0 is a segment of fixed points of the normal forms") {
  for (const auto& q : {integrable(0.7), perturbed(1.0, 0.3, 2), perturbed(-0.5, 0.8, 1)}) {
    for (double theta : {0.0, 0.13, 0.5, 0.91}) {
      const auto s = twist_step(q, Vector2<double>(theta, 0.0));
      CHECK(s.point[0] == doctest::Approx(theta).epsilon(1e-15));
      CHECK(s.point[1] == 0.0);
      CHECK(s.in_domain);
    }
  }
}

TEST_CASE("integrable iterates are rigid rotations") {
  const auto q = integrable(0.5);
  const Vector2<double> z0(0.2, 0.37);
  Vector2<double> z = z0;
  for (int n = 1; n <= 200; ++n) {
    z = twist_step(q, z).point;
    CHECK(std::abs(circle_difference(z[0], z0[0] + n * 0.5 * 0.37)) <= 1e-12);
    CHECK(z[1] == z0[1]);
  }
}

TEST_CASE("inverse undoes the forward map") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> T(0, 1), R(-0.4, 0.4);
  for (const auto& q : {integrable(0.5), perturbed(1.0, 0.3, 2), standard(0.9)}) {
    for (int i = 0; i < 200; ++i) {
      const Vector2<double> z(T(rng), R(rng));
      const Vector2<double> back = twist_inverse(q, twist_forward(q, z));
      CHECK(std::abs(back[0] - z[0]) <= 1e-11);
      CHECK(std::abs(back[1] - z[1]) <= 1e-11);
    }
  }
}

TEST_CASE("area preservation at 10^4 points and the jacobian against finite differences") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> T(0, 1), R(-0.45, 0.45);
  struct Case {
    TwistMapParams<double> q;
    double tol;
  };
  for (const auto& c : {Case{integrable(0.5), 1e-12}, Case{perturbed(1.0, 0.3, 2), 1e-10},
                        Case{standard(0.9), 1e-12}, Case{standard(1.2), 1e-12}}) {
    double worst = 0, fd_worst = 0;
    for (int i = 0; i < 10000; ++i) {
      const Vector2<double> z(T(rng), R(rng));
      const Matrix2<double> J = twist_jacobian(c.q, z);
      worst = std::max(worst, std::abs(J.determinant() - 1));
      if (i % 50 == 0) {
        const double h = 1e-6;
        Matrix2<double> fd;
        for (int k = 0; k < 2; ++k) {
          Vector2<double> a = z, b = z;
          a[k] += h;
          b[k] -= h;
          fd.col(k) = (twist_forward(c.q, a) - twist_forward(c.q, b)) / (2 * h);
        }
        fd_worst = std::max(fd_worst, (fd - J).cwiseAbs().maxCoeff());
      }
    }
    CHECK(worst <= c.tol);
    CHECK(fd_worst <= 1e-6);
  }
}

TEST_CASE("leaving the annulus is signalled, not thrown") {
  const auto q = integrable(0.5, -1, 0.3);
  CHECK(twist_step(q, Vector2<double>(0.0, 0.2)).in_domain);
  CHECK_FALSE(twist_step(q, Vector2<double>(0.0, 0.31)).in_domain);
  const auto s = standard(2.0, -0.1, 0.1);
  CHECK_FALSE(twist_step(s, Vector2<double>(0.25, 0.05)).in_domain);

  const auto est = rotation_number(standard(2.0, -0.5, 0.5), Vector2<double>(0.25, 0.3), 100000);
  CHECK(est.partial);
  CHECK(est.iterations < 100000);
}

TEST_CASE("rotation numbers") {
  const long N = 1000;
  const auto q = integrable(0.5);
  const auto a = rotation_number(q, Vector2<double>(0.1, 0.3), N);
  CHECK(std::abs(a.rho - 0.15) <= 1.0 / N);
  CHECK(a.error_bar == doctest::Approx(1.0 / N));

  const auto rigid = rotation_number(integrable(1.0), Vector2<double>(0.0, golden), N);
  CHECK(std::abs(rigid.rho - 0.6180339887) <= 1.0 / N);

  // Seed on the golden circle of k = 0.5, then a long plain average.
  const auto k05 = standard(0.5);
  const auto d = detect_invariant_circle(k05, golden, bracket(0.3, 0.9, 1e-8));
  REQUIRE(d.circle);
  const auto long_run = rotation_number(k05, d.circle->seed, 1000000);
  MESSAGE("k = 0.5 golden circle: rho = " << long_run.rho << " (N = 1e6)");
  CHECK(std::abs(long_run.rho - golden) <= 1e-6);
  const auto weighted = rotation_number(k05, d.circle->seed, 100000, RotationMethod::WeightedBirkhoff);
  CHECK(std::abs(weighted.rho - golden) <= 1e-9);
}

TEST_CASE("circle detection in the integrable family is exact") {
  const auto q = integrable(0.5);
  const auto d = detect_invariant_circle(q, 0.125, bracket(0.0, 1.0, 1e-10));
  REQUIRE(d.circle);
  CHECK(d.circle->invariance_residual <= 1e-12);
  for (double g : d.circle->graph) CHECK(std::abs(g - 0.25) <= 1e-9);
}

TEST_CASE("golden circle of the standard map at k = 0.3") {
  const auto q = standard(0.3);
  const auto d = detect_invariant_circle(q, golden, bracket(0.3, 0.9, 1e-8));
  REQUIRE(d.circle);
  CHECK_FALSE(d.absence);
  MESSAGE("residual " << d.circle->invariance_residual << ", Lipschitz " << d.circle->lipschitz_bound);
  CHECK(d.circle->invariance_residual <= 1e-8);
  // Graph samples map onto the graph.
  for (std::size_t j = 0; j < d.circle->graph.size(); j += 97) {
    const double th = double(j) / d.circle->graph.size();
    const auto img = twist_step(q, Vector2<double>(th, d.circle->graph[j])).point;
    CHECK(std::abs(img[1] - d.circle->height(img[0])) <= 1e-6);
  }
}

TEST_CASE("no golden circle at k = 1.2") {
  const auto q = standard(1.2);
  const auto d = detect_invariant_circle(q, golden, bracket(0.3, 0.9, 1e-8));
  CHECK_FALSE(d.circle);
  REQUIRE(d.absence);
  MESSAGE(d.absence->reason << ", r in [" << d.absence->r_min << ", " << d.absence->r_max << "]");
  CHECK(d.absence->target_rho == golden);
}

TEST_CASE("circles are ordered by rotation number") {
  const auto circles = standard_circles(standard(0.9));
  for (std::size_t i = 0; i + 1 < circles.size(); ++i) {
    CHECK(circles[i].rotation_number < circles[i + 1].rotation_number);
    for (std::size_t j = 0; j < circles[i].graph.size(); ++j) CHECK(circles[i].graph[j] < circles[i + 1].graph[j]);
  }
}

TEST_CASE("separation radius") {
  const std::vector<InvariantCircleEstimate<double>> c{flat_circle(0.1, 0.05), flat_circle(0.2, 0.1),
                                                       flat_circle(0.35, 0.175)};
  CHECK(separation_radius(c) == doctest::Approx(0.05));
}

TEST_CASE("integrable ladder") {
  const auto q = integrable(0.5);
  const std::vector<InvariantCircleEstimate<double>> circles{flat_circle(0.1, 0.05), flat_circle(0.2, 0.1),
                                                             flat_circle(0.3, 0.15)};
  for (double dp : {0.005, 0.006}) {
    const auto po = build_climbing_pseudo_orbit(q, circles, dp, 50);
    const long expect = ladder_jump_count(0.1, 0.3, dp);
    if (dp == 0.006) CHECK(expect == static_cast<long>(std::ceil(0.2 / 0.006)));
    CHECK(static_cast<long>(po.jumps.size()) == expect);
    CHECK(po.points.front()[1] == 0.1);
    CHECK(po.points.back()[1] >= 0.3);
    long previous = -1000;
    std::size_t next_jump = 0;
    for (std::size_t n = 1; n < po.points.size(); ++n) {
      const auto step = twist_step(q, po.points[n - 1]).point;
      const double dr = po.points[n][1] - step[1];
      if (next_jump < po.jumps.size() && po.jumps[next_jump].index == static_cast<long>(n)) {
        CHECK(dr > 0);
        CHECK(dr < dp);
        CHECK(po.jumps[next_jump].size == doctest::Approx(dr).epsilon(1e-12));
        CHECK(static_cast<long>(n) - previous >= 50);
        previous = static_cast<long>(n);
        ++next_jump;
      } else {
        CHECK(std::abs(circle_difference(po.points[n][0], step[0])) <= 1e-15);
        CHECK(po.points[n][1] == step[1]);
      }
    }
  }
}

TEST_CASE("standard map k = 0.9: the climb crosses both zones") {
  const auto q = standard(0.9);
  const auto circles = standard_circles(q);
  const double dp = separation_radius(circles) / 10;
  ClimbOptions opts;
  opts.hyperbolic_points = {{0.0, 1.0}, {0.0, 0.0}};
  const auto po = build_climbing_pseudo_orbit(q, circles, dp, 50, opts);
  MESSAGE(po.points.size() << " points, " << po.jumps.size() << " jumps, zones " << po.zone_iterations[0] << " / "
                           << po.zone_iterations[1]);
  CHECK(po.zone_iterations.size() == 2);
  const auto& start = po.points.front();
  const auto& end = po.points.back();
  CHECK(std::abs(start[1] - circles[0].height(start[0])) <= 1e-5);
  CHECK(end[1] >= circles[2].height(end[0]) - 1e-5);
  // Passes above the middle circle somewhere.
  bool above_middle = false;
  for (const auto& p : po.points) above_middle = above_middle || p[1] > circles[1].height(p[0]);
  CHECK(above_middle);
  for (std::size_t k = 0; k < po.jumps.size(); ++k) {
    CHECK(po.jumps[k].size > 0);
    CHECK(po.jumps[k].size < dp);
    if (k > 0) CHECK(po.jumps[k].index - po.jumps[k - 1].index >= 50);
  }
}

TEST_CASE("certificates: ladder not shadowed, true orbit shadowed") {
  const auto q = integrable(0.5);
  const std::vector<InvariantCircleEstimate<double>> circles{flat_circle(0.1, 0.05), flat_circle(0.2, 0.1),
                                                             flat_circle(0.3, 0.15)};
  const auto po = build_climbing_pseudo_orbit(q, circles, 0.005, 50);
  CertificateOptions opts;
  opts.grid_theta = 256;
  opts.grid_r = 256;
  opts.r_lo = 0.0;
  opts.r_hi = 0.5;
  const auto cert = certify_non_shadowable(q, po.points, circles, opts);
  CHECK(cert.eps_prime == doctest::Approx(0.05));
  CHECK(cert.conclusion == ShadowConclusion::NotShadowedAtResolution);
  CHECK(cert.min_distance >= cert.eps_prime);
  CHECK(cert.domain_exits == 0);

  // A true orbit of the same length from the same start.
  std::vector<Vector2<double>> orbit{po.points.front()};
  for (int n = 1; n < 60; ++n) orbit.push_back(twist_step(q, orbit.back()).point);
  const auto control = certify_non_shadowable(q, orbit, circles, opts);
  CHECK(control.conclusion == ShadowConclusion::Shadowed);
  CHECK(control.min_distance < control.eps_prime);

  opts.grid_theta = 64;
  CHECK_THROWS_AS(certify_non_shadowable(q, po.points, circles, opts), Refusal);
}

TEST_CASE("certificate worker count does not change the result") {
  const auto q = integrable(0.5);
  const std::vector<InvariantCircleEstimate<double>> circles{flat_circle(0.1, 0.05), flat_circle(0.2, 0.1),
                                                             flat_circle(0.3, 0.15)};
  const auto po = build_climbing_pseudo_orbit(q, circles, 0.01, 20);
  CertificateOptions one;
  one.grid_theta = one.grid_r = 128;
  one.r_lo = 0.0;
  one.r_hi = 0.5;
  CertificateOptions four = one;
  four.threads = 4;
  const auto a = certify_non_shadowable(q, po.points, circles, one);
  const auto b = certify_non_shadowable(q, po.points, circles, four);
  CHECK(a.cell_best == b.cell_best);
  CHECK(a.min_distance == b.min_distance);
}
