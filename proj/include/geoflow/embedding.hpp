#pragma once

#include "geoflow/shadowing.hpp"
#include "geoflow/twist.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace geoflow {

/// Polar coordinates on a coordinate section through a closed orbit:
/// h^{-1}(theta, r) puts the free section coordinates (w, p_w) at
/// centre + a sqrt(r + b) (cos 2 pi theta, sin 2 pi theta) and fixes the
/// remaining momentum from H = 1/2. Area is scaled by the constant a^2 / 2.
template <typename Scalar>
class PolarSectionMap {
 public:
  /// `section_coordinate` is the chart coordinate held fixed on the section
  /// (0 for u, 1 for v); the other one is the free coordinate w.
  PolarSectionMap(MetricField<Scalar> metric, const UnitCotangentState<Scalar>& centre,
                  int section_coordinate, Scalar scale, Scalar offset)
      : metric_(std::move(metric)), centre_(centre.state()), fixed_(section_coordinate),
        free_(1 - section_coordinate), scale_(scale), offset_(offset),
        section_(TransversalSection<Scalar>::coordinate(metric_, centre, section_coordinate)) {
    if (section_coordinate != 0 && section_coordinate != 1) {
      throw DomainError("section coordinate must be 0 (u) or 1 (v)");
    }
    if (!(scale > 0)) throw DomainError("polar scale must be positive");
    momentum_sign_ = centre_.p[fixed_] >= 0 ? 1 : -1;
  }

  const TransversalSection<Scalar>& section() const { return section_; }
  const MetricField<Scalar>& metric() const { return metric_; }

  /// h^{-1}: annulus -> section.
  UnitCotangentState<Scalar> to_section(const Vector2<Scalar>& annulus) const {
    const Scalar base = annulus[1] + offset_;
    if (!(base > 0)) throw DomainError("annulus point below the polar origin");
    const Scalar s = scale_ * std::sqrt(base);
    const Scalar angle = constants::two_pi<Scalar> * annulus[0];
    CotangentState<Scalar> z = centre_;
    z.x[free_] += s * std::cos(angle);
    z.p[free_] += s * std::sin(angle);
    if (!metric_.chart().contains(z.x)) throw DomainError("polar image leaves the chart");
    z.x = metric_.chart().wrap(z.x);
    // Solve A_ff q^2 + 2 A_fw q p_w + A_ww p_w^2 = 1 for the fixed-coordinate momentum q.
    const Matrix2<Scalar> A = metric_.contravariant(z.x);
    const Scalar pw = z.p[free_];
    const Scalar a = A(fixed_, fixed_), b = 2 * A(fixed_, free_) * pw, c = A(free_, free_) * pw * pw - 1;
    const Scalar disc = b * b - 4 * a * c;
    if (!(disc >= 0)) throw DomainError("no unit covector with this section momentum");
    z.p[fixed_] = (-b + momentum_sign_ * std::sqrt(disc)) / (2 * a);
    return renormalize_energy(metric_, z);
  }

  /// h: section -> annulus.
  Vector2<Scalar> to_annulus(const CotangentState<Scalar>& z) const {
    const Vector2<Scalar> dx = metric_.chart().difference(z.x, centre_.x);
    const Scalar dw = dx[free_];
    const Scalar dp = z.p[free_] - centre_.p[free_];
    const Scalar s2 = (dw * dw + dp * dp) / (scale_ * scale_);
    return {wrap_unit(std::atan2(dp, dw) / constants::two_pi<Scalar>), s2 - offset_};
  }

 private:
  MetricField<Scalar> metric_;
  CotangentState<Scalar> centre_;
  int fixed_;
  int free_;
  Scalar scale_;
  Scalar offset_;
  int momentum_sign_ = 1;
  TransversalSection<Scalar> section_;
};

/// Sampled Lipschitz constant of h^{-1} on a box of the annulus, from
/// neighbouring grid pairs at spacing `step`.
template <typename Scalar>
Scalar measure_lipschitz(const PolarSectionMap<Scalar>& map, Scalar r_lo, Scalar r_hi, int samples,
                         Scalar step = Scalar(1e-5)) {
  const auto& chart = map.metric().chart();
  Scalar worst = 0;
  for (int i = 0; i < samples; ++i) {
    for (int j = 0; j < samples; ++j) {
      const Vector2<Scalar> a((Scalar(i) + Scalar(0.5)) / Scalar(samples),
                              r_lo + (r_hi - r_lo) * (Scalar(j) + Scalar(0.5)) / Scalar(samples));
      const auto ha = map.to_section(a);
      for (const Vector2<Scalar>& d : {Vector2<Scalar>(step, 0), Vector2<Scalar>(0, step)}) {
        const auto hb = map.to_section(a + d);
        worst = std::max(worst, state_distance(chart, ha.state(), hb.state()) / step);
      }
    }
  }
  return worst;
}

/// Twist orbit of the conjugated section return map Q = h o P o h^{-1}.
template <typename Scalar>
TwistPseudoOrbit<Scalar> section_return_orbit(const PolarSectionMap<Scalar>& map, const Vector2<Scalar>& start,
                                              long count, const FlowSettings& settings) {
  TwistPseudoOrbit<Scalar> po;
  po.delta_prime = 0;
  po.spacing = count;
  po.points.push_back(start);
  Vector2<Scalar> z = start;
  for (long n = 1; n < count; ++n) {
    const auto hit = return_map(map.metric(), map.section(), map.to_section(z).state(), settings);
    z = map.to_annulus(hit.state.state());
    po.points.push_back(z);
  }
  return po;
}

template <typename Scalar>
struct EmbeddedChain {
  PseudoGeodesic<Scalar> chain;
  std::vector<Scalar> return_times;
  Scalar period;  ///< l of the reference orbit
  Scalar delta;
  Scalar T;
  Scalar eta;  ///< max |t_n - l| / l
  Scalar max_jump;
  long worst_index;
};

/// (x_n, p_n) = h^{-1}(theta_n, r_n) on the section and t_n their return
/// times. The chain is validated with delta just above its largest jump
/// and T = l / 2.
template <typename Scalar>
EmbeddedChain<Scalar> embed_as_pseudo_geodesic(const PolarSectionMap<Scalar>& map, Scalar period,
                                               const std::vector<Vector2<Scalar>>& twist_points,
                                               const FlowSettings& settings) {
  if (twist_points.empty()) throw DomainError("nothing to embed");
  const MetricField<Scalar>& metric = map.metric();
  ChainWindow<Scalar> window;
  window.first_index = 0;
  ReturnOptions ropt;
  ropt.max_time = 3 * double(period);
  std::vector<Scalar> times;
  for (std::size_t n = 0; n < twist_points.size(); ++n) {
    try {
      const UnitCotangentState<Scalar> x = map.to_section(twist_points[n]);
      const auto hit = return_map(metric, map.section(), x.state(), settings, ropt);
      window.states.push_back(x);
      times.push_back(hit.time);
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "embedding failed at index " << n << ": " << e.what();
      throw SearchFailure(msg.str());
    }
  }
  window.times = times;
  const Scalar T = period / 2;
  ChainValidation<Scalar> measured =
      validate_chain(metric, window, std::numeric_limits<Scalar>::infinity(), T, settings);
  const Scalar max_jump = measured.worst_jump;
  const long worst = measured.worst_index;
  const Scalar delta = std::max(max_jump * (1 + Scalar(1e-9)), std::numeric_limits<Scalar>::min());
  Scalar eta = 0;
  for (Scalar t : times) eta = std::max(eta, std::abs(t - period) / period);
  PseudoGeodesic<Scalar> chain(metric, std::move(window), delta, T, settings, std::move(measured));
  return {std::move(chain), std::move(times), period, delta, T, eta, max_jump, worst};
}

}  // namespace geoflow
