#pragma once

#include "geoflow/types.hpp"

#include <array>
#include <cmath>
#include <string>
#include <utility>

namespace geoflow {

/// A single coordinate chart (u, v) covering the whole surface. Periodic
/// coordinates identify the endpoints of their range.
template <typename Scalar>
class SurfaceChart {
 public:
  SurfaceChart() = default;

  SurfaceChart(std::string name, std::array<Scalar, 2> u_range, std::array<Scalar, 2> v_range,
               std::array<bool, 2> periodic)
      : name_(std::move(name)), lo_{u_range[0], v_range[0]}, hi_{u_range[1], v_range[1]},
        periodic_(periodic) {
    for (int k = 0; k < 2; ++k) {
      if (!(hi_[k] > lo_[k])) throw DomainError("chart '" + name_ + "': empty coordinate range");
    }
  }

  const std::string& name() const { return name_; }
  Scalar lower(int k) const { return lo_[k]; }
  Scalar upper(int k) const { return hi_[k]; }
  Scalar extent(int k) const { return hi_[k] - lo_[k]; }
  bool periodic(int k) const { return periodic_[k]; }

  /// Reduce periodic coordinates into [lo, hi).
  Vector2<Scalar> wrap(const Vector2<Scalar>& x) const {
    Vector2<Scalar> out = x;
    for (int k = 0; k < 2; ++k) {
      if (!periodic_[k]) continue;
      const Scalar period = extent(k);
      Scalar r = std::fmod(x[k] - lo_[k], period);
      if (r < 0) r += period;
      if (r >= period) r = 0;
      out[k] = lo_[k] + r;
    }
    return out;
  }

  bool contains(const Vector2<Scalar>& x) const {
    for (int k = 0; k < 2; ++k) {
      if (!std::isfinite(x[k])) return false;
      if (!periodic_[k] && (x[k] < lo_[k] || x[k] > hi_[k])) return false;
    }
    return true;
  }

  /// a - b with periodic components reduced to (-L/2, L/2].
  Vector2<Scalar> difference(const Vector2<Scalar>& a, const Vector2<Scalar>& b) const {
    Vector2<Scalar> d = a - b;
    for (int k = 0; k < 2; ++k) {
      if (!periodic_[k]) continue;
      const Scalar period = extent(k);
      d[k] -= period * std::round(d[k] / period);
    }
    return d;
  }

  Scalar distance(const Vector2<Scalar>& a, const Vector2<Scalar>& b) const {
    return difference(a, b).norm();
  }

 private:
  std::string name_ = "chart";
  std::array<Scalar, 2> lo_{0, 0};
  std::array<Scalar, 2> hi_{1, 1};
  std::array<bool, 2> periodic_{true, true};
};

}  // namespace geoflow
