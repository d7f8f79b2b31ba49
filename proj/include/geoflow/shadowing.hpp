#pragma once

#include "geoflow/poincare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace geoflow {

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

enum class ExtensionRule { StationaryOrbit };

inline const char* to_string(ExtensionRule) { return "stationary_orbit"; }

/// Raw finite window of a chain: vertex k has index first_index + k and is
/// followed by a flow segment of duration times[k]. The last time is the
/// step used by the forward extension; the first one is reused backwards.
template <typename Scalar>
struct ChainWindow {
  long first_index = 0;
  std::vector<UnitCotangentState<Scalar>> states;
  std::vector<Scalar> times;

  long last_index() const { return first_index + static_cast<long>(states.size()) - 1; }
};

template <typename Scalar>
struct ChainValidation {
  bool valid = false;
  bool times_ok = false;
  std::vector<Scalar> jumps;  ///< jumps[k] = d(phi^{t_i}(x_i), x_{i+1}), i = first_index + k
  long worst_index = 0;
  Scalar worst_jump = 0;
};

/// Checks the (delta, T) pseudo-geodesic conditions on a window.
template <typename Scalar>
ChainValidation<Scalar> validate_chain(const MetricField<Scalar>& metric,
                                       const ChainWindow<Scalar>& window, Scalar delta, Scalar T,
                                       const FlowSettings& settings) {
  if (window.states.empty() || window.states.size() != window.times.size()) {
    throw DomainError("chain window needs one flow time per vertex");
  }
  ChainValidation<Scalar> out;
  out.times_ok = std::all_of(window.times.begin(), window.times.end(),
                             [&](Scalar t) { return t >= T; });
  out.worst_index = window.first_index;
  for (std::size_t k = 0; k + 1 < window.states.size(); ++k) {
    const CotangentState<Scalar> end =
        flow_lifted(metric, window.states[k].state(), window.times[k], settings);
    const Scalar jump = state_distance(metric.chart(), end, window.states[k + 1].state());
    out.jumps.push_back(jump);
    if (jump > out.worst_jump) {
      out.worst_jump = jump;
      out.worst_index = window.first_index + static_cast<long>(k);
    }
  }
  out.valid = out.times_ok && out.worst_jump < delta;
  return out;
}

/// (delta, T)-pseudo-geodesic [(x_i, p_i), (t_i)], finite window plus true
/// orbit extensions at both ends. The window must contain index 0.
template <typename Scalar>
class PseudoGeodesic {
 public:
  PseudoGeodesic(MetricField<Scalar> metric, ChainWindow<Scalar> window, Scalar delta, Scalar T,
                 const FlowSettings& settings)
      : metric_(std::move(metric)), window_(std::move(window)), delta_(delta), T_(T),
        settings_(settings) {
    if (!(delta > 0) || !(T > 0)) throw DomainError("chain needs delta > 0 and T > 0");
    if (window_.first_index > 0 || window_.last_index() < 0) {
      throw DomainError("chain window must contain index 0");
    }
    init(validate_chain(metric_, window_, delta_, T_, settings_));
  }

  /// Same, reusing jumps already measured by validate_chain with the same
  /// metric, window and settings.
  PseudoGeodesic(MetricField<Scalar> metric, ChainWindow<Scalar> window, Scalar delta, Scalar T,
                 const FlowSettings& settings, ChainValidation<Scalar> measured)
      : metric_(std::move(metric)), window_(std::move(window)), delta_(delta), T_(T),
        settings_(settings) {
    if (!(delta > 0) || !(T > 0)) throw DomainError("chain needs delta > 0 and T > 0");
    if (window_.first_index > 0 || window_.last_index() < 0) {
      throw DomainError("chain window must contain index 0");
    }
    if (measured.jumps.size() + 1 != window_.states.size()) {
      throw DomainError("jump table does not match the chain window");
    }
    measured.times_ok = std::all_of(window_.times.begin(), window_.times.end(),
                                    [&](Scalar t) { return t >= T_; });
    measured.valid = measured.times_ok && measured.worst_jump < delta_;
    init(std::move(measured));
  }

 private:
  void init(ChainValidation<Scalar> validation) {
    validation_ = std::move(validation);
    if (!validation_.valid) {
      std::ostringstream msg;
      msg << "not a (" << double(delta_) << ", " << double(T_) << ")-pseudo-geodesic: ";
      if (!validation_.times_ok) msg << "some t_i < T; ";
      msg << "worst jump " << double(validation_.worst_jump) << " at index " << validation_.worst_index;
      throw DomainError(msg.str());
    }
    // Prefix sums: offsets_[k] = sigma(first_index + k).
    offsets_.assign(window_.states.size(), Scalar(0));
    const long i0 = -window_.first_index;  // position of index 0
    for (long k = i0 + 1; k < static_cast<long>(offsets_.size()); ++k) {
      offsets_[k] = offsets_[k - 1] + window_.times[k - 1];
    }
    for (long k = i0 - 1; k >= 0; --k) offsets_[k] = offsets_[k + 1] - window_.times[k];
  }

 public:
  const MetricField<Scalar>& metric() const { return metric_; }
  const ChainWindow<Scalar>& window() const { return window_; }
  const ChainValidation<Scalar>& validation() const { return validation_; }
  const FlowSettings& settings() const { return settings_; }
  Scalar delta() const { return delta_; }
  Scalar min_time() const { return T_; }
  ExtensionRule extension() const { return ExtensionRule::StationaryOrbit; }
  long first_index() const { return window_.first_index; }
  long last_index() const { return window_.last_index(); }

  /// t_i for any integer i (extension steps outside the window).
  Scalar time(long i) const {
    if (i < first_index()) return window_.times.front();
    if (i > last_index()) return window_.times.back();
    return window_.times[static_cast<std::size_t>(i - first_index())];
  }

  /// sigma(n) = t_0 + ... + t_{n-1}, sigma(0) = 0, sigma(n) = -(t_n + ... + t_{-1}) for n < 0.
  Scalar accumulated_time(long n) const {
    if (n < first_index()) {
      return offsets_.front() - Scalar(first_index() - n) * window_.times.front();
    }
    if (n > last_index()) {
      return offsets_.back() + Scalar(n - last_index()) * window_.times.back();
    }
    return offsets_[static_cast<std::size_t>(n - first_index())];
  }

  /// Vertex (x_i, p_i); outside the window the stationary extension.
  UnitCotangentState<Scalar> vertex(long i) const {
    if (i >= first_index() && i <= last_index()) {
      return window_.states[static_cast<std::size_t>(i - first_index())];
    }
    return evaluate(accumulated_time(i));
  }

  /// Index i of the segment containing t: sigma(i) <= t < sigma(i + 1),
  /// clamped to the window (extensions are single true orbits).
  long segment(Scalar t) const {
    if (t < offsets_.front()) return first_index();
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), t);
    return first_index() + static_cast<long>(it - offsets_.begin()) - 1;
  }

  /// (x_0, p_0) * t = phi^{t - sigma(i)}(x_i, p_i).
  UnitCotangentState<Scalar> evaluate(Scalar t) const {
    const long i = segment(t);
    const auto& start = window_.states[static_cast<std::size_t>(i - first_index())];
    const Scalar dt = t - accumulated_time(i);
    const CotangentState<Scalar> end = flow_lifted(metric_, start.state(), dt, settings_);
    return UnitCotangentState<Scalar>::unchecked(metric_, wrap_state(metric_.chart(), end));
  }

  /// chain * t at every t of an ascending list, integrating each segment once.
  std::vector<CotangentState<Scalar>> sample(const std::vector<Scalar>& ts) const {
    std::vector<CotangentState<Scalar>> out(ts.size());
    std::size_t j = 0;
    while (j < ts.size()) {
      const long i = segment(ts[j]);
      std::size_t end = j;
      while (end < ts.size() && segment(ts[end]) == i) ++end;
      const Scalar base = accumulated_time(i);
      const auto& start = window_.states[static_cast<std::size_t>(i - first_index())];
      // Forward part of the group, then the part before the vertex (only
      // possible on the backward extension) integrated in reverse.
      std::size_t split = j;
      while (split < end && ts[split] < base) ++split;
      {
        FlowStepper<Scalar> fwd(metric_, start.state(), settings_);
        for (std::size_t k = split; k < end; ++k) {
          fwd.advance_to(ts[k] - base);
          out[k] = wrap_state(metric_.chart(), fwd.state());
        }
      }
      if (split > j) {
        FlowStepper<Scalar> bwd(metric_, start.state(), settings_);
        for (std::size_t k = split; k-- > j;) {
          bwd.advance_to(ts[k] - base);
          out[k] = wrap_state(metric_.chart(), bwd.state());
        }
      }
      j = end;
    }
    return out;
  }

 private:
  MetricField<Scalar> metric_;
  ChainWindow<Scalar> window_;
  Scalar delta_;
  Scalar T_;
  FlowSettings settings_;
  ChainValidation<Scalar> validation_;
  std::vector<Scalar> offsets_;
};

template <typename Scalar>
Scalar accumulated_time(const PseudoGeodesic<Scalar>& chain, long n) {
  return chain.accumulated_time(n);
}

template <typename Scalar>
UnitCotangentState<Scalar> chain_eval(const PseudoGeodesic<Scalar>& chain, Scalar t) {
  return chain.evaluate(t);
}

/// Window of a true orbit: x_{i+1} = phi^{t_i}(x_i).
template <typename Scalar>
ChainWindow<Scalar> orbit_window(const MetricField<Scalar>& metric,
                                 const UnitCotangentState<Scalar>& x0, long first_index,
                                 long last_index, const std::vector<Scalar>& times,
                                 const FlowSettings& settings) {
  const std::size_t n = static_cast<std::size_t>(last_index - first_index + 1);
  if (times.size() != n) throw DomainError("orbit_window: one time per vertex required");
  ChainWindow<Scalar> w;
  w.first_index = first_index;
  w.times = times;
  w.states.resize(n, x0);
  const std::size_t zero = static_cast<std::size_t>(-first_index);
  for (std::size_t k = zero + 1; k < n; ++k) {
    const auto end = flow_lifted(metric, w.states[k - 1].state(), times[k - 1], settings);
    w.states[k] = UnitCotangentState<Scalar>::unchecked(metric, wrap_state(metric.chart(), end));
  }
  for (std::size_t k = zero; k-- > 0;) {
    const auto end = flow_lifted(metric, w.states[k + 1].state(), -times[k], settings);
    w.states[k] = UnitCotangentState<Scalar>::unchecked(metric, wrap_state(metric.chart(), end));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Reparameterizations
// ---------------------------------------------------------------------------

/// Piecewise linear tau with tau(0) = 0 and slopes in (1 - eps, 1 + eps);
/// continued with slope 1 outside the breakpoints.
template <typename Scalar>
class Reparameterization {
 public:
  Reparameterization(std::vector<Scalar> breakpoints, std::vector<Scalar> values, Scalar eps)
      : t_(std::move(breakpoints)), tau_(std::move(values)), eps_(eps) {
    if (t_.size() != tau_.size() || t_.empty()) throw DomainError("reparameterization: size mismatch");
    if (!(eps > 0)) throw DomainError("reparameterization: eps must be positive");
    if (!std::is_sorted(t_.begin(), t_.end()) ||
        std::adjacent_find(t_.begin(), t_.end()) != t_.end()) {
      throw DomainError("reparameterization: breakpoints must increase strictly");
    }
    const auto zero = std::find(t_.begin(), t_.end(), Scalar(0));
    if (zero == t_.end() || tau_[static_cast<std::size_t>(zero - t_.begin())] != 0) {
      throw DomainError("reparameterization: tau(0) must be 0");
    }
    for (std::size_t k = 0; k + 1 < t_.size(); ++k) {
      if (!(std::abs(slope(k) - 1) < eps_)) {
        throw DomainError("reparameterization: slope outside Rep(eps) at breakpoint " +
                          std::to_string(double(t_[k])));
      }
    }
  }

  static Reparameterization identity(Scalar eps) { return Reparameterization({0}, {0}, eps); }

  Scalar operator()(Scalar t) const {
    if (t <= t_.front()) return tau_.front() + (t - t_.front());
    if (t >= t_.back()) return tau_.back() + (t - t_.back());
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - t_.begin()) - 1;
    const Scalar w = (t - t_[k]) / (t_[k + 1] - t_[k]);
    return tau_[k] + w * (tau_[k + 1] - tau_[k]);
  }

  Scalar slope(std::size_t k) const { return (tau_[k + 1] - tau_[k]) / (t_[k + 1] - t_[k]); }

  /// Largest |slope - 1| over all breakpoint pairs (not only neighbours).
  Scalar max_slope_deviation() const {
    Scalar worst = 0;
    for (std::size_t a = 0; a < t_.size(); ++a) {
      for (std::size_t b = a + 1; b < t_.size(); ++b) {
        worst = std::max(worst, std::abs((tau_[b] - tau_[a]) / (t_[b] - t_[a]) - 1));
      }
    }
    return worst;
  }

  const std::vector<Scalar>& breakpoints() const { return t_; }
  const std::vector<Scalar>& values() const { return tau_; }
  Scalar eps() const { return eps_; }

 private:
  std::vector<Scalar> t_;
  std::vector<Scalar> tau_;
  Scalar eps_;
};

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class Verdict { Found, NotFound, Inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Found: return "found";
    case Verdict::NotFound: return "not-found";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

struct SearchEffort {
  long seeds = 0;
  long optimizer_iterations = 0;
  long trajectory_evaluations = 0;
};

template <typename Scalar>
struct ShadowReport {
  Verdict verdict = Verdict::Inconclusive;
  std::optional<UnitCotangentState<Scalar>> witness;
  std::optional<Reparameterization<Scalar>> reparam;
  Scalar achieved_sup = std::numeric_limits<Scalar>::infinity();  ///< best sup found
  Scalar refined_sup = std::numeric_limits<Scalar>::infinity();   ///< found: sup at 4x sampling
  Scalar replay_difference = 0;
  Scalar eps = 0;
  Scalar horizon = 0;
  Scalar sample_step = 0;
  std::string resolution;  ///< seed grid / candidate set behind the verdict
  SearchEffort effort;
  std::string notes;
};

struct ShadowSearchOptions {
  double horizon = 10;            ///< sup taken over [-horizon, horizon]
  double rep_eps = 0;             ///< Rep bound for tau; 0 means use eps
  int grid_per_axis = 3;          ///< seed grid points per axis (odd keeps the centre)
  double grid_spacing = 0;        ///< 0 means eps / 2
  int max_seeds = 1000;           ///< budget: seeds started
  int max_iterations = 40;        ///< Levenberg-Marquardt iterations per seed
  double energy_weight = 1;
};

// ---------------------------------------------------------------------------
// Strong shadowing
// ---------------------------------------------------------------------------

namespace detail {

/// Ascending sample times on [-H, H] at spacing `step` plus every
/// breakpoint sigma(i) inside the range.
template <typename Scalar>
std::vector<Scalar> shadow_sample_times(const PseudoGeodesic<Scalar>& chain, Scalar horizon,
                                        Scalar step) {
  std::vector<Scalar> ts;
  const auto n = static_cast<long>(std::ceil(double(horizon / step) - 1e-9));
  for (long k = -n; k <= n; ++k) ts.push_back(std::clamp(Scalar(k) * step, -horizon, horizon));
  for (long i = chain.first_index() - 1;; --i) {
    const Scalar s = chain.accumulated_time(i);
    if (s < -horizon) break;
    ts.push_back(s);
  }
  for (long i = chain.first_index(); ; ++i) {
    const Scalar s = chain.accumulated_time(i);
    if (s > horizon) break;
    if (s >= -horizon) ts.push_back(s);
  }
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

/// phi^{tau_j}(z) for ascending tau_j (split at 0), optionally with the
/// monodromy from z to each point.
template <typename Scalar>
void orbit_through(const MetricField<Scalar>& metric, const CotangentState<Scalar>& z,
                   const std::vector<Scalar>& taus, const FlowSettings& settings,
                   std::vector<CotangentState<Scalar>>& states,
                   std::type_identity_t<std::vector<Matrix4<Scalar>>>* monodromies) {
  states.resize(taus.size());
  if (monodromies) monodromies->resize(taus.size());
  const std::size_t split = static_cast<std::size_t>(
      std::lower_bound(taus.begin(), taus.end(), Scalar(0)) - taus.begin());
  {
    FlowStepper<Scalar> fwd(metric, z, settings, monodromies != nullptr);
    for (std::size_t k = split; k < taus.size(); ++k) {
      fwd.advance_to(taus[k]);
      states[k] = fwd.state();
      if (monodromies) (*monodromies)[k] = fwd.monodromy();
    }
  }
  FlowStepper<Scalar> bwd(metric, z, settings, monodromies != nullptr);
  for (std::size_t k = split; k-- > 0;) {
    bwd.advance_to(taus[k]);
    states[k] = bwd.state();
    if (monodromies) (*monodromies)[k] = bwd.monodromy();
  }
}

template <typename Scalar>
Scalar sup_distance(const SurfaceChart<Scalar>& chart, const std::vector<CotangentState<Scalar>>& a,
                    const std::vector<CotangentState<Scalar>>& b) {
  Scalar worst = 0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, state_distance(chart, a[k], b[k]));
  return worst;
}

/// Knot set for tau: breakpoints sigma(i) strictly inside (-H, H) plus +-H.
template <typename Scalar>
std::vector<Scalar> reparam_knots(const PseudoGeodesic<Scalar>& chain, Scalar horizon) {
  std::vector<Scalar> knots{-horizon, Scalar(0), horizon};
  for (long i = chain.first_index(); i <= chain.last_index() + 1; ++i) {
    const Scalar s = chain.accumulated_time(i);
    if (s > -horizon && s < horizon) knots.push_back(s);
  }
  for (long i = chain.first_index() - 1;; --i) {
    const Scalar s = chain.accumulated_time(i);
    if (s <= -horizon) break;
    knots.push_back(s);
  }
  for (long i = chain.last_index() + 2;; ++i) {
    const Scalar s = chain.accumulated_time(i);
    if (s >= horizon) break;
    knots.push_back(s);
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  return knots;
}

/// Clamp knot values so every neighbouring slope lies in [1 - b, 1 + b],
/// sweeping outward from the pinned value tau(0) = 0.
template <typename Scalar>
void project_slopes(const std::vector<Scalar>& knots, std::vector<Scalar>& values, std::size_t zero,
                    Scalar bound) {
  values[zero] = 0;
  for (std::size_t k = zero + 1; k < knots.size(); ++k) {
    const Scalar dt = knots[k] - knots[k - 1];
    values[k] = std::clamp(values[k], values[k - 1] + (1 - bound) * dt, values[k - 1] + (1 + bound) * dt);
  }
  for (std::size_t k = zero; k-- > 0;) {
    const Scalar dt = knots[k + 1] - knots[k];
    values[k] = std::clamp(values[k], values[k + 1] - (1 + bound) * dt, values[k + 1] - (1 - bound) * dt);
  }
}

/// Seed grid: offsets along two in-shell transverse directions and the
/// flow direction around `centre`, centre first.
template <typename Scalar>
std::vector<CotangentState<Scalar>> seed_grid(const MetricField<Scalar>& metric,
                                              const CotangentState<Scalar>& centre, int per_axis,
                                              Scalar spacing) {
  const Vector4<Scalar> field = hamiltonian_vector_field(metric, centre);
  Eigen::Matrix<Scalar, 2, 4> c;
  c.row(0) = field.transpose();
  c.row(1) = energy_gradient(metric, centre).transpose();
  Eigen::JacobiSVD<Eigen::Matrix<Scalar, 2, 4>> svd(c, Eigen::ComputeFullV);
  const Eigen::Matrix<Scalar, 4, 2> transverse = svd.matrixV().template rightCols<2>();
  const Vector4<Scalar> along = field.normalized();
  std::vector<std::pair<int, CotangentState<Scalar>>> seeds;
  const int half = per_axis / 2;
  for (int a = -half; a <= per_axis - 1 - half; ++a) {
    for (int b = -half; b <= per_axis - 1 - half; ++b) {
      for (int f = -half; f <= per_axis - 1 - half; ++f) {
        const Vector4<Scalar> z = centre.coords() +
                                  spacing * (Scalar(a) * transverse.col(0) +
                                             Scalar(b) * transverse.col(1) + Scalar(f) * along);
        seeds.push_back({a * a + b * b + f * f, CotangentState<Scalar>(z)});
      }
    }
  }
  std::stable_sort(seeds.begin(), seeds.end(),
                   [](const auto& l, const auto& r) { return l.first < r.first; });
  std::vector<CotangentState<Scalar>> out;
  for (auto& s : seeds) out.push_back(s.second);
  return out;
}

template <typename Scalar>
std::string grid_description(int per_axis, Scalar spacing, std::size_t count) {
  std::ostringstream d;
  d << per_axis << "^3 seed grid (two transverse axes + flow axis), spacing " << double(spacing)
    << ", " << count << " seeds";
  return d.str();
}

}  // namespace detail

/// Searches for (z, tau) with sup_t d(phi^{tau(t)}(z), chain * t) < eps over
/// the sampled horizon. Each seed is optimized by Levenberg-Marquardt in z
/// and the tau knot values; a found witness is replayed and re-checked at 4x
/// finer sampling before it is reported.
template <typename Scalar>
ShadowReport<Scalar> shadow_search(const PseudoGeodesic<Scalar>& chain, Scalar eps,
                                   const ShadowSearchOptions& options = {}) {
  if (!(eps > 0)) throw DomainError("eps must be positive");
  const MetricField<Scalar>& metric = chain.metric();
  const FlowSettings& settings = chain.settings();
  const auto& chart = metric.chart();
  const Scalar H = Scalar(options.horizon);
  const Scalar rep_eps = options.rep_eps > 0 ? Scalar(options.rep_eps) : eps;
  const Scalar step = std::min(chain.min_time(), Scalar(1)) / 20;
  const Scalar spacing = options.grid_spacing > 0 ? Scalar(options.grid_spacing) : eps / 2;

  ShadowReport<Scalar> report;
  report.eps = eps;
  report.horizon = H;
  report.sample_step = step;

  const std::vector<Scalar> ts = detail::shadow_sample_times(chain, H, step);
  const std::vector<CotangentState<Scalar>> targets = chain.sample(ts);
  const std::vector<Scalar> knots = detail::reparam_knots(chain, H);
  const std::size_t zero =
      static_cast<std::size_t>(std::find(knots.begin(), knots.end(), Scalar(0)) - knots.begin());
  const std::size_t nk = knots.size();
  const std::size_t nu = 4 + nk - 1;  // unknowns: z and every knot value except tau(0)

  // Interpolation weights of each sample time on the knot grid.
  struct Weight { std::size_t k; Scalar w; };
  std::vector<Weight> weights(ts.size());
  for (std::size_t j = 0; j < ts.size(); ++j) {
    const auto it = std::upper_bound(knots.begin(), knots.end(), ts[j]);
    std::size_t k = static_cast<std::size_t>(it - knots.begin());
    k = std::clamp<std::size_t>(k, 1, nk - 1) - 1;
    weights[j] = {k, (ts[j] - knots[k]) / (knots[k + 1] - knots[k])};
  }
  auto column = [&](std::size_t knot) -> long {
    if (knot == zero) return -1;
    return 4 + static_cast<long>(knot < zero ? knot : knot - 1);
  };
  auto taus_of = [&](const std::vector<Scalar>& values) {
    std::vector<Scalar> out(ts.size());
    for (std::size_t j = 0; j < ts.size(); ++j) {
      const auto [k, w] = weights[j];
      out[j] = values[k] + w * (values[k + 1] - values[k]);
    }
    return out;
  };

  struct Evaluation {
    Scalar cost;
    Scalar sup;
    std::vector<CotangentState<Scalar>> states;
  };
  auto evaluate = [&](const Vector4<Scalar>& z, const std::vector<Scalar>& values,
                      std::vector<Matrix4<Scalar>>* mono) {
    Evaluation e;
    detail::orbit_through(metric, CotangentState<Scalar>(z), taus_of(values), settings, e.states, mono);
    ++report.effort.trajectory_evaluations;
    e.cost = 0;
    e.sup = 0;
    for (std::size_t j = 0; j < ts.size(); ++j) {
      e.cost += state_difference(chart, e.states[j], targets[j]).squaredNorm();
      e.sup = std::max(e.sup, state_distance(chart, e.states[j], targets[j]));
    }
    const Scalar dh = hamiltonian(metric, CotangentState<Scalar>(z)) - Scalar(0.5);
    e.cost += Scalar(options.energy_weight) * dh * dh * Scalar(ts.size());
    return e;
  };

  const auto seeds = detail::seed_grid(metric, targets[static_cast<std::size_t>(
                                                    std::lower_bound(ts.begin(), ts.end(), Scalar(0)) - ts.begin())],
                                       options.grid_per_axis, spacing);
  report.resolution = detail::grid_description(options.grid_per_axis, spacing, seeds.size());

  std::optional<Vector4<Scalar>> best_z;
  std::vector<Scalar> best_values;
  bool all_evaluated = true;
  bool found = false;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    if (report.effort.seeds >= options.max_seeds) {
      all_evaluated = false;
      break;
    }
    ++report.effort.seeds;
    Vector4<Scalar> z = seeds[s].coords();
    std::vector<Scalar> values = knots;  // tau = identity
    try {
      std::vector<Matrix4<Scalar>> mono;
      Evaluation cur = evaluate(z, values, &mono);
      Scalar mu = 1e-3;
      for (int it = 0; it < options.max_iterations; ++it) {
        ++report.effort.optimizer_iterations;
        // Normal equations of the Gauss-Newton model.
        MatrixX<Scalar> JtJ = MatrixX<Scalar>::Zero(static_cast<Eigen::Index>(nu), static_cast<Eigen::Index>(nu));
        VectorX<Scalar> Jtr = VectorX<Scalar>::Zero(static_cast<Eigen::Index>(nu));
        Eigen::Matrix<Scalar, 4, Eigen::Dynamic> row(4, static_cast<Eigen::Index>(nu));
        for (std::size_t j = 0; j < ts.size(); ++j) {
          row.setZero();
          row.template leftCols<4>() = mono[j];
          const Vector4<Scalar> field = hamiltonian_vector_field(metric, cur.states[j]);
          const auto [k, w] = weights[j];
          if (long c = column(k); c >= 0) row.col(c) += (1 - w) * field;
          if (long c = column(k + 1); c >= 0) row.col(c) += w * field;
          const Vector4<Scalar> r = state_difference(chart, cur.states[j], targets[j]);
          JtJ.noalias() += row.transpose() * row;
          Jtr.noalias() += row.transpose() * r;
        }
        {
          const CotangentState<Scalar> zs(z);
          const Vector4<Scalar> g = energy_gradient(metric, zs);
          const Scalar dh = hamiltonian(metric, zs) - Scalar(0.5);
          const Scalar wgt = Scalar(options.energy_weight) * Scalar(ts.size());
          JtJ.template topLeftCorner<4, 4>() += wgt * g * g.transpose();
          Jtr.template head<4>() += wgt * dh * g;
        }
        bool accepted = false;
        for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
          MatrixX<Scalar> lhs = JtJ;
          lhs.diagonal() += mu * (JtJ.diagonal().array() + Scalar(1e-12)).matrix();
          const VectorX<Scalar> delta = -lhs.ldlt().solve(Jtr);
          const Vector4<Scalar> z_try = z + delta.template head<4>();
          std::vector<Scalar> v_try = values;
          for (std::size_t k = 0; k < nk; ++k) {
            if (long c = column(k); c >= 0) v_try[k] += delta[c];
          }
          detail::project_slopes(knots, v_try, zero, Scalar(0.99) * rep_eps);
          try {
            std::vector<Matrix4<Scalar>> mono_try;
            Evaluation next = evaluate(z_try, v_try, &mono_try);
            if (next.cost < cur.cost) {
              z = z_try;
              values = std::move(v_try);
              cur = std::move(next);
              mono = std::move(mono_try);
              mu = std::max(Scalar(1e-12), mu / 4);
              accepted = true;
            } else {
              mu *= 8;
            }
          } catch (const IntegrationError&) {
            mu *= 8;
          } catch (const DomainError&) {
            mu *= 8;
          }
        }
        if (!accepted) break;
        if (cur.sup < eps / 4 && cur.cost < Scalar(1e-20) * Scalar(ts.size())) break;
      }
      // Pin to the shell before judging; the optimizer only penalizes energy.
      const UnitCotangentState<Scalar> pinned = renormalize_energy(metric, CotangentState<Scalar>(z));
      z = pinned.coords();
      cur = evaluate(z, values, nullptr);
      if (cur.sup < report.achieved_sup) {
        report.achieved_sup = cur.sup;
        best_z = z;
        best_values = values;
      }
      if (cur.sup < eps) {
        // Replay with fresh integration, then refine the sampling 4x.
        std::vector<CotangentState<Scalar>> replay;
        detail::orbit_through(metric, CotangentState<Scalar>(z), taus_of(values), settings, replay, nullptr);
        report.replay_difference = std::abs(detail::sup_distance(chart, replay, targets) - cur.sup);
        const std::vector<Scalar> fine = detail::shadow_sample_times(chain, H, step / 4);
        const Reparameterization<Scalar> tau(knots, values, rep_eps);
        std::vector<Scalar> fine_tau(fine.size());
        for (std::size_t j = 0; j < fine.size(); ++j) fine_tau[j] = tau(fine[j]);
        std::vector<CotangentState<Scalar>> fine_states;
        detail::orbit_through(metric, CotangentState<Scalar>(z), fine_tau, settings, fine_states, nullptr);
        report.refined_sup = detail::sup_distance(chart, fine_states, chain.sample(fine));
        if (report.replay_difference <= Scalar(1e-9) && report.refined_sup < eps) {
          report.witness = UnitCotangentState<Scalar>::unchecked(
              metric, wrap_state(chart, CotangentState<Scalar>(z)));
          report.reparam = tau;
          report.achieved_sup = cur.sup;
          found = true;
          break;
        }
        report.notes += "candidate rejected by replay/refinement at seed " + std::to_string(s) + "\n";
      }
    } catch (const Error& e) {
      all_evaluated = false;
      report.notes += "seed " + std::to_string(s) + " failed: " + e.what() + "\n";
    }
  }
  if (found) {
    report.verdict = Verdict::Found;
  } else if (all_evaluated && report.achieved_sup >= eps) {
    report.verdict = Verdict::NotFound;
  } else {
    report.verdict = Verdict::Inconclusive;
  }
  if (!found && best_z) {
    report.witness = UnitCotangentState<Scalar>::unchecked(
        metric, wrap_state(chart, CotangentState<Scalar>(*best_z)));
  }
  return report;
}

/// Sup distance of a given witness and reparameterization from the chain
/// over [-horizon, horizon] at the standard sampling.
template <typename Scalar>
Scalar shadow_sup(const PseudoGeodesic<Scalar>& chain, const UnitCotangentState<Scalar>& witness,
                  const Reparameterization<Scalar>& tau, Scalar horizon, int refine = 1) {
  const Scalar step = std::min(chain.min_time(), Scalar(1)) / (20 * Scalar(refine));
  const std::vector<Scalar> ts = detail::shadow_sample_times(chain, horizon, step);
  std::vector<Scalar> taus(ts.size());
  for (std::size_t j = 0; j < ts.size(); ++j) taus[j] = tau(ts[j]);
  std::vector<CotangentState<Scalar>> states;
  detail::orbit_through(chain.metric(), witness.state(), taus, chain.settings(), states, nullptr);
  return detail::sup_distance(chain.metric().chart(), states, chain.sample(ts));
}

// ---------------------------------------------------------------------------
// Weak shadowing
// ---------------------------------------------------------------------------

template <typename Scalar>
struct WeakShadowCheck {
  bool passed = false;
  std::vector<Scalar> distances;  ///< per window vertex, index first_index + k
  long worst_index = 0;
  Scalar worst_distance = 0;
  Scalar sample_step = 0;  ///< orbit sampling; distances are upper bounds up to this scale
};

/// Every window vertex within eps of the candidate's orbit segment over
/// [-orbit_horizon, orbit_horizon]. Time order is ignored.
template <typename Scalar>
WeakShadowCheck<Scalar> weak_shadow_check(const PseudoGeodesic<Scalar>& chain, Scalar eps,
                                          const UnitCotangentState<Scalar>& candidate,
                                          Scalar orbit_horizon) {
  const MetricField<Scalar>& metric = chain.metric();
  const Scalar step = std::min(chain.min_time(), Scalar(1)) / 200;
  const auto n = static_cast<long>(std::ceil(double(orbit_horizon / step)));
  std::vector<Scalar> taus;
  for (long k = -n; k <= n; ++k) taus.push_back(Scalar(k) * orbit_horizon / Scalar(n));
  std::vector<CotangentState<Scalar>> orbit;
  detail::orbit_through(metric, candidate.state(), taus, chain.settings(), orbit, nullptr);
  WeakShadowCheck<Scalar> out;
  out.sample_step = orbit_horizon / Scalar(n);
  out.worst_index = chain.first_index();
  for (const auto& v : chain.window().states) {
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (const auto& o : orbit) best = std::min(best, state_distance(metric.chart(), o, v.state()));
    out.distances.push_back(best);
    if (best > out.worst_distance) {
      out.worst_distance = best;
      out.worst_index = chain.first_index() + static_cast<long>(out.distances.size()) - 1;
    }
  }
  out.passed = out.worst_distance < eps;
  return out;
}

struct WeakShadowOptions {
  double orbit_horizon = 0;  ///< 0 means the window's time span plus one segment
  ShadowSearchOptions strong;
  bool use_strong_fallback = true;
};

/// Candidates: every chain vertex, then the strong-search optimum.
template <typename Scalar>
ShadowReport<Scalar> weak_shadow_search(const PseudoGeodesic<Scalar>& chain, Scalar eps,
                                        const WeakShadowOptions& options = {}) {
  ShadowReport<Scalar> report;
  report.eps = eps;
  const Scalar span = chain.accumulated_time(chain.last_index()) -
                      chain.accumulated_time(chain.first_index());
  const Scalar horizon = options.orbit_horizon > 0
                             ? Scalar(options.orbit_horizon)
                             : span + std::max(chain.time(chain.first_index()), chain.time(chain.last_index()));
  report.horizon = horizon;
  report.sample_step = std::min(chain.min_time(), Scalar(1)) / 200;
  std::size_t candidates = 0;
  auto consider = [&](const UnitCotangentState<Scalar>& c) {
    ++candidates;
    ++report.effort.seeds;
    ++report.effort.trajectory_evaluations;
    const WeakShadowCheck<Scalar> w = weak_shadow_check(chain, eps, c, horizon);
    if (w.worst_distance < report.achieved_sup) {
      report.achieved_sup = w.worst_distance;
      report.witness = c;
    }
    return w.passed;
  };
  bool found = false;
  for (const auto& v : chain.window().states) {
    if (consider(v)) {
      found = true;
      break;
    }
  }
  bool complete = true;
  if (!found && options.use_strong_fallback) {
    const ShadowReport<Scalar> strong = shadow_search(chain, eps, options.strong);
    report.effort.optimizer_iterations += strong.effort.optimizer_iterations;
    report.effort.trajectory_evaluations += strong.effort.trajectory_evaluations;
    if (strong.witness) found = consider(*strong.witness);
    complete = strong.verdict != Verdict::Inconclusive;
  }
  std::ostringstream d;
  d << candidates << " candidate(s) tried of " << chain.window().states.size() << " chain vertices"
    << (options.use_strong_fallback ? " then the strong-search optimum" : "")
    << (found ? ", stopped at the first pass" : "") << ", orbit horizon " << double(horizon);
  report.resolution = d.str();
  report.verdict = found ? Verdict::Found : (complete ? Verdict::NotFound : Verdict::Inconclusive);
  return report;
}

// ---------------------------------------------------------------------------
// Weak specification
// ---------------------------------------------------------------------------

/// Two orbit segments P(t) = phi^{t - a_i}(base_i) on [a_i, b_i] with
/// a_2 >= b_1 + K.
template <typename Scalar>
class SpecificationInstance {
 public:
  struct Interval {
    Scalar a;
    Scalar b;
  };

  SpecificationInstance(MetricField<Scalar> metric, std::vector<Interval> intervals,
                        std::vector<UnitCotangentState<Scalar>> bases, Scalar K)
      : metric_(std::move(metric)), intervals_(std::move(intervals)), bases_(std::move(bases)), K_(K) {
    if (intervals_.size() != 2 || bases_.size() != 2) {
      throw DomainError("a specification instance needs exactly two intervals and two base points");
    }
    if (!(K >= 0)) throw DomainError("specification spacing K must be non-negative");
    for (const auto& I : intervals_) {
      if (!(I.b >= I.a)) throw DomainError("specification interval is empty");
    }
    if (!(intervals_[1].a >= intervals_[0].b + K_)) {
      throw DomainError("specification intervals violate the spacing a_2 >= b_1 + K");
    }
  }

  const MetricField<Scalar>& metric() const { return metric_; }
  const std::vector<Interval>& intervals() const { return intervals_; }
  const std::vector<UnitCotangentState<Scalar>>& bases() const { return bases_; }
  Scalar spacing() const { return K_; }

 private:
  MetricField<Scalar> metric_;
  std::vector<Interval> intervals_;
  std::vector<UnitCotangentState<Scalar>> bases_;
  Scalar K_;
};

struct SpecificationSearchOptions {
  double sample_step = 0.05;
  int grid_per_axis = 3;
  double grid_spacing = 0;  ///< 0 means eps / 2
  int max_seeds = 1000;
  int max_iterations = 40;
};

/// Point z with d(phi^t(z), P(t)) < eps on both intervals (sampled).
/// Seeds: grids around phi^{-a_i}(base_i) for both intervals.
template <typename Scalar>
ShadowReport<Scalar> specification_shadow_search(const SpecificationInstance<Scalar>& spec,
                                                 Scalar eps, const FlowSettings& settings,
                                                 const SpecificationSearchOptions& options = {}) {
  if (!(eps > 0)) throw DomainError("eps must be positive");
  const MetricField<Scalar>& metric = spec.metric();
  const auto& chart = metric.chart();
  ShadowReport<Scalar> report;
  report.eps = eps;
  report.sample_step = Scalar(options.sample_step);
  report.horizon = spec.intervals()[1].b;

  std::vector<Scalar> ts;
  std::vector<CotangentState<Scalar>> targets;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& I = spec.intervals()[i];
    const auto n = std::max<long>(1, static_cast<long>(std::ceil(double((I.b - I.a) / options.sample_step))));
    FlowStepper<Scalar> stepper(metric, spec.bases()[i].state(), settings);
    for (long k = 0; k <= n; ++k) {
      const Scalar t = I.a + (I.b - I.a) * Scalar(k) / Scalar(n);
      stepper.advance_to(t - I.a);
      ts.push_back(t);
      targets.push_back(wrap_state(chart, stepper.state()));
    }
  }
  // ts is ascending because the intervals are ordered and disjoint.

  auto evaluate = [&](const Vector4<Scalar>& z, std::vector<Matrix4<Scalar>>* mono,
                      std::vector<CotangentState<Scalar>>& states) {
    detail::orbit_through(metric, CotangentState<Scalar>(z), ts, settings, states, mono);
    ++report.effort.trajectory_evaluations;
    Scalar cost = 0, sup = 0;
    for (std::size_t j = 0; j < ts.size(); ++j) {
      cost += state_difference(chart, states[j], targets[j]).squaredNorm();
      sup = std::max(sup, state_distance(chart, states[j], targets[j]));
    }
    const Scalar dh = hamiltonian(metric, CotangentState<Scalar>(z)) - Scalar(0.5);
    cost += dh * dh * Scalar(ts.size());
    return std::pair<Scalar, Scalar>{cost, sup};
  };

  const Scalar spacing = options.grid_spacing > 0 ? Scalar(options.grid_spacing) : eps / 2;
  std::vector<CotangentState<Scalar>> seeds;
  for (std::size_t i = 0; i < 2; ++i) {
    const CotangentState<Scalar> back = wrap_state(
        chart, flow_lifted(metric, spec.bases()[i].state(), -spec.intervals()[i].a, settings));
    for (const auto& s : detail::seed_grid(metric, back, options.grid_per_axis, spacing)) seeds.push_back(s);
  }
  report.resolution = "2 x " + detail::grid_description(options.grid_per_axis, spacing, seeds.size() / 2);

  bool all_evaluated = true;
  bool found = false;
  for (std::size_t s = 0; s < seeds.size() && !found; ++s) {
    if (report.effort.seeds >= options.max_seeds) {
      all_evaluated = false;
      break;
    }
    ++report.effort.seeds;
    try {
      Vector4<Scalar> z = seeds[s].coords();
      std::vector<Matrix4<Scalar>> mono;
      std::vector<CotangentState<Scalar>> states;
      auto [cost, sup] = evaluate(z, &mono, states);
      Scalar mu = 1e-3;
      for (int it = 0; it < options.max_iterations && sup >= eps / 4; ++it) {
        ++report.effort.optimizer_iterations;
        Matrix4<Scalar> JtJ = Matrix4<Scalar>::Zero();
        Vector4<Scalar> Jtr = Vector4<Scalar>::Zero();
        for (std::size_t j = 0; j < ts.size(); ++j) {
          const Vector4<Scalar> r = state_difference(chart, states[j], targets[j]);
          JtJ.noalias() += mono[j].transpose() * mono[j];
          Jtr.noalias() += mono[j].transpose() * r;
        }
        const CotangentState<Scalar> zs(z);
        const Vector4<Scalar> g = energy_gradient(metric, zs);
        JtJ += Scalar(ts.size()) * g * g.transpose();
        Jtr += Scalar(ts.size()) * (hamiltonian(metric, zs) - Scalar(0.5)) * g;
        bool accepted = false;
        for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
          Matrix4<Scalar> lhs = JtJ;
          lhs.diagonal() += mu * (JtJ.diagonal().array() + Scalar(1e-12)).matrix();
          const Vector4<Scalar> z_try = z - lhs.ldlt().solve(Jtr);
          std::vector<Matrix4<Scalar>> mono_try;
          std::vector<CotangentState<Scalar>> states_try;
          try {
            auto [c2, s2] = evaluate(z_try, &mono_try, states_try);
            if (c2 < cost) {
              z = z_try;
              cost = c2;
              sup = s2;
              mono = std::move(mono_try);
              states = std::move(states_try);
              mu = std::max(Scalar(1e-12), mu / 4);
              accepted = true;
            } else {
              mu *= 8;
            }
          } catch (const IntegrationError&) {
            mu *= 8;
          }
        }
        if (!accepted) break;
      }
      const UnitCotangentState<Scalar> pinned = renormalize_energy(metric, CotangentState<Scalar>(z));
      std::vector<CotangentState<Scalar>> replay;
      const Scalar final_sup = evaluate(pinned.coords(), nullptr, replay).second;
      if (final_sup < report.achieved_sup) {
        report.achieved_sup = final_sup;
        report.witness = UnitCotangentState<Scalar>::unchecked(metric, wrap_state(chart, pinned.state()));
      }
      if (final_sup < eps) found = true;
    } catch (const Error& e) {
      all_evaluated = false;
      report.notes += "seed " + std::to_string(s) + " failed: " + e.what() + "\n";
    }
  }
  report.refined_sup = report.achieved_sup;
  report.verdict = found ? Verdict::Found
                         : (all_evaluated && report.achieved_sup >= eps ? Verdict::NotFound
                                                                        : Verdict::Inconclusive);
  return report;
}

}  // namespace geoflow
