#include "geoflow/report.hpp"

#include <cmath>
#include <fstream>

namespace geoflow {

Json number_json(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

Json state_json(const CotangentState<double>& s) {
  return Json{{"x", {s.x[0], s.x[1]}}, {"p", {s.p[0], s.p[1]}}};
}

Json orbit_json(const ClosedOrbit<double>& o) {
  Json j;
  j["start"] = state_json(o.start.state());
  j["period"] = number_json(o.period);
  j["residual"] = number_json(o.residual);
  j["newton_iterations"] = o.newton_iterations;
  j["period_flagged"] = o.period_flagged;
  j["sub_period_factor"] = o.sub_period_factor;
  return j;
}

Json classification_json(const OrbitClassification<double>& c) {
  Json j;
  j["kind"] = to_string(c.kind);
  j["trace"] = number_json(c.trace);
  j["determinant"] = number_json(c.determinant);
  switch (c.kind) {
    case OrbitKind::Hyperbolic:
      j["multiplier"] = number_json(c.multiplier);
      break;
    case OrbitKind::EllipticIrrational:
      j["rotation_number"] = number_json(c.rotation_number);
      j["denominator_bound"] = c.denominator_bound;
      break;
    case OrbitKind::EllipticRationalOrUnresolved:
      j["rotation_number"] = number_json(c.rotation_number);
      j["rational"] = {c.nearest_numerator, c.nearest_denominator};
      j["denominator_bound"] = c.denominator_bound;
      break;
    case OrbitKind::Parabolic:
      j["parabolic_sign"] = c.parabolic_sign;
      break;
  }
  return j;
}

Json hyperbolicity_json(const HyperbolicityCertificate<double>& c) {
  Json j;
  j["theta"] = c.theta;
  j["m"] = c.m;
  j["valid"] = c.valid;
  j["empty"] = c.empty;
  j["achieved_theta"] = number_json(c.achieved_theta);
  Json orbits = Json::array();
  for (const auto& o : c.orbits) {
    orbits.push_back({{"stable", {o.stable[0], o.stable[1]}},
                      {"unstable", {o.unstable[0], o.unstable[1]}},
                      {"contraction", number_json(o.contraction)},
                      {"expansion_inverse", number_json(o.expansion_inverse)},
                      {"margin", number_json(o.margin)},
                      {"verified_power_error", number_json(o.verified_power_error)}});
  }
  j["orbits"] = orbits;
  return j;
}

Json sweep_json(const TraceSweep<double>& s) {
  Json j;
  j["unperturbed_trace"] = number_json(s.unperturbed_trace);
  Json entries = Json::array();
  for (const auto& e : s.entries) {
    entries.push_back({{"amplitude", e.amplitude},
                       {"c2_size", number_json(e.c2_size)},
                       {"trace", number_json(e.trace)},
                       {"period", number_json(e.period)},
                       {"residual", number_json(e.residual)}});
  }
  j["entries"] = entries;
  j["truncated"] = s.truncated;
  if (s.truncated) j["truncation_reason"] = s.truncation_reason;
  return j;
}

Json chain_validation_json(const ChainValidation<double>& v, long first_index) {
  Json j;
  j["valid"] = v.valid;
  j["times_ok"] = v.times_ok;
  j["worst_jump"] = number_json(v.worst_jump);
  j["worst_index"] = v.worst_index;
  j["first_index"] = first_index;
  Json jumps = Json::array();
  for (double d : v.jumps) jumps.push_back(number_json(d));
  j["jumps"] = jumps;
  return j;
}

Json shadow_report_json(const ShadowReport<double>& r) {
  Json j;
  j["verdict"] = to_string(r.verdict);
  j["eps"] = r.eps;
  j["witness"] = r.witness ? state_json(r.witness->state()) : Json(nullptr);
  j["achieved_sup"] = number_json(r.achieved_sup);
  j["refined_sup"] = number_json(r.refined_sup);
  j["replay_difference"] = number_json(r.replay_difference);
  if (r.reparam) {
    Json knots = Json::array(), values = Json::array();
    for (double b : r.reparam->breakpoints()) knots.push_back(b);
    for (double v : r.reparam->values()) values.push_back(v);
    j["reparameterization"] = {{"breakpoints", knots},
                               {"values", values},
                               {"max_slope_deviation", number_json(r.reparam->max_slope_deviation())}};
  } else {
    j["reparameterization"] = nullptr;
  }
  j["horizon"] = r.horizon;
  j["sample_step"] = r.sample_step;
  j["resolution"] = r.resolution;
  j["effort"] = {{"seeds", r.effort.seeds},
                 {"optimizer_iterations", r.effort.optimizer_iterations},
                 {"trajectory_evaluations", r.effort.trajectory_evaluations}};
  if (!r.notes.empty()) j["notes"] = r.notes;
  return j;
}

Json circle_json(const InvariantCircleEstimate<double>& c) {
  double lo = INFINITY, hi = -INFINITY;
  for (double g : c.graph) {
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  return Json{{"rotation_number", number_json(c.rotation_number)},
              {"seed", {c.seed[0], c.seed[1]}},
              {"graph_samples", c.graph.size()},
              {"graph_min", number_json(lo)},
              {"graph_max", number_json(hi)},
              {"invariance_residual", number_json(c.invariance_residual)},
              {"lipschitz_bound", number_json(c.lipschitz_bound)},
              {"orbit_points", c.orbit_points}};
}

Json absence_json(const CircleAbsence<double>& a) {
  return Json{{"target_rho", a.target_rho},
              {"seed", {a.seed[0], a.seed[1]}},
              {"r_min", number_json(a.r_min)},
              {"r_max", number_json(a.r_max)},
              {"order_violations", a.order_violations},
              {"invariance_residual", number_json(a.invariance_residual)},
              {"lipschitz_bound", number_json(a.lipschitz_bound)},
              {"reason", a.reason}};
}

Json pseudo_orbit_json(const TwistPseudoOrbit<double>& po) {
  Json j;
  j["points"] = po.points.size();
  j["delta_prime"] = po.delta_prime;
  j["spacing"] = po.spacing;
  j["start"] = {po.points.front()[0], po.points.front()[1]};
  j["end"] = {po.points.back()[0], po.points.back()[1]};
  Json jumps = Json::array();
  long min_wait = -1;
  for (const auto& jr : po.jumps) {
    jumps.push_back({{"index", jr.index}, {"size", jr.size}, {"type", to_string(jr.type)}, {"waited", jr.waited}});
    if (min_wait < 0 || jr.waited < min_wait) min_wait = jr.waited;
  }
  j["jump_count"] = po.jumps.size();
  j["min_spacing"] = min_wait;
  j["jumps"] = jumps;
  j["zone_iterations"] = po.zone_iterations;
  return j;
}

Json certificate_json(const NonShadowCertificate<double>& c) {
  Json j;
  j["conclusion"] = to_string(c.conclusion);
  j["eps_prime"] = c.eps_prime;
  j["grid"] = {c.grid_theta, c.grid_r};
  j["initial_conditions"] = static_cast<long long>(c.grid_theta) * c.grid_r;
  j["r_range"] = {c.r_lo, c.r_hi};
  j["spacing"] = {c.spacing_theta, c.spacing_r};
  j["offset_slack"] = c.offset_slack;
  j["min_distance"] = number_json(c.min_distance);
  j["best_cell"] = {c.best_cell[0], c.best_cell[1]};
  j["cells_early_exit"] = c.cells_early_exit;
  j["domain_exits"] = c.domain_exits;
  j["map_evaluations"] = c.map_evaluations;
  return j;
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace geoflow
