#include "geoflow/experiment.hpp"
#include "geoflow/chain_io.hpp"
#include "geoflow/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

namespace geoflow {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- integrate --------------------------------------------------------------

void run_integrate(const ExperimentConfig& cfg, ExperimentOutcome& out) {
  const auto& metric = *cfg.metric;
  const auto& c = cfg.integrate;
  const UnitCotangentState<double> start = make_state(metric, c.state);
  const auto samples = integrate_trajectory(metric, start.state(), c.t_end, c.sample_every, cfg.flow);

  std::string csv = "t,u,v,p_u,p_v,H\n";
  double worst = 0, pu_drift = 0;
  PlotSeries path{"trajectory", "trajectory in the chart", "u", "v", {}, {}, {}, PlotSeries::Style::Scatter};
  for (const auto& s : samples) {
    csv += num(s.t) + "," + num(s.state.x[0]) + "," + num(s.state.x[1]) + "," + num(s.state.p[0]) + "," +
           num(s.state.p[1]) + "," + num(s.energy) + "\n";
    worst = std::max(worst, std::abs(s.energy - 0.5));
    pu_drift = std::max(pu_drift, std::abs(s.state.p[0] - start.p()[0]));
    path.x.push_back(s.state.x[0]);
    path.y.push_back(s.state.x[1]);
  }
  out.text_files.emplace_back("trajectory.csv", csv);
  out.series.push_back(std::move(path));

  Json& r = out.results;
  r["start"] = state_json(start.state());
  r["t_end"] = c.t_end;
  r["samples"] = samples.size();
  r["max_energy_error"] = worst;
  r["final_state"] = state_json(samples.back().state);
  if (metric.family() == MetricFamilyTag::SurfaceOfRevolution || metric.family() == MetricFamilyTag::FlatTorus) {
    r["clairaut_drift"] = pu_drift;  // p_u is a first integral for these families
  }
  if (c.monodromy) {
    const auto rec = flow_with_monodromy(metric, start, c.t_end, cfg.flow);
    r["monodromy_det_error"] = std::abs(monodromy_determinant(rec.matrix) - 1);
  }
  if (c.poincare) {
    const int k = c.poincare->coordinate;
    const int orientation = hamiltonian_vector_field(metric, start.state())[k] >= 0 ? 1 : -1;
    const auto section = TransversalSection<double>::level(metric, k, c.poincare->value, orientation);
    ReturnOptions ro;
    ro.max_time = c.t_end;
    const int other = 1 - k;
    const char* names[] = {"u", "v"};
    PlotSeries scatter{"poincare", std::string("section ") + section.descriptor(), names[other],
                       std::string("p_") + names[other], {}, {}, {}, PlotSeries::Style::Scatter};
    CotangentState<double> z = start.state();
    Json times = Json::array();
    for (int n = 0; n < c.poincare->returns; ++n) {
      const auto hit = return_map(metric, section, z, cfg.flow, ro);
      z = hit.state.state();
      scatter.x.push_back(z.x[other]);
      scatter.y.push_back(z.p[other]);
      times.push_back(hit.time);
    }
    r["poincare"] = {{"section", section.descriptor()}, {"returns", c.poincare->returns}, {"return_times", times}};
    out.series.push_back(std::move(scatter));
  }
}

// ---- closed orbits -----------------------------------------------------------

ClosedOrbit<double> locate(const ExperimentConfig& cfg, const OrbitSeedSpec& seed,
                           const PeriodicSearchOptions& search) {
  const auto& metric = *cfg.metric;
  return find_periodic_orbit(metric, make_state(metric, seed.state), seed.period_guess, cfg.flow, search);
}

std::string orbit_csv(const ClosedOrbit<double>& o) {
  std::string csv = "u,v,p_u,p_v\n";
  for (const auto& s : o.samples) csv += num(s.x[0]) + "," + num(s.x[1]) + "," + num(s.p[0]) + "," + num(s.p[1]) + "\n";
  return csv;
}

void run_find_periodic(const ExperimentConfig& cfg, ExperimentOutcome& out) {
  Json orbits = Json::array();
  for (std::size_t i = 0; i < cfg.find_periodic.seeds.size(); ++i) {
    const auto orbit = locate(cfg, cfg.find_periodic.seeds[i], cfg.find_periodic.search);
    orbits.push_back(orbit_json(orbit));
    out.text_files.emplace_back("orbit_" + std::to_string(i) + ".csv", orbit_csv(orbit));
  }
  out.results["orbits"] = orbits;
}

/// Oblique affine section through the orbit start, for the section
/// independence check.
TransversalSection<double> oblique_section(const MetricField<double>& metric, const UnitCotangentState<double>& base) {
  const Vector4<double> normals[] = {{1, 0.7, 0.2, -0.3}, {0.7, 1, -0.3, 0.2}, {0.3, -0.2, 1, 0.6}};
  for (const auto& a : normals) {
    try {
      std::ostringstream d;
      d << "oblique (" << a[0] << ", " << a[1] << ", " << a[2] << ", " << a[3] << ")";
      return TransversalSection<double>(metric, base, a, 0.0, d.str());
    } catch (const TransversalityError&) {
    }
  }
  throw TransversalityError("no oblique section is transverse at the orbit start");
}

void run_classify(const ExperimentConfig& cfg, ExperimentOutcome& out) {
  const auto& metric = *cfg.metric;
  const auto& c = cfg.classify;
  Json orbits = Json::array();
  std::vector<HyperbolicOrbitInput<double>> hyperbolic;
  bool all_hyperbolic = true;
  for (const auto& seed : c.seeds) {
    const auto orbit = locate(cfg, seed, c.search);
    const auto dp = transversal_linear_poincare(metric, orbit, cfg.flow);
    const auto cls = classify_orbit(dp.matrix, c.classify);
    Json j;
    j["period"] = orbit.period;
    j["residual"] = orbit.residual;
    j.update(classification_json(cls));
    j["section"] = dp.section;
    j["start"] = state_json(orbit.start.state());
    if (c.second_section) {
      const auto other = oblique_section(metric, orbit.start);
      const auto dp2 = transversal_linear_poincare(metric, orbit, other, cfg.flow);
      const double t2 = dp2.matrix.trace();
      j["second_section"] = {{"section", dp2.section},
                             {"trace", t2},
                             {"trace_difference", std::abs(t2 - cls.trace)},
                             {"relative_difference", std::abs(t2 - cls.trace) / std::max(1.0, std::abs(cls.trace))}};
    }
    orbits.push_back(j);
    if (cls.kind == OrbitKind::Hyperbolic) {
      hyperbolic.push_back({orbit.period, dp.matrix});
    } else {
      all_hyperbolic = false;
    }
  }
  out.results["orbits"] = orbits;
  if (c.certify) {
    try {
      if (!all_hyperbolic) throw Refusal("the orbit set contains non-hyperbolic orbits");
      out.results["hyperbolicity"] =
          hyperbolicity_json(certify_hyperbolic_set(hyperbolic, (*c.certify)[0], (*c.certify)[1], c.classify));
    } catch (const Refusal& e) {
      out.results["hyperbolicity"] = {{"valid", false}, {"refused", e.what()}};
    }
  }
}

void run_perturb_trace(const ExperimentConfig& cfg, ExperimentOutcome& out) {
  const auto& metric = *cfg.metric;
  const auto& c = cfg.perturb_trace;
  const auto orbit = locate(cfg, c.seed, c.sweep.search);
  ConformalBump<double> bump;
  bump.center = c.bump_center;
  bump.radius = c.bump_radius;
  try {
    (void)apply_conformal_bump(metric, bump);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config.perturb_trace.bump: ") + e.what());
  }
  const auto sweep = trace_perturbation_sweep(metric, orbit, bump, c.amplitudes, cfg.flow, c.sweep);
  out.results["orbit"] = orbit_json(orbit);
  out.results["sweep"] = sweep_json(sweep);
  std::string csv = "amplitude,c2_size,trace\n";
  PlotSeries series{"trace_sweep", "trace against bump amplitude", "amplitude", "trace", {}, {}, {},
                    PlotSeries::Style::Line};
  double lo = INFINITY, hi = -INFINITY, gap = 0;
  for (std::size_t i = 0; i < sweep.entries.size(); ++i) {
    const auto& e = sweep.entries[i];
    csv += num(e.amplitude) + "," + num(e.c2_size) + "," + num(e.trace) + "\n";
    series.x.push_back(e.amplitude);
    series.y.push_back(e.trace);
    lo = std::min(lo, e.trace);
    hi = std::max(hi, e.trace);
    if (i > 0) gap = std::max(gap, std::abs(e.trace - sweep.entries[i - 1].trace));
  }
  out.results["trace_range"] = {number_json(lo), number_json(hi)};
  out.results["max_successive_gap"] = gap;
  out.text_files.emplace_back("sweep.csv", csv);
  out.series.push_back(std::move(series));
}

// ---- chains ------------------------------------------------------------------

/// Rotate p by `angle` in the chart's Euclidean sense.
Vector2<double> rotate(const Vector2<double>& p, double angle) {
  return {std::cos(angle) * p[0] - std::sin(angle) * p[1], std::sin(angle) * p[0] + std::cos(angle) * p[1]};
}

ChainFile generate_chain(const ExperimentConfig& cfg, std::mt19937_64& rng) {
  const auto& metric = *cfg.metric;
  const auto& g = *cfg.chain_test.generate;
  const UnitCotangentState<double> start = make_state(metric, g.start);
  ChainFile f;
  f.delta = g.delta;
  f.T = g.segment_time;
  f.window.first_index = g.first_index;
  const long count = g.last_index - g.first_index + 1;
  std::uniform_real_distribution<double> unit(-1, 1);
  // Momentum drift: each vertex turns the arriving momentum by the same angle.
  const double step_angle = 2 * std::asin(std::min(1.0, g.total_drift / 2)) / double(count - 1);
  UnitCotangentState<double> x =
      g.kind == ChainGenerator::Kind::PerturbedOrbit
          ? flow(metric, start, double(g.first_index) * g.segment_time, cfg.flow)
          : start;
  if (g.kind == ChainGenerator::Kind::MomentumDrift) {
    // Centre the drift on the start momentum.
    x = renormalize_energy(metric, CotangentState<double>(x.x(), rotate(x.p(), -step_angle * double(count - 1) / 2)));
  }
  for (long k = 0; k < count; ++k) {
    f.window.states.push_back(x);
    f.window.times.push_back(g.segment_time);
    if (k + 1 == count) break;
    CotangentState<double> next = wrap_state(metric.chart(), flow_lifted(metric, x.state(), g.segment_time, cfg.flow));
    if (g.kind == ChainGenerator::Kind::PerturbedOrbit) {
      Vector4<double> z = next.coords();
      for (int i = 0; i < 4; ++i) z[i] += g.kick * unit(rng);
      next = wrap_state(metric.chart(), CotangentState<double>(z));
    } else {
      next.p = rotate(next.p, step_angle);
    }
    x = renormalize_energy(metric, next);
  }
  return f;
}

void run_chain_test(const ExperimentConfig& cfg, std::mt19937_64& rng, ExperimentOutcome& out) {
  const auto& metric = *cfg.metric;
  const auto& c = cfg.chain_test;
  ChainFile file = c.chain_file ? read_chain_file(*c.chain_file, metric, cfg.flow.shell_tolerance)
                                 : generate_chain(cfg, rng);
  const auto validation = validate_chain(metric, file.window, file.delta, file.T, cfg.flow);
  out.results["chain"] = {{"first_index", file.window.first_index},
                          {"last_index", file.window.last_index()},
                          {"delta", file.delta},
                          {"T", file.T},
                          {"extension", to_string(file.extension)},
                          {"validation", chain_validation_json(validation, file.window.first_index)}};
  if (!validation.valid) {
    std::ostringstream msg;
    msg << "the chain is not a (delta, T)-chain: worst jump " << validation.worst_jump << " at index "
        << validation.worst_index << (validation.times_ok ? "" : ", or a segment is shorter than T");
    throw ConfigError(msg.str());
  }
  {
    std::ostringstream text;
    write_chain(text, file.window, file.delta, file.T);
    out.text_files.emplace_back("chain.txt", text.str());
  }
  PlotSeries jumps{"chain_jumps", "chain endpoint jumps", "i", "jump", {}, {}, {}, PlotSeries::Style::Scatter};
  for (std::size_t k = 0; k < validation.jumps.size(); ++k) {
    jumps.x.push_back(double(file.window.first_index + static_cast<long>(k)));
    jumps.y.push_back(validation.jumps[k]);
  }
  out.series.push_back(std::move(jumps));

  PseudoGeodesic<double> chain(metric, file.window, file.delta, file.T, cfg.flow, validation);
  std::vector<Verdict> verdicts;
  const auto strong = shadow_search(chain, c.eps, c.search);
  out.results["shadowing"] = shadow_report_json(strong);
  verdicts.push_back(strong.verdict);
  if (c.weak) {
    WeakShadowOptions wo;
    wo.strong = c.search;
    const auto weak = weak_shadow_search(chain, c.eps, wo);
    out.results["weak_shadowing"] = shadow_report_json(weak);
    verdicts.push_back(weak.verdict);
  }
  if (c.specification) {
    const auto& s = *c.specification;
    std::vector<SpecificationInstance<double>::Interval> intervals = {{s.intervals[0][0], s.intervals[0][1]},
                                                                      {s.intervals[1][0], s.intervals[1][1]}};
    std::vector<UnitCotangentState<double>> bases = {make_state(metric, s.bases[0]), make_state(metric, s.bases[1])};
    std::optional<SpecificationInstance<double>> inst;
    try {
      inst.emplace(metric, intervals, bases, s.spacing);
    } catch (const DomainError& e) {
      throw ConfigError(std::string("config.chain_test.specification: ") + e.what());
    }
    const auto spec = specification_shadow_search(*inst, c.eps, cfg.flow, s.search);
    out.results["specification"] = shadow_report_json(spec);
    verdicts.push_back(spec.verdict);
  }
  out.inconclusive_only =
      std::all_of(verdicts.begin(), verdicts.end(), [](Verdict v) { return v == Verdict::Inconclusive; });
}

// ---- twist sandbox ------------------------------------------------------------

void run_twist_demo(const ExperimentConfig& cfg, unsigned threads, ExperimentOutcome& out) {
  const auto& c = cfg.twist_demo;
  Json& r = out.results;
  r["map"] = c.family_name;

  std::vector<InvariantCircleEstimate<double>> circles;
  Json circle_reports = Json::array();
  for (const auto& spec : c.circles) {
    if (spec.r) {
      const double tau = std::get<IntegrableNormalForm<double>>(c.map.family).tau;
      auto circle = flat_circle(*spec.r, tau * *spec.r, c.circle_search.graph_samples);
      circle.seed[0] = c.circle_search.theta0;
      circles.push_back(circle);
      Json j = circle_json(circles.back());
      j["source"] = "flat";
      circle_reports.push_back(j);
      continue;
    }
    CircleSearchOptions o = c.circle_search;
    o.r_lo = spec.bracket[0];
    o.r_hi = spec.bracket[1];
    const auto det = detect_invariant_circle(c.map, *spec.rho, o);
    if (!det.circle) {
      r["circles"] = circle_reports;
      std::ostringstream msg;
      msg << "no invariant circle with rotation number " << *spec.rho << ": " << det.absence->reason;
      throw SearchFailure(msg.str());
    }
    circles.push_back(*det.circle);
    Json j = circle_json(*det.circle);
    j["source"] = "detected";
    circle_reports.push_back(j);
  }
  std::sort(circles.begin(), circles.end(), [](const auto& a, const auto& b) { return a.graph[0] < b.graph[0]; });
  r["circles"] = circle_reports;
  const double eps_prime = separation_radius(circles);
  const double delta_prime = c.delta_prime ? *c.delta_prime : c.delta_prime_fraction * eps_prime;
  r["eps_prime"] = eps_prime;
  r["delta_prime"] = delta_prime;

  const auto po = build_climbing_pseudo_orbit(c.map, circles, delta_prime, c.spacing, c.climb);
  r["pseudo_orbit"] = pseudo_orbit_json(po);
  {
    std::string csv = "n,theta,r\n";
    PlotSeries profile{"r_profile", "pseudo-orbit height (jumps marked)", "n", "r", {}, {}, {},
                       PlotSeries::Style::Line};
    PlotSeries plane{"pseudo_orbit", "pseudo-orbit on the annulus", "theta", "r", {}, {}, {},
                     PlotSeries::Style::Scatter};
    for (std::size_t n = 0; n < po.points.size(); ++n) {
      csv += std::to_string(n) + "," + num(po.points[n][0]) + "," + num(po.points[n][1]) + "\n";
      profile.x.push_back(double(n));
      profile.y.push_back(po.points[n][1]);
      plane.x.push_back(po.points[n][0]);
      plane.y.push_back(po.points[n][1]);
    }
    for (const auto& j : po.jumps) profile.markers.push_back(double(j.index));
    out.text_files.emplace_back("pseudo_orbit.csv", csv);
    out.series.push_back(std::move(profile));
    out.series.push_back(std::move(plane));
  }

  CertificateOptions co = c.certificate;
  co.threads = threads;
  co.keep_cells = false;
  const auto cert = certify_non_shadowable(c.map, po.points, circles, co);
  Json certificate = certificate_json(cert);
  std::vector<ShadowConclusion> conclusions{cert.conclusion};

  if (c.family_name == "integrable") {
    // r is conserved, so no true orbit is eps'-close to both ends of a climb
    // spanning more than 2 eps'.
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& p : po.points) {
      lo = std::min(lo, p[1]);
      hi = std::max(hi, p[1]);
    }
    certificate["r_conservation"] = {{"r_span", hi - lo},
                                     {"not_shadowable", hi - lo > 2 * eps_prime},
                                     {"agrees", (hi - lo > 2 * eps_prime) ==
                                                    (cert.conclusion == ShadowConclusion::NotShadowedAtResolution)}};
  }
  if (c.zero_jump_control) {
    const long length = c.control_length > 0 ? c.control_length : static_cast<long>(po.points.size());
    std::vector<Vector2<double>> control{po.points.front()};
    for (long n = 1; n < length; ++n) {
      const Vector2<double> img = twist_forward(c.map, control.back());
      if (!c.map.in_domain(img[1])) throw SearchFailure("zero-jump control left the annulus");
      control.push_back({wrap_unit(img[0]), img[1]});
    }
    CertificateOptions cc = co;
    if (std::isnan(cc.r_lo)) {
      cc.r_lo = cert.r_lo;
      cc.r_hi = cert.r_hi;
    }
    const auto control_cert = certify_non_shadowable(c.map, control, circles, cc);
    Json cj = certificate_json(control_cert);
    cj["points"] = control.size();
    certificate["zero_jump_control"] = cj;
    conclusions.push_back(control_cert.conclusion);
  }
  out.json_files.emplace_back("certificate.json", certificate);
  r["certificate"] = certificate;
  out.inconclusive_only = std::all_of(conclusions.begin(), conclusions.end(),
                                      [](ShadowConclusion s) { return s == ShadowConclusion::Inconclusive; });

  if (c.embed) {
    const MetricField<double> metric = parse_metric(c.embed->metric, "config.twist_demo.embed.metric");
    const UnitCotangentState<double> seed = make_state(metric, c.embed->orbit.state);
    const auto orbit = find_periodic_orbit(metric, seed, c.embed->orbit.period_guess, cfg.flow);
    const PolarSectionMap<double> map(metric, orbit.start, c.embed->section_coordinate, c.embed->scale,
                                      c.embed->offset);
    const auto emb = embed_as_pseudo_geodesic(map, orbit.period, po.points, cfg.flow);
    const auto [tmin, tmax] = std::minmax_element(emb.return_times.begin(), emb.return_times.end());
    r["embedding"] = {{"orbit", orbit_json(orbit)},
                      {"section", map.section().descriptor()},
                      {"vertices", emb.return_times.size()},
                      {"delta", emb.delta},
                      {"T", emb.T},
                      {"max_jump", emb.max_jump},
                      {"worst_index", emb.worst_index},
                      {"eta", emb.eta},
                      {"return_time_range", {*tmin, *tmax}},
                      {"return_times_within_half_period",
                       *tmin >= 0.5 * orbit.period && *tmax <= 1.5 * orbit.period}};
    std::ostringstream text;
    write_chain(text, emb.chain.window(), emb.delta, emb.T);
    out.text_files.emplace_back("embedded_chain.txt", text.str());
  }
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << body;
}

}  // namespace

ExperimentOutcome execute(const ExperimentConfig& config, std::uint64_t seed, unsigned threads) {
  config.flow.validate();
  ExperimentOutcome out;
  out.results = Json::object();
  std::mt19937_64 rng(seed);
  switch (config.command) {
    case Command::Integrate: run_integrate(config, out); break;
    case Command::FindPeriodic: run_find_periodic(config, out); break;
    case Command::Classify: run_classify(config, out); break;
    case Command::PerturbTrace: run_perturb_trace(config, out); break;
    case Command::ChainTest: run_chain_test(config, rng, out); break;
    case Command::TwistDemo: run_twist_demo(config, threads, out); break;
  }
  return out;
}

int run_experiment(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = options.seed ? *options.seed : config.seed.value_or(0);
  const fs::path dir(options.out_dir);
  std::error_code ec;
  if (fs::exists(dir, ec) && !(fs::is_directory(dir, ec) && fs::is_empty(dir, ec))) {
    log << "config error: output directory '" << dir.string() << "' exists and is not empty\n";
    return kExitConfigError;
  }
  ExperimentOutcome out;
  try {
    out = execute(config, seed, std::max(1u, options.threads));
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const Error& e) {
    log << "numerical failure: " << e.what() << "\n";
    return kExitNumericalFailure;
  }

  fs::create_directories(dir);
  std::vector<std::string> files;
  for (const auto& [name, body] : out.text_files) {
    write_text(dir / name, body);
    files.push_back(name);
  }
  for (const auto& [name, j] : out.json_files) {
    write_json((dir / name).string(), j);
    files.push_back(name);
  }
  const PlotOutput plots = emit_plot_data(out.series, config.plots, dir.string());
  files.insert(files.end(), plots.files.begin(), plots.files.end());
  out.warnings.insert(out.warnings.end(), plots.warnings.begin(), plots.warnings.end());
  for (const auto& w : out.warnings) log << "warning: " << w << "\n";

  Json report;
  report["tool"] = "geoflow";
  report["version"] = GEOFLOW_VERSION;
  report["command"] = to_string(config.command);
  report["seed"] = seed;
  report["config"] = config.raw;
  report["results"] = out.results;
  report["files"] = files;
  report["warnings"] = out.warnings;
  write_json((dir / "report.json").string(), report);

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json((dir / "timing.json").string(), Json{{"wall_time_seconds", wall}, {"threads", options.threads}});
  return out.inconclusive_only ? kExitInconclusive : kExitOk;
}

int run_command(const std::string& command, const std::string& config_path, const RunOptions& options,
                std::ostream& log) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(parse_command(command), config_path);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return run_experiment(cfg, options, log);
}

}  // namespace geoflow
