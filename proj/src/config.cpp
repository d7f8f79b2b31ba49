#include "geoflow/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace geoflow {

namespace {

/// Typed access to one JSON object. Every key read is recorded so that
/// finish() can reject the rest.
class Block {
 public:
  Block(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }
  const std::string& path() const { return path_; }

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }

  const Json& raw(const std::string& key) {
    if (!has(key)) fail(at(key), "required key missing");
    return j_.at(key);
  }

  double number(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number()) fail(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(at(key), "expected a finite number");
    return d;
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  double positive(const std::string& key) {
    const double d = number(key);
    if (!(d > 0)) fail(at(key), "must be positive");
    return d;
  }
  double positive(const std::string& key, double fallback) { return has(key) ? positive(key) : fallback; }

  long integer(const std::string& key, long lo, long hi) {
    const Json& v = raw(key);
    if (!v.is_number_integer()) fail(at(key), "expected an integer");
    const long n = v.get<long>();
    if (n < lo || n > hi) {
      fail(at(key), "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return n;
  }
  long integer(const std::string& key, long lo, long hi, long fallback) {
    return has(key) ? integer(key, lo, hi) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = j_.at(key);
    if (!v.is_boolean()) fail(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_string()) fail(at(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::size_t exact = 0) {
    const Json& v = raw(key);
    if (!v.is_array()) fail(at(key), "expected an array of numbers");
    if (exact && v.size() != exact) fail(at(key), "expected " + std::to_string(exact) + " numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number() || !std::isfinite(e.get<double>())) fail(at(key), "expected finite numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  Vector2<double> pair(const std::string& key) {
    const auto v = numbers(key, 2);
    return {v[0], v[1]};
  }

  Block child(const std::string& key) { return Block(raw(key), at(key)); }

  std::vector<Block> children(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_array()) fail(at(key), "expected an array of objects");
    std::vector<Block> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.emplace_back(v[i], at(key) + "[" + std::to_string(i) + "]");
    return out;
  }

  void finish() const {
    std::vector<std::string> unknown;
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) unknown.push_back(item.key());
    }
    if (unknown.empty()) return;
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    fail(path_, "unknown key(s): " + list);
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

constexpr long kBig = std::numeric_limits<int>::max();

StateSpec read_state(Block b) {
  StateSpec s;
  s.x = b.pair("x");
  s.p = b.pair("p");
  s.normalize = b.boolean("normalize", true);
  if (s.p.norm() == 0) Block::fail(b.at("p"), "momentum must be nonzero");
  b.finish();
  return s;
}

OrbitSeedSpec read_seed(Block b) {
  OrbitSeedSpec s;
  s.state.x = b.pair("x");
  s.state.p = b.pair("p");
  s.state.normalize = b.boolean("normalize", true);
  if (s.state.p.norm() == 0) Block::fail(b.at("p"), "momentum must be nonzero");
  s.period_guess = b.positive("period_guess");
  b.finish();
  return s;
}

std::vector<OrbitSeedSpec> read_seeds(Block& b) {
  std::vector<OrbitSeedSpec> out;
  for (auto& c : b.children("seeds")) out.push_back(read_seed(c));
  if (out.empty()) Block::fail(b.at("seeds"), "at least one seed is required");
  return out;
}

void read_search(Block& b, PeriodicSearchOptions& o) {
  o.max_iterations = static_cast<int>(b.integer("max_iterations", 1, 10000, o.max_iterations));
  o.target_residual = b.positive("target_residual", o.target_residual);
  o.accept_residual = b.positive("accept_residual", o.accept_residual);
  o.max_sub_period = static_cast<int>(b.integer("max_sub_period", 1, 64, o.max_sub_period));
  o.samples = static_cast<int>(b.integer("samples", 2, 1000000, o.samples));
}

FlowSettings read_flow(Block b) {
  FlowSettings f;
  f.step = b.positive("step", f.step);
  f.tol = b.positive("tol", f.tol);
  f.max_newton_iters = static_cast<int>(b.integer("max_newton_iters", 1, 1000, f.max_newton_iters));
  f.shell_tolerance = b.positive("shell_tolerance", f.shell_tolerance);
  b.finish();
  return f;
}

IntegrateConfig read_integrate(Block b) {
  IntegrateConfig c;
  c.state = read_state(b.child("state"));
  c.t_end = b.positive("t_end");
  c.sample_every = b.positive("sample_every", c.sample_every);
  c.monodromy = b.boolean("monodromy", false);
  if (b.has("poincare")) {
    Block p = b.child("poincare");
    IntegrateConfig::Scatter s;
    const std::string coord = p.string("coordinate");
    if (coord == "u") {
      s.coordinate = 0;
    } else if (coord == "v") {
      s.coordinate = 1;
    } else {
      Block::fail(p.at("coordinate"), "expected \"u\" or \"v\"");
    }
    s.value = p.number("value", 0);
    s.returns = static_cast<int>(p.integer("returns", 1, 1000000));
    p.finish();
    c.poincare = s;
  }
  b.finish();
  return c;
}

FindPeriodicConfig read_find_periodic(Block b) {
  FindPeriodicConfig c;
  c.seeds = read_seeds(b);
  read_search(b, c.search);
  b.finish();
  return c;
}

ClassifyConfig read_classify(Block b) {
  ClassifyConfig c;
  c.seeds = read_seeds(b);
  read_search(b, c.search);
  c.classify.denominator_bound = static_cast<int>(b.integer("denominator_bound", 1, 100000, 64));
  c.classify.rational_tol = b.positive("rational_tol", c.classify.rational_tol);
  c.classify.parabolic_tol = b.positive("parabolic_tol", c.classify.parabolic_tol);
  c.classify.det_tol = b.positive("det_tol", c.classify.det_tol);
  c.second_section = b.boolean("second_section", true);
  if (b.has("certify")) {
    Block h = b.child("certify");
    const double theta = h.positive("theta");
    if (!(theta < 1)) Block::fail(h.at("theta"), "must lie in (0, 1)");
    c.certify = std::array<double, 2>{theta, h.positive("m")};
    h.finish();
  }
  b.finish();
  return c;
}

PerturbTraceConfig read_perturb(Block b) {
  PerturbTraceConfig c;
  c.seed = read_seed(b.child("seed"));
  Block bump = b.child("bump");
  c.bump_center = bump.pair("center");
  c.bump_radius = bump.positive("radius");
  bump.finish();
  const bool list = b.has("amplitudes");
  const bool range = b.has("amplitude_range");
  if (list == range) Block::fail(b.path(), "give exactly one of amplitudes, amplitude_range");
  if (list) {
    c.amplitudes = b.numbers("amplitudes");
    if (c.amplitudes.empty()) Block::fail(b.at("amplitudes"), "empty amplitude list");
  } else {
    Block r = b.child("amplitude_range");
    const double lo = r.number("min"), hi = r.number("max");
    const long n = r.integer("count", 2, 100000);
    r.finish();
    if (!(hi > lo)) Block::fail(b.at("amplitude_range"), "max must exceed min");
    for (long i = 0; i < n; ++i) c.amplitudes.push_back(lo + (hi - lo) * double(i) / double(n - 1));
  }
  c.sweep.c2_samples = static_cast<int>(b.integer("c2_samples", 3, 100001, c.sweep.c2_samples));
  read_search(b, c.sweep.search);
  b.finish();
  return c;
}

ChainGenerator read_generator(Block b) {
  ChainGenerator g;
  const std::string kind = b.string("kind");
  if (kind == "perturbed_orbit") {
    g.kind = ChainGenerator::Kind::PerturbedOrbit;
    g.kick = b.number("kick");
    if (!(g.kick >= 0)) Block::fail(b.at("kick"), "must be non-negative");
  } else if (kind == "momentum_drift") {
    g.kind = ChainGenerator::Kind::MomentumDrift;
    g.total_drift = b.positive("total_drift");
  } else {
    Block::fail(b.at("kind"), "expected \"perturbed_orbit\" or \"momentum_drift\"");
  }
  g.start = read_state(b.child("start"));
  g.first_index = b.integer("first_index", -1000000, 0);
  g.last_index = b.integer("last_index", 0, 1000000);
  if (g.last_index <= g.first_index) Block::fail(b.path(), "window needs at least two vertices");
  g.segment_time = b.positive("segment_time");
  g.delta = b.positive("delta");
  b.finish();
  return g;
}

ChainTestConfig read_chain_test(Block b) {
  ChainTestConfig c;
  if (b.has("chain_file")) c.chain_file = b.string("chain_file");
  if (b.has("generate")) c.generate = read_generator(b.child("generate"));
  if (c.chain_file.has_value() == c.generate.has_value()) {
    Block::fail(b.path(), "give exactly one of chain_file, generate");
  }
  c.eps = b.positive("eps");
  auto& s = c.search;
  s.horizon = b.positive("horizon", s.horizon);
  s.rep_eps = b.positive("rep_eps", c.eps);
  s.grid_per_axis = static_cast<int>(b.integer("grid_per_axis", 1, 101, s.grid_per_axis));
  s.grid_spacing = b.positive("grid_spacing", c.eps / 2);
  s.max_seeds = static_cast<int>(b.integer("max_seeds", 1, kBig, s.max_seeds));
  s.max_iterations = static_cast<int>(b.integer("max_iterations", 1, 10000, s.max_iterations));
  s.energy_weight = b.positive("energy_weight", s.energy_weight);
  c.weak = b.boolean("weak", false);
  if (b.has("specification")) {
    Block sp = b.child("specification");
    SpecificationSpec spec;
    const Json& iv = sp.raw("intervals");
    if (!iv.is_array() || iv.size() != 2) Block::fail(sp.at("intervals"), "expected two [a, b] pairs");
    for (std::size_t i = 0; i < 2; ++i) {
      if (!iv[i].is_array() || iv[i].size() != 2 || !iv[i][0].is_number() || !iv[i][1].is_number()) {
        Block::fail(sp.at("intervals"), "expected two [a, b] pairs");
      }
      spec.intervals[i] = {iv[i][0].get<double>(), iv[i][1].get<double>()};
    }
    auto bases = sp.children("bases");
    if (bases.size() != 2) Block::fail(sp.at("bases"), "expected two base states");
    spec.bases = {read_state(bases[0]), read_state(bases[1])};
    spec.spacing = sp.number("spacing");
    if (!(spec.spacing >= 0)) Block::fail(sp.at("spacing"), "must be non-negative");
    spec.search.sample_step = sp.positive("sample_step", spec.search.sample_step);
    spec.search.grid_per_axis = static_cast<int>(sp.integer("grid_per_axis", 1, 101, spec.search.grid_per_axis));
    spec.search.grid_spacing = sp.positive("grid_spacing", c.eps / 2);
    spec.search.max_seeds = static_cast<int>(sp.integer("max_seeds", 1, kBig, spec.search.max_seeds));
    spec.search.max_iterations = static_cast<int>(sp.integer("max_iterations", 1, 10000, spec.search.max_iterations));
    sp.finish();
    c.specification = spec;
  }
  b.finish();
  return c;
}

TwistDemoConfig read_twist(Block b) {
  TwistDemoConfig c;
  {
    Block m = b.child("map");
    c.family_name = m.string("family");
    if (c.family_name == "integrable") {
      c.map.family = IntegrableNormalForm<double>{m.number("tau")};
    } else if (c.family_name == "perturbed_normal_form") {
      PerturbedNormalForm<double> f;
      f.tau = m.number("tau");
      f.eps = m.number("eps");
      f.mode = static_cast<int>(m.integer("mode", 1, 1000, 1));
      c.map.family = f;
    } else if (c.family_name == "standard_map") {
      c.map.family = StandardMap<double>{m.number("k")};
    } else {
      Block::fail(m.at("family"), "expected integrable, perturbed_normal_form or standard_map");
    }
    m.finish();
  }
  if (b.has("annulus")) {
    const auto a = b.pair("annulus");
    if (!(a[1] > a[0])) Block::fail(b.at("annulus"), "upper bound must exceed lower bound");
    c.map.r_lo = a[0];
    c.map.r_hi = a[1];
  }
  for (auto& cb : b.children("circles")) {
    CircleSpec s;
    if (cb.has("rho")) {
      s.rho = cb.number("rho");
      const auto br = cb.pair("bracket");
      if (!(br[1] > br[0])) Block::fail(cb.at("bracket"), "upper bound must exceed lower bound");
      s.bracket = {br[0], br[1]};
    }
    if (cb.has("r")) s.r = cb.number("r");
    if (s.rho.has_value() == s.r.has_value()) Block::fail(cb.path(), "give exactly one of rho, r");
    if (s.r && c.family_name != "integrable") {
      Block::fail(cb.at("r"), "flat circles are only invariant for the integrable family");
    }
    cb.finish();
    c.circles.push_back(s);
  }
  if (c.circles.size() < 2) Block::fail(b.at("circles"), "at least two circles are required");
  if (b.has("circle_search")) {
    Block s = b.child("circle_search");
    auto& o = c.circle_search;
    o.theta0 = s.number("theta0", o.theta0);
    o.bisection_iterations = s.integer("bisection_iterations", 10, 1000000000, o.bisection_iterations);
    o.bisection_steps = static_cast<int>(s.integer("bisection_steps", 1, 200, o.bisection_steps));
    o.orbit_points = s.integer("orbit_points", 16, 1000000000, o.orbit_points);
    o.graph_samples = static_cast<int>(s.integer("graph_samples", 8, 1 << 24, o.graph_samples));
    o.tolerance = s.positive("tolerance", o.tolerance);
    o.max_lipschitz = s.positive("max_lipschitz", o.max_lipschitz);
    s.finish();
  }
  if (b.has("delta_prime")) c.delta_prime = b.positive("delta_prime");
  c.delta_prime_fraction = b.positive("delta_prime_fraction", c.delta_prime_fraction);
  c.spacing = b.integer("spacing", 1, 1000000000, c.spacing);
  c.climb.lead_in = b.integer("lead_in", 0, 1000000000, -1);
  c.climb.tail = b.integer("tail", 0, 1000000000, -1);
  c.climb.iteration_cap = b.integer("iteration_cap", 1, 4000000000L, c.climb.iteration_cap);
  if (b.has("hyperbolic_points")) {
    const Json& hp = b.raw("hyperbolic_points");
    if (!hp.is_array()) Block::fail(b.at("hyperbolic_points"), "expected [[theta, r], ...]");
    for (const auto& p : hp) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        Block::fail(b.at("hyperbolic_points"), "expected [[theta, r], ...]");
      }
      c.climb.hyperbolic_points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  }
  c.climb.hop_radius = b.positive("hop_radius", c.climb.hop_radius);
  if (b.has("certificate")) {
    Block cb = b.child("certificate");
    auto& o = c.certificate;
    if (cb.has("grid")) {
      const Json& g = cb.raw("grid");
      if (!g.is_array() || g.size() != 2 || !g[0].is_number_integer() || !g[1].is_number_integer() ||
          g[0].get<long>() < 1 || g[1].get<long>() < 1 || g[0].get<long>() > 65536 || g[1].get<long>() > 65536) {
        Block::fail(cb.at("grid"), "expected [n_theta, n_r] with entries in [1, 65536]");
      }
      o.grid_theta = g[0].get<int>();
      o.grid_r = g[1].get<int>();
    }
    o.offset_slack = static_cast<int>(cb.integer("offset_slack", 0, 1000, o.offset_slack));
    if (cb.has("r_range")) {
      const auto r = cb.pair("r_range");
      if (!(r[1] > r[0])) Block::fail(cb.at("r_range"), "upper bound must exceed lower bound");
      o.r_lo = r[0];
      o.r_hi = r[1];
    }
    cb.finish();
  }
  c.zero_jump_control = b.boolean("zero_jump_control", false);
  c.control_length = b.integer("control_length", 0, 1000000000, 0);
  if (b.has("embed")) {
    Block e = b.child("embed");
    EmbedSpec s;
    s.metric = e.raw("metric");
    (void)parse_metric(s.metric, e.at("metric"));
    s.orbit = read_seed(e.child("orbit"));
    const std::string coord = e.string("section_coordinate");
    if (coord == "u") {
      s.section_coordinate = 0;
    } else if (coord == "v") {
      s.section_coordinate = 1;
    } else {
      Block::fail(e.at("section_coordinate"), "expected \"u\" or \"v\"");
    }
    s.scale = e.positive("scale", s.scale);
    s.offset = e.positive("offset", s.offset);
    e.finish();
    c.embed = s;
  }
  b.finish();
  return c;
}

}  // namespace

const char* to_string(Command c) {
  switch (c) {
    case Command::Integrate: return "integrate";
    case Command::FindPeriodic: return "find-periodic";
    case Command::Classify: return "classify";
    case Command::PerturbTrace: return "perturb-trace";
    case Command::ChainTest: return "chain-test";
    case Command::TwistDemo: return "twist-demo";
  }
  return "unknown";
}

const char* config_block(Command c) {
  switch (c) {
    case Command::Integrate: return "integrate";
    case Command::FindPeriodic: return "find_periodic";
    case Command::Classify: return "classify";
    case Command::PerturbTrace: return "perturb_trace";
    case Command::ChainTest: return "chain_test";
    case Command::TwistDemo: return "twist_demo";
  }
  return "unknown";
}

Command parse_command(const std::string& name) {
  for (Command c : {Command::Integrate, Command::FindPeriodic, Command::Classify, Command::PerturbTrace,
                    Command::ChainTest, Command::TwistDemo}) {
    if (name == to_string(c)) return c;
  }
  throw ConfigError("unknown command '" + name + "'");
}

MetricField<double> parse_metric(const Json& j, const std::string& path) {
  Block b(j, path);
  const std::string family = b.string("family");
  try {
    if (family == "flat_torus") {
      b.finish();
      return flat_torus<double>();
    }
    if (family == "torus_of_revolution") {
      const double R = b.positive("R"), r = b.positive("r");
      b.finish();
      return torus_of_revolution<double>(R, r);
    }
    if (family == "sphere_zone") {
      const double margin = b.positive("margin");
      b.finish();
      return sphere_zone<double>(margin);
    }
    if (family == "conformal") {
      const MetricField<double> base = parse_metric(b.raw("base"), b.at("base"));
      Block bump = b.child("bump");
      ConformalBump<double> cb;
      cb.center = bump.pair("center");
      cb.radius = bump.positive("radius");
      cb.amplitude = bump.number("amplitude");
      bump.finish();
      b.finish();
      return apply_conformal_bump(base, cb);
    }
  } catch (const DomainError& e) {
    Block::fail(path, e.what());
  }
  Block::fail(b.at("family"), "unknown metric family '" + family + "'");
}

UnitCotangentState<double> make_state(const MetricField<double>& metric, const StateSpec& spec) {
  const CotangentState<double> z(spec.x, spec.p);
  if (!metric.chart().contains(spec.x)) throw ConfigError("initial position lies outside the chart");
  if (spec.normalize) return renormalize_energy(metric, z);
  try {
    return UnitCotangentState<double>(metric, z);
  } catch (const DomainError& e) {
    throw ConfigError(std::string(e.what()) + " (set \"normalize\": true to rescale)");
  }
}

ExperimentConfig parse_config(Command command, const Json& doc) {
  ExperimentConfig cfg;
  cfg.command = command;
  cfg.raw = doc;
  Block top(doc, "config");
  if (top.has("metric")) cfg.metric = parse_metric(top.raw("metric"), "config.metric");
  if (top.has("flow")) cfg.flow = read_flow(top.child("flow"));
  if (top.has("seed")) {
    const Json& s = top.raw("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      Block::fail(top.at("seed"), "expected a non-negative integer");
    }
    cfg.seed = s.get<std::uint64_t>();
  }
  if (top.has("plots")) {
    const Json& p = top.raw("plots");
    if (!p.is_array()) Block::fail(top.at("plots"), "expected an array of series names");
    std::vector<std::string> names;
    for (const auto& e : p) {
      if (!e.is_string()) Block::fail(top.at("plots"), "expected an array of series names");
      names.push_back(e.get<std::string>());
    }
    cfg.plots = names;
  }
  if (top.has("command")) {
    const Json& c = top.raw("command");
    if (!c.is_string() || c.get<std::string>() != to_string(command)) {
      Block::fail(top.at("command"), std::string("config is for a different command than '") +
                                         to_string(command) + "'");
    }
  }
  if (!top.has(config_block(command))) {
    Block::fail(top.at(config_block(command)), "required block for this command is missing");
  }
  if (top.has("integrate")) cfg.integrate = read_integrate(top.child("integrate"));
  if (top.has("find_periodic")) cfg.find_periodic = read_find_periodic(top.child("find_periodic"));
  if (top.has("classify")) cfg.classify = read_classify(top.child("classify"));
  if (top.has("perturb_trace")) cfg.perturb_trace = read_perturb(top.child("perturb_trace"));
  if (top.has("chain_test")) cfg.chain_test = read_chain_test(top.child("chain_test"));
  if (top.has("twist_demo")) cfg.twist_demo = read_twist(top.child("twist_demo"));
  top.finish();
  if (command != Command::TwistDemo && !cfg.metric) {
    Block::fail("config.metric", "required for command '" + std::string(to_string(command)) + "'");
  }
  return cfg;
}

ExperimentConfig load_config(Command command, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(command, doc);
}

}  // namespace geoflow
