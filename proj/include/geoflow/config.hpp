#pragma once

#include "geoflow/embedding.hpp"
#include "geoflow/poincare.hpp"
#include "geoflow/shadowing.hpp"
#include "geoflow/twist.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace geoflow {

using Json = nlohmann::ordered_json;

/// Commands understood by the experiment runner.
enum class Command { Integrate, FindPeriodic, Classify, PerturbTrace, ChainTest, TwistDemo };

const char* to_string(Command c);
/// CLI spelling ("find-periodic"); throws ConfigError for unknown names.
Command parse_command(const std::string& name);
/// Key of the command's block in a config file ("find_periodic").
const char* config_block(Command c);

/// Initial condition; p is rescaled onto H = 1/2 when `normalize` is set.
struct StateSpec {
  Vector2<double> x = Vector2<double>::Zero();
  Vector2<double> p = Vector2<double>::Zero();
  bool normalize = true;
};

struct OrbitSeedSpec {
  StateSpec state;
  double period_guess = 0;
};

struct IntegrateConfig {
  StateSpec state;
  double t_end = 0;
  double sample_every = 0.1;
  bool monodromy = false;
  struct Scatter {
    int coordinate = 1;  ///< 0 for u, 1 for v
    double value = 0;
    int returns = 0;
  };
  std::optional<Scatter> poincare;
};

struct FindPeriodicConfig {
  std::vector<OrbitSeedSpec> seeds;
  PeriodicSearchOptions search;
};

struct ClassifyConfig {
  std::vector<OrbitSeedSpec> seeds;
  PeriodicSearchOptions search;
  ClassifyOptions classify;
  bool second_section = true;
  std::optional<std::array<double, 2>> certify;  ///< (theta, m)
};

struct PerturbTraceConfig {
  OrbitSeedSpec seed;
  Vector2<double> bump_center = Vector2<double>::Zero();
  double bump_radius = 0;
  std::vector<double> amplitudes;
  SweepOptions sweep;
};

struct ChainGenerator {
  enum class Kind { PerturbedOrbit, MomentumDrift } kind = Kind::PerturbedOrbit;
  StateSpec start;
  long first_index = 0;
  long last_index = 0;
  double segment_time = 1;
  double kick = 0;         ///< perturbed orbit: uniform kick bound per component
  double total_drift = 0;  ///< momentum drift: |p_end - p_start| over the window
  double delta = 0;
};

struct SpecificationSpec {
  std::array<std::array<double, 2>, 2> intervals{};
  std::array<StateSpec, 2> bases;
  double spacing = 0;
  SpecificationSearchOptions search;
};

struct ChainTestConfig {
  std::optional<std::string> chain_file;
  std::optional<ChainGenerator> generate;
  double eps = 0;
  ShadowSearchOptions search;
  bool weak = false;
  std::optional<SpecificationSpec> specification;
};

struct CircleSpec {
  std::optional<double> rho;  ///< detect by rotation number
  std::array<double, 2> bracket{0, 1};
  std::optional<double> r;  ///< flat circle r = const (integrable family only)
};

struct EmbedSpec {
  Json metric;  ///< validated metric block
  OrbitSeedSpec orbit;
  int section_coordinate = 1;
  double scale = 0.04;
  double offset = 0.1;
};

struct TwistDemoConfig {
  TwistMapParams<double> map;
  std::string family_name;
  std::vector<CircleSpec> circles;
  CircleSearchOptions circle_search;
  std::optional<double> delta_prime;
  double delta_prime_fraction = 0.1;
  long spacing = 50;
  ClimbOptions climb;
  CertificateOptions certificate;
  bool zero_jump_control = false;
  long control_length = 0;  ///< 0: same length as the climbing pseudo-orbit
  std::optional<EmbedSpec> embed;
};

struct ExperimentConfig {
  Command command = Command::Integrate;
  Json raw;  ///< the validated input, echoed into the report
  std::optional<MetricField<double>> metric;
  FlowSettings flow;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> plots;

  IntegrateConfig integrate;
  FindPeriodicConfig find_periodic;
  ClassifyConfig classify;
  PerturbTraceConfig perturb_trace;
  ChainTestConfig chain_test;
  TwistDemoConfig twist_demo;
};

/// Validate `doc` against the schema for `command`. Every present block is
/// checked; the command's own block is required.
ExperimentConfig parse_config(Command command, const Json& doc);
ExperimentConfig load_config(Command command, const std::string& path);

MetricField<double> parse_metric(const Json& j, const std::string& path = "metric");
UnitCotangentState<double> make_state(const MetricField<double>& metric, const StateSpec& spec);

}  // namespace geoflow
