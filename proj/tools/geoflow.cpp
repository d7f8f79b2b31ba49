#include "geoflow/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <thread>

int main(int argc, char** argv) {
  CLI::App app{"Geodesic flows on surfaces: closed orbits, shadowing and twist-map experiments", "geoflow"};
  app.set_version_flag("--version", GEOFLOW_VERSION);
  app.require_subcommand(1);

  std::string config;
  geoflow::RunOptions options;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  const std::pair<const char*, const char*> commands[] = {
      {"integrate", "integrate one geodesic and dump the trajectory"},
      {"find-periodic", "converge closed geodesics from seeds"},
      {"classify", "classify closed geodesics by their linear Poincare map"},
      {"perturb-trace", "sweep conformal bump amplitudes and track the trace"},
      {"chain-test", "search for an orbit shadowing a pseudo-geodesic"},
      {"twist-demo", "twist-map climbing pseudo-orbit and non-shadowing certificate"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON config file")->required();
    sub->add_option("--out", options.out_dir, "output directory (must be new or empty)")
        ->capture_default_str();
    sub->add_option("--seed", seed, "seed for the run's random generator (overrides the config)");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 4096u))->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : geoflow::kExitConfigError;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--seed")) options.seed = seed;
  options.threads = threads;
  return geoflow::run_command(chosen->get_name(), config, options, std::cerr);
}
