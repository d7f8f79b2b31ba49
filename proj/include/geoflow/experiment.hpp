#pragma once

#include "geoflow/config.hpp"
#include "geoflow/plot.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace geoflow {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitNumericalFailure = 3,
  kExitInconclusive = 4,
};

struct RunOptions {
  std::string out_dir = "geoflow-out";
  std::optional<std::uint64_t> seed;  ///< overrides the config's seed
  unsigned threads = 1;
};

/// Everything a run produces, before anything touches the disk.
struct ExperimentOutcome {
  Json results;
  std::vector<PlotSeries> series;
  std::vector<std::pair<std::string, std::string>> text_files;  ///< (name, contents)
  std::vector<std::pair<std::string, Json>> json_files;
  std::vector<std::string> warnings;
  bool inconclusive_only = false;  ///< every verdict of the run was inconclusive
};

/// Run one command in memory. Throws ConfigError for invalid input
/// discovered while running and geoflow::Error for numerical failures.
ExperimentOutcome execute(const ExperimentConfig& config, std::uint64_t seed, unsigned threads);

/// Execute and write report.json, timing.json and the command's files into
/// options.out_dir. Returns the exit code; diagnostics go to `log`. Nothing
/// is written unless the run succeeds.
int run_experiment(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);

/// Load the config and run; config errors map to kExitConfigError.
int run_command(const std::string& command, const std::string& config_path, const RunOptions& options,
                std::ostream& log);

}  // namespace geoflow
