#pragma once

#include "geoflow/shadowing.hpp"

#include <iosfwd>
#include <string>

namespace geoflow {

/// A chain as stored on disk: the window plus the (delta, T) it claims.
struct ChainFile {
  ChainWindow<double> window;
  double delta = 0;
  double T = 0;
  ExtensionRule extension = ExtensionRule::StationaryOrbit;
};

/// Text format:
///   # geoflow chain v1
///   delta <value>
///   T <value>
///   extension stationary_orbit
///   columns i u v p_u p_v t_i
///   <one row per vertex, indices consecutive>
/// Blank lines and further '#' lines are ignored. Vertices must satisfy
/// |2H - 1| <= shell_tolerance. Throws ConfigError on malformed input.
void write_chain(std::ostream& out, const ChainWindow<double>& window, double delta, double T);
void write_chain_file(const std::string& path, const ChainWindow<double>& window, double delta, double T);
ChainFile read_chain(std::istream& in, const MetricField<double>& metric,
                     double shell_tolerance = FlowSettings{}.shell_tolerance);
ChainFile read_chain_file(const std::string& path, const MetricField<double>& metric,
                          double shell_tolerance = FlowSettings{}.shell_tolerance);

}  // namespace geoflow
