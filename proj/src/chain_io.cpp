#include "geoflow/chain_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

namespace geoflow {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void bad(long line, const std::string& what) {
  throw ConfigError("chain file line " + std::to_string(line) + ": " + what);
}

}  // namespace

void write_chain(std::ostream& out, const ChainWindow<double>& window, double delta, double T) {
  out << "# geoflow chain v1\n";
  out << "delta " << fmt(delta) << "\n";
  out << "T " << fmt(T) << "\n";
  out << "extension " << to_string(ExtensionRule::StationaryOrbit) << "\n";
  out << "columns i u v p_u p_v t_i\n";
  for (std::size_t k = 0; k < window.states.size(); ++k) {
    const auto& s = window.states[k].state();
    out << window.first_index + static_cast<long>(k) << ' ' << fmt(s.x[0]) << ' ' << fmt(s.x[1]) << ' '
        << fmt(s.p[0]) << ' ' << fmt(s.p[1]) << ' ' << fmt(window.times[k]) << '\n';
  }
}

void write_chain_file(const std::string& path, const ChainWindow<double>& window, double delta, double T) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write chain file '" + path + "'");
  write_chain(out, window, delta, T);
}

ChainFile read_chain(std::istream& in, const MetricField<double>& metric, double shell_tolerance) {
  ChainFile f;
  std::string line;
  long n = 0;
  bool magic = false, columns = false;
  std::optional<double> delta, T;
  std::optional<long> next;
  while (std::getline(in, line)) {
    ++n;
    if (!magic) {
      if (line != "# geoflow chain v1") bad(n, "expected '# geoflow chain v1'");
      magic = true;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    if (!columns) {
      std::string key;
      ls >> key;
      if (key == "delta" || key == "T") {
        double v;
        if (!(ls >> v) || !(v > 0)) bad(n, key + " must be a positive number");
        (key == "delta" ? delta : T) = v;
      } else if (key == "extension") {
        std::string rule;
        ls >> rule;
        if (rule != to_string(ExtensionRule::StationaryOrbit)) bad(n, "unknown extension rule '" + rule + "'");
      } else if (key == "columns") {
        std::string rest, word;
        while (ls >> word) rest += (rest.empty() ? "" : " ") + word;
        if (rest != "i u v p_u p_v t_i") bad(n, "expected 'columns i u v p_u p_v t_i'");
        columns = true;
      } else {
        bad(n, "unknown header key '" + key + "'");
      }
      continue;
    }
    long i;
    double u, v, pu, pv, t;
    if (!(ls >> i >> u >> v >> pu >> pv >> t)) bad(n, "expected 6 columns");
    std::string extra;
    if (ls >> extra) bad(n, "trailing data");
    if (next && i != *next) bad(n, "indices must be consecutive");
    if (!next) f.window.first_index = i;
    next = i + 1;
    const CotangentState<double> z({u, v}, {pu, pv});
    if (!metric.chart().contains(z.x)) bad(n, "vertex outside the chart");
    const double drift = std::abs(2 * hamiltonian(metric, z) - 1);
    if (!(drift <= shell_tolerance)) {
      bad(n, "vertex is not on the unit cotangent bundle: |2H - 1| = " + std::to_string(drift));
    }
    f.window.states.push_back(UnitCotangentState<double>::unchecked(metric, z));
    f.window.times.push_back(t);
  }
  if (!magic) throw ConfigError("chain file is empty");
  if (!delta || !T) throw ConfigError("chain file header lacks delta or T");
  if (f.window.states.empty()) throw ConfigError("chain file has no vertices");
  f.delta = *delta;
  f.T = *T;
  return f;
}

ChainFile read_chain_file(const std::string& path, const MetricField<double>& metric, double shell_tolerance) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open chain file '" + path + "'");
  return read_chain(in, metric, shell_tolerance);
}

}  // namespace geoflow
