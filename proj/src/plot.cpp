#include "geoflow/plot.hpp"
#include "geoflow/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace geoflow {

namespace {

std::string num(double v, const char* f = "%.17g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << body;
}

std::pair<double, double> range(const std::vector<double>& v) {
  double lo = INFINITY, hi = -INFINITY;
  for (double a : v) {
    if (!std::isfinite(a)) continue;
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  if (!(lo <= hi)) return {0, 1};
  if (hi == lo) {
    const double pad = lo == 0 ? 1 : std::abs(lo) * 1e-3;
    return {lo - pad, hi + pad};
  }
  return {lo, hi};
}

}  // namespace

std::string series_csv(const PlotSeries& s) {
  std::string out = s.x_label + "," + s.y_label + "\n";
  for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) out += num(s.x[i]) + "," + num(s.y[i]) + "\n";
  return out;
}

std::string series_svg(const PlotSeries& s) {
  const double W = 640, H = 420, left = 80, right = 20, top = 40, bottom = 60;
  const auto [x0, x1] = range(s.x);
  const auto [y0, y1] = range(s.y);
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
    << escape(s.title) << "</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W - left - right << "\" height=\""
    << H - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  const char* tick = "%.6g";
  o << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<text x=\"" << left << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"start\">" << num(x0, tick) << "</text>\n";
  o << "<text x=\"" << W - right << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"end\">" << num(x1, tick)
    << "</text>\n";
  o << "<text x=\"" << left - 6 << "\" y=\"" << H - bottom << "\" text-anchor=\"end\">" << num(y0, tick) << "</text>\n";
  o << "<text x=\"" << left - 6 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">" << num(y1, tick) << "</text>\n";
  o << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 20 << "\" text-anchor=\"middle\">"
    << escape(s.x_label) << "</text>\n";
  o << "<text x=\"18\" y=\"" << (top + H - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << (top + H - bottom) / 2 << ")\">" << escape(s.y_label) << "</text>\n";
  o << "</g>\n";
  for (double m : s.markers) {
    if (!(m >= x0 && m <= x1)) continue;
    o << "<line x1=\"" << num(px(m), "%.2f") << "\" y1=\"" << top << "\" x2=\"" << num(px(m), "%.2f") << "\" y2=\""
      << H - bottom << "\" stroke=\"#d62728\" stroke-width=\"0.6\" stroke-opacity=\"0.6\"/>\n";
  }
  const std::size_t n = std::min(s.x.size(), s.y.size());
  if (s.style == PlotSeries::Style::Line) {
    o << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      o << num(px(s.x[i]), "%.2f") << ',' << num(py(s.y[i]), "%.2f") << ' ';
    }
    o << "\"/>\n";
  } else {
    o << "<g fill=\"#1f77b4\">\n";
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      o << "<circle cx=\"" << num(px(s.x[i]), "%.2f") << "\" cy=\"" << num(py(s.y[i]), "%.2f") << "\" r=\"1.2\"/>\n";
    }
    o << "</g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

PlotOutput emit_plot_data(const std::vector<PlotSeries>& available,
                          const std::optional<std::vector<std::string>>& requested, const std::string& dir) {
  PlotOutput out;
  std::vector<const PlotSeries*> chosen;
  if (requested) {
    for (const auto& name : *requested) {
      auto it = std::find_if(available.begin(), available.end(), [&](const PlotSeries& s) { return s.name == name; });
      if (it == available.end()) {
        std::string have;
        for (const auto& s : available) have += (have.empty() ? "" : ", ") + s.name;
        out.warnings.push_back("unknown plot series '" + name + "' skipped (available: " +
                               (have.empty() ? "none" : have) + ")");
        continue;
      }
      chosen.push_back(&*it);
    }
  } else {
    for (const auto& s : available) chosen.push_back(&s);
  }
  for (const PlotSeries* s : chosen) {
    const std::string stem = (std::filesystem::path(dir) / s->name).string();
    write_file(stem + ".csv", series_csv(*s));
    write_file(stem + ".svg", series_svg(*s));
    out.files.push_back(s->name + ".csv");
    out.files.push_back(s->name + ".svg");
  }
  return out;
}

}  // namespace geoflow
