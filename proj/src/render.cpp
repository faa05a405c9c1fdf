#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "malpoison/harness.hpp"

namespace malpoison {

namespace fs = std::filesystem;

namespace {

constexpr double width = 640.0;
constexpr double height = 420.0;
constexpr double left = 70.0;
constexpr double right = 170.0;  // room for the legend
constexpr double top = 30.0;
constexpr double bottom = 60.0;

const char* const palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string chart(std::span<const StrategyAggregate> aggregates, const SeriesStats StrategyAggregate::*metric,
                  const std::string& label) {
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
  bool first = true;
  for (const auto& agg : aggregates) {
    for (std::size_t i = 0; i < agg.fractions.size(); ++i) {
      const double y = (agg.*metric).mean[i];
      x_max = std::max(x_max, agg.fractions[i]);
      y_min = first ? y : std::min(y_min, y);
      y_max = first ? y : std::max(y_max, y);
      first = false;
    }
  }
  y_min = std::min(y_min, 0.0);
  if (y_max <= y_min) y_max = y_min + 1.0;
  if (x_max <= 0.0) x_max = 1.0;

  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const auto sx = [&](double x) { return left + x / x_max * plot_w; };
  const auto sy = [&](double y) { return top + (y_max - y) / (y_max - y_min) * plot_h; };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\"" << top + plot_h
      << "\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h << "\"/>\n"
      << "</g>\n";

  svg << "<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x_max * t / 4.0;
    const double yv = y_min + (y_max - y_min) * t / 4.0;
    svg << "<text x=\"" << fmt(sx(xv)) << "\" y=\"" << fmt(top + plot_h + 16) << "\" text-anchor=\"middle\">" << fmt(xv)
        << "</text>\n";
    svg << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(sy(yv) + 4) << "\" text-anchor=\"end\">" << fmt(yv)
        << "</text>\n";
  }
  svg << "</g>\n";

  svg << "<text class=\"x-label\" x=\"" << fmt(left + plot_w / 2) << "\" y=\"" << fmt(height - 18)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">poison fraction</text>\n"
      << "<text class=\"y-label\" x=\"18\" y=\"" << fmt(top + plot_h / 2) << "\" transform=\"rotate(-90 18 "
      << fmt(top + plot_h / 2) << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << escape(label) << "</text>\n";

  for (std::size_t s = 0; s < aggregates.size(); ++s) {
    const auto& agg = aggregates[s];
    const char* color = palette[s % std::size(palette)];
    svg << "<polyline class=\"series\" data-strategy=\"" << escape(to_string(agg.kind)) << "\" fill=\"none\" stroke=\""
        << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < agg.fractions.size(); ++i) {
      if (i) svg << ' ';
      svg << fmt(sx(agg.fractions[i])) << ',' << fmt(sy((agg.*metric).mean[i]));
    }
    svg << "\"/>\n";
  }

  svg << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t s = 0; s < aggregates.size(); ++s) {
    const double y = top + 10 + 20.0 * static_cast<double>(s);
    const double x = left + plot_w + 15;
    svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(x + 20) << "\" y2=\"" << fmt(y)
        << "\" stroke=\"" << palette[s % std::size(palette)] << "\" stroke-width=\"2\"/>\n"
        << "<text class=\"legend-entry\" x=\"" << fmt(x + 26) << "\" y=\"" << fmt(y + 4) << "\">"
        << escape(to_string(aggregates[s].kind)) << "</text>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

}  // namespace

std::vector<fs::path> render_curves(std::span<const StrategyAggregate> aggregates, const fs::path& dir) {
  if (aggregates.empty()) throw std::invalid_argument("nothing to render");
  for (const auto& agg : aggregates) {
    if (agg.fractions.empty()) throw std::invalid_argument("aggregate for " + to_string(agg.kind) + " has no rows");
  }
  fs::create_directories(dir);
  const struct {
    const char* file;
    const SeriesStats StrategyAggregate::*metric;
    const char* label;
  } panels[] = {{"objective.svg", &StrategyAggregate::objective, "objective d_c"},
                {"clusters.svg", &StrategyAggregate::clusters, "number of clusters"},
                {"f_measure.svg", &StrategyAggregate::f_measure, "F-measure"}};

  std::vector<fs::path> written;
  for (const auto& panel : panels) {
    const fs::path path = dir / panel.file;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << chart(aggregates, panel.metric, panel.label);
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
    written.push_back(path);
  }
  return written;
}

}  // namespace malpoison
