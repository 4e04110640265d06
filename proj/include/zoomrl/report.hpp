#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace zoomrl {

// Deterministic number formatting for report files; %.12g round-trips every
// value we report and never emits locale-dependent output.
inline std::string fmt_num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::string fmt_num(std::int64_t v) { return std::to_string(v); }

// CSV with '#' comment lines up front (the effective config goes there so
// every report records its own provenance).
struct CsvWriter {
  std::vector<std::string> comments;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.good()) throw std::runtime_error("cannot write " + path);
    for (const auto& c : comments) out << "# " << c << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << "\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << "\n";
    }
    if (!out.good()) throw std::runtime_error("write failed for " + path);
  }
};

// Minimal static SVG line chart; enough for reward/budget curves.
struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

inline void write_svg_chart(const std::string& path, const std::string& title,
                            const std::string& x_label, const std::string& y_label,
                            const std::vector<SvgSeries>& series) {
  const int width = 640, height = 420;
  const double ml = 60, mr = 20, mt = 40, mb = 50;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool first = true;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (first) {
        x_min = x_max = x;
        y_min = y_max = y;
        first = false;
      }
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max == y_min) y_max = y_min + 1;
  const auto px = [&](double x) {
    return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr);
  };
  const auto py = [&](double y) {
    return height - mb - (y - y_min) / (y_max - y_min) * (height - mt - mb);
  };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.good()) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
  out << "<text x=\"16\" y=\"" << height / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << height / 2 << ")\">" << y_label << "</text>\n";
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double xv = x_min + t * (x_max - x_min), yv = y_min + t * (y_max - y_min);
    out << "<text x=\"" << px(xv) << "\" y=\"" << height - mb + 16
        << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt_num(xv) << "</text>\n";
    out << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 3
        << "\" text-anchor=\"end\" font-size=\"10\">" << fmt_num(yv) << "</text>\n";
  }
  int ci = 0;
  for (const auto& s : series) {
    const char* color = colors[ci % 5];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : s.points) out << px(x) << "," << py(y) << " ";
    out << "\"/>\n";
    for (const auto& [x, y] : s.points)
      out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    out << "<text x=\"" << width - mr - 4 << "\" y=\"" << mt + 16 * ci + 4
        << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << color << "\">" << s.label
        << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
  if (!out.good()) throw std::runtime_error("write failed for " + path);
}

}  // namespace zoomrl
