#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace promptctl {

// Minimal deterministic SVG scatter/line plotter: fixed canvas, five ticks per
// axis, printf-formatted coordinates. Just enough for the report plots; not a
// charting library.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string xlabel, std::string ylabel)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

  void set_x_range(double lo, double hi) { x_lo_ = lo; x_hi_ = hi; }
  void set_y_range(double lo, double hi) { y_lo_ = lo; y_hi_ = hi; }

  void add_line_series(std::vector<std::pair<double, double>> pts, std::string color) {
    lines_.push_back({std::move(pts), std::move(color)});
  }

  void add_scatter(std::vector<std::pair<double, double>> pts, std::string color) {
    scatters_.push_back({std::move(pts), std::move(color)});
  }

  // y = slope x + intercept drawn across the x range
  void add_straight_line(double slope, double intercept, std::string color) {
    add_line_series({{x_lo_, slope * x_lo_ + intercept}, {x_hi_, slope * x_hi_ + intercept}},
                    std::move(color));
  }

  std::string render() const {
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
           "viewBox=\"0 0 640 420\">\n";
    svg += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">" + escape(title_) + "</text>\n";

    // axes
    svg += line(kLeft, kTop, kLeft, kBottom, "black", 1.5);
    svg += line(kLeft, kBottom, kRight, kBottom, "black", 1.5);
    svg += "<text x=\"" + fmt((kLeft + kRight) / 2) + "\" y=\"408\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"12\">" + escape(xlabel_) + "</text>\n";
    svg += "<text x=\"16\" y=\"" + fmt((kTop + kBottom) / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 16 " + fmt((kTop + kBottom) / 2) + ")\">" +
           escape(ylabel_) + "</text>\n";

    for (int t = 0; t <= 4; ++t) {
      const double fx = x_lo_ + (x_hi_ - x_lo_) * t / 4.0;
      const double px = map_x(fx);
      svg += line(px, kBottom, px, kBottom + 5, "black", 1.0);
      svg += "<text x=\"" + fmt(px) + "\" y=\"" + fmt(kBottom + 18) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
             fmt_value(fx) + "</text>\n";
      const double fy = y_lo_ + (y_hi_ - y_lo_) * t / 4.0;
      const double py = map_y(fy);
      svg += line(kLeft - 5, py, kLeft, py, "black", 1.0);
      svg += "<text x=\"" + fmt(kLeft - 8) + "\" y=\"" + fmt(py + 3) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
             fmt_value(fy) + "</text>\n";
    }

    for (const auto& s : lines_) {
      if (s.pts.size() < 2) continue;
      std::string path = "<polyline fill=\"none\" stroke=\"" + s.color +
                         "\" stroke-width=\"1.5\" points=\"";
      for (const auto& [x, y] : s.pts) path += fmt(map_x(x)) + "," + fmt(map_y(y)) + " ";
      svg += path + "\"/>\n";
    }
    for (const auto& s : scatters_) {
      for (const auto& [x, y] : s.pts)
        svg += "<circle cx=\"" + fmt(map_x(x)) + "\" cy=\"" + fmt(map_y(y)) +
               "\" r=\"3\" fill=\"" + s.color + "\" fill-opacity=\"0.6\"/>\n";
    }
    svg += "</svg>\n";
    return svg;
  }

 private:
  struct Series {
    std::vector<std::pair<double, double>> pts;
    std::string color;
  };

  static constexpr double kLeft = 70, kRight = 620, kTop = 40, kBottom = 370;

  double map_x(double x) const {
    const double span = x_hi_ - x_lo_;
    return kLeft + (span == 0.0 ? 0.5 : (x - x_lo_) / span) * (kRight - kLeft);
  }
  double map_y(double y) const {
    const double span = y_hi_ - y_lo_;
    return kBottom - (span == 0.0 ? 0.5 : (y - y_lo_) / span) * (kBottom - kTop);
  }

  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }

  static std::string fmt_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
  }

  static std::string line(double x1, double y1, double x2, double y2, const char* color,
                          double width) {
    char buf[224];
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" "
                  "stroke-width=\"%.1f\"/>\n",
                  x1, y1, x2, y2, color, width);
    return buf;
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        default: out += c;
      }
    }
    return out;
  }

  std::string title_, xlabel_, ylabel_;
  double x_lo_ = 0.0, x_hi_ = 1.0, y_lo_ = 0.0, y_hi_ = 1.0;
  std::vector<Series> lines_;
  std::vector<Series> scatters_;
};

}  // namespace promptctl
