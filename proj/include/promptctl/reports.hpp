#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "promptctl/harness.hpp"
#include "promptctl/serialize.hpp"
#include "promptctl/svgplot.hpp"

namespace promptctl {

namespace detail {

inline std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string join_tokens(const TokenSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(seq[i]);
  }
  return out;
}

}  // namespace detail

// Writes the full report bundle into out_dir: three CSVs, the JSON report and
// four SVG plots. Every file is written atomically. Returns the file names in
// a fixed order. An empty report still produces headers and empty axes.
inline std::vector<std::string> emit_reports(const KEpsReport& report, const std::string& out_dir,
                                             const Vocab* vocab = nullptr) {
  std::filesystem::create_directories(out_dir);
  const auto path = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  std::vector<std::string> manifest;

  {
    std::string csv = "k,epsilon\n";
    for (const auto& p : report.per_k)
      csv += std::to_string(p.k) + "," + detail::csv_double(p.epsilon) + "\n";
    write_text_file_atomic(path("kepsilon.csv"), csv);
    manifest.push_back("kepsilon.csv");
  }

  {
    std::string csv = "index,y,base_logprob,base_rank,required_k,failed,prompt\n";
    for (std::size_t i = 0; i < report.per_pair.size(); ++i) {
      const auto& p = report.per_pair[i];
      csv += std::to_string(i) + "," + std::to_string(p.y) + "," +
             detail::csv_double(p.base_logprob) + "," + std::to_string(p.base_rank) + ",";
      csv += p.success ? std::to_string(p.required_k) : std::string{};
      csv += ",";
      csv += p.success ? "0" : "1";
      csv += ",";
      csv += detail::join_tokens(p.prompt);
      csv += "\n";
    }
    write_text_file_atomic(path("pairs.csv"), csv);
    manifest.push_back("pairs.csv");
  }

  {
    std::string csv = "token_id,symbol,count\n";
    for (const auto& t : report.token_frequency) {
      csv += std::to_string(t.id) + ",";
      if (vocab && static_cast<std::size_t>(t.id) < vocab->size())
        csv += vocab->symbol(t.id);
      csv += "," + std::to_string(t.count) + "\n";
    }
    write_text_file_atomic(path("tokens.csv"), csv);
    manifest.push_back("tokens.csv");
  }

  write_json_file_atomic(path("report.json"), json(report));
  manifest.push_back("report.json");

  const double max_k =
      report.per_k.empty() ? 1.0 : static_cast<double>(report.per_k.back().k);

  {
    SvgPlot plot("unreached fraction by prompt length", "prompt length k", "epsilon");
    plot.set_x_range(0.0, std::max(1.0, max_k));
    plot.set_y_range(0.0, 1.0);
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : report.per_k)
      pts.emplace_back(static_cast<double>(p.k), p.epsilon);
    if (!pts.empty()) {
      plot.add_line_series(pts, "#1f6fb2");
      plot.add_scatter(pts, "#1f6fb2");
    }
    write_text_file_atomic(path("eps_vs_k.svg"), plot.render());
    manifest.push_back("eps_vs_k.svg");
  }

  {
    std::vector<std::pair<double, double>> pts;
    double lo = -1.0, hi = 0.0;
    for (const auto& p : report.per_k)
      if (p.epsilon > 0.0) {
        pts.emplace_back(static_cast<double>(p.k), std::log(p.epsilon));
        lo = std::min(lo, std::log(p.epsilon));
        hi = std::max(hi, std::log(p.epsilon));
      }
    SvgPlot plot("log unreached fraction with linear fit", "prompt length k", "log(epsilon)");
    plot.set_x_range(0.0, std::max(1.0, max_k));
    plot.set_y_range(lo - 0.2, hi + 0.2);
    if (report.fit.valid) plot.add_straight_line(report.fit.slope, report.fit.intercept, "#c23b22");
    if (!pts.empty()) plot.add_scatter(pts, "#1f6fb2");
    write_text_file_atomic(path("log_eps_fit.svg"), plot.render());
    manifest.push_back("log_eps_fit.svg");
  }

  {
    std::vector<std::pair<double, double>> pts;
    double max_loss = 1.0;
    for (const auto& p : report.per_pair)
      if (p.success) {
        pts.emplace_back(static_cast<double>(p.required_k), -p.base_logprob);
        max_loss = std::max(max_loss, -p.base_logprob);
      }
    SvgPlot plot("base loss of target vs required prompt length", "required k",
                 "-log P(y | x0), empty prompt");
    plot.set_x_range(0.0, std::max(1.0, max_k));
    plot.set_y_range(0.0, max_loss * 1.05);
    if (!pts.empty()) plot.add_scatter(pts, "#2a7a2a");
    write_text_file_atomic(path("base_loss_vs_k.svg"), plot.render());
    manifest.push_back("base_loss_vs_k.svg");
  }

  {
    std::vector<std::pair<double, double>> pts;
    double max_rank = 1.0;
    for (const auto& p : report.per_pair)
      if (p.success) {
        pts.emplace_back(static_cast<double>(p.required_k), static_cast<double>(p.base_rank));
        max_rank = std::max(max_rank, static_cast<double>(p.base_rank));
      }
    SvgPlot plot("base rank of target vs required prompt length", "required k",
                 "rank of y under empty prompt");
    plot.set_x_range(0.0, std::max(1.0, max_k));
    plot.set_y_range(0.0, max_rank * 1.05);
    if (!pts.empty()) plot.add_scatter(pts, "#7a4b9d");
    write_text_file_atomic(path("rank_vs_k.svg"), plot.render());
    manifest.push_back("rank_vs_k.svg");
  }

  return manifest;
}

}  // namespace promptctl
