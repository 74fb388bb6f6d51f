#pragma once

// Learning curves across seeds rendered as SVG: mean line with a +-1 sample
// standard deviation band, optional dashed reference line.

#include <optional>
#include <string>
#include <vector>

#include "sero/harness.hpp"

namespace sero {

struct CurveSeries {
  std::string label;
  std::vector<std::int64_t> steps;
  std::vector<double> mean;
  std::vector<double> std;  // sample standard deviation (n - 1); 0 for a single run
  std::size_t runs = 0;
};

/// `metric` is one of the metrics CSV columns other than step. Runs must share
/// their step column; curves are cut to the shortest run.
CurveSeries aggregate_curves(const std::string& label, const std::vector<std::vector<MetricsRow>>& runs,
                             const std::string& metric = "zeroed_return");

double metric_value(const MetricsRow& row, const std::string& metric);

struct PlotOptions {
  std::string title;
  std::string y_label = "return";
  std::optional<double> reference;  // dashed horizontal line
  std::optional<std::string> timestamp;  // emitted as a comment only when set
  int width = 720;
  int height = 420;
};

std::string render_svg(const std::vector<CurveSeries>& series, const PlotOptions& options);

}  // namespace sero
