#include "sero/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "sero/errors.hpp"

namespace sero {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Two decimals are plenty for pixel coordinates.
std::string px(double v) { return num(std::round(v * 100.0) / 100.0); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

double metric_value(const MetricsRow& row, const std::string& metric) {
  if (metric == "raw_return") return row.raw_return;
  if (metric == "zeroed_return") return row.zeroed_return;
  if (metric == "mean_du") return row.mean_du;
  if (metric == "in_dist_frac") return row.in_dist_frac;
  if (metric == "kl_to_org") return row.kl_to_org;
  if (metric == "seconds") return row.seconds;
  throw ConfigError("unknown metric '" + metric + "'");
}

CurveSeries aggregate_curves(const std::string& label, const std::vector<std::vector<MetricsRow>>& runs,
                             const std::string& metric) {
  if (runs.empty()) throw ConfigError("no runs to aggregate for '" + label + "'");
  std::size_t len = runs.front().size();
  for (const auto& r : runs) len = std::min(len, r.size());
  CurveSeries s;
  s.label = label;
  s.runs = runs.size();
  const double n = static_cast<double>(runs.size());
  for (std::size_t i = 0; i < len; ++i) {
    const std::int64_t step = runs.front()[i].step;
    double sum = 0.0;
    for (const auto& r : runs) {
      if (r[i].step != step) throw ConfigError("runs of '" + label + "' do not share evaluation steps");
      sum += metric_value(r[i], metric);
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : runs) {
      const double d = metric_value(r[i], metric) - mean;
      ss += d * d;
    }
    s.steps.push_back(step);
    s.mean.push_back(mean);
    s.std.push_back(runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0);
  }
  return s;
}

std::string render_svg(const std::vector<CurveSeries>& series, const PlotOptions& opt) {
  const double left = 70.0, right = 20.0, top = 40.0, bottom = 50.0;
  const double w = opt.width - left - right;
  const double h = opt.height - top - bottom;

  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool any = false;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      const double x = static_cast<double>(s.steps[i]);
      const double lo = s.mean[i] - s.std[i];
      const double hi = s.mean[i] + s.std[i];
      if (!any) {
        xmin = xmax = x;
        ymin = lo;
        ymax = hi;
        any = true;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, lo);
      ymax = std::max(ymax, hi);
    }
  }
  if (opt.reference) {
    ymin = std::min(ymin, *opt.reference);
    ymax = std::max(ymax, *opt.reference);
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) {
    ymin -= 1.0;
    ymax += 1.0;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * w; };
  auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * h; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
    << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
  if (opt.timestamp) o << "<!-- generated " << escape(*opt.timestamp) << " -->\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty()) {
    o << "<text x=\"" << px(left + w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << escape(opt.title) << "</text>\n";
  }
  // Axes and ticks.
  o << "<g stroke=\"#444\" fill=\"none\"><line x1=\"" << px(left) << "\" y1=\"" << px(top + h) << "\" x2=\"" << px(left + w)
    << "\" y2=\"" << px(top + h) << "\"/><line x1=\"" << px(left) << "\" y1=\"" << px(top) << "\" x2=\"" << px(left)
    << "\" y2=\"" << px(top + h) << "\"/></g>\n";
  o << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    o << "<text x=\"" << px(sx(xv)) << "\" y=\"" << px(top + h + 18) << "\" text-anchor=\"middle\">" << num(std::round(xv))
      << "</text>\n";
    o << "<text x=\"" << px(left - 6) << "\" y=\"" << px(sy(yv) + 4) << "\" text-anchor=\"end\">"
      << num(std::round(yv * 100.0) / 100.0) << "</text>\n";
  }
  o << "<text x=\"" << px(left + w / 2) << "\" y=\"" << px(opt.height - 10.0) << "\" text-anchor=\"middle\">step</text>\n";
  o << "<text transform=\"translate(16," << px(top + h / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(opt.y_label) << "</text>\n</g>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<g class=\"series\" data-label=\"" << escape(s.label) << "\" data-runs=\"" << s.runs << "\">\n";
    if (!s.steps.empty()) {
      o << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.steps.size(); ++i) {
        o << px(sx(static_cast<double>(s.steps[i]))) << ',' << px(sy(s.mean[i] + s.std[i])) << ' ';
      }
      for (std::size_t i = s.steps.size(); i-- > 0;) {
        o << px(sx(static_cast<double>(s.steps[i]))) << ',' << px(sy(s.mean[i] - s.std[i])) << ' ';
      }
      o << "\"/>\n<polyline class=\"mean\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < s.steps.size(); ++i) {
        o << px(sx(static_cast<double>(s.steps[i]))) << ',' << px(sy(s.mean[i])) << ' ';
      }
      o << "\"/>\n";
      for (std::size_t i = 0; i < s.steps.size(); ++i) {
        o << "<circle cx=\"" << px(sx(static_cast<double>(s.steps[i]))) << "\" cy=\"" << px(sy(s.mean[i]))
          << "\" r=\"2\" fill=\"" << color << "\" data-step=\"" << s.steps[i] << "\" data-mean=\"" << num(s.mean[i])
          << "\" data-std=\"" << num(s.std[i]) << "\"/>\n";
      }
    }
    o << "<text x=\"" << px(left + 10) << "\" y=\"" << px(top + 14 + 16.0 * static_cast<double>(k))
      << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color << "\">" << escape(s.label) << "</text>\n";
    o << "</g>\n";
  }
  if (opt.reference) {
    o << "<line class=\"reference\" x1=\"" << px(left) << "\" y1=\"" << px(sy(*opt.reference)) << "\" x2=\"" << px(left + w)
      << "\" y2=\"" << px(sy(*opt.reference)) << "\" stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\" data-value=\""
      << num(*opt.reference) << "\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace sero
