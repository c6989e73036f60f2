#pragma once

// Minimal SVG charts for wealth curves, frontier scatter and histograms.
// Coordinates are printed with fixed precision so output is byte-stable.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sentiport/csv.hpp"

namespace sentiport::svg {

namespace detail {

inline constexpr double kWidth = 800, kHeight = 480, kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

inline std::string num(double v) { return csv::fixed(v, 2); }

inline std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
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

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (kHeight - kTop - kBottom); }
};

inline std::string open(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + esc(title) +
         "</text>\n";
}

inline std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel,
                        const std::string& x_lo, const std::string& x_hi, int y_decimals) {
  std::string s;
  const double bx = kLeft, by = kHeight - kBottom, tx = kWidth - kRight, ty = kTop;
  s += "<path d=\"M" + num(bx) + " " + num(ty) + " L" + num(bx) + " " + num(by) + " L" + num(tx) + " " + num(by) +
       "\" stroke=\"black\" fill=\"none\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = f.y0 + (f.y1 - f.y0) * k / 4.0;
    s += "<text x=\"" + num(bx - 6) + "\" y=\"" + num(f.py(v) + 4) + "\" text-anchor=\"end\">" +
         csv::fixed(v, y_decimals) + "</text>\n";
  }
  s += "<text x=\"" + num(bx) + "\" y=\"" + num(by + 18) + "\">" + esc(x_lo) + "</text>\n";
  s += "<text x=\"" + num(tx) + "\" y=\"" + num(by + 18) + "\" text-anchor=\"end\">" + esc(x_hi) + "</text>\n";
  s += "<text x=\"" + num((bx + tx) / 2) + "\" y=\"" + num(kHeight - 10) + "\" text-anchor=\"middle\">" + esc(xlabel) +
       "</text>\n";
  s += "<text x=\"16\" y=\"" + num((by + ty) / 2) + "\" transform=\"rotate(-90 16 " + num((by + ty) / 2) +
       ")\" text-anchor=\"middle\">" + esc(ylabel) + "</text>\n";
  return s;
}

inline std::string legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 10 + 20.0 * static_cast<double>(i);
    s += "<rect x=\"" + num(kWidth - kRight + 15) + "\" y=\"" + num(y - 9) + "\" width=\"12\" height=\"12\" fill=\"" +
         color(i) + "\"/>\n<text x=\"" + num(kWidth - kRight + 32) + "\" y=\"" + num(y + 1) + "\">" + esc(names[i]) +
         "</text>\n";
  }
  return s;
}

inline std::pair<double, double> range_of(const std::vector<std::vector<double>>& series) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series)
    for (double v : s)
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!(lo <= hi)) return {0, 1};
  if (lo == hi) return {lo - 1, hi + 1};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace detail

/// One polyline per series over a shared index axis.
inline std::string line_chart(const std::string& title, const std::vector<std::string>& names,
                              const std::vector<std::vector<double>>& series, const std::string& x_first,
                              const std::string& x_last, const std::string& ylabel) {
  using namespace detail;
  std::size_t n = 0;
  for (const auto& s : series) n = std::max(n, s.size());
  const auto [lo, hi] = range_of(series);
  const Frame f{0, static_cast<double>(n > 1 ? n - 1 : 1), lo, hi};
  std::string out = open(title) + axes(f, "date", ylabel, x_first, x_last, 0);
  for (std::size_t i = 0; i < series.size(); ++i) {
    out += "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" + std::string(color(i)) + "\" points=\"";
    for (std::size_t t = 0; t < series[i].size(); ++t)
      out += (t ? " " : "") + num(f.px(static_cast<double>(t))) + "," + num(f.py(series[i][t]));
    out += "\"/>\n";
  }
  return out + legend(names) + "</svg>\n";
}

/// Scatter of (x, y); point `highlight` (if in range) is drawn large and red.
inline std::string scatter(const std::string& title, const std::vector<double>& x, const std::vector<double>& y,
                           const std::string& xlabel, const std::string& ylabel, std::size_t highlight = SIZE_MAX,
                           std::size_t max_points = 5000) {
  using namespace detail;
  const auto [x0, x1] = range_of({x});
  const auto [y0, y1] = range_of({y});
  const Frame f{x0, x1, y0, y1};
  std::string out = open(title) + axes(f, xlabel, ylabel, csv::fixed(x0, 4), csv::fixed(x1, 4), 4);
  const std::size_t stride = std::max<std::size_t>(1, x.size() / std::max<std::size_t>(1, max_points));
  for (std::size_t i = 0; i < x.size(); i += stride)
    out += "<circle cx=\"" + num(f.px(x[i])) + "\" cy=\"" + num(f.py(y[i])) + "\" r=\"1.5\" fill=\"#1f77b4\" fill-opacity=\"0.5\"/>\n";
  if (highlight < x.size())
    out += "<circle cx=\"" + num(f.px(x[highlight])) + "\" cy=\"" + num(f.py(y[highlight])) +
           "\" r=\"6\" fill=\"#d62728\"/>\n";
  return out + "</svg>\n";
}

/// Overlaid step histograms over a common set of bins.
inline std::string histograms(const std::string& title, const std::vector<std::string>& names,
                              const std::vector<std::vector<double>>& samples, std::size_t bins,
                              const std::string& xlabel) {
  using namespace detail;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : samples)
    for (double v : s) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!(lo <= hi)) lo = 0, hi = 1;
  if (lo == hi) hi = lo + 1;
  std::vector<std::vector<double>> counts(samples.size(), std::vector<double>(bins, 0.0));
  double top = 1;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (double v : samples[i]) {
      auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
      counts[i][std::min(b, bins - 1)] += 1;
    }
    for (double c : counts[i]) top = std::max(top, c);
  }
  const Frame f{lo, hi, 0, top};
  std::string out = open(title) + axes(f, xlabel, "count", csv::fixed(lo, 2), csv::fixed(hi, 2), 0);
  const double w = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out += "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" + std::string(color(i)) + "\" points=\"";
    for (std::size_t b = 0; b < bins; ++b) {
      const double xl = lo + w * static_cast<double>(b);
      out += (b ? " " : "") + num(f.px(xl)) + "," + num(f.py(counts[i][b])) + " " + num(f.px(xl + w)) + "," +
             num(f.py(counts[i][b]));
    }
    out += "\"/>\n";
  }
  return out + legend(names) + "</svg>\n";
}

}  // namespace sentiport::svg
