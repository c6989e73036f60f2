#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sentiport/csv.hpp"
#include "sentiport/date.hpp"
#include "sentiport/error.hpp"
#include "sentiport/portfolio.hpp"
#include "sentiport/stats.hpp"

namespace sentiport::backtest {

using portfolio::Weights;

/// Capital through time. values[0] is the initial capital; values[k+1]
/// follows period k, which was held with weights[k].
struct WealthCurve {
  std::vector<Date> dates;
  std::vector<double> values;
  std::vector<Weights> weights;

  std::size_t periods() const noexcept { return values.empty() ? 0 : values.size() - 1; }
};

inline constexpr double kDefaultCapital = 10000.0;
inline constexpr double kTradingDaysPerYear = 252.0;
/// Benchmark days with |return| below this are skipped in the Sharpe ratio.
inline constexpr double kBenchmarkReturnFloor = 1e-8;

/// w_t = w_{t-1} * sum_n r_n^t s_n^t with r the gross price relatives.
inline WealthCurve run_backtest(const std::vector<Weights>& weights, const std::vector<std::vector<double>>& gross,
                                double initial_capital = kDefaultCapital, std::vector<Date> dates = {}) {
  if (weights.size() != gross.size())
    throw AlignmentError("weights cover " + std::to_string(weights.size()) + " periods, returns cover " +
                         std::to_string(gross.size()));
  if (!dates.empty() && dates.size() != gross.size() + 1)
    throw AlignmentError("wealth curve needs one more date than periods");
  if (!(initial_capital > 0)) throw ValidationError("initial capital must be positive");
  WealthCurve c;
  c.dates = std::move(dates);
  c.values.reserve(gross.size() + 1);
  c.values.push_back(initial_capital);
  for (std::size_t t = 0; t < gross.size(); ++t) {
    const auto& w = weights[t];
    if (!w.valid()) throw ValidationError("invalid weights in period " + std::to_string(t));
    if (w.size() != gross[t].size()) throw DimensionError("weights and returns differ in asset count");
    double growth = 0;
    for (std::size_t a = 0; a < w.size(); ++a) {
      if (!(gross[t][a] > 0)) throw ValidationError("gross return must be positive");
      growth += gross[t][a] * w[a];
    }
    c.values.push_back(c.values.back() * growth);
  }
  c.weights = weights;
  return c;
}

inline double fapv(const WealthCurve& c) {
  if (c.values.empty()) throw InsufficientDataError("empty wealth curve");
  return c.values.back() / c.values.front();
}

inline double benchmark_value(const WealthCurve& c, const WealthCurve& bh) {
  if (c.values.empty() || bh.values.empty()) throw InsufficientDataError("empty wealth curve");
  if (c.values.size() != bh.values.size()) throw AlignmentError("benchmark curve spans different dates");
  return c.values.back() / bh.values.back();
}

inline std::vector<double> simple_returns(const WealthCurve& c) {
  std::vector<double> r;
  for (std::size_t t = 1; t < c.values.size(); ++t) r.push_back(c.values[t] / c.values[t - 1] - 1.0);
  return r;
}

/// Mean of per-day return ratios to Buy-and-Hold over the ratio of return
/// standard deviations. Buy-and-Hold against itself is exactly 1.
inline double sharpe_vs_bh(std::span<const double> rp, std::span<const double> rbh) {
  if (rp.size() != rbh.size()) throw AlignmentError("return streams differ in length");
  if (rp.size() < 2) throw InsufficientDataError("Sharpe ratio needs at least 2 returns");
  double sum = 0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < rp.size(); ++t) {
    if (std::abs(rbh[t]) < kBenchmarkReturnFloor) continue;
    sum += rp[t] / rbh[t];
    ++used;
  }
  if (used == 0) throw DegenerateInputError("every benchmark return is below the ratio floor");
  const double sd_bh = stats::stddev(rbh), sd_p = stats::stddev(rp);
  if (!(sd_bh > 0) || !(sd_p > 0)) throw DegenerateInputError("zero return volatility in Sharpe ratio");
  return (sum / static_cast<double>(used)) / (sd_p / sd_bh);
}

/// max over t < T of (V_t - V_T) / V_t, floored at 0: the largest relative
/// fall from any earlier point to the final value.
inline double max_drawdown(std::span<const double> values) {
  if (values.size() < 2) throw InsufficientDataError("drawdown needs at least 2 values");
  const double last = values.back();
  double worst = 0.0;
  for (std::size_t t = 0; t + 1 < values.size(); ++t) worst = std::max(worst, (values[t] - last) / values[t]);
  return worst;
}

/// Conventional running peak-to-trough drawdown.
inline double peak_to_trough_drawdown(std::span<const double> values) {
  if (values.size() < 2) throw InsufficientDataError("drawdown needs at least 2 values");
  double peak = values.front(), worst = 0.0;
  for (double v : values) {
    peak = std::max(peak, v);
    worst = std::max(worst, (peak - v) / peak);
  }
  return worst;
}

/// fapv^(252 / periods) - 1.
inline double annualized_return(const WealthCurve& c, double trading_days = kTradingDaysPerYear) {
  if (c.values.size() < 2) throw InsufficientDataError("annualized return needs at least 2 values");
  return std::pow(fapv(c), trading_days / static_cast<double>(c.periods())) - 1.0;
}

/// One row of the performance table.
struct PerfReport {
  std::string name;
  double final_capital = 0;
  double fapv = 0;
  double bv = 0;
  double sharpe_vs_bh = 0;
  double mdd = 0;            ///< literal final-value drawdown, fraction
  double mdd_peak = 0;       ///< peak-to-trough drawdown, fraction
  double annualized_return = 0;
};

inline PerfReport evaluate(const std::string& name, const WealthCurve& c, const WealthCurve& bh) {
  PerfReport p;
  p.name = name;
  p.final_capital = c.values.back();
  p.fapv = fapv(c);
  p.bv = benchmark_value(c, bh);
  try {
    p.sharpe_vs_bh = sharpe_vs_bh(simple_returns(c), simple_returns(bh));
  } catch (const DegenerateInputError&) {
    p.sharpe_vs_bh = std::numeric_limits<double>::quiet_NaN();
  }
  p.mdd = max_drawdown(c.values);
  p.mdd_peak = peak_to_trough_drawdown(c.values);
  p.annualized_return = annualized_return(c);
  return p;
}

/// Table columns after the model name.
inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols = {"Capital", "fAPV", "BV", "SR", "MDD(%)", "AR(%)"};
  return cols;
}

inline std::string format_report_csv(const std::vector<PerfReport>& rows, const std::string& preamble = {}) {
  std::string out = preamble + "Models";
  for (const auto& c : report_columns()) out += "," + c;
  out += "\n";
  for (const auto& r : rows) {
    out += csv::escape(r.name) + "," + csv::fixed(r.final_capital, 2) + "," + csv::fixed(r.fapv, 4) + "," +
           csv::fixed(r.bv, 4) + "," + csv::fixed(r.sharpe_vs_bh, 4) + "," + csv::fixed(100.0 * r.mdd, 2) + "," +
           csv::fixed(100.0 * r.annualized_return, 2) + "\n";
  }
  return out;
}

/// Per-date wealth of several strategies side by side.
inline std::string format_curves_csv(const std::vector<std::string>& names, const std::vector<WealthCurve>& curves,
                                     const std::string& preamble = {}) {
  std::string out = preamble + "date";
  for (const auto& n : names) out += "," + csv::escape(n);
  out += "\n";
  if (curves.empty()) return out;
  for (std::size_t t = 0; t < curves.front().values.size(); ++t) {
    out += curves.front().dates.empty() ? std::to_string(t) : curves.front().dates[t].iso();
    for (const auto& c : curves) out += "," + csv::fixed(c.values[t], 6);
    out += "\n";
  }
  return out;
}

/// Significance of final-capital differences across seeded replicates.
struct ReplicateComparison {
  std::vector<double> with_sentiment, without_sentiment;
  double mean_with = 0, mean_without = 0, sd_with = 0, sd_without = 0;
  stats::TestResult test;
};

inline ReplicateComparison compare_replicates(std::vector<double> with_sentiment, std::vector<double> without_sentiment) {
  ReplicateComparison c;
  c.test = stats::paired_t_test(with_sentiment, without_sentiment);
  c.mean_with = stats::mean(with_sentiment);
  c.mean_without = stats::mean(without_sentiment);
  c.sd_with = stats::stddev(with_sentiment);
  c.sd_without = stats::stddev(without_sentiment);
  c.with_sentiment = std::move(with_sentiment);
  c.without_sentiment = std::move(without_sentiment);
  return c;
}

}  // namespace sentiport::backtest
