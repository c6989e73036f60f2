#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sentiport/error.hpp"
#include "sentiport/market_data.hpp"
#include "sentiport/rng.hpp"

namespace sentiport::portfolio {

/// Long-only, fully invested allocation.
struct Weights {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }

  static Weights equal(std::size_t n) { return {std::vector<double>(n, 1.0 / static_cast<double>(n))}; }
  static Weights basis(std::size_t n, std::size_t k) {
    Weights w{std::vector<double>(n, 0.0)};
    w.values[k] = 1.0;
    return w;
  }

  bool valid(double tol = 1e-9) const {
    if (values.empty()) return false;
    double s = 0;
    for (double v : values) {
      if (!(v >= 0.0)) return false;
      s += v;
    }
    return std::abs(s - 1.0) <= tol;
  }

  bool operator==(const Weights&) const = default;
};

/// Per-period expected returns and covariance (row-major N x N).
struct Moments {
  std::vector<double> mu;
  std::vector<double> cov;

  std::size_t size() const noexcept { return mu.size(); }
  double covariance(std::size_t i, std::size_t j) const { return cov[i * mu.size() + j]; }
};

struct FrontierSample {
  Weights weights;
  double exp_return = 0.0;
  double volatility = 0.0;
  double sharpe = 0.0;
};

/// Volatility below this counts as riskless; its Sharpe is defined as 0.
inline constexpr double kMinVolatility = 1e-12;

/// Uniform draws on the probability simplex, stored flat (count x n).
struct SimplexSamples {
  std::size_t n_assets = 0;
  std::vector<double> flat;

  std::size_t count() const noexcept { return n_assets == 0 ? 0 : flat.size() / n_assets; }
  std::span<const double> operator[](std::size_t i) const { return {flat.data() + i * n_assets, n_assets}; }
};

/// Normalized i.i.d. unit exponentials, which are uniform on the simplex.
/// Sample i depends only on the seed and i's position in the stream, so a
/// longer run extends a shorter one.
inline SimplexSamples sample_simplex_flat(std::size_t n_assets, std::size_t count, std::uint64_t seed) {
  if (n_assets == 0 || count == 0) throw ConfigError("simplex sampling needs n_assets >= 1 and count >= 1");
  SimplexSamples s{n_assets, std::vector<double>(n_assets * count)};
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    double* w = s.flat.data() + i * n_assets;
    double total = 0;
    for (std::size_t a = 0; a < n_assets; ++a) total += (w[a] = rng.exponential());
    if (!(total > 0)) {
      std::fill(w, w + n_assets, 1.0 / static_cast<double>(n_assets));
      continue;
    }
    for (std::size_t a = 0; a < n_assets; ++a) w[a] /= total;
  }
  return s;
}

inline std::vector<Weights> sample_simplex(std::size_t n_assets, std::size_t count, std::uint64_t seed) {
  const auto flat = sample_simplex_flat(n_assets, count, seed);
  std::vector<Weights> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back({std::vector<double>(flat[i].begin(), flat[i].end())});
  return out;
}

/// Sample mean and (n-1) covariance. `returns[a]` is asset a's series.
inline Moments estimate_moments(const std::vector<std::vector<double>>& returns) {
  if (returns.empty()) throw InsufficientDataError("no assets for moment estimation");
  const std::size_t n = returns.size(), len = returns.front().size();
  for (const auto& r : returns)
    if (r.size() != len) throw DimensionError("return series lengths differ");
  if (len < 2) throw InsufficientDataError("moment estimation needs at least 2 returns");
  Moments m{std::vector<double>(n), std::vector<double>(n * n)};
  for (std::size_t a = 0; a < n; ++a)
    m.mu[a] = std::accumulate(returns[a].begin(), returns[a].end(), 0.0) / static_cast<double>(len);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < len; ++t) s += (returns[i][t] - m.mu[i]) * (returns[j][t] - m.mu[j]);
      m.cov[i * n + j] = m.cov[j * n + i] = s / static_cast<double>(len - 1);
    }
  return m;
}

namespace detail {

struct Stats {
  double ret, vol, sharpe;
};

inline Stats stats_of(std::span<const double> w, const Moments& m, double risk_free) {
  const std::size_t n = m.size();
  double ret = 0, var = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ret += w[i] * m.mu[i];
    double row = 0;
    for (std::size_t j = 0; j < n; ++j) row += m.cov[i * n + j] * w[j];
    var += w[i] * row;
  }
  const double vol = std::sqrt(std::max(var, 0.0));
  return {ret, vol, vol < kMinVolatility ? 0.0 : (ret - risk_free) / vol};
}

}  // namespace detail

inline FrontierSample portfolio_stats(const Weights& w, const Moments& m, double risk_free = 0.0) {
  if (w.size() != m.size() || m.cov.size() != m.size() * m.size()) throw DimensionError("weights/moments size mismatch");
  const auto s = detail::stats_of(w.values, m, risk_free);
  return {w, s.ret, s.vol, s.sharpe};
}

/// Return, volatility and Sharpe of every sample; evaluation is split across
/// `threads` workers, output order follows sample order.
inline std::vector<FrontierSample> evaluate_frontier(const SimplexSamples& samples, const Moments& m,
                                                     double risk_free = 0.0, unsigned threads = 1) {
  if (samples.n_assets != m.size()) throw DimensionError("sample width differs from moments");
  std::vector<FrontierSample> out(samples.count());
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto s = detail::stats_of(samples[i], m, risk_free);
      out[i] = {{std::vector<double>(samples[i].begin(), samples[i].end())}, s.ret, s.vol, s.sharpe};
    }
  };
  const std::size_t n = out.size(), t = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < t; ++k) pool.emplace_back(work, n * k / t, n * (k + 1) / t);
  work(0, n / t);
  for (auto& th : pool) th.join();
  return out;
}

struct Selection {
  FrontierSample best;
  std::size_t index = 0;
};

/// Maximum-Sharpe sample, ties to the lowest index. Riskless samples are
/// skipped. Each worker scans a contiguous index block and the partial
/// winners are reduced in block order, so any worker count gives the same answer.
inline Selection select_max_sharpe(const SimplexSamples& samples, const Moments& m, double risk_free = 0.0,
                                   unsigned threads = 1) {
  if (samples.n_assets != m.size()) throw DimensionError("sample width differs from moments");
  struct Best {
    double sharpe = -std::numeric_limits<double>::infinity();
    std::size_t index = 0;
    bool found = false;
  };
  const std::size_t n = samples.count();
  const std::size_t t = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  std::vector<Best> partial(t);
  auto scan = [&](std::size_t k) {
    Best b;
    for (std::size_t i = n * k / t; i < n * (k + 1) / t; ++i) {
      const auto s = detail::stats_of(samples[i], m, risk_free);
      if (s.vol < kMinVolatility) continue;
      if (!b.found || s.sharpe > b.sharpe) b = {s.sharpe, i, true};
    }
    partial[k] = b;
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < t; ++k) pool.emplace_back(scan, k);
  scan(0);
  for (auto& th : pool) th.join();

  Best best;
  for (const auto& b : partial)
    if (b.found && (!best.found || b.sharpe > best.sharpe)) best = b;
  if (!best.found) throw DegenerateInputError("every sampled portfolio has zero volatility");
  const Weights w{std::vector<double>(samples[best.index].begin(), samples[best.index].end())};
  return {portfolio_stats(w, m, risk_free), best.index};
}

inline Selection mean_variance_select(const Moments& m, std::size_t count, std::uint64_t seed, double risk_free = 0.0,
                                      unsigned threads = 1) {
  return select_max_sharpe(sample_simplex_flat(m.size(), count, seed), m, risk_free, threads);
}

// ---------------------------------------------------------------------------
// Allocation strategies

enum class StrategyKind { BuyAndHold, Rebalancing, BestStock, MeanVariancePredictive };

struct PredictiveOptions {
  std::size_t cov_window = 50;
  std::size_t sample_count = 50000;
  std::uint64_t seed = 7;
  double risk_free = 0.0;
  unsigned threads = 1;
};

/// Weights for each holding period inside `range`. Period k runs from row
/// range.begin + k to range.begin + k + 1 and its weights use information up
/// to and including row range.begin + k only.
///
/// For MeanVariancePredictive, `predicted[k]` is the forecast price vector for
/// row range.begin + k + 1; expected returns are forecast / last close - 1 and
/// the covariance comes from up to `cov_window` trailing daily returns (rows
/// before `range` included). With fewer than 2 trailing returns the period
/// falls back to equal weights.
inline std::vector<Weights> strategy_weights(StrategyKind kind, const AlignedPanel& panel, RowRange range,
                                             const std::vector<std::vector<double>>& predicted = {},
                                             const PredictiveOptions& opt = {}) {
  if (range.size() < 2) throw InsufficientDataError("strategy needs at least 2 rows");
  const std::size_t n = panel.num_assets(), periods = range.size() - 1;
  std::vector<Weights> out;
  out.reserve(periods);

  switch (kind) {
    case StrategyKind::Rebalancing:
      out.assign(periods, Weights::equal(n));
      break;

    case StrategyKind::BuyAndHold: {
      Weights w = Weights::equal(n);
      for (std::size_t k = 0; k < periods; ++k) {
        out.push_back(w);
        const std::size_t r = range.begin + k + 1;
        double total = 0;
        for (std::size_t a = 0; a < n; ++a) total += (w.values[a] *= panel.price(r, a) / panel.price(r - 1, a));
        for (auto& v : w.values) v /= total;
      }
      break;
    }

    case StrategyKind::BestStock:
      for (std::size_t k = 0; k < periods; ++k) {
        const std::size_t last = range.begin + k;
        if (k == 0) {
          out.push_back(Weights::equal(n));
          continue;
        }
        std::size_t best = 0;
        double best_growth = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < n; ++a) {
          const double g = panel.price(last, a) / panel.price(range.begin, a);
          if (g > best_growth) best_growth = g, best = a;
        }
        out.push_back(Weights::basis(n, best));
      }
      break;

    case StrategyKind::MeanVariancePredictive: {
      if (predicted.size() != periods) throw AlignmentError("predictions do not cover every holding period");
      const auto samples = sample_simplex_flat(n, opt.sample_count, opt.seed);
      for (std::size_t k = 0; k < periods; ++k) {
        const std::size_t last = range.begin + k;
        const std::size_t first = last >= opt.cov_window ? last - opt.cov_window : 0;
        if (last - first < 2) {
          out.push_back(Weights::equal(n));
          continue;
        }
        std::vector<std::vector<double>> rets(n);
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t r = first + 1; r <= last; ++r) rets[a].push_back(panel.price(r, a) / panel.price(r - 1, a) - 1.0);
        Moments m = estimate_moments(rets);
        if (predicted[k].size() != n) throw DimensionError("prediction width differs from asset count");
        for (std::size_t a = 0; a < n; ++a) m.mu[a] = predicted[k][a] / panel.price(last, a) - 1.0;
        out.push_back(select_max_sharpe(samples, m, opt.risk_free, opt.threads).best.weights);
      }
      break;
    }
  }
  return out;
}

}  // namespace sentiport::portfolio
