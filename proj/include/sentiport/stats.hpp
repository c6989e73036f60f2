#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sentiport/error.hpp"

namespace sentiport::stats {

/// Outcome of a hypothesis test. `df2` is NaN for single-df statistics.
struct TestResult {
  double statistic = 0.0;
  double df1 = std::numeric_limits<double>::quiet_NaN();
  double df2 = std::numeric_limits<double>::quiet_NaN();
  double p_value = 1.0;
  bool reject_at_005 = false;
};

inline TestResult make_result(double statistic, double df1, double df2, double p) {
  p = std::clamp(p, 0.0, 1.0);
  return {statistic, df1, df2, p, p < 0.05};
}

// ---------------------------------------------------------------------------
// Distribution functions

namespace detail {

inline constexpr double kBetaCfTolerance = 1e-12;
inline constexpr int kBetaCfMaxIterations = 300;

/// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kBetaCfMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kBetaCfTolerance) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0 && b > 0)) throw DegenerateInputError("incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

/// Upper tail P(T > t) of Student's t with `df` degrees of freedom.
inline double student_t_sf(double t, double df) {
  if (!(df > 0)) throw DegenerateInputError("t distribution needs df > 0");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t >= 0 ? tail : 1.0 - tail;
}

inline double two_sided_t_p(double t, double df) { return std::min(1.0, 2.0 * student_t_sf(std::abs(t), df)); }

/// Upper tail P(X > f) of the F distribution with (df1, df2).
inline double f_sf(double f, double df1, double df2) {
  if (!(df1 > 0 && df2 > 0)) throw DegenerateInputError("F distribution needs positive df");
  if (f <= 0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * f));
}

// ---------------------------------------------------------------------------
// Descriptive helpers

inline double mean(std::span<const double> x) {
  if (x.empty()) throw InsufficientDataError("mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double stddev(std::span<const double> x) {
  if (x.size() < 2) throw InsufficientDataError("stddev needs at least 2 values");
  const double m = mean(x);
  double ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// ---------------------------------------------------------------------------
// Tests

/// Pearson product-moment correlation; statistic is r, p two-sided via t(n-2).
inline TestResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("pearson: series lengths differ");
  const std::size_t n = x.size();
  if (n < 3) throw InsufficientDataError("pearson needs at least 3 pairs");
  const double mx = mean(x), my = mean(y);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0 || syy <= 0) throw DegenerateInputError("pearson: zero-variance input");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  const double one_minus = 1.0 - r * r;
  const double p = one_minus <= 0 ? 0.0 : two_sided_t_p(r * std::sqrt(df / one_minus), df);
  return make_result(r, df, std::numeric_limits<double>::quiet_NaN(), p);
}

/// Paired two-sided t-test on a - b.
inline TestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired t-test: sample lengths differ");
  const std::size_t n = a.size();
  if (n < 2) throw InsufficientDataError("paired t-test needs at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double sd = stddev(d);
  if (!(sd > 0)) throw DegenerateInputError("paired t-test: differences have zero variance");
  const double t = mean(d) / (sd / std::sqrt(static_cast<double>(n)));
  const double df = static_cast<double>(n - 1);
  return make_result(t, df, std::numeric_limits<double>::quiet_NaN(), two_sided_t_p(t, df));
}

// ---------------------------------------------------------------------------
// Least squares

/// Dense row-major design matrix.
struct Design {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  Design(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct OlsFit {
  std::vector<double> coefficients;
  double rss = 0.0;
};

/// Least squares by Householder QR. The caller supplies the intercept column.
inline OlsFit ols(std::span<const double> y, const Design& x) {
  const std::size_t n = x.rows, k = x.cols;
  if (y.size() != n) throw DimensionError("ols: target length differs from design rows");
  if (n <= k) throw InsufficientDataError("ols: need more rows than columns");

  // Column-major working copy of [X | y].
  std::vector<double> a(n * (k + 1));
  auto A = [&](std::size_t r, std::size_t c) -> double& { return a[c * n + r]; };
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) A(r, c) = x(r, c);
    A(r, k) = y[r];
  }
  std::vector<double> col_norm(k);
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0;
    for (std::size_t r = 0; r < n; ++r) s += A(r, c) * A(r, c);
    col_norm[c] = std::sqrt(s);
  }

  for (std::size_t j = 0; j < k; ++j) {
    double norm = 0;
    for (std::size_t r = j; r < n; ++r) norm += A(r, j) * A(r, j);
    norm = std::sqrt(norm);
    if (norm <= 1e-10 * std::max(col_norm[j], 1e-300)) throw SingularDesignError("ols: design matrix is rank deficient");
    const double alpha = A(j, j) > 0 ? -norm : norm;
    // v = x - alpha e1, stored in place below the diagonal.
    A(j, j) -= alpha;
    double vnorm2 = 0;
    for (std::size_t r = j; r < n; ++r) vnorm2 += A(r, j) * A(r, j);
    for (std::size_t c = j + 1; c <= k; ++c) {
      double dot = 0;
      for (std::size_t r = j; r < n; ++r) dot += A(r, j) * A(r, c);
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t r = j; r < n; ++r) A(r, c) -= f * A(r, j);
    }
    A(j, j) = alpha;
    for (std::size_t r = j + 1; r < n; ++r) A(r, j) = 0.0;
  }

  OlsFit fit;
  fit.coefficients.assign(k, 0.0);
  for (std::size_t jj = k; jj-- > 0;) {
    double s = A(jj, k);
    for (std::size_t c = jj + 1; c < k; ++c) s -= A(jj, c) * fit.coefficients[c];
    fit.coefficients[jj] = s / A(jj, jj);
  }
  for (std::size_t r = 0; r < n; ++r) {
    double pred = 0;
    for (std::size_t c = 0; c < k; ++c) pred += x(r, c) * fit.coefficients[c];
    const double e = y[r] - pred;
    fit.rss += e * e;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Granger causality

struct GrangerLag {
  std::size_t lag = 0;
  TestResult test;
  double rss_restricted = 0.0;
  double rss_unrestricted = 0.0;
};

struct GrangerReport {
  std::vector<GrangerLag> lags;
};

/// Does `driver` Granger-cause `target`? Nested-model F test at each lag
/// 1..max_lag, both models fitted on the same rows (the first n dropped).
inline GrangerReport granger(std::span<const double> target, std::span<const double> driver, std::size_t max_lag) {
  if (target.size() != driver.size()) throw DimensionError("granger: series lengths differ");
  if (max_lag == 0) throw ConfigError("granger: max_lag must be at least 1");
  const std::size_t len = target.size();
  if (len <= 3 * max_lag + 1)
    throw InsufficientDataError("granger: " + std::to_string(len) + " rows too few for lag " + std::to_string(max_lag));

  GrangerReport report;
  for (std::size_t n = 1; n <= max_lag; ++n) {
    const std::size_t t_rows = len - n;
    Design restricted(t_rows, 1 + n), full(t_rows, 1 + 2 * n);
    std::vector<double> y(t_rows);
    for (std::size_t i = 0; i < t_rows; ++i) {
      const std::size_t t = i + n;
      y[i] = target[t];
      restricted(i, 0) = full(i, 0) = 1.0;
      for (std::size_t l = 1; l <= n; ++l) {
        restricted(i, l) = full(i, l) = target[t - l];
        full(i, n + l) = driver[t - l];
      }
    }
    const auto fit_r = ols(y, restricted);
    const auto fit_u = ols(y, full);
    const double df1 = static_cast<double>(n);
    const double df2 = static_cast<double>(t_rows - 2 * n - 1);
    if (!(fit_u.rss > 0)) throw DegenerateInputError("granger: unrestricted model fits exactly");
    const double f = std::max(0.0, (fit_r.rss - fit_u.rss) / df1) / (fit_u.rss / df2);
    report.lags.push_back({n, make_result(f, df1, df2, f_sf(f, df1, df2)), fit_r.rss, fit_u.rss});
  }
  return report;
}

}  // namespace sentiport::stats
