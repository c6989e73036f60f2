#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sentiport/csv.hpp"
#include "sentiport/date.hpp"
#include "sentiport/error.hpp"

namespace sentiport {

/// Daily adjusted close and volume for one asset.
struct PriceSeries {
  std::string asset_id;
  std::vector<Date> dates;
  std::vector<double> adj_close;
  std::vector<double> volume;

  std::size_t size() const noexcept { return dates.size(); }

  /// Throws ValidationError if any invariant fails.
  void validate() const {
    if (adj_close.size() != dates.size() || volume.size() != dates.size())
      throw ValidationError(asset_id + ": column lengths differ");
    for (std::size_t i = 0; i < dates.size(); ++i) {
      if (i > 0 && !(dates[i - 1] < dates[i]))
        throw ValidationError(asset_id + ": dates not strictly increasing at " + dates[i].iso());
      if (!(adj_close[i] > 0) || !std::isfinite(adj_close[i]))
        throw ValidationError(asset_id + ": non-positive adj_close on " + dates[i].iso());
      if (!(volume[i] >= 0))
        throw ValidationError(asset_id + ": negative volume on " + dates[i].iso());
    }
  }
};

/// Period returns; entry i covers dates[i-1] -> dates[i] of the price series,
/// and is stamped with the later date.
struct ReturnSeries {
  std::string asset_id;
  std::vector<Date> dates;
  std::vector<double> gross;
  std::vector<double> simple;
};

/// Column names for price CSV ingestion.
struct PriceSchema {
  std::string date = "date";
  std::string adj_close = "adj_close";
  std::string volume = "volume";
};

/// Per-day engagement features for one asset. Days without any sentiment
/// record take the neutral defaults.
struct DailyFeatures {
  Date date;
  double likes = 0;
  double retweets = 0;
  double comments = 0;
  double ratio = 1.0;
};

/// Feature slot order within one asset's block of a panel row.
enum class Feature : std::size_t { AdjClose = 0, Likes, Retweets, Comments, Volume, Ratio };
inline constexpr std::size_t kFeaturesPerAsset = 6;
inline constexpr std::array<const char*, kFeaturesPerAsset> kFeatureNames = {
    "adj_close", "likes", "retweets", "comments", "volume", "ratio"};

/// Half-open row interval [begin, end).
struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  bool operator==(const RowRange&) const = default;
};

/// Date-aligned feature matrix for a fixed asset universe. Row-major; each
/// row holds kFeaturesPerAsset columns per asset, asset-major.
class AlignedPanel {
 public:
  AlignedPanel() = default;
  AlignedPanel(std::vector<std::string> assets, std::vector<Date> dates)
      : assets_(std::move(assets)), dates_(std::move(dates)),
        values_(dates_.size() * assets_.size() * kFeaturesPerAsset, 0.0) {}

  const std::vector<std::string>& assets() const noexcept { return assets_; }
  const std::vector<Date>& dates() const noexcept { return dates_; }
  std::size_t rows() const noexcept { return dates_.size(); }
  std::size_t width() const noexcept { return assets_.size() * kFeaturesPerAsset; }
  std::size_t num_assets() const noexcept { return assets_.size(); }
  bool empty() const noexcept { return dates_.empty(); }

  static std::size_t column(std::size_t asset, Feature f) noexcept {
    return asset * kFeaturesPerAsset + static_cast<std::size_t>(f);
  }

  double& at(std::size_t row, std::size_t col) { return values_[row * width() + col]; }
  double at(std::size_t row, std::size_t col) const { return values_[row * width() + col]; }
  double& at(std::size_t row, std::size_t asset, Feature f) { return at(row, column(asset, f)); }
  double at(std::size_t row, std::size_t asset, Feature f) const { return at(row, column(asset, f)); }
  double price(std::size_t row, std::size_t asset) const { return at(row, asset, Feature::AdjClose); }

  std::span<const double> row(std::size_t r) const { return {values_.data() + r * width(), width()}; }

  std::vector<std::size_t> columns_of(Feature f) const {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < assets_.size(); ++a) out.push_back(column(a, f));
    return out;
  }

  std::vector<std::string> column_names() const {
    std::vector<std::string> out;
    for (const auto& a : assets_)
      for (const char* f : kFeatureNames) out.push_back(a + "." + f);
    return out;
  }

  AlignedPanel slice(RowRange r) const {
    AlignedPanel out(assets_, std::vector<Date>(dates_.begin() + r.begin, dates_.begin() + r.end));
    std::copy(values_.begin() + r.begin * width(), values_.begin() + r.end * width(), out.values_.begin());
    return out;
  }

  bool operator==(const AlignedPanel&) const = default;

 private:
  std::vector<std::string> assets_;
  std::vector<Date> dates_;
  std::vector<double> values_;
};

struct SplitSpec {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;

  void validate() const {
    for (double f : {train, validation, test})
      if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0,1)");
    if (std::abs(train + validation + test - 1.0) > 1e-12) throw ConfigError("split fractions must sum to 1");
  }
};

/// Contiguous train -> validation -> test segments.
struct Split {
  RowRange train, validation, test;
};

// ---------------------------------------------------------------------------
// Ingestion

inline PriceSeries parse_prices(std::string_view text, const std::string& asset_id, const std::string& source,
                                const PriceSchema& schema = {}) {
  const auto rows = csv::parse(text, source);
  if (rows.empty()) throw ParseError(source, 1, "empty file, header row required");
  const csv::Header header(rows.front());
  const auto ci_date = header.require(schema.date, source);
  const auto ci_close = header.require(schema.adj_close, source);
  const auto ci_vol = header.require(schema.volume, source);

  struct Rec {
    Date date;
    double close, volume;
    std::size_t line;
  };
  std::vector<Rec> recs;
  recs.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::size_t need = std::max({ci_date, ci_close, ci_vol}) + 1;
    if (r.fields.size() < need) throw ParseError(source, r.line, "too few fields");
    auto d = Date::parse(csv::Header::trim(r.fields[ci_date]));
    if (!d) throw ParseError(source, r.line, "bad date '" + r.fields[ci_date] + "'");
    auto c = csv::to_double(r.fields[ci_close]);
    if (!c) throw ParseError(source, r.line, "bad adj_close '" + r.fields[ci_close] + "'");
    auto v = csv::to_double(r.fields[ci_vol]);
    if (!v) throw ParseError(source, r.line, "bad volume '" + r.fields[ci_vol] + "'");
    if (!(*c > 0) || !std::isfinite(*c))
      throw ValidationError(source + ":" + std::to_string(r.line) + ": non-positive adj_close");
    if (*v < 0) throw ValidationError(source + ":" + std::to_string(r.line) + ": negative volume");
    recs.push_back({*d, *c, *v, r.line});
  }
  std::stable_sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) { return a.date < b.date; });
  PriceSeries out;
  out.asset_id = asset_id;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (i > 0 && recs[i].date == recs[i - 1].date)
      throw ValidationError(source + ":" + std::to_string(recs[i].line) + ": duplicate date " + recs[i].date.iso());
    out.dates.push_back(recs[i].date);
    out.adj_close.push_back(recs[i].close);
    out.volume.push_back(recs[i].volume);
  }
  return out;
}

/// Reads `<dir>/<ticker>.csv` for each ticker.
inline std::vector<PriceSeries> load_prices(const std::filesystem::path& dir, const std::vector<std::string>& tickers,
                                            const PriceSchema& schema = {}) {
  std::vector<PriceSeries> out;
  for (const auto& t : tickers) {
    const auto path = dir / (t + ".csv");
    if (!std::filesystem::exists(path)) throw ConfigError("missing price file: " + path.string());
    out.push_back(parse_prices(csv::read_file(path.string()), t, path.string(), schema));
  }
  return out;
}

inline std::string format_prices_csv(const PriceSeries& s) {
  std::string out = "date,adj_close,volume\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out += s.dates[i].iso() + "," + csv::fmt(s.adj_close[i]) + "," + csv::fmt(s.volume[i]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Transforms

inline ReturnSeries compute_returns(const PriceSeries& prices) {
  if (prices.size() < 2) throw InsufficientDataError(prices.asset_id + ": need at least 2 prices for returns");
  ReturnSeries r;
  r.asset_id = prices.asset_id;
  for (std::size_t i = 1; i < prices.size(); ++i) {
    const double g = prices.adj_close[i] / prices.adj_close[i - 1];
    r.dates.push_back(prices.dates[i]);
    r.gross.push_back(g);
    r.simple.push_back(g - 1.0);
  }
  return r;
}

/// floor(frac * N) rows each for train and validation; test takes the rest.
inline Split split_chronological(std::size_t n_rows, const SplitSpec& spec) {
  if (n_rows == 0) throw ConfigError("cannot split an empty panel");
  for (double f : {spec.train, spec.validation, spec.test})
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
  if (std::abs(spec.train + spec.validation + spec.test - 1.0) > 1e-12)
    throw ConfigError("split fractions must sum to 1");
  // The 1e-9 nudge keeps products like 0.29 * 100 from flooring to 28.
  auto floor_rows = [n_rows](double frac) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n_rows) + 1e-9));
  };
  const auto n_train = floor_rows(spec.train);
  const auto n_val = floor_rows(spec.validation);
  if (spec.test <= 0.0 || n_train == 0 || n_val == 0 || n_train + n_val >= n_rows)
    throw ConfigError("split of " + std::to_string(n_rows) + " rows leaves an empty segment");
  return Split{{0, n_train}, {n_train, n_train + n_val}, {n_train + n_val, n_rows}};
}

inline Split split_chronological(const AlignedPanel& panel, const SplitSpec& spec) {
  return split_chronological(panel.rows(), spec);
}

/// Inner join on dates common to all assets, with sentiment features
/// left-joined (neutral defaults when a date has no sentiment row).
inline AlignedPanel align_panel(const std::vector<PriceSeries>& prices,
                                const std::map<std::string, std::vector<DailyFeatures>>& daily_sentiment = {}) {
  if (prices.empty()) throw AlignmentError("no assets to align");
  for (const auto& p : prices)
    if (p.size() == 0) throw AlignmentError(p.asset_id + ": empty price series");

  std::vector<Date> common = prices.front().dates;
  for (std::size_t a = 1; a < prices.size(); ++a) {
    std::vector<Date> next;
    std::set_intersection(common.begin(), common.end(), prices[a].dates.begin(), prices[a].dates.end(),
                          std::back_inserter(next));
    common = std::move(next);
  }
  if (common.empty()) throw AlignmentError("assets share no common dates");

  std::vector<std::string> ids;
  for (const auto& p : prices) ids.push_back(p.asset_id);
  AlignedPanel panel(ids, common);

  for (std::size_t a = 0; a < prices.size(); ++a) {
    const auto& p = prices[a];
    std::size_t j = 0;
    for (std::size_t r = 0; r < common.size(); ++r) {
      while (p.dates[j] < common[r]) ++j;
      panel.at(r, a, Feature::AdjClose) = p.adj_close[j];
      panel.at(r, a, Feature::Volume) = p.volume[j];
      panel.at(r, a, Feature::Ratio) = 1.0;
    }
    auto it = daily_sentiment.find(p.asset_id);
    if (it == daily_sentiment.end()) continue;
    std::map<Date, const DailyFeatures*> by_date;
    for (const auto& f : it->second) by_date[f.date] = &f;
    for (std::size_t r = 0; r < common.size(); ++r) {
      auto f = by_date.find(common[r]);
      if (f == by_date.end()) continue;
      panel.at(r, a, Feature::Likes) = f->second->likes;
      panel.at(r, a, Feature::Retweets) = f->second->retweets;
      panel.at(r, a, Feature::Comments) = f->second->comments;
      panel.at(r, a, Feature::Ratio) = f->second->ratio;
    }
  }
  return panel;
}

/// Gross price relatives p_t / p_{t-1} for every asset, rows 1..end of the
/// range (row i of the result covers range.begin+i -> range.begin+i+1).
inline std::vector<std::vector<double>> gross_returns(const AlignedPanel& panel, RowRange range) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = range.begin + 1; r < range.end; ++r) {
    std::vector<double> g(panel.num_assets());
    for (std::size_t a = 0; a < panel.num_assets(); ++a) g[a] = panel.price(r, a) / panel.price(r - 1, a);
    out.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Panel persistence

inline std::string format_panel_csv(const AlignedPanel& panel, const std::string& preamble = {}) {
  std::string out = preamble;
  out += "date";
  for (const auto& n : panel.column_names()) out += "," + n;
  out += "\n";
  for (std::size_t r = 0; r < panel.rows(); ++r) {
    out += panel.dates()[r].iso();
    for (std::size_t c = 0; c < panel.width(); ++c) out += "," + csv::fmt(panel.at(r, c));
    out += "\n";
  }
  return out;
}

/// Inverse of format_panel_csv. Lines starting with '#' are ignored.
inline AlignedPanel parse_panel_csv(std::string_view text, const std::string& source) {
  std::string body;
  std::size_t skipped = 0;
  {
    std::size_t pos = 0;
    while (pos < text.size() && text[pos] == '#') {
      auto nl = text.find('\n', pos);
      pos = nl == std::string_view::npos ? text.size() : nl + 1;
      ++skipped;
    }
    body = std::string(text.substr(pos));
  }
  auto rows = csv::parse(body, source);
  if (rows.empty()) throw ParseError(source, skipped + 1, "empty panel file");
  const auto& head = rows.front().fields;
  if (head.empty() || head[0] != "date" || (head.size() - 1) % kFeaturesPerAsset != 0)
    throw ParseError(source, skipped + 1, "panel header malformed");
  std::vector<std::string> assets;
  for (std::size_t c = 1; c < head.size(); c += kFeaturesPerAsset) {
    auto dot = head[c].rfind('.');
    assets.push_back(head[c].substr(0, dot));
  }
  std::vector<Date> dates;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto d = Date::parse(rows[i].fields[0]);
    if (!d) throw ParseError(source, rows[i].line + skipped, "bad date");
    dates.push_back(*d);
  }
  AlignedPanel panel(assets, dates);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].fields.size() != head.size()) throw ParseError(source, rows[i].line + skipped, "wrong field count");
    for (std::size_t c = 1; c < head.size(); ++c) {
      auto v = csv::to_double(rows[i].fields[c]);
      if (!v) throw ParseError(source, rows[i].line + skipped, "bad number");
      panel.at(i - 1, c - 1) = *v;
    }
  }
  return panel;
}

}  // namespace sentiport
