#pragma once

// Config-driven orchestration: dataset assembly, model training and
// checkpoints, strategy backtests, analysis tables, and a synthetic
// sentiment-driven market used as a fixture.

#include <algorithm>
#include <array>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sentiport/backtest.hpp"
#include "sentiport/csv.hpp"
#include "sentiport/date.hpp"
#include "sentiport/error.hpp"
#include "sentiport/lstm.hpp"
#include "sentiport/market_data.hpp"
#include "sentiport/portfolio.hpp"
#include "sentiport/sentiment.hpp"
#include "sentiport/stats.hpp"

namespace sentiport::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Strategies

enum class Strategy { BuyAndHold, BestStock, Rebalancing, Lstm, LstmSentiment };

inline constexpr Strategy kAllStrategies[] = {Strategy::BuyAndHold, Strategy::BestStock, Strategy::Rebalancing,
                                              Strategy::Lstm, Strategy::LstmSentiment};

inline const char* display_name(Strategy s) {
  switch (s) {
    case Strategy::BuyAndHold: return "Buy and Hold";
    case Strategy::BestStock: return "Best Stock";
    case Strategy::Rebalancing: return "Rebalancing";
    case Strategy::Lstm: return "LSTM";
    case Strategy::LstmSentiment: return "LSTM Sentiment";
  }
  return "?";
}

inline const char* config_key(Strategy s) {
  switch (s) {
    case Strategy::BuyAndHold: return "buy_and_hold";
    case Strategy::BestStock: return "best_stock";
    case Strategy::Rebalancing: return "rebalancing";
    case Strategy::Lstm: return "lstm";
    case Strategy::LstmSentiment: return "lstm_sentiment";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& key) {
  for (auto s : kAllStrategies)
    if (key == config_key(s)) return s;
  throw ConfigError("unknown strategy '" + key + "'");
}

// ---------------------------------------------------------------------------
// Configuration

struct DateWindow {
  Date from, to;
};

struct RunConfig {
  std::vector<std::string> assets;
  std::string data_dir = ".";
  std::string sentiment_file = "sentiment.csv";
  std::string lexicon;  ///< empty: built-in lexicon
  std::string audit_file = "audit.csv";
  SplitSpec split;
  lstm::LstmConfig lstm;
  std::size_t mc_count = 50000;
  std::uint64_t mc_seed = 7;
  std::uint64_t seed = 42;
  std::size_t replicates = 10;
  std::vector<Strategy> strategies = {std::begin(kAllStrategies), std::end(kAllStrategies)};
  double initial_capital = backtest::kDefaultCapital;
  std::size_t cov_window = 50;
  std::size_t max_lag = 8;
  double risk_free = 0.0;
  std::string output_dir = "out";
  unsigned threads = 1;

  fs::path base_dir = ".";             ///< relative paths resolve against this
  std::optional<DateWindow> down_market;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
  fs::path data_path() const { return resolve(data_dir); }
  fs::path output_path() const { return resolve(output_dir); }
  bool has(Strategy s) const { return std::find(strategies.begin(), strategies.end(), s) != strategies.end(); }

  void validate() const {
    if (assets.empty()) throw ConfigError("config: 'assets' must list at least one ticker");
    for (std::size_t i = 0; i < assets.size(); ++i)
      for (std::size_t j = i + 1; j < assets.size(); ++j)
        if (assets[i] == assets[j]) throw ConfigError("config: duplicate asset '" + assets[i] + "'");
    const double total = split.train + split.validation + split.test;
    if (split.train <= 0 || split.validation <= 0 || split.test <= 0 || std::abs(total - 1.0) > 1e-9)
      throw ConfigError("config: split fractions must be positive and sum to 1");
    lstm.validate();
    if (mc_count == 0) throw ConfigError("config: monte_carlo.count must be at least 1");
    if (replicates == 0) throw ConfigError("config: replicates must be at least 1");
    if (strategies.empty()) throw ConfigError("config: 'strategies' must not be empty");
    if (!(initial_capital > 0)) throw ConfigError("config: initial_capital must be positive");
    if (max_lag == 0) throw ConfigError("config: max_lag must be at least 1");
    if (threads == 0) throw ConfigError("config: threads must be at least 1");
    if (!fs::is_directory(data_path())) throw ConfigError("config: data_dir does not exist: " + data_path().string());
    if (!lexicon.empty() && !fs::is_regular_file(resolve(lexicon)))
      throw ConfigError("config: lexicon file does not exist: " + resolve(lexicon).string());
  }
};

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }))
      throw ConfigError("config: unknown key '" + where + it.key() + "'");
  }
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

inline RunConfig config_from_json(const json& j, const fs::path& base_dir = ".") {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown(j,
                         {"assets", "data_dir", "sentiment_file", "lexicon", "audit_file", "split", "lstm",
                          "monte_carlo", "seed", "replicates", "strategies", "initial_capital", "cov_window",
                          "max_lag", "risk_free", "output_dir", "threads"},
                         "");
  RunConfig c;
  c.base_dir = base_dir;
  c.assets = detail::get_or(j, "assets", c.assets);
  c.data_dir = detail::get_or(j, "data_dir", c.data_dir);
  c.sentiment_file = detail::get_or(j, "sentiment_file", c.sentiment_file);
  c.lexicon = detail::get_or(j, "lexicon", c.lexicon);
  c.audit_file = detail::get_or(j, "audit_file", c.audit_file);
  if (j.contains("split")) {
    const auto& s = j.at("split");
    detail::reject_unknown(s, {"train", "validation", "test"}, "split.");
    c.split.train = detail::get_or(s, "train", c.split.train);
    c.split.validation = detail::get_or(s, "validation", c.split.validation);
    c.split.test = detail::get_or(s, "test", c.split.test);
  }
  if (j.contains("lstm")) {
    const auto& l = j.at("lstm");
    detail::reject_unknown(l, {"hidden_size", "num_layers", "learning_rate", "window", "batch_size", "epochs"}, "lstm.");
    c.lstm.hidden_size = detail::get_or(l, "hidden_size", c.lstm.hidden_size);
    c.lstm.num_layers = detail::get_or(l, "num_layers", c.lstm.num_layers);
    c.lstm.learning_rate = detail::get_or(l, "learning_rate", c.lstm.learning_rate);
    c.lstm.window = detail::get_or(l, "window", c.lstm.window);
    c.lstm.batch_size = detail::get_or(l, "batch_size", c.lstm.batch_size);
    c.lstm.epochs = detail::get_or(l, "epochs", c.lstm.epochs);
  }
  if (j.contains("monte_carlo")) {
    const auto& m = j.at("monte_carlo");
    detail::reject_unknown(m, {"count", "seed"}, "monte_carlo.");
    c.mc_count = detail::get_or(m, "count", c.mc_count);
    c.mc_seed = detail::get_or(m, "seed", c.mc_seed);
  }
  c.seed = detail::get_or(j, "seed", c.seed);
  c.replicates = detail::get_or(j, "replicates", c.replicates);
  if (j.contains("strategies")) {
    c.strategies.clear();
    for (const auto& s : detail::get_or(j, "strategies", std::vector<std::string>{}))
      c.strategies.push_back(parse_strategy(s));
  }
  c.initial_capital = detail::get_or(j, "initial_capital", c.initial_capital);
  c.cov_window = detail::get_or(j, "cov_window", c.cov_window);
  c.max_lag = detail::get_or(j, "max_lag", c.max_lag);
  c.risk_free = detail::get_or(j, "risk_free", c.risk_free);
  c.output_dir = detail::get_or(j, "output_dir", c.output_dir);
  c.threads = detail::get_or(j, "threads", c.threads);
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(csv::read_file(path.string()));
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

/// Everything that influences results. Output location, worker count and the
/// seed are left out; the seed is recorded next to the hash.
inline json config_to_json(const RunConfig& c, bool include_run_keys = true) {
  json j;
  j["assets"] = c.assets;
  j["data_dir"] = c.data_dir;
  j["sentiment_file"] = c.sentiment_file;
  j["lexicon"] = c.lexicon;
  j["audit_file"] = c.audit_file;
  j["split"] = {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}};
  j["lstm"] = {{"hidden_size", c.lstm.hidden_size}, {"num_layers", c.lstm.num_layers},
               {"learning_rate", c.lstm.learning_rate}, {"window", c.lstm.window},
               {"batch_size", c.lstm.batch_size}, {"epochs", c.lstm.epochs}};
  j["monte_carlo"] = {{"count", c.mc_count}, {"seed", c.mc_seed}};
  j["replicates"] = c.replicates;
  std::vector<std::string> keys;
  for (auto s : c.strategies) keys.push_back(config_key(s));
  j["strategies"] = keys;
  j["initial_capital"] = c.initial_capital;
  j["cov_window"] = c.cov_window;
  j["max_lag"] = c.max_lag;
  j["risk_free"] = c.risk_free;
  if (include_run_keys) {
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["threads"] = c.threads;
  }
  return j;
}

inline std::uint64_t config_hash(const RunConfig& c) { return detail::fnv1a(config_to_json(c, false).dump()); }

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

/// First line of every output file.
inline std::string preamble(const RunConfig& c) {
  std::string s = "# config_hash=" + hash_hex(config_hash(c)) + " seed=" + std::to_string(c.seed);
  if (c.down_market) s += " window=" + c.down_market->from.iso() + "," + c.down_market->to.iso();
  return s + "\n";
}

inline DateWindow parse_window(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("--down-market expects FROM,TO");
  const auto from = Date::parse(csv::Header::trim(text.substr(0, comma)));
  const auto to = Date::parse(csv::Header::trim(text.substr(comma + 1)));
  if (!from || !to) throw ConfigError("--down-market dates must be yyyy-mm-dd: '" + text + "'");
  if (*to < *from) throw ConfigError("--down-market window ends before it starts");
  return {*from, *to};
}

// ---------------------------------------------------------------------------
// Files

inline void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out) throw ConfigError("failed writing " + path.string());
}

/// JSON output with the config hash and seed embedded as fields.
inline std::string json_document(const RunConfig& c, json body) {
  json j;
  j["config_hash"] = hash_hex(config_hash(c));
  j["seed"] = c.seed;
  if (c.down_market) j["window"] = {c.down_market->from.iso(), c.down_market->to.iso()};
  j["data"] = std::move(body);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Dataset

struct Dataset {
  std::vector<PriceSeries> prices;
  std::vector<SentimentRecord> sentiment;
  AlignedPanel panel;
  Split split;
};

inline Lexicon load_lexicon(const RunConfig& c) {
  if (c.lexicon.empty()) return Lexicon::builtin();
  const auto path = c.resolve(c.lexicon).string();
  return parse_lexicon(csv::read_file(path), path);
}

/// Labelled records for the configured assets; others are dropped.
inline std::vector<SentimentRecord> load_sentiment(const RunConfig& c, const Lexicon& lexicon) {
  const auto path = (c.data_path() / c.sentiment_file).string();
  if (!fs::is_regular_file(path)) throw ConfigError("missing sentiment file: " + path);
  auto all = parse_sentiment_csv(csv::read_file(path), path, lexicon_labeler(lexicon));
  std::vector<SentimentRecord> out;
  for (auto& r : all)
    if (std::find(c.assets.begin(), c.assets.end(), r.asset_id) != c.assets.end()) out.push_back(std::move(r));
  return out;
}

inline Dataset load_dataset(const RunConfig& c) {
  Dataset d;
  d.prices = load_prices(c.data_path(), c.assets);
  d.sentiment = load_sentiment(c, load_lexicon(c));
  d.panel = align_panel(d.prices, daily_features(d.sentiment));
  d.split = split_chronological(d.panel, c.split);
  return d;
}

inline json split_json(const Dataset& d) {
  auto seg = [&](RowRange r) {
    return json{{"begin", r.begin}, {"end", r.end}, {"first", d.panel.dates()[r.begin].iso()},
                {"last", d.panel.dates()[r.end - 1].iso()}};
  };
  return {{"rows", d.panel.rows()}, {"assets", d.panel.assets()}, {"width", d.panel.width()},
          {"train", seg(d.split.train)}, {"validation", seg(d.split.validation)}, {"test", seg(d.split.test)}};
}

// ---------------------------------------------------------------------------
// Models

/// Every feature of every asset.
inline std::vector<std::size_t> sentiment_columns(const AlignedPanel& p) {
  std::vector<std::size_t> c(p.width());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = i;
  return c;
}

/// Price and volume only, asset by asset.
inline std::vector<std::size_t> price_volume_columns(const AlignedPanel& p) {
  std::vector<std::size_t> c;
  for (std::size_t a = 0; a < p.num_assets(); ++a) {
    c.push_back(AlignedPanel::column(a, Feature::AdjClose));
    c.push_back(AlignedPanel::column(a, Feature::Volume));
  }
  return c;
}

struct TrainedModel {
  lstm::LstmModel model;
  lstm::TrainReport report;
};

inline TrainedModel train_model(const RunConfig& c, const Dataset& d, bool with_sentiment, std::uint64_t seed) {
  auto cfg = c.lstm;
  cfg.seed = seed;
  const auto inputs = with_sentiment ? sentiment_columns(d.panel) : price_volume_columns(d.panel);
  const auto targets = d.panel.columns_of(Feature::AdjClose);
  lstm::LstmModel m(cfg, inputs, targets);
  m.initialize(seed);
  m.fit_scalers(d.panel, d.split.train);
  const std::size_t W = cfg.window;
  if (d.split.validation.begin < W) throw InsufficientDataError("training split shorter than the LSTM window");
  const auto tr = lstm::make_windows(d.panel, d.split.train, inputs, targets, W);
  const auto va = lstm::make_windows(d.panel, {d.split.validation.begin - W, d.split.validation.end}, inputs, targets, W);
  auto report = lstm::train(m, tr, va);
  return {std::move(m), std::move(report)};
}

inline std::string format_loss_csv(const lstm::TrainReport& r, const std::string& pre) {
  std::string out = pre + "epoch,train_mse,val_mse\n";
  for (std::size_t e = 0; e < r.train_mse.size(); ++e)
    out += std::to_string(e + 1) + "," + csv::fmt(r.train_mse[e]) + "," + csv::fmt(r.val_mse[e]) + "\n";
  return out;
}

inline constexpr int kCheckpointVersion = 1;

inline json checkpoint_json(const RunConfig& c, const lstm::LstmModel& m, std::uint64_t seed) {
  const auto& k = m.config();
  return {{"format", "sentiport-lstm"},
          {"version", kCheckpointVersion},
          {"config_hash", hash_hex(config_hash(c))},
          {"seed", seed},
          {"lstm",
           {{"input_width", k.input_width}, {"hidden_size", k.hidden_size}, {"num_layers", k.num_layers},
            {"outputs", k.outputs}, {"window", k.window}, {"learning_rate", k.learning_rate},
            {"batch_size", k.batch_size}, {"epochs", k.epochs}, {"seed", k.seed}}},
          {"input_columns", m.input_columns()},
          {"target_columns", m.target_columns()},
          {"scaler",
           {{"input", {{"lo", m.input_scaler().lower()}, {"hi", m.input_scaler().upper()}}},
            {"target", {{"lo", m.target_scaler().lower()}, {"hi", m.target_scaler().upper()}}}}},
          {"params", m.params()},
          {"adam", {{"t", m.adam_step()}, {"m", m.adam_m()}, {"v", m.adam_v()}}}};
}

/// Rebuilds a model from a checkpoint. Rejects checkpoints produced under a
/// different config or seed.
inline lstm::LstmModel model_from_checkpoint(const RunConfig& c, const json& j, std::uint64_t seed,
                                             const std::string& source) {
  try {
    if (j.at("format") != "sentiport-lstm") throw ConfigError(source + ": not a model checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw ConfigError(source + ": unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    if (j.at("config_hash").get<std::string>() != hash_hex(config_hash(c)) || j.at("seed").get<std::uint64_t>() != seed)
      throw ConfigError(source + ": checkpoint was trained with a different config or seed; rerun 'train'");
    const auto& l = j.at("lstm");
    lstm::LstmConfig k;
    k.hidden_size = l.at("hidden_size");
    k.num_layers = l.at("num_layers");
    k.window = l.at("window");
    k.learning_rate = l.at("learning_rate");
    k.batch_size = l.at("batch_size");
    k.epochs = l.at("epochs");
    k.seed = l.at("seed");
    lstm::LstmModel m(k, j.at("input_columns").get<std::vector<std::size_t>>(),
                      j.at("target_columns").get<std::vector<std::size_t>>());
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != m.params().size()) throw ConfigError(source + ": parameter count mismatch");
    m.params() = params;
    const auto& s = j.at("scaler");
    m.set_scalers({s.at("input").at("lo").get<std::vector<double>>(), s.at("input").at("hi").get<std::vector<double>>()},
                  {s.at("target").at("lo").get<std::vector<double>>(), s.at("target").at("hi").get<std::vector<double>>()});
    const auto& a = j.at("adam");
    m.set_adam_state(a.at("m").get<std::vector<double>>(), a.at("v").get<std::vector<double>>(), a.at("t"));
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(source + ": malformed checkpoint: " + e.what());
  }
}

inline const char* checkpoint_name(bool with_sentiment) {
  return with_sentiment ? "model_lstm_sentiment.json" : "model_lstm.json";
}

// ---------------------------------------------------------------------------
// Backtests

/// Test split, or the rows inside the down-market window when one is set.
inline RowRange evaluation_range(const RunConfig& c, const Dataset& d) {
  if (!c.down_market) return d.split.test;
  const auto& dates = d.panel.dates();
  const auto lo = std::lower_bound(dates.begin(), dates.end(), c.down_market->from);
  const auto hi = std::upper_bound(dates.begin(), dates.end(), c.down_market->to);
  const RowRange r{static_cast<std::size_t>(lo - dates.begin()), static_cast<std::size_t>(hi - dates.begin())};
  if (r.size() < 2)
    throw ConfigError("down-market window " + c.down_market->from.iso() + "," + c.down_market->to.iso() +
                      " holds fewer than 2 trading days");
  if (r.begin + 1 < c.lstm.window)
    throw ConfigError("down-market window starts before " + std::to_string(c.lstm.window) + " days of history");
  return r;
}

struct BacktestResult {
  RowRange range;
  std::vector<std::string> names;
  std::vector<backtest::WealthCurve> curves;
  std::vector<backtest::PerfReport> reports;

  const backtest::PerfReport* find(const std::string& name) const {
    for (const auto& r : reports)
      if (r.name == name) return &r;
    return nullptr;
  }
};

/// Forecasts for rows range.begin+1 .. range.end-1, one per holding period.
inline std::vector<std::vector<double>> period_forecasts(const lstm::LstmModel& m, const AlignedPanel& panel,
                                                         RowRange range) {
  const std::size_t W = m.config().window;
  if (range.begin + 1 < W) throw InsufficientDataError("not enough history before the evaluation range");
  return lstm::predict_series(m, panel, {range.begin + 1 - W, range.end}).prices;
}

/// Runs every configured strategy over `range`. Models may be null when the
/// corresponding strategy is not configured.
inline BacktestResult run_backtests(const RunConfig& c, const AlignedPanel& panel, RowRange range,
                                    const lstm::LstmModel* with_sentiment, const lstm::LstmModel* without_sentiment,
                                    std::uint64_t mc_seed) {
  using portfolio::StrategyKind;
  BacktestResult res;
  res.range = range;
  const auto gross = gross_returns(panel, range);
  std::vector<Date> dates(panel.dates().begin() + static_cast<long>(range.begin),
                          panel.dates().begin() + static_cast<long>(range.end));
  portfolio::PredictiveOptions opt;
  opt.cov_window = c.cov_window;
  opt.sample_count = c.mc_count;
  opt.seed = mc_seed;
  opt.risk_free = c.risk_free;
  opt.threads = c.threads;

  const auto bh = backtest::run_backtest(portfolio::strategy_weights(StrategyKind::BuyAndHold, panel, range), gross,
                                         c.initial_capital, dates);
  for (auto s : c.strategies) {
    std::vector<portfolio::Weights> w;
    switch (s) {
      case Strategy::BuyAndHold: w = bh.weights; break;
      case Strategy::BestStock: w = portfolio::strategy_weights(StrategyKind::BestStock, panel, range); break;
      case Strategy::Rebalancing: w = portfolio::strategy_weights(StrategyKind::Rebalancing, panel, range); break;
      case Strategy::Lstm:
      case Strategy::LstmSentiment: {
        const auto* m = s == Strategy::Lstm ? without_sentiment : with_sentiment;
        if (!m) throw ConfigError(std::string("no model for strategy ") + display_name(s));
        w = portfolio::strategy_weights(StrategyKind::MeanVariancePredictive, panel, range,
                                        period_forecasts(*m, panel, range), opt);
        break;
      }
    }
    auto curve = backtest::run_backtest(w, gross, c.initial_capital, dates);
    res.reports.push_back(backtest::evaluate(display_name(s), curve, bh));
    res.names.push_back(display_name(s));
    res.curves.push_back(std::move(curve));
  }
  return res;
}

inline json report_json(const std::vector<backtest::PerfReport>& rows) {
  json arr = json::array();
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  for (const auto& r : rows)
    arr.push_back({{"model", r.name}, {"capital", num(r.final_capital)}, {"fapv", num(r.fapv)}, {"bv", num(r.bv)},
                   {"sr", num(r.sharpe_vs_bh)}, {"mdd_pct", num(100 * r.mdd)},
                   {"mdd_peak_to_trough_pct", num(100 * r.mdd_peak)}, {"ar_pct", num(100 * r.annualized_return)}});
  return {{"columns", backtest::report_columns()}, {"rows", arr}};
}

struct ReplicateRun {
  std::vector<std::uint64_t> seeds;
  std::vector<double> capital_with, capital_without;
  std::optional<backtest::ReplicateComparison> comparison;
  BacktestResult first;  ///< replicate 0, i.e. the configured seed
};

/// Seeds seed, seed+1, ... each retrain both LSTM variants and rerun the
/// backtests (Monte-Carlo seed offset by the same amount).
inline ReplicateRun run_replicates(const RunConfig& c, const Dataset& d,
                                   const std::function<void(std::size_t, double)>& progress = {}) {
  ReplicateRun out;
  const RowRange range = evaluation_range(c, d);
  const bool want_with = c.has(Strategy::LstmSentiment), want_without = c.has(Strategy::Lstm);
  for (std::size_t k = 0; k < c.replicates; ++k) {
    const auto seed = c.seed + k;
    const auto started = std::chrono::steady_clock::now();
    std::optional<TrainedModel> with, without;
    if (want_with) with = train_model(c, d, true, seed);
    if (want_without) without = train_model(c, d, false, seed);
    auto res = run_backtests(c, d.panel, range, with ? &with->model : nullptr, without ? &without->model : nullptr,
                             c.mc_seed + k);
    out.seeds.push_back(seed);
    if (want_with) out.capital_with.push_back(res.find(display_name(Strategy::LstmSentiment))->final_capital);
    if (want_without) out.capital_without.push_back(res.find(display_name(Strategy::Lstm))->final_capital);
    if (k == 0) out.first = std::move(res);
    if (progress)
      progress(k, std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  }
  if (want_with && want_without && c.replicates >= 2)
    out.comparison = backtest::compare_replicates(out.capital_with, out.capital_without);
  return out;
}

inline std::string format_significance_csv(const backtest::ReplicateComparison& r, const std::string& pre) {
  std::string out = pre + "Models,LSTM+S,LSTM\n";
  out += "Mean," + csv::fixed(r.mean_with, 2) + "," + csv::fixed(r.mean_without, 2) + "\n";
  out += "Standard deviation," + csv::fixed(r.sd_with, 2) + "," + csv::fixed(r.sd_without, 2) + "\n";
  out += "Observations," + std::to_string(r.with_sentiment.size()) + "," + std::to_string(r.without_sentiment.size()) + "\n";
  out += "degrees of freedom," + csv::fixed(r.test.df1, 0) + ",\n";
  out += "t statistic," + csv::fixed(r.test.statistic, 4) + ",\n";
  out += "p-value," + csv::fixed(r.test.p_value, 4) + ",\n";
  return out;
}

// ---------------------------------------------------------------------------
// Analysis tables

struct CorrelationRow {
  std::string asset;
  std::size_t windows = 0;  ///< sufficient weekly windows with a defined return
  std::array<std::optional<stats::TestResult>, 4> tests;  ///< mean, max, median, ratio
};

/// Weekly sentiment aggregates vs the same week's simple return, over
/// sufficient windows. Windows are 7-day blocks anchored at the first panel date.
inline std::vector<CorrelationRow> correlation_table(const Dataset& d) {
  std::vector<CorrelationRow> out;
  const auto& dates = d.panel.dates();
  for (std::size_t a = 0; a < d.panel.num_assets(); ++a) {
    CorrelationRow row;
    row.asset = d.panel.assets()[a];
    std::vector<SentimentRecord> recs;
    for (const auto& r : d.sentiment)
      if (r.asset_id == row.asset) recs.push_back(r);
    std::array<std::vector<double>, 4> x;
    std::vector<double> y;
    for (const auto& w : weekly_windows(recs, dates.front(), row.asset)) {
      if (!w.sufficient) continue;
      // Last trading row before the window and last one inside it.
      const auto before = std::lower_bound(dates.begin(), dates.end(), w.window_start);
      const auto inside = std::lower_bound(dates.begin(), dates.end(), w.window_start.plus_days(7));
      if (before == dates.begin() || inside == before) continue;
      const auto r0 = static_cast<std::size_t>(before - dates.begin()) - 1;
      const auto r1 = static_cast<std::size_t>(inside - dates.begin()) - 1;
      y.push_back(d.panel.price(r1, a) / d.panel.price(r0, a) - 1.0);
      x[0].push_back(w.mean_pol);
      x[1].push_back(w.max_pol);
      x[2].push_back(w.median_pol);
      x[3].push_back(w.ratio);
    }
    row.windows = y.size();
    for (std::size_t k = 0; k < 4; ++k) {
      try {
        row.tests[k] = stats::pearson(x[k], y);
      } catch (const InsufficientDataError&) {
      } catch (const DegenerateInputError&) {
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline std::string format_correlation_csv(const std::vector<CorrelationRow>& rows, bool p_values,
                                          const std::string& pre) {
  std::string out = pre + "asset,mean,max,median,ratio\n";
  for (const auto& r : rows) {
    out += csv::escape(r.asset);
    for (const auto& t : r.tests)
      out += "," + (t ? csv::fixed(p_values ? t->p_value : t->statistic, 6) : std::string("NA"));
    out += "\n";
  }
  return out;
}

struct GrangerColumn {
  std::string asset;
  std::optional<stats::GrangerReport> report;
  std::string note;  ///< why the report is missing
};

/// Daily simple returns R_t vs the daily sentiment ratio S_t on the whole panel.
inline std::vector<GrangerColumn> granger_table(const Dataset& d, std::size_t max_lag) {
  std::vector<GrangerColumn> out;
  const std::size_t n = d.panel.rows();
  for (std::size_t a = 0; a < d.panel.num_assets(); ++a) {
    GrangerColumn col;
    col.asset = d.panel.assets()[a];
    std::vector<double> r, s;
    for (std::size_t t = 1; t < n; ++t) {
      r.push_back(d.panel.price(t, a) / d.panel.price(t - 1, a) - 1.0);
      s.push_back(d.panel.at(t, a, Feature::Ratio));
    }
    try {
      col.report = stats::granger(r, s, max_lag);
    } catch (const DegenerateInputError& e) {
      col.note = e.what();
    } catch (const SingularDesignError& e) {
      col.note = e.what();
    }
    out.push_back(std::move(col));
  }
  return out;
}

/// Wide layout: one row per lag, one p-value column per asset, and a marker
/// column naming the assets significant at 0.05.
inline std::string format_granger_csv(const std::vector<GrangerColumn>& cols, std::size_t max_lag,
                                      const std::string& pre) {
  std::string out = pre + "lag";
  for (const auto& c : cols) out += "," + csv::escape(c.asset);
  out += ",significant\n";
  for (std::size_t l = 0; l < max_lag; ++l) {
    out += "L" + std::to_string(l + 1);
    std::string marks;
    for (const auto& c : cols) {
      if (!c.report) {
        out += ",NA";
        continue;
      }
      const auto& t = c.report->lags[l].test;
      out += "," + csv::fixed(t.p_value, 6);
      if (t.reject_at_005) marks += (marks.empty() ? "" : ";") + c.asset;
    }
    out += "," + csv::escape(marks) + "\n";
  }
  return out;
}

inline std::string format_granger_long_csv(const stats::GrangerReport& r, const std::string& pre) {
  std::string out = pre + "lag,F,df1,df2,p\n";
  for (const auto& l : r.lags)
    out += std::to_string(l.lag) + "," + csv::fmt(l.test.statistic) + "," + csv::fixed(l.test.df1, 0) + "," +
           csv::fixed(l.test.df2, 0) + "," + csv::fmt(l.test.p_value) + "\n";
  return out;
}

/// Moments from the `cov_window` daily returns ending at the last training row.
inline portfolio::Moments frontier_moments(const RunConfig& c, const Dataset& d) {
  const std::size_t last = d.split.train.end - 1;
  const std::size_t first = last >= c.cov_window ? last - c.cov_window : 0;
  std::vector<std::vector<double>> rets(d.panel.num_assets());
  for (std::size_t a = 0; a < rets.size(); ++a)
    for (std::size_t r = first + 1; r <= last; ++r) rets[a].push_back(d.panel.price(r, a) / d.panel.price(r - 1, a) - 1.0);
  return portfolio::estimate_moments(rets);
}

inline std::string format_audit_csv(const LabelAudit& a, const std::string& pre) {
  std::string out = pre + "truth,Positive,Negative,Neutral,support\n";
  for (std::size_t i = 0; i < 3; ++i) {
    out += to_string(kLabels[i]);
    for (std::size_t j = 0; j < 3; ++j) out += "," + csv::fixed(a.matrix[i][j], 4);
    out += "," + std::to_string(a.support[i]) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic market

struct SynthSpec {
  std::vector<std::string> assets = {"ALFA", "BRVO", "CHRL", "DLTA", "ECHO"};
  std::size_t days = 1500;            ///< trading days
  Date start = Date(2015, 1, 5);
  std::uint64_t seed = 2024;
  double rho = 0.3;                   ///< corr(next-day return, standardized ratio)
  double volatility = 0.02;           ///< daily log-return sd
  double reversion = 0.05;            ///< pull of log price toward its start
  double posts_per_day = 12.0;
};

namespace detail {

inline const std::vector<std::string>& templates(Label l) {
  static const std::vector<std::string> pos = {
      "{} shares rally after strong earnings", "great quarter for {}, profit beats estimates",
      "analysts upgrade {} to outperform", "bullish on {} this week", "{} posts record growth"};
  static const std::vector<std::string> neg = {
      "{} shares plunge on weak guidance", "terrible quarter for {}", "analysts downgrade {} amid fraud probe",
      "bearish on {}, expecting losses", "not a good week for {}"};
  static const std::vector<std::string> neu = {
      "{} annual meeting scheduled for thursday", "{} ceo to speak at conference", "watching {} today",
      "{} files quarterly report", "new store opening from {}"};
  return l == Label::Positive ? pos : l == Label::Negative ? neg : neu;
}

inline std::string fill(const std::string& tpl, const std::string& asset) {
  auto s = tpl;
  const auto at = s.find("{}");
  return s.replace(at, 2, asset);
}

}  // namespace detail

struct SynthMarket {
  std::vector<PriceSeries> prices;
  std::vector<SentimentRecord> sentiment;  ///< labels as generated
  std::vector<AuditSample> audit;
};

/// Daily post counts are Poisson; each post's tone depends on a per-asset
/// daily mood. The next day's return loads with weight rho on that day's
/// standardized positive/negative ratio.
inline SynthMarket make_synthetic_market(const SynthSpec& spec) {
  if (spec.assets.empty() || spec.days < 30) throw ConfigError("synthetic market needs assets and at least 30 days");
  Rng rng(spec.seed);
  SynthMarket m;
  std::vector<Date> dates;
  for (Date d = spec.start; dates.size() < spec.days; d = d.plus_days(1)) {
    const auto wd = std::chrono::weekday(std::chrono::sys_days(std::chrono::days(d.serial()))).c_encoding();
    if (wd != 0 && wd != 6) dates.push_back(d);
  }
  for (const auto& asset : spec.assets) {
    std::string lower = asset;
    for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    std::vector<double> ratio(spec.days);
    for (std::size_t t = 0; t < spec.days; ++t) {
      const double mood = std::tanh(rng.normal());
      const double p_pos = 0.45 + 0.3 * mood, p_neg = 0.45 - 0.3 * mood;
      const auto n = rng.poisson(spec.posts_per_day);
      std::size_t pos = 0, neg = 0;
      for (std::uint64_t k = 0; k < n; ++k) {
        const double u = rng.uniform();
        const Label l = u < p_pos ? Label::Positive : u < p_pos + p_neg ? Label::Negative : Label::Neutral;
        pos += l == Label::Positive;
        neg += l == Label::Negative;
        const auto& tpl = detail::templates(l);
        SentimentRecord r;
        r.date = dates[t];
        r.asset_id = asset;
        r.text = detail::fill(tpl[rng.index(tpl.size())], lower);
        r.label = l;
        r.polarity = l == Label::Positive ? 0.5 : l == Label::Negative ? -0.5 : 0.0;
        r.likes = static_cast<long long>(rng.poisson(3.0));
        r.retweets = static_cast<long long>(rng.poisson(1.0));
        r.comments = static_cast<long long>(rng.poisson(0.5));
        m.sentiment.push_back(std::move(r));
      }
      ratio[t] = sentiment_ratio(pos, neg);
    }
    const double mu = stats::mean(ratio), sd = stats::stddev(ratio);
    PriceSeries s;
    s.asset_id = asset;
    const double p0 = 20.0 + 80.0 * rng.uniform();
    double logp = std::log(p0);
    for (std::size_t t = 0; t < spec.days; ++t) {
      if (t > 0) {
        const double z = (ratio[t - 1] - mu) / sd;
        logp += -spec.reversion * (logp - std::log(p0)) +
                spec.volatility * (spec.rho * z + std::sqrt(1.0 - spec.rho * spec.rho) * rng.normal());
      }
      s.dates.push_back(dates[t]);
      s.adj_close.push_back(std::round(std::exp(logp) * 1e4) / 1e4);
      s.volume.push_back(std::round(1e6 * std::exp(0.3 * rng.normal())));
    }
    m.prices.push_back(std::move(s));
  }
  for (Label l : kLabels)
    for (std::size_t k = 0; k < 10; ++k) m.audit.push_back({detail::fill(detail::templates(l)[k % 5], "acme"), l});
  return m;
}

/// Writes prices, an unlabelled sentiment file, an audit sample and a config.
inline void write_synthetic_dataset(const SynthMarket& m, const fs::path& dir, const json& config) {
  for (const auto& p : m.prices) write_text(dir / (p.asset_id + ".csv"), format_prices_csv(p));
  std::string s = "date,asset,text,likes,retweets,comments\n";
  for (const auto& r : m.sentiment)
    s += r.date.iso() + "," + csv::escape(r.asset_id) + "," + csv::escape(r.text) + "," + std::to_string(r.likes) +
         "," + std::to_string(r.retweets) + "," + std::to_string(r.comments) + "\n";
  write_text(dir / "sentiment.csv", s);
  std::string a = "text,label\n";
  for (const auto& x : m.audit) a += csv::escape(x.text) + "," + to_string(x.truth) + "\n";
  write_text(dir / "audit.csv", a);
  write_text(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace sentiport::pipeline
