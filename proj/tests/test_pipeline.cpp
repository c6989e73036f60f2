#include <catch2/catch_amalgamated.hpp>

#include "sentiport/pipeline.hpp"
#include "sentiport/svg.hpp"
#include "test_util.hpp"

using namespace sentiport;
using namespace sentiport::pipeline;
using Catch::Approx;

namespace {

/// Small synthetic dataset on disk plus a fast config pointing at it.
struct Fixture {
  testutil::TempDir dir;
  SynthMarket market;
  RunConfig config;

  explicit Fixture(std::size_t days = 300, std::uint64_t seed = 11) {
    SynthSpec spec;
    spec.days = days;
    spec.seed = seed;
    market = make_synthetic_market(spec);
    write_synthetic_dataset(market, dir.path(), json{{"assets", spec.assets}});
    config.assets = spec.assets;
    config.base_dir = dir.path();
    config.lstm.hidden_size = 4;
    config.lstm.num_layers = 1;
    config.lstm.epochs = 3;
    config.mc_count = 2000;
    config.replicates = 2;
  }
};

}  // namespace

TEST_CASE("config parsing", "[pipeline]") {
  testutil::TempDir dir;
  SECTION("defaults") {
    const auto c = config_from_json(json{{"assets", {"A"}}}, dir.path());
    CHECK(c.split.train == 0.7);
    CHECK(c.lstm.hidden_size == 13);
    CHECK(c.lstm.num_layers == 3);
    CHECK(c.lstm.window == 6);
    CHECK(c.lstm.learning_rate == 0.004);
    CHECK(c.mc_count == 50000);
    CHECK(c.max_lag == 8);
    CHECK(c.strategies.size() == 5);
    CHECK(c.initial_capital == 10000.0);
    CHECK_NOTHROW(c.validate());
  }
  SECTION("nested values") {
    const auto c = config_from_json(
        json{{"assets", {"A", "B"}}, {"lstm", {{"epochs", 7}, {"window", 4}}}, {"monte_carlo", {{"count", 10}}},
             {"strategies", {"buy_and_hold", "lstm"}}},
        dir.path());
    CHECK(c.lstm.epochs == 7);
    CHECK(c.lstm.window == 4);
    CHECK(c.mc_count == 10);
    CHECK(c.strategies == std::vector<Strategy>{Strategy::BuyAndHold, Strategy::Lstm});
  }
  SECTION("rejections") {
    CHECK_THROWS_AS(config_from_json(json{{"assets", {"A"}}, {"asets", 1}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"lstm", {{"hiden", 3}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"assets", "A"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"strategies", {"momentum"}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);
  }
  SECTION("validation") {
    auto c = config_from_json(json{{"assets", {"A"}}}, dir.path());
    c.split = {0.5, 0.2, 0.2};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config_from_json(json{{"assets", {"A", "A"}}}, dir.path());
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config_from_json(json{{"assets", {"A"}}, {"data_dir", "nowhere"}}, dir.path());
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config_from_json(json{{"assets", {"A"}}, {"lexicon", "missing.tsv"}}, dir.path());
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config_from_json(json{{"assets", json::array()}}, dir.path());
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SECTION("load_config resolves paths next to the file") {
    testutil::write_file(dir / "run.json", R"({"assets": ["A"], "data_dir": "data", "output_dir": "o"})");
    std::filesystem::create_directories(dir / "data");
    const auto c = load_config(dir / "run.json");
    CHECK(c.data_path() == dir.path() / "data");
    CHECK(c.output_path() == dir.path() / "o");
    CHECK_NOTHROW(c.validate());
    testutil::write_file(dir / "bad.json", "{\"assets\": [");
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  }
}

TEST_CASE("config hash and preamble", "[pipeline]") {
  RunConfig a;
  a.assets = {"A", "B"};
  RunConfig b = a;
  b.output_dir = "elsewhere";
  b.threads = 4;
  b.seed = 99;
  CHECK(config_hash(a) == config_hash(b));
  b.lstm.epochs = 10;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.assets = {"B", "A"};
  CHECK(config_hash(a) != config_hash(b));

  const auto p = preamble(a);
  CHECK(p.rfind("# config_hash=", 0) == 0);
  CHECK(p.size() == std::string("# config_hash=0123456789abcdef seed=42\n").size());
  a.down_market = DateWindow{Date(2020, 1, 1), Date(2020, 2, 1)};
  CHECK(preamble(a).find(" window=2020-01-01,2020-02-01\n") != std::string::npos);
}

TEST_CASE("down-market window parsing", "[pipeline]") {
  const auto w = parse_window("2020-03-01,2020-04-15");
  CHECK(w.from == Date(2020, 3, 1));
  CHECK(w.to == Date(2020, 4, 15));
  CHECK_THROWS_AS(parse_window("2020-03-01"), ConfigError);
  CHECK_THROWS_AS(parse_window("2020-04-15,2020-03-01"), ConfigError);
  CHECK_THROWS_AS(parse_window("2020-03-01,soon"), ConfigError);
  CHECK_THROWS_AS(parse_window(","), ConfigError);
}

TEST_CASE("synthetic market", "[pipeline]") {
  SynthSpec spec;
  spec.days = 400;
  const auto a = make_synthetic_market(spec), b = make_synthetic_market(spec);
  SECTION("is deterministic and skips weekends") {
    REQUIRE(a.prices.size() == 5);
    CHECK(format_prices_csv(a.prices[2]) == format_prices_csv(b.prices[2]));
    CHECK(a.sentiment.size() == b.sentiment.size());
    for (const auto& d : a.prices[0].dates) {
      const auto wd = std::chrono::weekday(std::chrono::sys_days(std::chrono::days(d.serial()))).c_encoding();
      CHECK((wd != 0 && wd != 6));
    }
    spec.seed += 1;
    CHECK(format_prices_csv(make_synthetic_market(spec).prices[2]) != format_prices_csv(a.prices[2]));
  }
  SECTION("the built-in lexicon recovers every generated label") {
    const auto lex = Lexicon::builtin();
    std::size_t mismatches = 0;
    for (const auto& r : a.sentiment) mismatches += label_text(r.text, lex).label != r.label;
    CHECK(mismatches == 0);
    for (const auto& s : a.audit) CHECK(label_text(s.text, lex).label == s.truth);
  }
  SECTION("next-day returns load on the standardized daily ratio") {
    // Pool per-asset correlations of log return t+1 with the day-t ratio.
    SynthSpec big;
    big.days = 1500;
    const auto m = make_synthetic_market(big);
    const auto features = daily_features(m.sentiment);
    double total = 0;
    for (const auto& p : m.prices) {
      const auto& f = features.at(p.asset_id);
      REQUIRE(f.size() == p.size());
      std::vector<double> x, y;
      for (std::size_t t = 0; t + 1 < p.size(); ++t) {
        x.push_back(f[t].ratio);
        y.push_back(std::log(p.adj_close[t + 1] / p.adj_close[t]));
      }
      total += stats::pearson(x, y).statistic;
    }
    // Mean reversion and price rounding dilute the loading slightly.
    CHECK(total / 5 == Approx(0.3).margin(0.05));
  }
  SECTION("writes loadable files") {
    Fixture fx(120);
    const auto d = load_dataset(fx.config);
    CHECK(d.panel.rows() == 120);
    CHECK(d.panel.width() == 30);
    CHECK(d.sentiment.size() == fx.market.sentiment.size());
    const auto audit = parse_audit_csv(csv::read_file((fx.dir / "audit.csv").string()), "audit");
    CHECK(audit.size() == 30);
    CHECK_THROWS_AS(make_synthetic_market(SynthSpec{{}, 100}), ConfigError);
  }
}

TEST_CASE("dataset assembly", "[pipeline]") {
  Fixture fx;
  SECTION("split and columns") {
    const auto d = load_dataset(fx.config);
    CHECK(d.split.train == RowRange{0, 210});
    CHECK(d.split.validation == RowRange{210, 240});
    CHECK(d.split.test == RowRange{240, 300});
    CHECK(sentiment_columns(d.panel).size() == 30);
    const auto pv = price_volume_columns(d.panel);
    REQUIRE(pv.size() == 10);
    CHECK(pv[0] == AlignedPanel::column(0, Feature::AdjClose));
    CHECK(pv[1] == AlignedPanel::column(0, Feature::Volume));
    const auto j = split_json(d);
    CHECK(j["width"] == 30);
    CHECK(j["test"]["begin"] == 240);
  }
  SECTION("sentiment for unknown assets is dropped") {
    fx.config.assets = {"ALFA", "CHRL"};
    const auto d = load_dataset(fx.config);
    CHECK(d.panel.num_assets() == 2);
    for (const auto& r : d.sentiment) CHECK((r.asset_id == "ALFA" || r.asset_id == "CHRL"));
  }
  SECTION("missing inputs") {
    fx.config.assets.push_back("ZULU");
    CHECK_THROWS_AS(load_dataset(fx.config), ConfigError);
    fx.config.assets.pop_back();
    fx.config.sentiment_file = "nope.csv";
    CHECK_THROWS_AS(load_dataset(fx.config), ConfigError);
  }
  SECTION("custom lexicon file") {
    testutil::write_file(fx.dir / "lex.tsv", "rally\t-0.9\n");
    fx.config.lexicon = "lex.tsv";
    const auto recs = load_sentiment(fx.config, load_lexicon(fx.config));
    for (const auto& r : recs)
      if (r.text.find("rally") != std::string::npos) CHECK(r.label == Label::Negative);
  }
}

TEST_CASE("model checkpoints", "[pipeline]") {
  Fixture fx;
  const auto d = load_dataset(fx.config);
  const auto t = train_model(fx.config, d, true, 5);
  CHECK(t.report.train_mse.size() == 3);
  const auto j = checkpoint_json(fx.config, t.model, 5);

  SECTION("round trip through text reproduces predictions") {
    const auto back = model_from_checkpoint(fx.config, json::parse(j.dump()), 5, "ckpt");
    CHECK(back.params() == t.model.params());
    CHECK(back.adam_step() == t.model.adam_step());
    const auto a = period_forecasts(t.model, d.panel, d.split.test);
    const auto b = period_forecasts(back, d.panel, d.split.test);
    CHECK(a == b);
  }
  SECTION("stale or foreign checkpoints are refused") {
    CHECK_THROWS_AS(model_from_checkpoint(fx.config, j, 6, "ckpt"), ConfigError);
    auto other = fx.config;
    other.lstm.epochs = 4;
    CHECK_THROWS_AS(model_from_checkpoint(other, j, 5, "ckpt"), ConfigError);
    auto bad = j;
    bad["version"] = 99;
    CHECK_THROWS_AS(model_from_checkpoint(fx.config, bad, 5, "ckpt"), ConfigError);
    bad = j;
    bad["params"].erase(0);
    CHECK_THROWS_AS(model_from_checkpoint(fx.config, bad, 5, "ckpt"), ConfigError);
    bad = j;
    bad.erase("scaler");
    CHECK_THROWS_AS(model_from_checkpoint(fx.config, bad, 5, "ckpt"), ConfigError);
  }
  SECTION("training is seed-deterministic") {
    const auto again = train_model(fx.config, d, true, 5);
    CHECK(again.model.params() == t.model.params());
    CHECK(format_loss_csv(again.report, "") == format_loss_csv(t.report, ""));
    CHECK(train_model(fx.config, d, true, 6).model.params() != t.model.params());
  }
  SECTION("the price-only model reads ten columns") {
    const auto n = train_model(fx.config, d, false, 5);
    CHECK(n.model.input_columns().size() == 10);
    CHECK(n.model.target_columns() == d.panel.columns_of(Feature::AdjClose));
  }
}

TEST_CASE("evaluation range", "[pipeline]") {
  Fixture fx;
  const auto d = load_dataset(fx.config);
  CHECK(evaluation_range(fx.config, d) == d.split.test);
  const auto& dates = d.panel.dates();
  fx.config.down_market = DateWindow{dates[100], dates[119]};
  CHECK(evaluation_range(fx.config, d) == RowRange{100, 120});
  // A weekend-only window holds no trading day.
  fx.config.down_market = DateWindow{Date(2015, 1, 10), Date(2015, 1, 11)};
  CHECK_THROWS_AS(evaluation_range(fx.config, d), ConfigError);
  fx.config.down_market = DateWindow{dates[100], dates[100]};
  CHECK_THROWS_AS(evaluation_range(fx.config, d), ConfigError);
  fx.config.down_market = DateWindow{dates[1], dates[50]};
  CHECK_THROWS_AS(evaluation_range(fx.config, d), ConfigError);
}

TEST_CASE("strategy backtests", "[pipeline]") {
  Fixture fx;
  const auto d = load_dataset(fx.config);
  const auto with = train_model(fx.config, d, true, 3), without = train_model(fx.config, d, false, 3);
  const auto r = run_backtests(fx.config, d.panel, d.split.test, &with.model, &without.model, 7);

  REQUIRE(r.reports.size() == 5);
  CHECK(r.names == std::vector<std::string>{"Buy and Hold", "Best Stock", "Rebalancing", "LSTM", "LSTM Sentiment"});
  CHECK(r.reports[0].sharpe_vs_bh == 1.0);
  CHECK(r.reports[0].bv == 1.0);
  for (const auto& c : r.curves) {
    CHECK(c.values.size() == d.split.test.size());
    CHECK(c.values.front() == fx.config.initial_capital);
  }
  SECTION("worker count does not change anything") {
    auto c = fx.config;
    c.threads = 3;
    const auto r3 = run_backtests(c, d.panel, d.split.test, &with.model, &without.model, 7);
    CHECK(backtest::format_report_csv(r3.reports) == backtest::format_report_csv(r.reports));
  }
  SECTION("strategy subset and missing models") {
    auto c = fx.config;
    c.strategies = {Strategy::Rebalancing, Strategy::BuyAndHold};
    const auto sub = run_backtests(c, d.panel, d.split.test, nullptr, nullptr, 7);
    CHECK(sub.names == std::vector<std::string>{"Rebalancing", "Buy and Hold"});
    CHECK(sub.reports[1].sharpe_vs_bh == 1.0);
    CHECK_THROWS_AS(run_backtests(fx.config, d.panel, d.split.test, nullptr, &without.model, 7), ConfigError);
  }
  SECTION("json report") {
    const auto j = report_json(r.reports);
    CHECK(j["columns"] == backtest::report_columns());
    CHECK(j["rows"].size() == 5);
    CHECK(j["rows"][0]["sr"] == 1.0);
  }
}

TEST_CASE("replicates", "[pipeline]") {
  Fixture fx;
  const auto d = load_dataset(fx.config);
  std::vector<std::size_t> seen;
  const auto run = run_replicates(fx.config, d, [&](std::size_t k, double) { seen.push_back(k); });
  CHECK(seen == std::vector<std::size_t>{0, 1});
  CHECK(run.seeds == std::vector<std::uint64_t>{42, 43});
  REQUIRE(run.comparison);
  CHECK(run.capital_with[0] == run.first.find("LSTM Sentiment")->final_capital);

  // Replicate 0 matches a standalone train + backtest at the configured seed.
  const auto a = train_model(fx.config, d, true, 42), b = train_model(fx.config, d, false, 42);
  const auto single = run_backtests(fx.config, d.panel, d.split.test, &a.model, &b.model, fx.config.mc_seed);
  CHECK(backtest::format_report_csv(single.reports) == backtest::format_report_csv(run.first.reports));

  const auto sig = format_significance_csv(*run.comparison, "");
  const auto rows = csv::parse(sig, "sig");
  REQUIRE(rows.size() == 7);
  CHECK(rows[0].fields == std::vector<std::string>{"Models", "LSTM+S", "LSTM"});
  CHECK(rows[3].fields[1] == "2");
  CHECK(rows[4].fields[1] == "1");
}

TEST_CASE("analysis tables", "[pipeline]") {
  Fixture fx(600);
  const auto d = load_dataset(fx.config);
  SECTION("correlation") {
    const auto rows = correlation_table(d);
    REQUIRE(rows.size() == 5);
    for (const auto& r : rows) {
      // About 60 posts a week, so every full week qualifies.
      CHECK(r.windows >= 110);
      for (const auto& t : r.tests) {
        REQUIRE(t);
        CHECK(std::abs(t->statistic) <= 1.0);
      }
    }
    const auto text = format_correlation_csv(rows, false, "");
    const auto parsed = csv::parse(text, "corr");
    REQUIRE(parsed.size() == 6);
    CHECK(parsed[0].fields == std::vector<std::string>{"asset", "mean", "max", "median", "ratio"});
  }
  SECTION("granger flags the built-in lead") {
    const auto cols = granger_table(d, 8);
    REQUIRE(cols.size() == 5);
    for (const auto& c : cols) {
      REQUIRE(c.report);
      CHECK(c.report->lags[0].test.p_value < 0.05);
    }
    const auto text = format_granger_csv(cols, 8, "");
    const auto parsed = csv::parse(text, "granger");
    REQUIRE(parsed.size() == 9);
    CHECK(parsed[0].fields.front() == "lag");
    CHECK(parsed[0].fields.back() == "significant");
    CHECK(parsed[1].fields.front() == "L1");
    CHECK(parsed[8].fields.front() == "L8");
    CHECK(parsed[1].fields.back() == "ALFA;BRVO;CHRL;DLTA;ECHO");
    const auto long_form = csv::parse(format_granger_long_csv(*cols[0].report, ""), "g");
    CHECK(long_form[0].fields == std::vector<std::string>{"lag", "F", "df1", "df2", "p"});
    CHECK(long_form.size() == 9);
  }
  SECTION("granger on a flat ratio is reported as missing") {
    auto flat = d;
    for (std::size_t t = 0; t < flat.panel.rows(); ++t) flat.panel.at(t, 1, Feature::Ratio) = 1.0;
    const auto cols = granger_table(flat, 8);
    CHECK(cols[0].report);
    CHECK_FALSE(cols[1].report);
    CHECK_FALSE(cols[1].note.empty());
    CHECK(csv::parse(format_granger_csv(cols, 8, ""), "g")[1].fields[2] == "NA");
  }
  SECTION("frontier moments") {
    const auto m = frontier_moments(fx.config, d);
    CHECK(m.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(m.covariance(i, i) > 0);
  }
}

TEST_CASE("audit table", "[pipeline]") {
  const std::vector<AuditSample> s = {{"great", Label::Positive}, {"awful", Label::Negative}, {"plain", Label::Neutral}};
  const auto a = audit_labels(s, Lexicon::builtin());
  const auto rows = csv::parse(format_audit_csv(a, ""), "audit");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].fields == std::vector<std::string>{"truth", "Positive", "Negative", "Neutral", "support"});
  CHECK(rows[1].fields[1] == "1.0000");
  // "awful" is not in the built-in lexicon, so the negative text lands in Neutral.
  CHECK(rows[2].fields[3] == "1.0000");
}

TEST_CASE("svg output", "[pipeline]") {
  const auto line = svg::line_chart("t<1>", {"a", "b"}, {{1, 2, 3}, {3, 2, 1}}, "x0", "x1", "y");
  CHECK(line.rfind("<svg", 0) == 0);
  CHECK(line.find("t&lt;1&gt;") != std::string::npos);
  CHECK(line.size() > 100);
  CHECK(line == svg::line_chart("t<1>", {"a", "b"}, {{1, 2, 3}, {3, 2, 1}}, "x0", "x1", "y"));
  const auto sc = svg::scatter("f", {0.1, 0.2, 0.3}, {1, 2, 3}, "vol", "ret", 1);
  CHECK(sc.find("fill=\"#d62728\"") != std::string::npos);
  const auto h = svg::histograms("h", {"a"}, {{1, 1, 2, 5}}, 4, "ratio");
  CHECK(h.find("</svg>") != std::string::npos);
}
