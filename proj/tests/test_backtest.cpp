#include <catch2/catch_amalgamated.hpp>

#include "sentiport/backtest.hpp"
#include "test_util.hpp"

using namespace sentiport;
using namespace sentiport::backtest;
using portfolio::StrategyKind;
using Catch::Approx;

namespace {

WealthCurve curve(std::vector<double> values) {
  WealthCurve c;
  c.values = std::move(values);
  return c;
}

std::vector<std::vector<double>> random_gross(Rng& rng, std::size_t periods, std::size_t assets) {
  std::vector<std::vector<double>> g(periods, std::vector<double>(assets));
  for (auto& row : g)
    for (auto& v : row) v = std::exp(0.02 * rng.normal());
  return g;
}

}  // namespace

TEST_CASE("run_backtest", "[backtest]") {
  SECTION("flat market keeps capital") {
    const std::vector<std::vector<double>> g(5, {1.0, 1.0});
    const auto c = run_backtest(std::vector(5, Weights::equal(2)), g);
    for (double v : c.values) CHECK(v == kDefaultCapital);
  }
  SECTION("two ten-percent days on a single asset") {
    const std::vector<std::vector<double>> g(2, {1.1});
    const auto c = run_backtest(std::vector(2, Weights{{1.0}}), g);
    CHECK(c.values.back() == Approx(12100.0).epsilon(1e-12));
  }
  SECTION("balanced pair cancels") {
    const auto c = run_backtest({Weights::equal(2)}, {{1.2, 0.8}});
    CHECK(c.values.back() == Approx(10000.0).epsilon(1e-12));
  }
  SECTION("single asset matches closed-form compounding") {
    Rng rng(107);
    for (int trial = 0; trial < 20; ++trial) {
      const auto g = random_gross(rng, 250, 1);
      const auto c = run_backtest(std::vector(g.size(), Weights{{1.0}}), g, 500.0);
      double log_growth = 0;
      for (const auto& r : g) log_growth += std::log(r[0]);
      CHECK(std::abs(c.values.back() - 500.0 * std::exp(log_growth)) / c.values.back() <= 1e-9);
    }
  }
  SECTION("input validation") {
    CHECK_THROWS_AS(run_backtest({Weights::equal(2)}, {{1.0, 1.0}, {1.0, 1.0}}), AlignmentError);
    CHECK_THROWS_AS(run_backtest({Weights{{0.7, 0.7}}}, {{1.0, 1.0}}), ValidationError);
    CHECK_THROWS_AS(run_backtest({Weights::equal(3)}, {{1.0, 1.0}}), DimensionError);
    CHECK_THROWS_AS(run_backtest({Weights::equal(2)}, {{1.0, 1.0}}, 0.0), ValidationError);
  }
}

TEST_CASE("final metrics", "[backtest]") {
  SECTION("drawdown follows the final value") {
    CHECK(max_drawdown(std::vector<double>{100, 120, 90}) == Approx(0.25));
    CHECK(peak_to_trough_drawdown(std::vector<double>{100, 120, 90}) == Approx(0.25));
    CHECK(max_drawdown(std::vector<double>{100, 80, 120}) == 0.0);
    CHECK(peak_to_trough_drawdown(std::vector<double>{100, 80, 120}) == Approx(0.2));
    CHECK_THROWS_AS(max_drawdown(std::vector<double>{100}), InsufficientDataError);
  }
  SECTION("drawdowns are bounded and the literal one never exceeds peak-to-trough") {
    Rng rng(109);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> v{100};
      for (int t = 0; t < 30; ++t) v.push_back(v.back() * std::exp(0.05 * rng.normal()));
      const double lit = max_drawdown(v), ptt = peak_to_trough_drawdown(v);
      CHECK(lit >= 0);
      CHECK(lit < 1);
      CHECK(lit <= ptt + 1e-15);
    }
  }
  SECTION("annualized return") {
    WealthCurve c;
    c.values.assign(253, 1.0);
    c.values.back() = 2.0;
    CHECK(annualized_return(c) == Approx(1.0).epsilon(1e-12));
    auto three_years = curve(std::vector<double>(757, 1.0));
    three_years.values.back() = 1.49;
    // (1.49)^(1/3) - 1.
    CHECK(annualized_return(three_years) == Approx(0.142165).margin(1e-6));
  }
  SECTION("fAPV multiplies across concatenated segments") {
    Rng rng(113);
    for (int trial = 0; trial < 50; ++trial) {
      const auto g = random_gross(rng, 60, 3);
      const std::vector<std::vector<double>> g1(g.begin(), g.begin() + 25), g2(g.begin() + 25, g.end());
      const auto w = std::vector(60, Weights::equal(3));
      const auto whole = run_backtest(w, g);
      const auto a = run_backtest({w.begin(), w.begin() + 25}, g1);
      const auto b = run_backtest({w.begin() + 25, w.end()}, g2);
      CHECK(std::abs(fapv(whole) - fapv(a) * fapv(b)) <= 1e-12 * fapv(whole));
    }
  }
  SECTION("metrics do not depend on initial capital") {
    Rng rng(127);
    const auto g = random_gross(rng, 100, 2);
    const auto w = std::vector(100, Weights{{0.3, 0.7}});
    const auto bh = run_backtest(std::vector(100, Weights::equal(2)), g);
    const auto bh2 = run_backtest(std::vector(100, Weights::equal(2)), g, 777.0);
    const auto a = evaluate("x", run_backtest(w, g), bh), b = evaluate("x", run_backtest(w, g, 777.0), bh2);
    CHECK(a.fapv == Approx(b.fapv).epsilon(1e-12));
    CHECK(a.bv == Approx(b.bv).epsilon(1e-12));
    CHECK(a.sharpe_vs_bh == Approx(b.sharpe_vs_bh).epsilon(1e-9));
    CHECK(a.mdd == Approx(b.mdd).margin(1e-12));
    CHECK(a.annualized_return == Approx(b.annualized_return).epsilon(1e-9));
  }
}

TEST_CASE("Sharpe ratio against buy and hold", "[backtest]") {
  const std::vector<double> r = {0.01, -0.02, 0.015, 0.0, 0.03};
  CHECK(sharpe_vs_bh(r, r) == 1.0);
  SECTION("a scaled copy keeps ratio one") {
    std::vector<double> s(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) s[i] = 2.0 * r[i];
    CHECK(sharpe_vs_bh(s, r) == Approx(1.0).epsilon(1e-12));
  }
  SECTION("a mirrored copy gives minus one") {
    std::vector<double> s(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) s[i] = -r[i];
    CHECK(sharpe_vs_bh(s, r) == Approx(-1.0).epsilon(1e-12));
  }
  SECTION("degenerate inputs") {
    CHECK_THROWS_AS(sharpe_vs_bh(std::vector<double>{0.01, 0.02}, std::vector<double>{0.0, 0.0}), DegenerateInputError);
    CHECK_THROWS_AS(sharpe_vs_bh(std::vector<double>{0.01}, std::vector<double>{0.01}), InsufficientDataError);
  }
  SECTION("buy and hold scores exactly one on random markets") {
    Rng rng(131);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t assets = 1 + rng.index(6);
      std::vector<std::vector<double>> px(60, std::vector<double>(assets));
      for (std::size_t a = 0; a < assets; ++a) {
        double v = 10 + rng.uniform(0, 90);
        for (auto& row : px) row[a] = (v *= std::exp(0.02 * rng.normal()));
      }
      const auto panel = testutil::make_panel(60, assets, [&](std::size_t t, std::size_t a) { return px[t][a]; });
      const RowRange range{10, 60};
      const auto g = sentiport::gross_returns(panel, range);
      const auto bh = run_backtest(portfolio::strategy_weights(StrategyKind::BuyAndHold, panel, range), g);
      const auto rep = evaluate("Buy and Hold", bh, bh);
      CHECK(rep.sharpe_vs_bh == 1.0);
      CHECK(rep.bv == 1.0);
    }
  }
}

TEST_CASE("report formatting", "[backtest]") {
  const auto bh = run_backtest(std::vector(3, Weights::equal(2)), {{1.1, 0.9}, {1.0, 1.05}, {0.95, 1.2}});
  const auto rb = run_backtest(std::vector(3, Weights{{0.2, 0.8}}), {{1.1, 0.9}, {1.0, 1.05}, {0.95, 1.2}});
  const auto text = format_report_csv({evaluate("Buy and Hold", bh, bh), evaluate("Other", rb, bh)}, "# c\n");
  const auto rows = csv::parse(text.substr(4), "mem");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].fields == std::vector<std::string>{"Models", "Capital", "fAPV", "BV", "SR", "MDD(%)", "AR(%)"});
  CHECK(rows[1].fields[0] == "Buy and Hold");
  CHECK(rows[1].fields[3] == "1.0000");
  CHECK(rows[1].fields[4] == "1.0000");

  SECTION("curves") {
    const auto c = format_curves_csv({"a", "b"}, {bh, rb});
    CHECK(csv::parse(c, "mem").size() == 5);
  }
}

TEST_CASE("compare_replicates", "[backtest]") {
  const std::vector<double> a = {10, 11, 12}, b = {9, 9, 9};
  const auto c = compare_replicates(a, b);
  CHECK(c.mean_with == 11);
  CHECK(c.mean_without == 9);
  CHECK(c.test.statistic == Approx(2.0 * std::sqrt(3.0)));
  CHECK_THROWS_AS(compare_replicates(a, a), DegenerateInputError);
}
