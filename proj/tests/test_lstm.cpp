#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "sentiport/lstm.hpp"
#include "test_util.hpp"

using namespace sentiport;
using namespace sentiport::lstm;
using Catch::Approx;

namespace {

LstmConfig small_config(std::size_t layers = 2, std::size_t hidden = 4, std::size_t window = 3) {
  LstmConfig c;
  c.hidden_size = hidden;
  c.num_layers = layers;
  c.window = window;
  return c;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

LstmModel model_for(const AlignedPanel& p, LstmConfig c) {
  LstmModel m(c, iota(p.width()), p.columns_of(Feature::AdjClose));
  m.initialize(c.seed);
  m.fit_scalers(p, {0, p.rows()});
  return m;
}

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("make_windows", "[lstm]") {
  const auto p7 = testutil::make_panel(7, 5, [](std::size_t r, std::size_t a) { return 1.0 + r + 10 * a; });
  const auto w7 = make_windows(p7);
  REQUIRE(w7.size() == 1);
  CHECK(w7[0].input.size() == 6 * 30);
  CHECK(w7[0].target.size() == 5);

  const auto p10 = testutil::make_panel(10, 5, [](std::size_t r, std::size_t a) { return 1.0 + r + 10 * a; });
  const auto w10 = make_windows(p10);
  REQUIRE(w10.size() == 4);
  for (std::size_t k = 0; k < w10.size(); ++k) {
    CHECK(w10[k].target_row == k + 6);
    for (std::size_t a = 0; a < 5; ++a) CHECK(w10[k].target[a] == p10.price(k + 6, a));
    CHECK(w10[k].input[0] == p10.at(k, 0));
  }
  CHECK_THROWS_AS(make_windows(testutil::make_panel(6, 5, [](auto, auto) { return 1.0; })), InsufficientDataError);
}

TEST_CASE("hand-unrolled single cell", "[lstm]") {
  LstmConfig c;
  c.input_width = 1;
  c.hidden_size = 2;
  c.num_layers = 1;
  c.outputs = 1;
  c.window = 2;
  const Network net(c);
  const auto& L = net.layout();
  REQUIRE(L.total == 8 * 1 + 8 * 2 + 8 + 2 + 1);

  std::vector<double> p(L.total);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.05 * static_cast<double>(i % 7) - 0.13 * static_cast<double>(i % 3);
  const std::vector<double> x = {0.7, -0.4};

  // W is 8x1, U is 8x2, b is 8; gate rows i0 i1 f0 f1 g0 g1 o0 o1.
  const auto& ly = L.layers[0];
  double h[2] = {0, 0}, cs[2] = {0, 0};
  for (double xt : x) {
    double z[8];
    for (int r = 0; r < 8; ++r) z[r] = p[ly.w + r] * xt + p[ly.u + 2 * r] * h[0] + p[ly.u + 2 * r + 1] * h[1] + p[ly.b + r];
    double hn[2];
    for (int k = 0; k < 2; ++k) {
      const double i = sig(z[k]), f = sig(z[2 + k]), g = std::tanh(z[4 + k]), o = sig(z[6 + k]);
      cs[k] = f * cs[k] + i * g;
      hn[k] = o * std::tanh(cs[k]);
    }
    h[0] = hn[0];
    h[1] = hn[1];
  }
  const double expected = p[L.out_w] * h[0] + p[L.out_w + 1] * h[1] + p[L.out_b];
  CHECK(std::abs(net.predict(p, x)[0] - expected) <= 1e-12);
}

TEST_CASE("forward", "[lstm]") {
  const auto panel = testutil::make_panel(40, 5, [](std::size_t r, std::size_t a) { return 50.0 + r * (a + 1); });
  auto m = model_for(panel, small_config());
  const auto ws = make_windows(panel, {0, panel.rows()}, iota(30), panel.columns_of(Feature::AdjClose), 3);

  SECTION("deterministic on repeated input") { CHECK(m.forward(ws[3].input) == m.forward(ws[3].input)); }
  SECTION("zero parameters and zero scaled input give the scaler inverse of zero") {
    std::fill(m.params().begin(), m.params().end(), 0.0);
    std::vector<double> raw(ws[0].input.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = m.input_scaler().lower()[i % 30];
    const auto y = m.forward(raw);
    for (std::size_t k = 0; k < 5; ++k) CHECK(y[k] == m.target_scaler().inverse(k, 0.0));
  }
  SECTION("shape mismatch") {
    CHECK_THROWS_AS(m.forward(std::vector<double>(10, 1.0)), DimensionError);
  }
}

TEST_CASE("initialisation", "[lstm]") {
  const auto panel = testutil::make_panel(20, 5, [](std::size_t r, std::size_t a) { return 10.0 + r + a; });
  const auto m = model_for(panel, small_config(3, 13, 6));
  const double bound = 1.0 / std::sqrt(13.0);
  const auto& L = m.network().layout();
  for (const auto& ly : L.layers)
    for (std::size_t k = 0; k < 13; ++k) CHECK(m.params()[ly.b + 13 + k] >= 1.0 - bound);
  for (std::size_t i = 0; i < L.layers[0].b; ++i) CHECK(std::abs(m.params()[i]) <= bound);
}

TEST_CASE("gradient check", "[lstm]") {
  const auto panel = testutil::make_panel(30, 5, [](std::size_t r, std::size_t a) {
    return 20.0 + 5.0 * std::sin(0.3 * r + a) + a;
  });
  const auto ws = make_windows(panel, {0, panel.rows()}, iota(30), panel.columns_of(Feature::AdjClose), 4);

  SECTION("analytic gradients match finite differences across seeds") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto c = small_config(3, 5, 4);
      c.seed = seed;
      auto m = model_for(panel, c);
      CHECK(gradient_check(m, ws[seed], 200, seed) < 1e-4);
    }
  }
  SECTION("every parameter of a tiny network") {
    auto m = model_for(panel, small_config(2, 3, 4));
    CHECK(gradient_check_at(m, ws[0], iota(m.params().size())) < 1e-4);
  }
  SECTION("a sign-flipped gradient is caught") {
    // With the |ga| + |gn| denominator an exact sign flip scores 1, the
    // largest value the measure can take.
    auto m = model_for(panel, small_config(2, 3, 4));
    const double err = gradient_check(m, ws[0], 50, 9, [](std::span<double> g) {
      for (auto& v : g) v = -v;
    });
    CHECK(err == Approx(1.0).margin(1e-6));
    CHECK(err > 1e-4);
  }
  SECTION("zero parameters: bias gradients still match") {
    auto m = model_for(panel, small_config(2, 3, 4));
    std::fill(m.params().begin(), m.params().end(), 0.0);
    CHECK(gradient_check_at(m, ws[2], m.bias_indices()) < 1e-4);
  }
}

TEST_CASE("scaler", "[lstm]") {
  auto panel = testutil::make_panel(50, 2, [](std::size_t r, std::size_t a) { return 5.0 + std::cos(0.2 * r) + a; });
  const auto cols = iota(panel.width());
  const auto s = MinMaxScaler::fit(panel, {0, 35}, cols);
  Rng rng(71);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (int i = 0; i < 50; ++i) {
      const double x = rng.uniform(s.lower()[j], s.upper()[j]);
      CHECK(std::abs(s.inverse(j, s.scale(j, x)) - x) <= 1e-10);
    }
  }
  SECTION("fitted on training rows only") {
    auto spiked = panel;
    spiked.at(45, 0, Feature::AdjClose) = 1e6;
    CHECK(MinMaxScaler::fit(spiked, {0, 35}, cols) == s);
  }
  SECTION("zero-range column is shifted") {
    const auto vol = MinMaxScaler::fit(panel, {0, 35}, panel.columns_of(Feature::Volume));
    CHECK(vol.scale(0, 1000.0) == 0.0);
    CHECK(vol.inverse(0, 0.25) == 1000.25);
  }
  SECTION("model scalers never refit") {
    auto m = model_for(panel, small_config());
    CHECK_THROWS_AS(m.fit_scalers(panel, {0, 10}), ConfigError);
  }
}

TEST_CASE("training", "[lstm]") {
  SECTION("constant prices are learned") {
    const auto panel = testutil::make_panel(60, 5, [](std::size_t, std::size_t a) { return 42.0 + a; });
    auto c = small_config(1, 4, 6);
    c.epochs = 200;
    auto m = model_for(panel, c);
    const auto ws = make_windows(panel, {0, 60}, iota(30), panel.columns_of(Feature::AdjClose));
    const std::span<const Window> all(ws);
    const auto rep = train(m, all.subspan(0, 40), all.subspan(40));
    CHECK(rep.train_mse.size() == 200);
    CHECK(*std::min_element(rep.train_mse.begin(), rep.train_mse.end()) < 1e-6);
    CHECK(rep.val_mse[rep.best_epoch] == *std::min_element(rep.val_mse.begin(), rep.val_mse.end()));
    const auto pred = predict_series(m, panel, {40, 60});
    for (const auto& row : pred.prices)
      for (std::size_t a = 0; a < 5; ++a) CHECK(std::abs(row[a] - (42.0 + a)) / (42.0 + a) < 0.01);
  }
  SECTION("sine wave beats persistence") {
    const auto panel = testutil::make_panel(260, 1, [](std::size_t r, std::size_t) {
      return 100.0 + 10.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(r) / 20.0);
    });
    auto c = small_config(1, 8, 6);
    c.epochs = 150;
    const std::vector<std::size_t> in = {0};
    const std::vector<std::size_t> out = {0};
    LstmModel m(c, in, out);
    m.initialize(c.seed);
    m.fit_scalers(panel, {0, 200});
    const auto train_w = make_windows(panel, {0, 200}, in, out);
    const auto val_w = make_windows(panel, {194, 260}, in, out);
    const auto rep = train(m, train_w, val_w);
    CHECK(rep.train_mse.back() < rep.initial_train_mse);
    double persistence = 0;
    for (const auto& w : val_w) {
      const double e = m.scale_target(std::vector<double>{w.input.back()})[0] - m.scale_target(w.target)[0];
      persistence += e * e;
    }
    persistence /= static_cast<double>(val_w.size());
    CHECK(rep.val_mse[rep.best_epoch] < persistence);
  }
  SECTION("same seed gives identical loss trajectories") {
    const auto panel = testutil::make_panel(50, 5, [](std::size_t r, std::size_t a) { return 30.0 + std::sin(r * 0.5 + a); });
    auto c = small_config(2, 4, 6);
    c.epochs = 5;
    c.batch_size = 7;
    const auto ws = make_windows(panel, {0, 50}, iota(30), panel.columns_of(Feature::AdjClose));
    const std::span<const Window> all(ws);
    auto a = model_for(panel, c), b = model_for(panel, c);
    const auto ra = train(a, all.subspan(0, 30), all.subspan(30));
    const auto rb = train(b, all.subspan(0, 30), all.subspan(30));
    CHECK(ra.train_mse == rb.train_mse);
    CHECK(ra.val_mse == rb.val_mse);
    CHECK(a.params() == b.params());
  }
  SECTION("divergence is reported") {
    const auto panel = testutil::make_panel(30, 5, [](std::size_t r, std::size_t a) { return 30.0 + r + a; });
    auto c = small_config(1, 3, 6);
    c.epochs = 3;
    auto m = model_for(panel, c);
    m.params()[0] = std::numeric_limits<double>::quiet_NaN();
    const auto ws = make_windows(panel, {0, 30}, iota(30), panel.columns_of(Feature::AdjClose));
    const std::span<const Window> all(ws);
    try {
      train(m, all.subspan(0, 15), all.subspan(15));
      FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
      CHECK(e.epoch() == 1);
    }
  }
}

TEST_CASE("predict_series", "[lstm]") {
  auto panel = testutil::make_panel(30, 5, [](std::size_t r, std::size_t a) { return 10.0 + std::sin(r + a) + a; });
  const auto m = model_for(panel, small_config(2, 4, 6));

  const auto one = predict_series(m, panel, {3, 10});
  REQUIRE(one.rows.size() == 1);
  CHECK(one.rows[0] == 9);
  CHECK(one.dates[0] == panel.dates()[9]);
  CHECK_THROWS_AS(predict_series(m, panel, {3, 9}), InsufficientDataError);

  SECTION("no look-ahead") {
    const auto base = predict_series(m, panel, {0, 30});
    for (std::size_t t : {6u, 12u, 20u, 29u}) {
      auto perturbed = panel;
      for (std::size_t a = 0; a < 5; ++a) perturbed.at(t, a, Feature::AdjClose) += 3.0;
      const auto p = predict_series(m, perturbed, {0, 30});
      for (std::size_t i = 0; i < base.rows.size(); ++i) {
        if (base.rows[i] <= t)
          CHECK(p.prices[i] == base.prices[i]);
        else if (base.rows[i] <= t + 6)
          CHECK(p.prices[i] != base.prices[i]);
      }
    }
  }
}
