// sentiport: command-line front end for the sentiment-aware portfolio pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "sentiport/pipeline.hpp"
#include "sentiport/svg.hpp"

namespace pl = sentiport::pipeline;
using sentiport::csv::fixed;
using pl::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> threads;
  std::string down_market;
  bool quiet = false;
};

pl::RunConfig load(const Options& o) {
  if (o.config.empty()) throw sentiport::ConfigError("--config is required");
  if (!std::filesystem::is_regular_file(o.config)) throw sentiport::ConfigError("config file not found: " + o.config);
  auto c = pl::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) {
    c.output_dir = std::filesystem::absolute(o.out).string();
  }
  if (o.threads) c.threads = *o.threads;
  if (!o.down_market.empty()) c.down_market = pl::parse_window(o.down_market);
  c.validate();
  return c;
}

std::string svg_preamble(const pl::RunConfig& c) {
  auto p = pl::preamble(c);
  p.pop_back();
  return "<!--" + p.substr(1) + " -->\n";
}

std::string suffix(const pl::RunConfig& c) { return c.down_market ? "_down" : ""; }

void log(const Options& o, const std::string& msg) {
  if (!o.quiet) std::cerr << msg << "\n";
}

int cmd_ingest(const Options& o) {
  const auto c = load(o);
  const auto d = pl::load_dataset(c);
  const auto dir = c.output_path();
  pl::write_text(dir / "panel.csv", sentiport::format_panel_csv(d.panel, pl::preamble(c)));
  pl::write_text(dir / "split.json", pl::json_document(c, pl::split_json(d)));
  std::cout << "rows " << d.panel.rows() << "\nassets " << d.panel.num_assets() << "\nwidth " << d.panel.width()
            << "\nrecords " << d.sentiment.size() << "\n";
  return 0;
}

int cmd_label(const Options& o) {
  const auto c = load(o);
  const auto records = pl::load_sentiment(c, pl::load_lexicon(c));
  pl::write_text(c.output_path() / "labelled.csv", pl::preamble(c) + sentiport::format_sentiment_csv(records));
  std::size_t counts[3] = {};
  for (const auto& r : records) ++counts[static_cast<std::size_t>(r.label)];
  std::cout << "records " << records.size() << "\n";
  for (auto l : sentiport::kLabels) std::cout << sentiport::to_string(l) << " " << counts[static_cast<std::size_t>(l)] << "\n";
  return 0;
}

int cmd_audit(const Options& o) {
  const auto c = load(o);
  const auto path = (c.data_path() / c.audit_file).string();
  if (!std::filesystem::is_regular_file(path)) throw sentiport::ConfigError("missing audit file: " + path);
  const auto sample = sentiport::parse_audit_csv(sentiport::csv::read_file(path), path);
  const auto a = sentiport::audit_labels(sample, pl::load_lexicon(c));
  pl::write_text(c.output_path() / "audit.csv", pl::format_audit_csv(a, pl::preamble(c)));
  std::cout << "samples " << a.n << "\naccuracy " << fixed(a.accuracy, 4) << "\n";
  return 0;
}

int cmd_analyze(const Options& o) {
  const auto c = load(o);
  const auto d = pl::load_dataset(c);
  const auto dir = c.output_path();
  const auto pre = pl::preamble(c);

  const auto corr = pl::correlation_table(d);
  pl::write_text(dir / "correlation.csv", pl::format_correlation_csv(corr, false, pre));
  pl::write_text(dir / "correlation_pvalues.csv", pl::format_correlation_csv(corr, true, pre));

  const auto gr = pl::granger_table(d, c.max_lag);
  pl::write_text(dir / "granger.csv", pl::format_granger_csv(gr, c.max_lag, pre));
  for (const auto& g : gr) {
    if (g.report) pl::write_text(dir / ("granger_" + g.asset + ".csv"), pl::format_granger_long_csv(*g.report, pre));
    else log(o, "granger " + g.asset + ": " + g.note);
  }

  std::vector<std::vector<double>> ratios(d.panel.num_assets());
  for (std::size_t a = 0; a < ratios.size(); ++a)
    for (std::size_t t = 0; t < d.panel.rows(); ++t) ratios[a].push_back(d.panel.at(t, a, sentiport::Feature::Ratio));
  pl::write_text(dir / "ratio_hist.svg",
                 svg_preamble(c) + sentiport::svg::histograms("Daily positive/negative ratio", d.panel.assets(), ratios,
                                                              30, "ratio"));
  for (const auto& r : corr) std::cout << r.asset << " windows " << r.windows << "\n";
  return 0;
}

void write_checkpoint(const pl::RunConfig& c, const pl::TrainedModel& t, bool with_sentiment) {
  const auto dir = c.output_path();
  pl::write_text(dir / pl::checkpoint_name(with_sentiment),
                 pl::checkpoint_json(c, t.model, c.seed).dump(1) + "\n");
  pl::write_text(dir / (with_sentiment ? "loss_lstm_sentiment.csv" : "loss_lstm.csv"),
                 pl::format_loss_csv(t.report, pl::preamble(c)));
}

int cmd_train(const Options& o) {
  const auto c = load(o);
  const auto d = pl::load_dataset(c);
  for (bool with : {true, false}) {
    if (!c.has(with ? pl::Strategy::LstmSentiment : pl::Strategy::Lstm)) continue;
    const auto t = pl::train_model(c, d, with, c.seed);
    write_checkpoint(c, t, with);
    std::cout << (with ? "lstm_sentiment" : "lstm") << " best_epoch " << t.report.best_epoch + 1 << " val_mse "
              << sentiport::csv::fmt(t.report.val_mse[t.report.best_epoch]) << "\n";
  }
  return 0;
}

void write_backtest_outputs(const pl::RunConfig& c, const pl::BacktestResult& r, const std::string& stem) {
  const auto dir = c.output_path();
  const auto pre = pl::preamble(c);
  pl::write_text(dir / ("performance" + stem + ".csv"), sentiport::backtest::format_report_csv(r.reports, pre));
  pl::write_text(dir / ("performance" + stem + ".json"), pl::json_document(c, pl::report_json(r.reports)));
  pl::write_text(dir / ("curves" + stem + ".csv"), sentiport::backtest::format_curves_csv(r.names, r.curves, pre));
  std::vector<std::vector<double>> series;
  for (const auto& cv : r.curves) series.push_back(cv.values);
  const auto& dates = r.curves.front().dates;
  pl::write_text(dir / ("curves" + stem + ".svg"),
                 svg_preamble(c) + sentiport::svg::line_chart("Daily portfolio value", r.names, series,
                                                              dates.front().iso(), dates.back().iso(), "capital"));
}

void print_report(const std::vector<sentiport::backtest::PerfReport>& rows) {
  std::cout << sentiport::backtest::format_report_csv(rows);
}

int cmd_backtest(const Options& o) {
  const auto c = load(o);
  const auto d = pl::load_dataset(c);
  const auto range = pl::evaluation_range(c, d);
  std::optional<sentiport::lstm::LstmModel> with, without;
  for (bool w : {true, false}) {
    if (!c.has(w ? pl::Strategy::LstmSentiment : pl::Strategy::Lstm)) continue;
    const auto path = c.output_path() / pl::checkpoint_name(w);
    if (!std::filesystem::is_regular_file(path))
      throw sentiport::ConfigError("missing checkpoint " + path.string() + "; run 'train' first");
    json j;
    try {
      j = json::parse(sentiport::csv::read_file(path.string()));
    } catch (const json::parse_error& e) {
      throw sentiport::ConfigError(path.string() + ": " + e.what());
    }
    (w ? with : without) = pl::model_from_checkpoint(c, j, c.seed, path.string());
  }
  const auto r = pl::run_backtests(c, d.panel, range, with ? &*with : nullptr, without ? &*without : nullptr, c.mc_seed);
  write_backtest_outputs(c, r, suffix(c));
  print_report(r.reports);
  return 0;
}

int cmd_report(const Options& o) {
  const auto c = load(o);
  const auto d = pl::load_dataset(c);
  const auto run = pl::run_replicates(c, d, [&](std::size_t k, double secs) {
    log(o, "replicate " + std::to_string(k + 1) + "/" + std::to_string(c.replicates) + " done in " + fixed(secs, 1) + "s");
  });
  const auto sfx = suffix(c);
  write_backtest_outputs(c, run.first, sfx);
  const auto dir = c.output_path();
  const auto pre = pl::preamble(c);
  std::string rep = pre + "replicate,seed";
  if (c.has(pl::Strategy::LstmSentiment)) rep += ",lstm_sentiment";
  if (c.has(pl::Strategy::Lstm)) rep += ",lstm";
  rep += "\n";
  for (std::size_t k = 0; k < run.seeds.size(); ++k) {
    rep += std::to_string(k) + "," + std::to_string(run.seeds[k]);
    if (!run.capital_with.empty()) rep += "," + fixed(run.capital_with[k], 6);
    if (!run.capital_without.empty()) rep += "," + fixed(run.capital_without[k], 6);
    rep += "\n";
  }
  pl::write_text(dir / ("replicates" + sfx + ".csv"), rep);
  print_report(run.first.reports);
  if (run.comparison) {
    const auto sig = pl::format_significance_csv(*run.comparison, pre);
    pl::write_text(dir / ("significance" + sfx + ".csv"), sig);
    std::cout << sig.substr(pre.size());
  } else {
    log(o, "significance test skipped: needs both LSTM strategies and at least 2 replicates");
  }
  return 0;
}

int cmd_frontier(const Options& o) {
  const auto c = load(o);
  const auto d = pl::load_dataset(c);
  const auto m = pl::frontier_moments(c, d);
  const auto samples = sentiport::portfolio::sample_simplex_flat(m.size(), c.mc_count, c.mc_seed);
  const auto pts = sentiport::portfolio::evaluate_frontier(samples, m, c.risk_free, c.threads);
  const auto best = sentiport::portfolio::select_max_sharpe(samples, m, c.risk_free, c.threads);
  const auto pre = pl::preamble(c);
  std::string out = pre + "exp_return,volatility,sharpe\n";
  std::vector<double> xs, ys;
  for (const auto& p : pts) {
    out += sentiport::csv::fmt(p.exp_return) + "," + sentiport::csv::fmt(p.volatility) + "," +
           sentiport::csv::fmt(p.sharpe) + "\n";
    xs.push_back(p.volatility);
    ys.push_back(p.exp_return);
  }
  const auto dir = c.output_path();
  pl::write_text(dir / "frontier.csv", out);
  std::string b = pre + "asset,weight\n";
  for (std::size_t a = 0; a < m.size(); ++a)
    b += sentiport::csv::escape(d.panel.assets()[a]) + "," + fixed(best.best.weights.values[a], 6) + "\n";
  pl::write_text(dir / "frontier_best.csv", b);
  pl::write_text(dir / "frontier.svg",
                 svg_preamble(c) + sentiport::svg::scatter("Monte-Carlo efficient frontier", xs, ys, "volatility",
                                                           "expected return", best.index));
  std::cout << b.substr(pre.size()) << "sharpe " << sentiport::csv::fmt(best.best.sharpe) << "\n";
  return 0;
}

int cmd_synth(const std::string& dir, std::uint64_t seed, std::size_t days, double rho) {
  pl::SynthSpec spec;
  spec.seed = seed;
  spec.days = days;
  spec.rho = rho;
  const auto market = pl::make_synthetic_market(spec);
  json cfg = {{"assets", spec.assets}, {"data_dir", "."}, {"output_dir", "out"}, {"lstm", {{"epochs", 100}}}};
  pl::write_synthetic_dataset(market, dir, cfg);
  std::cout << "wrote " << spec.assets.size() << " assets, " << spec.days << " days, " << market.sentiment.size()
            << " posts to " << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sentiment-aware portfolio selection pipeline"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "JSON run configuration")->required();
    s->add_option("--seed", o.seed, "override the model seed");
    s->add_option("--out", o.out, "override the output directory");
    s->add_option("--threads", o.threads, "Monte-Carlo worker threads")->check(CLI::PositiveNumber);
    s->add_flag("--quiet", o.quiet, "suppress progress on stderr");
    return s;
  };
  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
    bool window;
  };
  const Cmd cmds[] = {
      {"ingest", "align prices and sentiment into a panel", cmd_ingest, false},
      {"label", "label sentiment texts with the lexicon", cmd_label, false},
      {"audit", "confusion matrix of the labeller on a hand-labelled sample", cmd_audit, false},
      {"analyze", "weekly correlation and Granger causality tables", cmd_analyze, false},
      {"train", "train both LSTM forecasters and write checkpoints", cmd_train, false},
      {"backtest", "run every strategy from saved checkpoints", cmd_backtest, true},
      {"report", "seeded replicates, performance table and significance test", cmd_report, true},
      {"frontier", "Monte-Carlo efficient frontier at the end of training", cmd_frontier, false},
  };
  std::vector<std::pair<CLI::App*, const Cmd*>> subs;
  for (const auto& c : cmds) {
    auto* s = common(app.add_subcommand(c.name, c.help));
    if (c.window) s->add_option("--down-market", o.down_market, "restrict to FROM,TO (yyyy-mm-dd)");
    subs.emplace_back(s, &c);
  }
  std::string synth_dir;
  std::uint64_t synth_seed = 2024;
  std::size_t synth_days = 1500;
  double synth_rho = 0.3;
  auto* synth = app.add_subcommand("synth", "write a synthetic sentiment-driven market");
  synth->add_option("--out", synth_dir, "target directory")->required();
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--days", synth_days, "trading days")->check(CLI::Range(30, 100000));
  synth->add_option("--rho", synth_rho, "return loading on lagged sentiment")->check(CLI::Range(-1.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_dir, synth_seed, synth_days, synth_rho);
    for (const auto& [s, c] : subs)
      if (s->parsed()) return c->fn(o);
    return 2;
  } catch (const sentiport::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
