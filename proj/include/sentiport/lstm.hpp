#pragma once

// Stacked LSTM price forecaster trained with Adam on scaled MSE.
//
// A model reads a window of consecutive panel rows (a subset of feature
// columns, min-max scaled with bounds fitted on the training rows) and
// predicts the next-day adjusted close of every asset. The network runs in
// scaled space; `forward` un-scales its outputs back to prices.
//
// Parameters live in one flat vector so Adam, checkpointing and the
// finite-difference checker can treat them uniformly. Per layer l with input
// width D_l and hidden size H the block is
//   W (4H x D_l) | U (4H x H) | b (4H)
// with gate rows ordered input, forget, candidate, output; the output
// projection Wy (K x H) | by (K) comes last.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "sentiport/error.hpp"
#include "sentiport/market_data.hpp"
#include "sentiport/rng.hpp"

namespace sentiport::lstm {

struct LstmConfig {
  std::size_t input_width = 30;
  std::size_t hidden_size = 13;
  std::size_t num_layers = 3;
  std::size_t outputs = 5;
  std::size_t window = 6;
  double learning_rate = 0.004;
  std::size_t batch_size = 32;
  std::size_t epochs = 500;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (input_width == 0 || hidden_size == 0 || num_layers == 0 || outputs == 0 || window == 0 || batch_size == 0 ||
        epochs == 0)
      throw ConfigError("LSTM sizes must all be at least 1");
    if (!(learning_rate > 0)) throw ConfigError("LSTM learning rate must be positive");
  }
};

/// Per-column min-max scaling to [0, 1]. A column with zero range is only
/// shifted, so inverse(scale(x)) == x holds everywhere.
class MinMaxScaler {
 public:
  MinMaxScaler() = default;
  MinMaxScaler(std::vector<double> lo, std::vector<double> hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.size() != hi_.size()) throw DimensionError("scaler bounds differ in length");
  }

  static MinMaxScaler fit(const AlignedPanel& panel, RowRange rows, std::span<const std::size_t> columns) {
    if (rows.size() == 0) throw InsufficientDataError("cannot fit scaler on zero rows");
    std::vector<double> lo(columns.size(), std::numeric_limits<double>::infinity());
    std::vector<double> hi(columns.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t r = rows.begin; r < rows.end; ++r)
      for (std::size_t j = 0; j < columns.size(); ++j) {
        const double v = panel.at(r, columns[j]);
        lo[j] = std::min(lo[j], v);
        hi[j] = std::max(hi[j], v);
      }
    return MinMaxScaler(std::move(lo), std::move(hi));
  }

  std::size_t size() const noexcept { return lo_.size(); }
  bool fitted() const noexcept { return !lo_.empty(); }
  const std::vector<double>& lower() const noexcept { return lo_; }
  const std::vector<double>& upper() const noexcept { return hi_; }

  double scale(std::size_t j, double x) const {
    const double range = hi_[j] - lo_[j];
    return range > 0 ? (x - lo_[j]) / range : x - lo_[j];
  }
  double inverse(std::size_t j, double s) const {
    const double range = hi_[j] - lo_[j];
    return range > 0 ? lo_[j] + s * range : lo_[j] + s;
  }

  bool operator==(const MinMaxScaler&) const = default;

 private:
  std::vector<double> lo_, hi_;
};

/// One supervised example: `window` rows of raw features, next-row prices.
struct Window {
  std::vector<double> input;   ///< window x width, row-major, raw units
  std::vector<double> target;  ///< raw prices, one per target column
  std::size_t target_row = 0;  ///< panel row the target comes from
};

/// Offsets of each parameter block inside the flat parameter vector.
struct ParamLayout {
  struct Layer {
    std::size_t in_dim, w, u, b;
  };
  std::vector<Layer> layers;
  std::size_t out_w = 0, out_b = 0, total = 0;

  explicit ParamLayout(const LstmConfig& c) {
    const std::size_t g = 4 * c.hidden_size;
    std::size_t off = 0;
    for (std::size_t l = 0; l < c.num_layers; ++l) {
      const std::size_t in = l == 0 ? c.input_width : c.hidden_size;
      layers.push_back({in, off, off + g * in, off + g * in + g * c.hidden_size});
      off += g * (in + c.hidden_size + 1);
    }
    out_w = off;
    out_b = off + c.outputs * c.hidden_size;
    total = out_b + c.outputs;
  }
};

template <class Real>
inline Real sigmoid(Real z) {
  return Real(1) / (Real(1) + std::exp(-z));
}

/// Network arithmetic in scaled space. Stateless apart from the layout.
class Network {
 public:
  explicit Network(const LstmConfig& config) : cfg_(config), layout_(config) {}

  const LstmConfig& config() const noexcept { return cfg_; }
  const ParamLayout& layout() const noexcept { return layout_; }

  /// Activations kept for backpropagation through time.
  template <class Real>
  struct BasicCache {
    // Per layer, T x 4H gate activations and T x H cell, tanh(cell), hidden.
    std::vector<std::vector<Real>> gates, cell, tanh_cell, hidden;
    std::vector<Real> output;
    std::span<const double> input;  ///< layer-0 input of the last forward pass
  };
  using Cache = BasicCache<double>;

  /// `input` is window x input_width, row-major, scaled. `Real` sets the
  /// working precision; training uses double.
  template <class Real>
  void forward(std::span<const double> params, std::span<const double> input, BasicCache<Real>& cache) const {
    const std::size_t T = cfg_.window, H = cfg_.hidden_size, G = 4 * H, L = cfg_.num_layers;
    if (input.size() != T * cfg_.input_width) throw DimensionError("LSTM input has wrong shape");
    cache.input = input;
    cache.gates.resize(L);
    cache.cell.resize(L);
    cache.tanh_cell.resize(L);
    cache.hidden.resize(L);
    std::vector<Real> z(G);
    for (std::size_t l = 0; l < L; ++l) {
      const auto& ly = layout_.layers[l];
      const std::size_t D = ly.in_dim;
      auto& gates = cache.gates[l];
      auto& cell = cache.cell[l];
      auto& tc = cache.tanh_cell[l];
      auto& hid = cache.hidden[l];
      gates.assign(T * G, 0.0);
      cell.assign(T * H, 0.0);
      tc.assign(T * H, 0.0);
      hid.assign(T * H, 0.0);
      const double* W = params.data() + ly.w;
      const double* U = params.data() + ly.u;
      const double* b = params.data() + ly.b;
      for (std::size_t t = 0; t < T; ++t) {
        const double* x0 = input.data() + t * D;
        const Real* xl = l > 0 ? cache.hidden[l - 1].data() + t * H : nullptr;
        auto x = [&](std::size_t k) { return xl ? xl[k] : Real(x0[k]); };
        const Real* h_prev = t > 0 ? hid.data() + (t - 1) * H : nullptr;
        for (std::size_t r = 0; r < G; ++r) {
          Real s = b[r];
          const double* wr = W + r * D;
          for (std::size_t k = 0; k < D; ++k) s += wr[k] * Real(x(k));
          if (h_prev) {
            const double* ur = U + r * H;
            for (std::size_t k = 0; k < H; ++k) s += ur[k] * h_prev[k];
          }
          z[r] = s;
        }
        Real* ga = gates.data() + t * G;
        for (std::size_t k = 0; k < H; ++k) {
          const Real i = sigmoid(z[k]);
          const Real f = sigmoid(z[H + k]);
          const Real g = std::tanh(z[2 * H + k]);
          const Real o = sigmoid(z[3 * H + k]);
          ga[k] = i;
          ga[H + k] = f;
          ga[2 * H + k] = g;
          ga[3 * H + k] = o;
          const Real c_prev = t > 0 ? cell[(t - 1) * H + k] : Real(0);
          const Real c = f * c_prev + i * g;
          cell[t * H + k] = c;
          tc[t * H + k] = std::tanh(c);
          hid[t * H + k] = o * tc[t * H + k];
        }
      }
    }
    const Real* h_last = cache.hidden[L - 1].data() + (T - 1) * H;
    const double* Wy = params.data() + layout_.out_w;
    const double* by = params.data() + layout_.out_b;
    cache.output.assign(cfg_.outputs, Real(0));
    for (std::size_t k = 0; k < cfg_.outputs; ++k) {
      Real s = by[k];
      for (std::size_t j = 0; j < H; ++j) s += Wy[k * H + j] * h_last[j];
      cache.output[k] = s;
    }
  }

  std::vector<double> predict(std::span<const double> params, std::span<const double> input) const {
    Cache c;
    forward(params, input, c);
    return c.output;
  }

  /// Squared error averaged over outputs.
  template <class Real>
  static Real loss(std::span<const Real> output, std::span<const double> target) {
    Real s = 0;
    for (std::size_t k = 0; k < output.size(); ++k) {
      const Real e = output[k] - target[k];
      s += e * e;
    }
    return s / static_cast<Real>(output.size());
  }
  static double loss(const std::vector<double>& output, std::span<const double> target) {
    return loss<double>(std::span<const double>(output), target);
  }

  /// Forward + backward on one example. Adds `weight * dLoss/dParams` into
  /// `grad` and returns the unweighted loss.
  double accumulate_gradient(std::span<const double> params, std::span<const double> input,
                             std::span<const double> target, double weight, std::span<double> grad,
                             Cache& cache) const {
    forward(params, input, cache);
    const std::size_t T = cfg_.window, H = cfg_.hidden_size, G = 4 * H, L = cfg_.num_layers, K = cfg_.outputs;
    const double loss_value = loss(cache.output, target);

    std::vector<double> dy(K);
    for (std::size_t k = 0; k < K; ++k) dy[k] = weight * 2.0 * (cache.output[k] - target[k]) / static_cast<double>(K);

    const double* Wy = params.data() + layout_.out_w;
    const double* h_last = cache.hidden[L - 1].data() + (T - 1) * H;
    // dh_above[t*H + j]: gradient reaching layer l's hidden state at t from above.
    std::vector<double> dh_above(T * H, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      grad[layout_.out_b + k] += dy[k];
      for (std::size_t j = 0; j < H; ++j) {
        grad[layout_.out_w + k * H + j] += dy[k] * h_last[j];
        dh_above[(T - 1) * H + j] += Wy[k * H + j] * dy[k];
      }
    }

    std::vector<double> dz(G), dh_next(H), dc_next(H), dx_below;
    for (std::size_t l = L; l-- > 0;) {
      const auto& ly = layout_.layers[l];
      const std::size_t D = ly.in_dim;
      const double* W = params.data() + ly.w;
      const double* U = params.data() + ly.u;
      double* gW = grad.data() + ly.w;
      double* gU = grad.data() + ly.u;
      double* gb = grad.data() + ly.b;
      const auto& gates = cache.gates[l];
      const auto& cell = cache.cell[l];
      const auto& tc = cache.tanh_cell[l];
      const auto& hid = cache.hidden[l];
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      std::fill(dc_next.begin(), dc_next.end(), 0.0);
      if (l > 0) dx_below.assign(T * H, 0.0);

      for (std::size_t t = T; t-- > 0;) {
        const double* ga = gates.data() + t * G;
        for (std::size_t k = 0; k < H; ++k) {
          const double i = ga[k], f = ga[H + k], g = ga[2 * H + k], o = ga[3 * H + k];
          const double dh = dh_above[t * H + k] + dh_next[k];
          const double tck = tc[t * H + k];
          const double dc = dh * o * (1.0 - tck * tck) + dc_next[k];
          const double c_prev = t > 0 ? cell[(t - 1) * H + k] : 0.0;
          dz[k] = dc * g * i * (1.0 - i);
          dz[H + k] = dc * c_prev * f * (1.0 - f);
          dz[2 * H + k] = dc * i * (1.0 - g * g);
          dz[3 * H + k] = dh * tck * o * (1.0 - o);
          dc_next[k] = dc * f;
        }
        const double* x = l == 0 ? nullptr : cache.hidden[l - 1].data() + t * H;
        const double* h_prev = t > 0 ? hid.data() + (t - 1) * H : nullptr;
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        for (std::size_t r = 0; r < G; ++r) {
          const double d = dz[r];
          gb[r] += d;
          if (l == 0) {
            const double* xr = cache.input.data() + t * D;
            for (std::size_t k = 0; k < D; ++k) gW[r * D + k] += d * xr[k];
          } else {
            for (std::size_t k = 0; k < D; ++k) {
              gW[r * D + k] += d * x[k];
              dx_below[t * H + k] += W[r * D + k] * d;
            }
          }
          if (h_prev) {
            for (std::size_t k = 0; k < H; ++k) {
              gU[r * H + k] += d * h_prev[k];
              dh_next[k] += U[r * H + k] * d;
            }
          }
        }
      }
      if (l > 0) dh_above.swap(dx_below);
    }
    return loss_value;
  }

 private:
  LstmConfig cfg_;
  ParamLayout layout_;
};

struct TrainReport {
  double initial_train_mse = 0.0;
  std::vector<double> train_mse;
  std::vector<double> val_mse;
  std::size_t best_epoch = 0;  ///< 0-based index into val_mse
  double wall_seconds = 0.0;
};

/// Trained (or trainable) forecaster: network parameters, Adam state and the
/// feature scalers, plus which panel columns it reads and predicts.
class LstmModel {
 public:
  LstmModel(LstmConfig config, std::vector<std::size_t> input_columns, std::vector<std::size_t> target_columns)
      : cfg_(config), inputs_(std::move(input_columns)), targets_(std::move(target_columns)) {
    cfg_.input_width = inputs_.size();
    cfg_.outputs = targets_.size();
    cfg_.validate();
    net_ = Network(cfg_);
    params_.assign(net_.layout().total, 0.0);
    adam_m_.assign(params_.size(), 0.0);
    adam_v_.assign(params_.size(), 0.0);
  }

  const LstmConfig& config() const noexcept { return cfg_; }
  const Network& network() const noexcept { return net_; }
  const std::vector<std::size_t>& input_columns() const noexcept { return inputs_; }
  const std::vector<std::size_t>& target_columns() const noexcept { return targets_; }
  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }
  const MinMaxScaler& input_scaler() const noexcept { return in_scaler_; }
  const MinMaxScaler& target_scaler() const noexcept { return out_scaler_; }
  std::uint64_t adam_step() const noexcept { return adam_t_; }
  const std::vector<double>& adam_m() const noexcept { return adam_m_; }
  const std::vector<double>& adam_v() const noexcept { return adam_v_; }

  /// Uniform(+-1/sqrt(H)) weights, zero biases except forget gates at +1.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.hidden_size));
    for (double& p : params_) p = rng.uniform(-bound, bound);
    const auto& lay = net_.layout();
    const std::size_t H = cfg_.hidden_size;
    for (const auto& ly : lay.layers)
      for (std::size_t r = 0; r < 4 * H; ++r) params_[ly.b + r] = (r >= H && r < 2 * H) ? 1.0 : 0.0;
    for (std::size_t k = 0; k < cfg_.outputs; ++k) params_[lay.out_b + k] = 0.0;
    reset_optimizer();
  }

  void reset_optimizer() {
    std::fill(adam_m_.begin(), adam_m_.end(), 0.0);
    std::fill(adam_v_.begin(), adam_v_.end(), 0.0);
    adam_t_ = 0;
  }

  /// Fit both scalers on the given (training) rows. Refuses to refit.
  void fit_scalers(const AlignedPanel& panel, RowRange train_rows) {
    if (in_scaler_.fitted()) throw ConfigError("scalers are already fitted");
    in_scaler_ = MinMaxScaler::fit(panel, train_rows, inputs_);
    out_scaler_ = MinMaxScaler::fit(panel, train_rows, targets_);
  }

  void set_scalers(MinMaxScaler in, MinMaxScaler out) {
    if (in.size() != inputs_.size() || out.size() != targets_.size()) throw DimensionError("scaler width mismatch");
    in_scaler_ = std::move(in);
    out_scaler_ = std::move(out);
  }

  void set_adam_state(std::vector<double> m, std::vector<double> v, std::uint64_t t) {
    if (m.size() != params_.size() || v.size() != params_.size()) throw DimensionError("Adam state size mismatch");
    adam_m_ = std::move(m);
    adam_v_ = std::move(v);
    adam_t_ = t;
  }

  std::vector<double> scale_input(std::span<const double> raw) const {
    require_scalers();
    const std::size_t W = inputs_.size();
    if (raw.size() != cfg_.window * W) throw DimensionError("input window has wrong shape");
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = in_scaler_.scale(i % W, raw[i]);
    return out;
  }

  std::vector<double> scale_target(std::span<const double> raw) const {
    require_scalers();
    std::vector<double> out(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) out[k] = out_scaler_.scale(k, raw[k]);
    return out;
  }

  /// Raw window in, raw prices out.
  std::vector<double> forward(std::span<const double> raw_input) const {
    auto y = net_.predict(params_, scale_input(raw_input));
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = out_scaler_.inverse(k, y[k]);
    return y;
  }

  /// One Adam update with gradient `g`. Throws if any parameter goes non-finite.
  void adam_update(std::span<const double> g) {
    ++adam_t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      adam_m_[i] = b1 * adam_m_[i] + (1.0 - b1) * g[i];
      adam_v_[i] = b2 * adam_v_[i] + (1.0 - b2) * g[i] * g[i];
      const double mh = adam_m_[i] / c1, vh = adam_v_[i] / c2;
      params_[i] -= cfg_.learning_rate * mh / (std::sqrt(vh) + cfg_.epsilon);
    }
  }

  bool params_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double p) { return std::isfinite(p); });
  }

  /// Indices of every bias parameter (gate biases and output bias).
  std::vector<std::size_t> bias_indices() const {
    std::vector<std::size_t> out;
    for (const auto& ly : net_.layout().layers)
      for (std::size_t r = 0; r < 4 * cfg_.hidden_size; ++r) out.push_back(ly.b + r);
    for (std::size_t k = 0; k < cfg_.outputs; ++k) out.push_back(net_.layout().out_b + k);
    return out;
  }

 private:
  void require_scalers() const {
    if (!in_scaler_.fitted() || !out_scaler_.fitted()) throw ConfigError("LSTM scalers not fitted");
  }

  LstmConfig cfg_;
  std::vector<std::size_t> inputs_, targets_;
  Network net_{LstmConfig{}};
  std::vector<double> params_, adam_m_, adam_v_;
  std::uint64_t adam_t_ = 0;
  MinMaxScaler in_scaler_, out_scaler_;
};

// ---------------------------------------------------------------------------
// Windows

/// Stride-1 windows over rows [range.begin, range.end): each uses `window`
/// consecutive rows as input and the following row's targets.
inline std::vector<Window> make_windows(const AlignedPanel& panel, RowRange range,
                                        std::span<const std::size_t> input_columns,
                                        std::span<const std::size_t> target_columns, std::size_t window = 6) {
  if (range.size() < window + 1)
    throw InsufficientDataError("need at least " + std::to_string(window + 1) + " rows for one window, got " +
                                std::to_string(range.size()));
  std::vector<Window> out;
  out.reserve(range.size() - window);
  for (std::size_t start = range.begin; start + window < range.end; ++start) {
    Window w;
    w.input.reserve(window * input_columns.size());
    for (std::size_t r = start; r < start + window; ++r)
      for (std::size_t c : input_columns) w.input.push_back(panel.at(r, c));
    w.target_row = start + window;
    for (std::size_t c : target_columns) w.target.push_back(panel.at(w.target_row, c));
    out.push_back(std::move(w));
  }
  return out;
}

/// All panel columns in, every asset's price out.
inline std::vector<Window> make_windows(const AlignedPanel& panel, std::size_t window = 6) {
  std::vector<std::size_t> all(panel.width());
  for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
  const auto prices = panel.columns_of(Feature::AdjClose);
  return make_windows(panel, {0, panel.rows()}, all, prices, window);
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

struct ScaledSet {
  std::vector<std::vector<double>> inputs, targets;
};

inline ScaledSet scale_windows(const LstmModel& m, std::span<const Window> ws) {
  ScaledSet s;
  for (const auto& w : ws) {
    s.inputs.push_back(m.scale_input(w.input));
    s.targets.push_back(m.scale_target(w.target));
  }
  return s;
}

inline double mean_loss(const LstmModel& m, const ScaledSet& s) {
  Network::Cache cache;
  double sum = 0;
  for (std::size_t i = 0; i < s.inputs.size(); ++i) {
    m.network().forward(m.params(), s.inputs[i], cache);
    sum += Network::loss(cache.output, s.targets[i]);
  }
  return sum / static_cast<double>(s.inputs.size());
}

}  // namespace detail

/// Mean scaled-space MSE of `model` over `windows`.
inline double evaluate_mse(const LstmModel& model, std::span<const Window> windows) {
  if (windows.empty()) throw InsufficientDataError("no windows to evaluate");
  return detail::mean_loss(model, detail::scale_windows(model, windows));
}

/// Mini-batch Adam on scaled MSE. The parameters with the lowest validation
/// MSE are kept. Deterministic for a fixed config seed.
inline TrainReport train(LstmModel& model, std::span<const Window> train_set, std::span<const Window> val_set) {
  if (train_set.empty() || val_set.empty()) throw InsufficientDataError("training needs train and validation windows");
  const auto& cfg = model.config();
  const auto started = std::chrono::steady_clock::now();
  const auto tr = detail::scale_windows(model, train_set);
  const auto va = detail::scale_windows(model, val_set);

  TrainReport report;
  report.initial_train_mse = detail::mean_loss(model, tr);

  Rng order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(tr.inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> grad(model.params().size());
  std::vector<double> best = model.params();
  double best_val = std::numeric_limits<double>::infinity();
  Network::Cache cache;
  const auto& net = model.network();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double weight = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto& x = tr.inputs[order[b]];
        epoch_loss += net.accumulate_gradient(model.params(), x, tr.targets[order[b]], weight, grad, cache);
      }
      model.adam_update(grad);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss) || !model.params_finite()) throw DivergenceError(epoch + 1, "loss is not finite");
    report.train_mse.push_back(epoch_loss);
    const double v = detail::mean_loss(model, va);
    if (!std::isfinite(v)) throw DivergenceError(epoch + 1, "validation loss is not finite");
    report.val_mse.push_back(v);
    if (v < best_val) {
      best_val = v;
      best = model.params();
      report.best_epoch = epoch;
    }
  }
  model.params() = best;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// ---------------------------------------------------------------------------
// Gradient verification

/// Optional hook applied to the analytic gradient before comparison; used to
/// confirm that the checker catches a broken backward pass.
using GradientMutation = std::function<void(std::span<double>)>;

/// Central finite differences (step h in scaled space) at the given parameter
/// indices. Returns max |ga - gn| / max(|ga| + |gn|, 1e-8).
inline double gradient_check_at(const LstmModel& model, const Window& window, std::span<const std::size_t> indices,
                                const GradientMutation& mutate = {}, double h = 1e-5) {
  const auto x = model.scale_input(window.input);
  const auto y = model.scale_target(window.target);
  const auto& net = model.network();
  std::vector<double> grad(model.params().size(), 0.0);
  Network::Cache cache;
  net.accumulate_gradient(model.params(), x, y, 1.0, grad, cache);
  if (mutate) mutate(grad);

  // Losses for the differences run in long double so that cancellation
  // noise stays well below the tolerance even for gradients near 1e-7.
  using Wide = long double;
  Network::BasicCache<Wide> wide;
  auto wide_loss = [&](std::span<const double> q) {
    net.forward(q, x, wide);
    return Network::loss<Wide>(std::span<const Wide>(wide.output), y);
  };
  std::vector<double> p = model.params();
  double worst = 0.0;
  for (std::size_t idx : indices) {
    const double orig = p[idx];
    const double hi = orig + h, lo = orig - h;
    p[idx] = hi;
    const Wide up = wide_loss(p);
    p[idx] = lo;
    const Wide down = wide_loss(p);
    p[idx] = orig;
    const double numeric = static_cast<double>((up - down) / (Wide(hi) - Wide(lo)));
    const double err = std::abs(grad[idx] - numeric) / std::max(std::abs(grad[idx]) + std::abs(numeric), 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

/// Probes `probe_count` parameter indices drawn uniformly with `seed`.
inline double gradient_check(const LstmModel& model, const Window& window, std::size_t probe_count,
                             std::uint64_t seed = 1, const GradientMutation& mutate = {}) {
  if (probe_count == 0) throw ConfigError("gradient check needs at least one probe");
  Rng rng(seed);
  std::vector<std::size_t> idx(probe_count);
  for (auto& i : idx) i = rng.index(model.params().size());
  return gradient_check_at(model, window, idx, mutate);
}

// ---------------------------------------------------------------------------
// Walk-forward prediction

struct PredictionSeries {
  std::vector<std::size_t> rows;           ///< panel row each prediction is for
  std::vector<Date> dates;
  std::vector<std::vector<double>> prices;  ///< per row, one per target column
};

/// Predicts every row in `segment` that has a full window of earlier rows
/// inside the segment. Row t only sees rows t-window .. t-1.
inline PredictionSeries predict_series(const LstmModel& model, const AlignedPanel& panel, RowRange segment) {
  const std::size_t W = model.config().window;
  if (segment.size() < W + 1)
    throw InsufficientDataError("prediction segment needs at least " + std::to_string(W + 1) + " rows");
  PredictionSeries out;
  std::vector<double> raw;
  for (std::size_t t = segment.begin + W; t < segment.end; ++t) {
    raw.clear();
    for (std::size_t r = t - W; r < t; ++r)
      for (std::size_t c : model.input_columns()) raw.push_back(panel.at(r, c));
    out.rows.push_back(t);
    out.dates.push_back(panel.dates()[t]);
    out.prices.push_back(model.forward(raw));
  }
  return out;
}

}  // namespace sentiport::lstm
