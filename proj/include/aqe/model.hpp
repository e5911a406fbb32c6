#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aqe/core.hpp"
#include "aqe/dataset.hpp"
#include "aqe/features.hpp"
#include "aqe/random.hpp"

namespace aqe {

/// Dense network  out = W3·relu(W2·relu(W1·x̂ + b1) + b2) + b3  with x̂ the
/// z-scored input. All parameters live in one flat vector, in the order
/// W1, b1, W2, b2, W3, b3 (matrices row-major, one row per output unit).
class MLPModel {
 public:
  static constexpr std::size_t kOutputs = kNumPollutants;

  MLPModel() = default;
  MLPModel(std::size_t input_dim, std::size_t n1, std::size_t n2)
      : in_(input_dim), n1_(n1), n2_(n2), params_(parameter_count(input_dim, n1, n2), 0.0),
        mean_(input_dim, 0.0), std_(input_dim, 1.0) {
    if (input_dim == 0 || n1 == 0 || n2 == 0) throw InvalidParameter("network dimensions must be positive");
  }

  static std::size_t parameter_count(std::size_t in, std::size_t n1, std::size_t n2) {
    return n1 * in + n1 + n2 * n1 + n2 + kOutputs * n2 + kOutputs;
  }

  std::size_t input_dim() const noexcept { return in_; }
  std::size_t n1() const noexcept { return n1_; }
  std::size_t n2() const noexcept { return n2_; }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  // Offsets into params().
  std::size_t off_w1() const noexcept { return 0; }
  std::size_t off_b1() const noexcept { return n1_ * in_; }
  std::size_t off_w2() const noexcept { return off_b1() + n1_; }
  std::size_t off_b2() const noexcept { return off_w2() + n2_ * n1_; }
  std::size_t off_w3() const noexcept { return off_b2() + n2_; }
  std::size_t off_b3() const noexcept { return off_w3() + kOutputs * n2_; }

  /// Parameters of the two hidden layers (W1, b1, W2, b2).
  std::span<const double> hidden_params() const noexcept { return std::span(params_).first(off_w3()); }
  /// Parameters of the output layer (W3, b3).
  std::span<double> output_params() noexcept { return std::span(params_).subspan(off_w3()); }
  std::span<const double> output_params() const noexcept { return std::span(params_).subspan(off_w3()); }

  double& w1(std::size_t unit, std::size_t input) { return params_[off_w1() + unit * in_ + input]; }
  double& b1(std::size_t unit) { return params_[off_b1() + unit]; }
  double& w2(std::size_t unit, std::size_t input) { return params_[off_w2() + unit * n1_ + input]; }
  double& b2(std::size_t unit) { return params_[off_b2() + unit]; }
  double& w3(std::size_t out, std::size_t input) { return params_[off_w3() + out * n2_ + input]; }
  double& b3(std::size_t out) { return params_[off_b3() + out]; }

  std::vector<double>& norm_mean() noexcept { return mean_; }
  std::vector<double>& norm_std() noexcept { return std_; }
  const std::vector<double>& norm_mean() const noexcept { return mean_; }
  const std::vector<double>& norm_std() const noexcept { return std_; }

  /// Feature layout the model was trained for.
  FeaturePreset preset = FeaturePreset::Full;
  std::vector<std::string> feature_names;

  /// z-scores raw features; NaN (NA) maps to 0, i.e. the training mean.
  void normalize(std::span<const double> raw, std::span<double> out) const {
    if (raw.size() != in_) throw DimensionMismatch("expected " + std::to_string(in_) + " features, got " + std::to_string(raw.size()));
    for (std::size_t i = 0; i < in_; ++i) out[i] = std::isnan(raw[i]) ? 0.0 : (raw[i] - mean_[i]) / std_[i];
  }

  /// Forward pass on an already normalized input. Hidden activations are
  /// written to a1/a2 when given.
  std::array<double, kOutputs> forward_normalized(std::span<const double> x, double* a1 = nullptr,
                                                  double* a2 = nullptr) const {
    thread_local std::vector<double> h1, h2;
    h1.resize(n1_);
    h2.resize(n2_);
    const double* p = params_.data();
    for (std::size_t u = 0; u < n1_; ++u) {
      const double* row = p + off_w1() + u * in_;
      double z = p[off_b1() + u];
      for (std::size_t i = 0; i < in_; ++i) z += row[i] * x[i];
      h1[u] = z > 0 ? z : 0;
    }
    for (std::size_t u = 0; u < n2_; ++u) {
      const double* row = p + off_w2() + u * n1_;
      double z = p[off_b2() + u];
      for (std::size_t i = 0; i < n1_; ++i) z += row[i] * h1[i];
      h2[u] = z > 0 ? z : 0;
    }
    std::array<double, kOutputs> out{};
    for (std::size_t o = 0; o < kOutputs; ++o) {
      const double* row = p + off_w3() + o * n2_;
      double z = p[off_b3() + o];
      for (std::size_t i = 0; i < n2_; ++i) z += row[i] * h2[i];
      out[o] = z;
    }
    if (a1) std::copy(h1.begin(), h1.end(), a1);
    if (a2) std::copy(h2.begin(), h2.end(), a2);
    return out;
  }

  bool operator==(const MLPModel&) const = default;

 private:
  std::size_t in_ = 0, n1_ = 0, n2_ = 0;
  std::vector<double> params_;
  std::vector<double> mean_, std_;
};

using RawOutputs = std::array<double, MLPModel::kOutputs>;

/// Raw (unclamped) outputs for one raw feature vector.
inline RawOutputs forward(const MLPModel& m, std::span<const double> features) {
  std::vector<double> x(m.input_dim());
  m.normalize(features, x);
  return m.forward_normalized(x);
}

inline std::vector<RawOutputs> forward_batch(const MLPModel& m, std::span<const FeatureVector> rows) {
  std::vector<RawOutputs> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(forward(m, r.values));
  return out;
}

/// Concentrations: forward pass clamped at zero.
inline Concentrations predict(const MLPModel& m, std::span<const double> features) {
  auto raw = forward(m, features);
  Concentrations c{};
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::isfinite(raw[i]) ? std::max(raw[i], 0.0) : 0.0;
  return c;
}

// Loss -------------------------------------------------------------------------

inline double squared_log_error(double predicted, double target) {
  const double d = std::log1p(std::max(predicted, 0.0)) - std::log1p(target);
  return d * d;
}

/// Mean of (log1p(max(ŷ,0)) − log1p(y))² over present (row, pollutant) pairs.
inline double msle_loss(std::span<const RawOutputs> outputs, std::span<const MaybeConcentrations> targets) {
  if (outputs.size() != targets.size()) throw DimensionMismatch("outputs and targets differ in length");
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < outputs.size(); ++r)
    for (std::size_t p = 0; p < kNumPollutants; ++p)
      if (targets[r][p]) {
        sum += squared_log_error(outputs[r][p], *targets[r][p]);
        ++n;
      }
  if (n == 0) throw UndefinedInput("msle_loss needs at least one present target");
  return sum / static_cast<double>(n);
}

// Gradient ---------------------------------------------------------------------

/// A batch of normalized inputs (row-major, rows × input_dim) with targets.
struct Batch {
  std::span<const double> x;
  std::span<const MaybeConcentrations> targets;
  std::size_t rows() const noexcept { return targets.size(); }
};

/// Loss of the batch and its exact gradient with respect to every parameter.
/// Outputs at or below zero pass no gradient through the clamp.
inline double loss_and_gradient(const MLPModel& m, const Batch& batch, std::span<double> grad) {
  const std::size_t in = m.input_dim(), n1 = m.n1(), n2 = m.n2();
  if (grad.size() != m.params().size()) throw DimensionMismatch("gradient buffer has the wrong size");
  if (batch.x.size() != batch.rows() * in) throw DimensionMismatch("batch input size mismatch");
  std::fill(grad.begin(), grad.end(), 0.0);
  std::size_t present = 0;
  for (const auto& t : batch.targets)
    for (const auto& v : t) present += v ? 1 : 0;
  if (present == 0) throw UndefinedInput("batch has no present targets");
  const double scale = 1.0 / static_cast<double>(present);

  const auto P = m.params();
  std::vector<double> a1(n1), a2(n2), d2(n2), d1(n1);
  double loss = 0;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto x = batch.x.subspan(r * in, in);
    const auto out = m.forward_normalized(x, a1.data(), a2.data());
    std::array<double, MLPModel::kOutputs> dout{};
    bool any = false;
    for (std::size_t p = 0; p < kNumPollutants; ++p) {
      const auto& y = batch.targets[r][p];
      if (!y) continue;
      const double yc = std::max(out[p], 0.0);
      const double diff = std::log1p(yc) - std::log1p(*y);
      loss += diff * diff;
      if (out[p] > 0.0) {
        dout[p] = 2.0 * diff / (1.0 + yc) * scale;
        any = true;
      }
    }
    if (!any) continue;
    // Output layer.
    std::fill(d2.begin(), d2.end(), 0.0);
    for (std::size_t o = 0; o < MLPModel::kOutputs; ++o) {
      if (dout[o] == 0.0) continue;
      double* gw = grad.data() + m.off_w3() + o * n2;
      const double* w = P.data() + m.off_w3() + o * n2;
      for (std::size_t i = 0; i < n2; ++i) {
        gw[i] += dout[o] * a2[i];
        d2[i] += dout[o] * w[i];
      }
      grad[m.off_b3() + o] += dout[o];
    }
    // Second hidden layer.
    std::fill(d1.begin(), d1.end(), 0.0);
    for (std::size_t u = 0; u < n2; ++u) {
      if (a2[u] <= 0.0 || d2[u] == 0.0) continue;
      double* gw = grad.data() + m.off_w2() + u * n1;
      const double* w = P.data() + m.off_w2() + u * n1;
      for (std::size_t i = 0; i < n1; ++i) {
        gw[i] += d2[u] * a1[i];
        d1[i] += d2[u] * w[i];
      }
      grad[m.off_b2() + u] += d2[u];
    }
    // First hidden layer.
    for (std::size_t u = 0; u < n1; ++u) {
      if (a1[u] <= 0.0 || d1[u] == 0.0) continue;
      double* gw = grad.data() + m.off_w1() + u * in;
      for (std::size_t i = 0; i < in; ++i) gw[i] += d1[u] * x[i];
      grad[m.off_b1() + u] += d1[u];
    }
  }
  return loss * scale;
}

// Adam -------------------------------------------------------------------------

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::vector<double> m, v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw DimensionMismatch("adam: parameter, gradient and state sizes differ");
  ++state.step;
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = AdamState::kBeta1 * state.m[i] + (1 - AdamState::kBeta1) * grads[i];
    state.v[i] = AdamState::kBeta2 * state.v[i] + (1 - AdamState::kBeta2) * grads[i] * grads[i];
    const double mh = state.m[i] / c1;
    const double vh = state.v[i] / c2;
    params[i] -= lr * mh / (std::sqrt(vh) + AdamState::kEpsilon);
  }
}

// Training ---------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 1024;
  std::size_t epochs = 30;
  std::uint64_t seed = 7;
  std::size_t n1 = 64;
  std::size_t n2 = 32;

  void validate() const {
    if (!(learning_rate > 0.0) || batch_size == 0 || n1 == 0 || n2 == 0)
      throw InvalidParameter("train config values must be positive");
  }
};

struct TrainResult {
  MLPModel model;
  std::vector<double> loss_trace;  // mean training loss of each epoch
};

namespace detail {

inline std::vector<double> normalized_matrix(const MLPModel& m, std::span<const DataRow> rows) {
  const auto in = m.input_dim();
  std::vector<double> x(rows.size() * in);
  for (std::size_t r = 0; r < rows.size(); ++r)
    m.normalize(rows[r].features.values, std::span(x).subspan(r * in, in));
  return x;
}

inline void check_rows(std::span<const DataRow> rows, std::size_t dim) {
  if (rows.empty()) throw InvalidParameter("training needs a non-empty dataset");
  for (const auto& r : rows)
    if (r.features.size() != dim) throw DimensionMismatch("rows have inconsistent feature counts");
}

/// Runs `epochs` epochs of shuffled mini-batch Adam on params[offset...].
/// `grad_fn(batch_indices, grad)` returns the batch loss and fills grad.
template <typename GradFn>
std::vector<double> run_epochs(std::span<double> params, std::size_t n_rows, const TrainConfig& cfg,
                               std::span<const MaybeConcentrations> all_targets, GradFn&& grad_fn) {
  AdamState adam(params.size());
  std::vector<double> grad(params.size());
  std::vector<std::size_t> order(n_rows);
  std::vector<double> trace;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    for (std::size_t i = 0; i < n_rows; ++i) order[i] = i;
    Rng rng(mix_seed(cfg.seed, 1000 + e));
    rng.shuffle(std::span(order));
    double loss_sum = 0;
    std::size_t weight_sum = 0;
    for (std::size_t start = 0; start < n_rows; start += cfg.batch_size) {
      const auto idx = std::span<const std::size_t>(order).subspan(start, std::min(cfg.batch_size, n_rows - start));
      std::size_t present = 0;
      for (auto i : idx)
        for (const auto& v : all_targets[i]) present += v ? 1 : 0;
      if (present == 0) continue;
      const double loss = grad_fn(idx, std::span<double>(grad));
      adam_step(params, grad, adam, cfg.learning_rate);
      loss_sum += loss * static_cast<double>(present);
      weight_sum += present;
    }
    trace.push_back(weight_sum ? loss_sum / static_cast<double>(weight_sum) : 0.0);
  }
  return trace;
}

}  // namespace detail

/// Per-feature mean and standard deviation over present values (std 1 when
/// degenerate, mean 0 when the feature is never present).
inline void fit_normalization(MLPModel& m, std::span<const DataRow> rows) {
  const auto in = m.input_dim();
  for (std::size_t f = 0; f < in; ++f) {
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      const double v = r.features.values[f];
      if (std::isnan(v)) continue;
      sum += v;
      ++n;
    }
    const double mean = n ? sum / static_cast<double>(n) : 0.0;
    for (const auto& r : rows) {
      const double v = r.features.values[f];
      if (!std::isnan(v)) sq += (v - mean) * (v - mean);
    }
    const double sd = n > 1 ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    m.norm_mean()[f] = mean;
    m.norm_std()[f] = sd > 1e-12 ? sd : 1.0;
  }
}

/// Trains a fresh network: seeded He-uniform weights, zero hidden biases,
/// output biases at the back-transformed mean of log1p(target).
inline TrainResult train(std::span<const DataRow> rows, const TrainConfig& cfg,
                         std::vector<std::string> feature_names = {}, FeaturePreset preset = FeaturePreset::Full) {
  cfg.validate();
  if (rows.empty()) throw InvalidParameter("training needs a non-empty dataset");
  const auto in = rows.front().features.size();
  detail::check_rows(rows, in);
  MLPModel m(in, cfg.n1, cfg.n2);
  m.preset = preset;
  m.feature_names = std::move(feature_names);
  if (!m.feature_names.empty() && m.feature_names.size() != in)
    throw DimensionMismatch("feature names do not match feature count");
  fit_normalization(m, rows);

  Rng init(mix_seed(cfg.seed, 1));
  auto he = [&](std::size_t off, std::size_t count, std::size_t fan_in) {
    const double lim = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) m.params()[off + i] = init.uniform(-lim, lim);
  };
  he(m.off_w1(), cfg.n1 * in, in);
  he(m.off_w2(), cfg.n2 * cfg.n1, cfg.n1);
  he(m.off_w3(), MLPModel::kOutputs * cfg.n2, cfg.n2);
  for (std::size_t p = 0; p < kNumPollutants; ++p) {
    double s = 0;
    std::size_t n = 0;
    for (const auto& r : rows)
      if (r.targets[p]) s += std::log1p(*r.targets[p]), ++n;
    m.b3(p) = n ? std::expm1(s / static_cast<double>(n)) : 0.0;
  }

  const auto x = detail::normalized_matrix(m, rows);
  std::vector<MaybeConcentrations> targets;
  targets.reserve(rows.size());
  for (const auto& r : rows) targets.push_back(r.targets);

  std::vector<double> bx;
  std::vector<MaybeConcentrations> bt;
  auto grad_fn = [&](std::span<const std::size_t> idx, std::span<double> grad) {
    bx.resize(idx.size() * in);
    bt.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(idx[k] * in), in, bx.begin() + static_cast<std::ptrdiff_t>(k * in));
      bt[k] = targets[idx[k]];
    }
    return loss_and_gradient(m, Batch{bx, bt}, grad);
  };
  TrainResult res;
  res.loss_trace = detail::run_epochs(m.params(), rows.size(), cfg, targets, grad_fn);
  res.model = std::move(m);
  return res;
}

/// Retrains only the output layer of `global` on `rows`; hidden layers and
/// input normalization stay bit-identical.
inline TrainResult transfer_fit(const MLPModel& global, std::span<const DataRow> rows, const TrainConfig& cfg,
                                const std::vector<std::string>& feature_names = {}) {
  cfg.validate();
  if (!feature_names.empty() && !global.feature_names.empty() && feature_names != global.feature_names)
    throw DimensionMismatch("regional feature layout does not match the global model");
  TrainResult res;
  res.model = global;
  if (cfg.epochs == 0) return res;
  detail::check_rows(rows, global.input_dim());

  // Hidden activations are frozen, so compute them once.
  const auto n2 = global.n2();
  const auto x = detail::normalized_matrix(global, rows);
  std::vector<double> h(rows.size() * n2);
  std::vector<double> a1(global.n1());
  for (std::size_t r = 0; r < rows.size(); ++r)
    global.forward_normalized(std::span(x).subspan(r * global.input_dim(), global.input_dim()), a1.data(),
                              h.data() + r * n2);
  std::vector<MaybeConcentrations> targets;
  for (const auto& r : rows) targets.push_back(r.targets);

  auto& m = res.model;
  auto grad_fn = [&](std::span<const std::size_t> idx, std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::size_t present = 0;
    for (auto i : idx)
      for (const auto& v : targets[i]) present += v ? 1 : 0;
    const double scale = 1.0 / static_cast<double>(present);
    const auto P = m.output_params();
    double loss = 0;
    for (auto i : idx) {
      const double* a2 = h.data() + i * n2;
      for (std::size_t o = 0; o < MLPModel::kOutputs; ++o) {
        const auto& y = targets[i][o];
        if (!y) continue;
        double z = P[MLPModel::kOutputs * n2 + o];
        for (std::size_t k = 0; k < n2; ++k) z += P[o * n2 + k] * a2[k];
        const double yc = std::max(z, 0.0);
        const double diff = std::log1p(yc) - std::log1p(*y);
        loss += diff * diff;
        if (z <= 0.0) continue;
        const double d = 2.0 * diff / (1.0 + yc) * scale;
        for (std::size_t k = 0; k < n2; ++k) grad[o * n2 + k] += d * a2[k];
        grad[MLPModel::kOutputs * n2 + o] += d;
      }
    }
    return loss * scale;
  };
  res.loss_trace = detail::run_epochs(m.output_params(), rows.size(), cfg, targets, grad_fn);
  return res;
}

// Persistence ------------------------------------------------------------------

inline constexpr char kModelMagic[8] = {'A', 'Q', 'E', 'M', 'L', 'P', '\0', '\0'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, sizeof v);
  put_u64(out, v);
}
inline void put_str(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() {
    const auto v = u64();
    double d;
    std::memcpy(&d, &v, sizeof d);
    return d;
  }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) throw FormatError("model file is truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

/// Binary container: magic, version, preset, feature names, shapes,
/// normalization, then the flat parameters; integers and IEEE doubles little-endian.
inline std::string serialize_model(const MLPModel& m) {
  std::string out(kModelMagic, sizeof kModelMagic);
  detail::put_u64(out, kModelVersion);
  detail::put_str(out, to_string(m.preset));
  detail::put_u64(out, m.feature_names.size());
  for (const auto& n : m.feature_names) detail::put_str(out, n);
  detail::put_u64(out, m.input_dim());
  detail::put_u64(out, m.n1());
  detail::put_u64(out, m.n2());
  for (double v : m.norm_mean()) detail::put_f64(out, v);
  for (double v : m.norm_std()) detail::put_f64(out, v);
  for (double v : m.params()) detail::put_f64(out, v);
  return out;
}

inline MLPModel deserialize_model(std::string_view bytes) {
  detail::Reader r(bytes);
  if (r.raw(sizeof kModelMagic) != std::string_view(kModelMagic, sizeof kModelMagic))
    throw FormatError("not a model file (bad magic)");
  const auto version = r.u64();
  if (version != kModelVersion)
    throw FormatError("unsupported model version " + std::to_string(version) + " (expected " +
                      std::to_string(kModelVersion) + ")");
  const auto preset = parse_preset(r.str());
  std::vector<std::string> names(r.u64());
  if (names.size() > 100000) throw FormatError("implausible feature count");
  for (auto& n : names) n = r.str();
  const auto in = r.u64(), n1 = r.u64(), n2 = r.u64();
  if (in == 0 || n1 == 0 || n2 == 0 || in > 100000 || n1 > 100000 || n2 > 100000) throw FormatError("bad model shape");
  if (!names.empty() && names.size() != in) throw FormatError("feature names do not match input size");
  MLPModel m(in, n1, n2);
  m.preset = preset;
  m.feature_names = std::move(names);
  for (auto& v : m.norm_mean()) v = r.f64();
  for (auto& v : m.norm_std()) {
    v = r.f64();
    if (!(v > 0.0)) throw FormatError("normalization std must be > 0");
  }
  for (auto& v : m.params()) v = r.f64();
  if (!r.done()) throw FormatError("trailing bytes after model");
  return m;
}

inline void save_model(const std::filesystem::path& path, const MLPModel& m) {
  std::ofstream out(path, std::ios::binary);
  const auto bytes = serialize_model(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("io", "cannot write model " + path.string());
}

inline MLPModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open model " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

/// Hash of the serialized model.
inline std::string model_fingerprint(const MLPModel& m) { return detail::hex64(detail::fnv1a(serialize_model(m))); }

/// Hash of the hidden-layer parameters only; unchanged by transfer_fit.
inline std::string frozen_fingerprint(const MLPModel& m) {
  std::string bytes;
  for (double v : m.hidden_params()) detail::put_f64(bytes, v);
  for (double v : m.norm_mean()) detail::put_f64(bytes, v);
  for (double v : m.norm_std()) detail::put_f64(bytes, v);
  return detail::hex64(detail::fnv1a(bytes));
}

}  // namespace aqe
