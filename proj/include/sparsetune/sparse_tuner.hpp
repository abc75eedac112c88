// Copyright 2026 The sparsetune Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sparsetune/allocation.hpp"
#include "sparsetune/dataset.hpp"
#include "sparsetune/errors.hpp"
#include "sparsetune/matrix.hpp"
#include "sparsetune/network.hpp"
#include "sparsetune/rng.hpp"

namespace sparsetune {

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-step constants of the Adam rule at step t (1-based).
struct AdamStep {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t

  static AdamStep at(const OptimizerConfig& c, double lr, std::size_t t) {
    const auto td = static_cast<double>(t);
    return {lr, c.beta1, c.beta2, c.eps, 1.0 - std::pow(c.beta1, td), 1.0 - std::pow(c.beta2, td)};
  }
};

template <typename T>
inline void adam_update(T& w, double g, double& m, double& v, const AdamStep& s) {
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = s.beta2 * v + (1.0 - s.beta2) * g * g;
  const double mhat = m / s.bias1;
  const double vhat = v / s.bias2;
  w = static_cast<T>(static_cast<double>(w) - s.lr * mhat / (std::sqrt(vhat) + s.eps));
}

template <typename T>
inline void sgd_update(T& w, double g, double& buf, double momentum, double lr) {
  buf = momentum == 0.0 ? g : momentum * buf + g;
  w = static_cast<T>(static_cast<double>(w) - lr * buf);
}

/// Optimizer moments for one parameter tensor, stored only at selected positions.
struct SparseSlots {
  std::size_t layer = 0;
  std::vector<std::size_t> positions;  // flat indices, ascending
  std::vector<double> m;               // first moment / momentum buffer
  std::vector<double> v;               // second moment (adam only)
};

/// Optimizer state keyed by mask positions: a layer with cardinality c holds c slots.
class OptimizerState {
 public:
  OptimizerState() = default;

  template <typename T>
  OptimizerState(const OptimizerConfig& config, const Network<T>& net, const MaskSet& masks,
                 bool train_bias)
      : config_(config) {
    for (const auto& mask : masks.layers) {
      if (mask.layer() >= net.num_layers()) throw ShapeError("mask refers to a missing layer");
      const auto& w = net.layer(mask.layer()).weight;
      if (w.rows() != mask.rows() || w.cols() != mask.cols()) {
        throw ShapeError("mask shape does not match " + Network<T>::layer_name(mask.layer()));
      }
      SparseSlots s;
      s.layer = mask.layer();
      s.positions = mask.selected();
      s.m.assign(s.positions.size(), 0.0);
      if (config.kind == OptimizerKind::adam) s.v.assign(s.positions.size(), 0.0);
      weights_.push_back(std::move(s));
    }
    if (train_bias) {
      for (std::size_t k = 0; k < net.num_layers(); ++k) {
        const auto& b = net.layer(k).bias;
        if (b.empty()) continue;
        SparseSlots s;
        s.layer = k;
        s.positions.resize(b.size());
        std::iota(s.positions.begin(), s.positions.end(), std::size_t{0});
        s.m.assign(b.size(), 0.0);
        if (config.kind == OptimizerKind::adam) s.v.assign(b.size(), 0.0);
        biases_.push_back(std::move(s));
      }
    }
  }

  const OptimizerConfig& config() const noexcept { return config_; }
  std::size_t step_count() const noexcept { return steps_; }
  const std::vector<SparseSlots>& weight_slots() const noexcept { return weights_; }
  const std::vector<SparseSlots>& bias_slots() const noexcept { return biases_; }

  std::size_t slot_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : weights_) n += s.positions.size();
    for (const auto& s : biases_) n += s.positions.size();
    return n;
  }

 private:
  template <typename T>
  friend void masked_step(Network<T>&, const Gradients<T>&, const MaskSet&, OptimizerState&, double);

  OptimizerConfig config_;
  std::vector<SparseSlots> weights_;
  std::vector<SparseSlots> biases_;
  std::size_t steps_ = 0;
};

namespace detail {

template <typename T>
void apply_slots(std::span<T> params, std::span<const T> grads, SparseSlots& slots,
                 const OptimizerConfig& c, const AdamStep& step, double lr) {
  for (std::size_t i = 0; i < slots.positions.size(); ++i) {
    const std::size_t p = slots.positions[i];
    const auto g = static_cast<double>(grads[p]);
    if (c.kind == OptimizerKind::adam) {
      adam_update(params[p], g, slots.m[i], slots.v[i], step);
    } else {
      sgd_update(params[p], g, slots.m[i], c.momentum, lr);
    }
  }
}

}  // namespace detail

/// One optimizer step applied only where the mask is 1. Entries with mask 0
/// are never written; their optimizer state does not exist.
template <typename T>
void masked_step(Network<T>& net, const Gradients<T>& grads, const MaskSet& masks,
                 OptimizerState& state, double lr) {
  if (grads.weight.size() != net.num_layers() || grads.bias.size() != net.num_layers()) {
    throw ShapeError("masked_step: gradient layer count mismatch");
  }
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    if (!grads.weight[k].same_shape(net.layer(k).weight)) {
      throw ShapeError("masked_step: gradient shape mismatch at " + Network<T>::layer_name(k));
    }
    if (!grads.weight[k].all_finite()) {
      throw ValueError("masked_step: non-finite gradient at " + Network<T>::layer_name(k));
    }
    for (T g : grads.bias[k]) {
      if (!std::isfinite(static_cast<double>(g))) throw ValueError("masked_step: non-finite bias gradient");
    }
  }
  if (masks.layers.size() != state.weights_.size()) {
    throw ShapeError("masked_step: optimizer state built for a different mask set");
  }
  for (std::size_t i = 0; i < masks.layers.size(); ++i) {
    if (masks.layers[i].layer() != state.weights_[i].layer ||
        masks.layers[i].cardinality() != state.weights_[i].positions.size()) {
      throw ShapeError("masked_step: optimizer state does not match mask layer " +
                       std::to_string(masks.layers[i].layer()));
    }
  }

  ++state.steps_;
  const auto step = AdamStep::at(state.config_, lr, state.steps_);
  for (auto& slots : state.weights_) {
    detail::apply_slots<T>(net.layer(slots.layer).weight.data(), grads.weight[slots.layer].data(),
                           slots, state.config_, step, lr);
  }
  for (auto& slots : state.biases_) {
    auto& bias = net.layer(slots.layer).bias;
    const auto& gb = grads.bias[slots.layer];
    if (gb.size() != bias.size()) throw ShapeError("masked_step: bias gradient length mismatch");
    detail::apply_slots<T>(std::span<T>(bias), std::span<const T>(gb), slots, state.config_, step, lr);
  }
}

// ---------------------------------------------------------------------------
// Training loop

enum class TuneMode { sparse_direct, sparse_lora, full, frozen };

inline const char* to_string(TuneMode m) {
  switch (m) {
    case TuneMode::sparse_direct: return "sparse_direct";
    case TuneMode::sparse_lora: return "sparse_lora";
    case TuneMode::full: return "full";
    case TuneMode::frozen: return "frozen";
  }
  return "?";
}

inline TuneMode tune_mode_from_string(const std::string& s) {
  if (s == "sparse_direct") return TuneMode::sparse_direct;
  if (s == "sparse_lora") return TuneMode::sparse_lora;
  if (s == "full") return TuneMode::full;
  if (s == "frozen") return TuneMode::frozen;
  throw ConfigError("unknown mode '" + s + "'");
}

enum class Schedule { constant, cosine };

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  Schedule schedule = Schedule::cosine;
  std::size_t warmup_epochs = 10;
  std::uint64_t seed = 0;
  TuneMode mode = TuneMode::sparse_direct;
  OptimizerConfig optimizer;
  bool train_bias = false;
  std::size_t lora_rank = 4;
  double lora_alpha = 1.0;

  void validate() const {
    if (warmup_epochs > epochs) throw ConfigError("warmup_epochs exceeds epochs");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(optimizer.lr > 0.0) || !std::isfinite(optimizer.lr)) throw ConfigError("learning rate must be > 0");
    if (lora_rank < 1) throw ConfigError("lora_rank must be >= 1");
  }
};

/// Learning rate for a 0-based epoch: linear warmup to the peak over
/// warmup_epochs, then cosine decay towards 0 over the remaining epochs.
inline double lr_at(const TrainConfig& c, std::size_t epoch) {
  const double peak = c.optimizer.lr;
  if (c.schedule == Schedule::constant) return peak;
  if (epoch < c.warmup_epochs) {
    return peak * static_cast<double>(epoch + 1) / static_cast<double>(c.warmup_epochs);
  }
  const std::size_t span = c.epochs - c.warmup_epochs;
  if (span == 0) return peak;
  const double progress = static_cast<double>(epoch - c.warmup_epochs) / static_cast<double>(span);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct EpochMetrics {
  std::size_t epoch = 0;  // 0 = before any update
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  double wall_ms = 0.0;
};

template <typename T>
EpochMetrics evaluate(const Network<T>& net, const Dataset& train, const Dataset& eval) {
  EpochMetrics m;
  m.train_loss = loss(forward(net, train.x.template cast<T>()).logits, train.labels);
  const Dataset& e = eval.empty() ? train : eval;
  const auto logits = forward(net, e.x.template cast<T>()).logits;
  m.eval_loss = loss(logits, e.labels);
  std::tie(m.top1, m.top5) = accuracy(logits, e.labels, 5);
  return m;
}

/// Epoch index (earliest on ties) with the highest eval top-1.
inline std::size_t best_epoch(const std::vector<EpochMetrics>& history) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].top1 > history[best].top1) best = i;
  }
  return history.empty() ? 0 : history[best].epoch;
}

struct TrainResult {
  Network<float> net;
  std::vector<EpochMetrics> history;
};

/// Called before each epoch after the first; a returned mask set replaces the current one.
using MaskRefresh = std::function<std::optional<MaskSet>(std::size_t epoch, const Network<float>&)>;

namespace detail {

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch)));
  }
  return out;
}

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sparse-masked LoRA

/// Low-rank update ΔW = alpha * (B × A) ⊙ M for one layer; W0 stays frozen.
struct LoraAdapter {
  std::size_t layer = 0;
  MatrixF b;  // d_out x r
  MatrixF a;  // r x d_in
  Mask mask;  // d_out x d_in
  double alpha = 1.0;

  std::size_t rank() const noexcept { return a.rows(); }
  std::size_t parameter_count() const noexcept { return a.size() + b.size(); }
};

/// B = 0 and A scaled-uniform, one adapter per mask layer; rank clamped to min(d_out, d_in).
template <typename T>
std::vector<LoraAdapter> make_lora_adapters(const Network<T>& net, const MaskSet& masks,
                                            std::size_t rank, double alpha, Rng& rng) {
  std::vector<LoraAdapter> out;
  for (const auto& mask : masks.layers) {
    const auto& spec = net.layer(mask.layer()).spec;
    const std::size_t r = std::max<std::size_t>(1, std::min({rank, spec.out_dim, spec.in_dim}));
    LoraAdapter ad{mask.layer(), MatrixF(spec.out_dim, r), MatrixF(r, spec.in_dim), mask, alpha};
    const double bound = std::sqrt(3.0 / static_cast<double>(spec.in_dim));
    for (auto& v : ad.a.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    out.push_back(std::move(ad));
  }
  return out;
}

template <typename T>
Matrix<T> lora_effective_weights(const Matrix<T>& w0, const LoraAdapter& adapter) {
  if (adapter.b.rows() != w0.rows() || adapter.a.cols() != w0.cols() ||
      adapter.b.cols() != adapter.a.rows() || adapter.mask.rows() != w0.rows() ||
      adapter.mask.cols() != w0.cols()) {
    throw ShapeError("lora_effective_weights: adapter does not match weight " +
                     shape_str(w0.rows(), w0.cols()));
  }
  const MatrixF prod = matmul(adapter.b, adapter.a);
  Matrix<T> out = w0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!adapter.mask.test(i)) continue;
    const double delta = adapter.alpha * static_cast<double>(prod.data()[i]);
    if (delta != 0.0) out.data()[i] = static_cast<T>(static_cast<double>(w0.data()[i]) + delta);
  }
  require_finite(out, "lora effective weights");
  return out;
}

template <typename T>
Network<T> lora_merged(const Network<T>& base, const std::vector<LoraAdapter>& adapters) {
  Network<T> net = base;
  for (const auto& ad : adapters) {
    net.layer(ad.layer).weight = lora_effective_weights(base.layer(ad.layer).weight, ad);
  }
  return net;
}

struct LoraTrainResult {
  std::vector<LoraAdapter> adapters;
  std::vector<EpochMetrics> history;
};

/// Trains only the adapter factors; gradients reach B and A through the
/// masked product, so ΔW stays zero wherever the mask is 0.
inline LoraTrainResult lora_train(const Network<float>& base, const Dataset& train, const Dataset& eval,
                                  std::vector<LoraAdapter> adapters, const TrainConfig& config) {
  config.validate();
  train.validate();
  if (train.empty()) throw ValueError("lora_train: empty training set");
  for (const auto& ad : adapters) {
    if (ad.layer >= base.num_layers()) throw ShapeError("lora_train: adapter for missing layer");
    (void)lora_effective_weights(base.layer(ad.layer).weight, ad);
  }
  const auto start = std::chrono::steady_clock::now();
  LoraTrainResult result;
  Rng batch_rng = Rng(config.seed).fork("batches");

  struct Moments {
    std::vector<double> m, v;
  };
  std::vector<Moments> mb(adapters.size()), ma(adapters.size());
  for (std::size_t i = 0; i < adapters.size(); ++i) {
    mb[i] = {std::vector<double>(adapters[i].b.size()), std::vector<double>(adapters[i].b.size())};
    ma[i] = {std::vector<double>(adapters[i].a.size()), std::vector<double>(adapters[i].a.size())};
  }
  auto update = [&](MatrixF& p, const MatrixF& g, Moments& mo, const AdamStep& s, double lr) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      const auto gj = static_cast<double>(g.data()[j]);
      if (config.optimizer.kind == OptimizerKind::adam) {
        adam_update(p.data()[j], gj, mo.m[j], mo.v[j], s);
      } else {
        sgd_update(p.data()[j], gj, mo.m[j], config.optimizer.momentum, lr);
      }
    }
  };

  auto metrics = evaluate(lora_merged(base, adapters), train, eval);
  metrics.epoch = 0;
  result.history.push_back(metrics);
  std::size_t steps = 0;
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    const double lr = lr_at(config, e - 1);
    const auto batches = detail::epoch_batches(train.size(), config.batch_size, batch_rng);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Dataset batch = train.subset(batches[bi]);
      BackwardResult<float> br;
      try {
        br = backward(lora_merged(base, adapters), batch.x, batch.labels);
      } catch (const ValueError& err) {
        throw DivergenceError(e, bi, err.what());
      }
      if (!std::isfinite(br.loss)) throw DivergenceError(e, bi, "non-finite loss");
      ++steps;
      const auto step = AdamStep::at(config.optimizer, lr, steps);
      for (std::size_t i = 0; i < adapters.size(); ++i) {
        auto& ad = adapters[i];
        MatrixF gm = br.grads.weight[ad.layer];
        for (std::size_t j = 0; j < gm.size(); ++j) {
          gm.data()[j] = ad.mask.test(j) ? static_cast<float>(ad.alpha * gm.data()[j]) : 0.0f;
        }
        const MatrixF gb = matmul_nt(gm, ad.a);
        const MatrixF ga = matmul_tn(ad.b, gm);
        if (!gb.all_finite() || !ga.all_finite()) throw DivergenceError(e, bi, "non-finite adapter gradient");
        update(ad.b, gb, mb[i], step, lr);
        update(ad.a, ga, ma[i], step, lr);
      }
    }
    try {
      metrics = evaluate(lora_merged(base, adapters), train, eval);
    } catch (const ValueError& err) {
      throw DivergenceError(e, batches.size(), err.what());
    }
    if (!std::isfinite(metrics.train_loss) || !std::isfinite(metrics.eval_loss)) {
      throw DivergenceError(e, batches.size(), "non-finite epoch loss");
    }
    metrics.epoch = e;
    metrics.wall_ms = detail::elapsed_ms(start);
    result.history.push_back(metrics);
  }
  result.adapters = std::move(adapters);
  return result;
}

/// Both factored-mask formulas evaluated literally:
///   lhs = (M_B ⊙ B) × (M_A ⊙ A)
///   rhs = (B × A) ⊙ bin(M_B × M_A), bin(x) = 1 if x > 0 else 0
/// No equality is implied; for rank > 1 they differ in general.
struct FactoredMaskReport {
  MatrixD lhs;
  MatrixD rhs;
  double max_abs_diff = 0.0;
};

inline FactoredMaskReport factored_mask_check(const MatrixD& b, const MatrixD& a, const MatrixD& m_b,
                                              const MatrixD& m_a) {
  if (!b.same_shape(m_b) || !a.same_shape(m_a) || b.cols() != a.rows()) {
    throw ShapeError("factored_mask_check: incongruent shapes");
  }
  for (const MatrixD* m : {&m_b, &m_a}) {
    for (double v : m->data()) {
      if (v != 0.0 && v != 1.0) throw ValueError("factored_mask_check: masks must be binary");
    }
  }
  MatrixD bm = b;
  MatrixD am = a;
  for (std::size_t i = 0; i < bm.size(); ++i) bm.data()[i] *= m_b.data()[i];
  for (std::size_t i = 0; i < am.size(); ++i) am.data()[i] *= m_a.data()[i];
  FactoredMaskReport r;
  r.lhs = matmul(bm, am);
  r.rhs = matmul(b, a);
  const MatrixD mm = matmul(m_b, m_a);
  for (std::size_t i = 0; i < r.rhs.size(); ++i) {
    if (!(mm.data()[i] > 0.0)) r.rhs.data()[i] = 0.0;
  }
  r.max_abs_diff = max_abs_diff(r.lhs, r.rhs);
  return r;
}

// ---------------------------------------------------------------------------

/// Fine-tunes a copy of `net` under the configured mode.
///
/// sparse_direct updates mask-selected weights only; full trains every weight
/// and bias; frozen performs no updates but still reports metrics; sparse_lora
/// trains one masked adapter per mask layer and returns the merged weights.
inline TrainResult train(const Network<float>& net, const Dataset& train_set, const Dataset& eval_set,
                         const MaskSet& masks, const TrainConfig& config,
                         const MaskRefresh& refresh = {}) {
  config.validate();
  train_set.validate();
  if (!eval_set.empty()) eval_set.validate();
  if (train_set.empty()) throw ValueError("train: empty training set");

  if (config.mode == TuneMode::sparse_lora) {
    Rng init_rng = Rng(config.seed).fork("lora-init");
    auto adapters = make_lora_adapters(net, masks, config.lora_rank, config.lora_alpha, init_rng);
    auto lr = lora_train(net, train_set, eval_set, std::move(adapters), config);
    return {lora_merged(net, lr.adapters), std::move(lr.history)};
  }

  const auto start = std::chrono::steady_clock::now();
  TrainResult result{net, {}};
  MaskSet active;
  bool train_bias = config.train_bias;
  switch (config.mode) {
    case TuneMode::full:
      active = dense_masks(net, true);
      train_bias = true;
      break;
    case TuneMode::frozen:
      train_bias = false;
      break;
    default:
      active = masks;
  }
  OptimizerState state(config.optimizer, result.net, active, train_bias);
  Rng batch_rng = Rng(config.seed).fork("batches");

  auto metrics = evaluate(result.net, train_set, eval_set);
  metrics.epoch = 0;
  result.history.push_back(metrics);
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    if (refresh && e > 1 && config.mode == TuneMode::sparse_direct) {
      if (auto fresh = refresh(e, result.net)) {
        active = std::move(*fresh);
        state = OptimizerState(config.optimizer, result.net, active, train_bias);
      }
    }
    const double lr = lr_at(config, e - 1);
    const auto batches = detail::epoch_batches(train_set.size(), config.batch_size, batch_rng);
    if (config.mode != TuneMode::frozen) {
      for (std::size_t bi = 0; bi < batches.size(); ++bi) {
        const Dataset batch = train_set.subset(batches[bi]);
        try {
          auto br = backward(result.net, batch.x, batch.labels);
          if (!std::isfinite(br.loss)) throw DivergenceError(e, bi, "non-finite loss");
          masked_step(result.net, br.grads, active, state, lr);
        } catch (const ValueError& err) {
          throw DivergenceError(e, bi, err.what());
        }
      }
    }
    try {
      metrics = evaluate(result.net, train_set, eval_set);
    } catch (const ValueError& err) {
      throw DivergenceError(e, batches.size(), err.what());
    }
    if (!std::isfinite(metrics.train_loss) || !std::isfinite(metrics.eval_loss)) {
      throw DivergenceError(e, batches.size(), "non-finite epoch loss");
    }
    metrics.epoch = e;
    metrics.wall_ms = detail::elapsed_ms(start);
    result.history.push_back(metrics);
  }
  return result;
}

}  // namespace sparsetune
