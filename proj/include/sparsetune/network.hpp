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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsetune/errors.hpp"
#include "sparsetune/matrix.hpp"
#include "sparsetune/rng.hpp"

namespace sparsetune {

enum class Activation { relu, gelu, identity };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

namespace detail {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::gelu: return 0.5 * z * (1.0 + std::erf(z * kInvSqrt2));
    case Activation::identity: return z;
  }
  return z;
}

inline double activate_grad(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::gelu: {
      const double cdf = 0.5 * (1.0 + std::erf(z * kInvSqrt2));
      const double pdf = std::exp(-0.5 * z * z) * std::numbers::inv_sqrtpi * kInvSqrt2;
      return cdf + z * pdf;
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

}  // namespace detail

struct LayerSpec {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  Activation nonlinearity = Activation::identity;
  bool has_bias = true;
};

/// One linear layer: out = act(x Wᵀ + b) with W of shape out_dim × in_dim.
template <typename T>
struct Layer {
  LayerSpec spec;
  Matrix<T> weight;
  std::vector<T> bias;  // empty when !spec.has_bias
};

/// Stack of linear layers. The final layer's output is the logit matrix.
template <typename T>
class Network {
 public:
  Network() = default;

  explicit Network(std::vector<Layer<T>> layers) : layers_(std::move(layers)) { validate(); }

  /// Scaled-uniform fan-in initialization, zero biases.
  static Network init(std::span<const LayerSpec> specs, Rng& rng) {
    std::vector<Layer<T>> layers;
    layers.reserve(specs.size());
    for (const auto& s : specs) {
      const double gain = s.nonlinearity == Activation::identity ? 1.0 : std::numbers::sqrt2;
      const double bound = gain * std::sqrt(3.0 / static_cast<double>(s.in_dim));
      Matrix<T> w(s.out_dim, s.in_dim);
      for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
      layers.push_back({s, std::move(w), std::vector<T>(s.has_bias ? s.out_dim : 0, T{})});
    }
    return Network(std::move(layers));
  }

  /// MLP specs for dims {d0, d1, ..., dL}: hidden layers use `hidden`, the head is identity.
  static std::vector<LayerSpec> mlp_specs(std::span<const std::size_t> dims, Activation hidden,
                                          bool bias = true) {
    if (dims.size() < 2) throw ConfigError("mlp needs at least two dims");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      const bool last = i + 2 == dims.size();
      specs.push_back({dims[i], dims[i + 1], last ? Activation::identity : hidden, bias});
    }
    return specs;
  }

  std::size_t num_layers() const noexcept { return layers_.size(); }
  const Layer<T>& layer(std::size_t k) const { return layers_.at(k); }
  Layer<T>& layer(std::size_t k) { return layers_.at(k); }
  std::span<const Layer<T>> layers() const noexcept { return layers_; }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().spec.in_dim; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().spec.out_dim; }

  std::size_t weight_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size();
    return n;
  }
  std::size_t bias_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.bias.size();
    return n;
  }

  static std::string layer_name(std::size_t k) { return "layer" + std::to_string(k); }

  template <typename U>
  Network<U> cast() const {
    std::vector<Layer<U>> out;
    for (const auto& l : layers_) {
      std::vector<U> b(l.bias.begin(), l.bias.end());
      out.push_back({l.spec, l.weight.template cast<U>(), std::move(b)});
    }
    return Network<U>(std::move(out));
  }

  friend bool operator==(const Network& a, const Network& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t k = 0; k < a.layers_.size(); ++k) {
      if (!(a.layers_[k].weight == b.layers_[k].weight) || a.layers_[k].bias != b.layers_[k].bias) {
        return false;
      }
    }
    return true;
  }

  void validate() const {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& l = layers_[k];
      if (l.spec.in_dim < 1 || l.spec.out_dim < 1) throw ShapeError("layer dims must be >= 1");
      if (l.weight.rows() != l.spec.out_dim || l.weight.cols() != l.spec.in_dim) {
        throw ShapeError(layer_name(k) + ": weight shape does not match spec");
      }
      if (l.bias.size() != (l.spec.has_bias ? l.spec.out_dim : 0)) {
        throw ShapeError(layer_name(k) + ": bias length does not match spec");
      }
      if (k + 1 < layers_.size() && l.spec.out_dim != layers_[k + 1].spec.in_dim) {
        throw ShapeError(layer_name(k) + " -> " + layer_name(k + 1) + ": dims incompatible");
      }
    }
  }

 private:
  std::vector<Layer<T>> layers_;
};

/// inputs[k] is exactly the matrix multiplied by layer k's weights.
template <typename T>
struct ForwardTrace {
  std::vector<Matrix<T>> inputs;
  Matrix<T> logits;
};

template <typename T>
struct ForwardResult {
  Matrix<T> logits;
  std::optional<ForwardTrace<T>> trace;
};

template <typename T>
struct Gradients {
  std::vector<Matrix<T>> weight;
  std::vector<std::vector<T>> bias;
};

template <typename T>
struct BackwardResult {
  double loss = 0.0;
  Gradients<T> grads;
};

namespace detail {

/// Pre-activation z = x Wᵀ + b for one layer, accumulated in double.
template <typename T>
Matrix<T> linear(const Layer<T>& layer, const Matrix<T>& x) {
  const auto& w = layer.weight;
  Matrix<T> z(x.rows(), w.rows());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const auto xr = x.row(t);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const auto wr = w.row(o);
      double acc = layer.bias.empty() ? 0.0 : static_cast<double>(layer.bias[o]);
      for (std::size_t i = 0; i < xr.size(); ++i) {
        acc += static_cast<double>(xr[i]) * static_cast<double>(wr[i]);
      }
      z(t, o) = static_cast<T>(acc);
    }
  }
  return z;
}

template <typename T>
Matrix<T> apply_activation(Activation a, const Matrix<T>& z) {
  if (a == Activation::identity) return z;
  Matrix<T> out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.data()[i] = static_cast<T>(activate(a, static_cast<double>(z.data()[i])));
  }
  return out;
}

template <typename T>
void check_input(const Network<T>& net, const Matrix<T>& x, std::size_t first_layer) {
  if (first_layer >= net.num_layers()) throw ShapeError("forward: no layers to run");
  if (x.cols() != net.layer(first_layer).spec.in_dim) {
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, layer expects " +
                     std::to_string(net.layer(first_layer).spec.in_dim));
  }
  require_finite(x, "forward input");
}

}  // namespace detail

/// Runs layers [first_layer, end) on x.
template <typename T>
ForwardResult<T> forward_from(const Network<T>& net, std::size_t first_layer, const Matrix<T>& x,
                              bool record) {
  detail::check_input(net, x, first_layer);
  ForwardResult<T> result;
  if (record) result.trace.emplace();
  Matrix<T> h = x;
  for (std::size_t k = first_layer; k < net.num_layers(); ++k) {
    const auto& layer = net.layer(k);
    Matrix<T> z = detail::linear(layer, h);
    if (record) result.trace->inputs.push_back(std::move(h));
    h = detail::apply_activation(layer.spec.nonlinearity, z);
    if (!h.all_finite()) {
      throw ValueError("forward: non-finite activation in " + Network<T>::layer_name(k));
    }
  }
  if (record) result.trace->logits = h;
  result.logits = std::move(h);
  return result;
}

template <typename T>
ForwardResult<T> forward(const Network<T>& net, const Matrix<T>& x, bool record = false) {
  return forward_from(net, 0, x, record);
}

template <typename T>
void check_labels(const Matrix<T>& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("labels length " + std::to_string(labels.size()) + " != rows " +
                     std::to_string(logits.rows()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw ValueError("label " + std::to_string(y) + " out of range [0, " +
                       std::to_string(logits.cols()) + ")");
    }
  }
}

/// Mean softmax cross-entropy over rows (log-sum-exp stabilized, double).
template <typename T>
double loss(const Matrix<T>& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  if (logits.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const auto r = logits.row(t);
    double mx = static_cast<double>(r[0]);
    for (T v : r) mx = std::max(mx, static_cast<double>(v));
    double se = 0.0;
    for (T v : r) se += std::exp(static_cast<double>(v) - mx);
    total += mx + std::log(se) - static_cast<double>(r[static_cast<std::size_t>(labels[t])]);
  }
  return total / static_cast<double>(logits.rows());
}

/// Exact reverse-mode gradients of the mean cross-entropy loss.
template <typename T>
BackwardResult<T> backward(const Network<T>& net, const Matrix<T>& x, std::span<const int> labels) {
  detail::check_input(net, x, 0);
  if (labels.size() != x.rows()) throw ShapeError("backward: labels/rows mismatch");

  const std::size_t L = net.num_layers();
  std::vector<Matrix<T>> inputs;
  std::vector<Matrix<T>> pre;
  inputs.reserve(L);
  pre.reserve(L);
  Matrix<T> h = x;
  for (std::size_t k = 0; k < L; ++k) {
    const auto& layer = net.layer(k);
    Matrix<T> z = detail::linear(layer, h);
    inputs.push_back(std::move(h));
    h = detail::apply_activation(layer.spec.nonlinearity, z);
    if (!h.all_finite()) {
      throw ValueError("backward: non-finite activation in " + Network<T>::layer_name(k));
    }
    pre.push_back(std::move(z));
  }

  BackwardResult<T> result;
  result.loss = loss(h, labels);

  // d loss / d logits = (softmax - onehot) / batch
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  Matrix<T> delta(h.rows(), h.cols());
  for (std::size_t t = 0; t < h.rows(); ++t) {
    const auto r = h.row(t);
    double mx = static_cast<double>(r[0]);
    for (T v : r) mx = std::max(mx, static_cast<double>(v));
    double se = 0.0;
    for (T v : r) se += std::exp(static_cast<double>(v) - mx);
    for (std::size_t c = 0; c < r.size(); ++c) {
      double p = std::exp(static_cast<double>(r[c]) - mx) / se;
      if (static_cast<int>(c) == labels[t]) p -= 1.0;
      delta(t, c) = static_cast<T>(p * inv_n);
    }
  }

  result.grads.weight.resize(L);
  result.grads.bias.resize(L);
  for (std::size_t k = L; k-- > 0;) {
    const auto& layer = net.layer(k);
    if (layer.spec.nonlinearity != Activation::identity) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        const double g = detail::activate_grad(layer.spec.nonlinearity,
                                               static_cast<double>(pre[k].data()[i]));
        delta.data()[i] = static_cast<T>(static_cast<double>(delta.data()[i]) * g);
      }
    }
    result.grads.weight[k] = matmul_tn(delta, inputs[k]);
    if (layer.spec.has_bias) {
      std::vector<double> acc(delta.cols(), 0.0);
      for (std::size_t t = 0; t < delta.rows(); ++t) {
        for (std::size_t o = 0; o < delta.cols(); ++o) acc[o] += static_cast<double>(delta(t, o));
      }
      result.grads.bias[k].assign(acc.size(), T{});
      for (std::size_t o = 0; o < acc.size(); ++o) result.grads.bias[k][o] = static_cast<T>(acc[o]);
    }
    if (k > 0) delta = matmul(delta, layer.weight);
  }
  return result;
}

/// Top-1 and top-k hit rates of logits against labels.
template <typename T>
std::pair<double, double> accuracy(const Matrix<T>& logits, std::span<const int> labels,
                                   std::size_t k = 5) {
  check_labels(logits, labels);
  if (logits.rows() == 0) return {0.0, 0.0};
  std::size_t top1 = 0;
  std::size_t topk = 0;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const auto r = logits.row(t);
    const auto y = static_cast<std::size_t>(labels[t]);
    // rank of the true class: count of classes ranked strictly before it (lower index wins ties)
    std::size_t rank = 0;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (r[c] > r[y] || (r[c] == r[y] && c < y)) ++rank;
    }
    if (rank == 0) ++top1;
    if (rank < k) ++topk;
  }
  const double n = static_cast<double>(logits.rows());
  return {static_cast<double>(top1) / n, static_cast<double>(topk) / n};
}

}  // namespace sparsetune
