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

#include <cmath>
#include <string>
#include <vector>

#include "sparsetune/activation_stats.hpp"
#include "sparsetune/importance.hpp"
#include "sparsetune/network.hpp"
#include "sparsetune/workbench/tensor_dump.hpp"

namespace sparsetune::workbench {

namespace detail {

inline double activation_code(Activation a) {
  switch (a) {
    case Activation::relu: return 0;
    case Activation::gelu: return 1;
    case Activation::identity: return 2;
  }
  return 2;
}

inline Activation activation_from_code(double c) {
  if (c == 0) return Activation::relu;
  if (c == 1) return Activation::gelu;
  if (c == 2) return Activation::identity;
  throw IoError("checkpoint: unknown activation code");
}

inline std::size_t as_count(double v, const char* what) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e15) throw IoError(std::string("bad ") + what);
  return static_cast<std::size_t>(v);
}

/// Layer index from a "layer<k>.<suffix>" entry name, or npos.
inline std::size_t layer_index(const std::string& name, const std::string& suffix) {
  if (name.rfind("layer", 0) != 0 || name.size() <= 5 + suffix.size() ||
      name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
    return std::string::npos;
  }
  const std::string digits = name.substr(5, name.size() - 5 - suffix.size());
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) return std::string::npos;
  return std::stoul(digits);
}

}  // namespace detail

/// arch.dims / arch.activations / arch.bias plus layer<k>.weight and layer<k>.bias.
inline TensorDump network_to_dump(const Network<float>& net) {
  TensorDump d;
  std::vector<double> dims, acts, bias;
  if (net.num_layers() > 0) dims.push_back(static_cast<double>(net.input_dim()));
  for (const auto& l : net.layers()) {
    dims.push_back(static_cast<double>(l.spec.out_dim));
    acts.push_back(detail::activation_code(l.spec.nonlinearity));
    bias.push_back(l.spec.has_bias ? 1.0 : 0.0);
  }
  d.put_vector("arch.dims", std::span<const double>(dims));
  d.put_vector("arch.activations", std::span<const double>(acts));
  d.put_vector("arch.bias", std::span<const double>(bias));
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const auto& l = net.layer(k);
    d.put(Network<float>::layer_name(k) + ".weight", l.weight);
    if (l.spec.has_bias) d.put_vector(Network<float>::layer_name(k) + ".bias", std::span<const float>(l.bias));
  }
  return d;
}

inline Network<float> network_from_dump(const TensorDump& d) {
  const auto dims = d.get_f64("arch.dims");
  const auto acts = d.get_f64("arch.activations");
  const auto bias = d.get_f64("arch.bias");
  const std::size_t L = acts.size();
  if (dims.size() != L + 1 || bias.size() != L || L == 0) throw IoError("checkpoint: inconsistent architecture");
  std::vector<Layer<float>> layers;
  for (std::size_t k = 0; k < L; ++k) {
    LayerSpec spec{detail::as_count(dims.data()[k], "dim"), detail::as_count(dims.data()[k + 1], "dim"),
                   detail::activation_from_code(acts.data()[k]), bias.data()[k] != 0.0};
    auto w = d.get_f32(Network<float>::layer_name(k) + ".weight");
    if (w.rows() != spec.out_dim || w.cols() != spec.in_dim) {
      throw IoError("checkpoint: " + Network<float>::layer_name(k) + " weight has shape " + shape_str(w.rows(), w.cols()));
    }
    std::vector<float> b;
    if (spec.has_bias) {
      const auto bm = d.get_f32(Network<float>::layer_name(k) + ".bias");
      if (bm.size() != spec.out_dim) throw IoError("checkpoint: bias length mismatch");
      b.assign(bm.data().begin(), bm.data().end());
    }
    layers.push_back({spec, std::move(w), std::move(b)});
  }
  try {
    return Network<float>(std::move(layers));
  } catch (const ShapeError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_network(const std::filesystem::path& path, const Network<float>& net) {
  network_to_dump(net).write(path);
}

inline Network<float> load_network(const std::filesystem::path& path) {
  return network_from_dump(TensorDump::read(path));
}

/// token_count plus layer<k>.sumsq (raw sums, not norms).
inline TensorDump stats_to_dump(const ActivationStats& s) {
  TensorDump d;
  d.put("token_count", MatrixD(1, 1, {static_cast<double>(s.token_count())}));
  for (std::size_t k = 0; k < s.num_layers(); ++k) d.put_vector("layer" + std::to_string(k) + ".sumsq", s.sumsq(k));
  return d;
}

inline ActivationStats stats_from_dump(const TensorDump& d) {
  const auto tc = d.get_f64("token_count");
  if (tc.size() != 1) throw IoError("stats: bad token_count");
  std::vector<std::vector<double>> sums;
  for (std::size_t k = 0;; ++k) {
    const std::string name = "layer" + std::to_string(k) + ".sumsq";
    if (!d.contains(name)) break;
    const auto m = d.get_f64(name);
    sums.emplace_back(m.data().begin(), m.data().end());
  }
  try {
    return ActivationStats(std::move(sums), detail::as_count(tc.data()[0], "token_count"));
  } catch (const ValueError& e) {
    throw IoError(std::string("stats: ") + e.what());
  }
}

/// layer<k>.scores for every scored layer.
inline TensorDump scores_to_dump(const ImportanceScores& s) {
  TensorDump d;
  for (const auto& l : s.layers) d.put(l.name + ".scores", l.scores);
  return d;
}

inline ImportanceScores scores_from_dump(const TensorDump& d) {
  ImportanceScores s;
  for (const auto& e : d.entries()) {
    const auto k = detail::layer_index(e.name, ".scores");
    if (k == std::string::npos) throw IoError("scores: unexpected entry '" + e.name + "'");
    s.layers.push_back({k, "layer" + std::to_string(k), d.get_f64(e.name)});
  }
  return s;
}

}  // namespace sparsetune::workbench
