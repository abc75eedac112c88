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
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sparsetune/activation_stats.hpp"
#include "sparsetune/errors.hpp"
#include "sparsetune/matrix.hpp"
#include "sparsetune/network.hpp"

namespace sparsetune {

/// Score matrix for one layer: S[i,j] = |W[i,j]| * norms[j], in double.
template <typename T>
MatrixD score_layer(const Matrix<T>& w, std::span<const double> norms) {
  if (norms.size() != w.cols()) {
    throw ShapeError("score_layer: " + std::to_string(norms.size()) + " norms for " +
                     std::to_string(w.cols()) + " input features");
  }
  for (double n : norms) {
    if (!(n >= 0.0) || !std::isfinite(n)) throw ValueError("score_layer: norms must be finite and >= 0");
  }
  MatrixD s(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      s(i, j) = std::abs(static_cast<double>(w(i, j))) * norms[j];
    }
  }
  return s;
}

struct LayerScores {
  std::size_t layer = 0;
  std::string name;
  MatrixD scores;
};

/// One score matrix per scored (non-excluded) layer, in layer order.
struct ImportanceScores {
  std::vector<LayerScores> layers;

  std::size_t total() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.scores.size();
    return n;
  }
};

template <typename T>
ImportanceScores score_model(const Network<T>& net, const ActivationStats& stats,
                             const std::set<std::size_t>& exclusions = {}) {
  if (stats.num_layers() != net.num_layers()) {
    throw ShapeError("score_model: stats cover " + std::to_string(stats.num_layers()) +
                     " layers, network has " + std::to_string(net.num_layers()));
  }
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    if (stats.sumsq(k).size() != net.layer(k).spec.in_dim) {
      throw ShapeError("score_model: stats width mismatch at " + Network<T>::layer_name(k));
    }
  }
  ImportanceScores out;
  bool any = false;
  for (std::size_t k = 0; k < net.num_layers(); ++k) any = any || !exclusions.contains(k);
  if (!any) return out;
  const auto norms = stats.finalize();
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    if (exclusions.contains(k)) continue;
    out.layers.push_back({k, Network<T>::layer_name(k), score_layer(net.layer(k).weight, norms[k])});
  }
  return out;
}

}  // namespace sparsetune
