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
#include <span>
#include <string>
#include <vector>

#include "sparsetune/errors.hpp"
#include "sparsetune/matrix.hpp"
#include "sparsetune/network.hpp"

namespace sparsetune {

/// Per-layer, per-input-feature sums of squared activations over every token
/// seen so far. Norms are raw (not divided by the token count).
///
/// Accumulation is sequential in the order batches arrive, so replaying the
/// same batches in the same order is bit-identical; a different batch order
/// agrees to rounding only.
class ActivationStats {
 public:
  ActivationStats() = default;

  explicit ActivationStats(std::vector<std::size_t> widths) {
    sumsq_.reserve(widths.size());
    for (auto w : widths) sumsq_.emplace_back(w, 0.0);
  }

  template <typename T>
  static ActivationStats for_network(const Network<T>& net) {
    std::vector<std::size_t> widths;
    for (const auto& l : net.layers()) widths.push_back(l.spec.in_dim);
    return ActivationStats(std::move(widths));
  }

  /// Rebuild from persisted sums.
  ActivationStats(std::vector<std::vector<double>> sumsq, std::size_t token_count)
      : sumsq_(std::move(sumsq)), token_count_(token_count) {
    for (const auto& layer : sumsq_) {
      for (double v : layer) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValueError("activation sums must be finite and >= 0");
      }
    }
  }

  std::size_t num_layers() const noexcept { return sumsq_.size(); }
  std::size_t token_count() const noexcept { return token_count_; }
  std::span<const double> sumsq(std::size_t layer) const { return sumsq_.at(layer); }
  const std::vector<std::vector<double>>& all_sumsq() const noexcept { return sumsq_; }

  /// Adds Σ_t x[t,j]² for every layer input recorded in the trace.
  template <typename T>
  void accumulate(const ForwardTrace<T>& trace) {
    if (trace.inputs.size() != sumsq_.size()) {
      throw ShapeError("accumulate: trace has " + std::to_string(trace.inputs.size()) +
                       " layers, stats have " + std::to_string(sumsq_.size()));
    }
    std::size_t rows = trace.inputs.empty() ? 0 : trace.inputs.front().rows();
    for (std::size_t k = 0; k < sumsq_.size(); ++k) {
      const auto& x = trace.inputs[k];
      if (x.cols() != sumsq_[k].size() || x.rows() != rows) {
        throw ShapeError("accumulate: layer " + std::to_string(k) + " width mismatch");
      }
    }
    for (std::size_t k = 0; k < sumsq_.size(); ++k) add_rows(k, trace.inputs[k]);
    token_count_ += rows;
  }

  /// Pairwise merge of partial statistics (e.g. computed on disjoint shards).
  void merge(const ActivationStats& other) {
    if (other.sumsq_.size() != sumsq_.size()) throw ShapeError("merge: layer count mismatch");
    for (std::size_t k = 0; k < sumsq_.size(); ++k) {
      if (other.sumsq_[k].size() != sumsq_[k].size()) throw ShapeError("merge: width mismatch");
      for (std::size_t j = 0; j < sumsq_[k].size(); ++j) sumsq_[k][j] += other.sumsq_[k][j];
    }
    token_count_ += other.token_count_;
  }

  /// sqrt of every sum; requires at least one token.
  std::vector<std::vector<double>> finalize() const {
    if (token_count_ == 0) throw ValueError("finalize: no tokens accumulated");
    std::vector<std::vector<double>> norms(sumsq_.size());
    for (std::size_t k = 0; k < sumsq_.size(); ++k) {
      norms[k].resize(sumsq_[k].size());
      for (std::size_t j = 0; j < sumsq_[k].size(); ++j) norms[k][j] = std::sqrt(sumsq_[k][j]);
    }
    return norms;
  }

 private:
  template <typename T>
  void add_rows(std::size_t k, const Matrix<T>& x) {
    auto& acc = sumsq_[k];
    for (std::size_t t = 0; t < x.rows(); ++t) {
      const auto r = x.row(t);
      for (std::size_t j = 0; j < r.size(); ++j) {
        const double v = static_cast<double>(r[j]);
        acc[j] += v * v;
      }
    }
  }

  std::vector<std::vector<double>> sumsq_;
  std::size_t token_count_ = 0;
};

/// Calibration pass: forward every batch of x (inference only) and accumulate.
/// batch_rows == 0 means one batch; max_tokens == 0 means all rows.
template <typename T>
ActivationStats collect_activation_stats(const Network<T>& net, const Matrix<T>& x,
                                         std::size_t batch_rows = 0, std::size_t max_tokens = 0) {
  ActivationStats stats = ActivationStats::for_network(net);
  const std::size_t limit = max_tokens == 0 ? x.rows() : std::min(max_tokens, x.rows());
  const std::size_t step = batch_rows == 0 ? std::max<std::size_t>(limit, 1) : batch_rows;
  for (std::size_t begin = 0; begin < limit; begin += step) {
    const std::size_t end = std::min(limit, begin + step);
    auto fr = forward(net, slice_rows(x, begin, end), /*record=*/true);
    stats.accumulate(*fr.trace);
  }
  return stats;
}

}  // namespace sparsetune
