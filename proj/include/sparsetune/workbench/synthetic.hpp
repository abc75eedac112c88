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
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include "sparsetune/dataset.hpp"
#include "sparsetune/errors.hpp"
#include "sparsetune/matrix.hpp"
#include "sparsetune/rng.hpp"

namespace sparsetune::workbench {

/// Gaussian-mixture source/target generator.
///
/// Both tasks draw a latent z = mean[c] + noise * N(0, I) and observe
/// x = gain ⊙ (G z) + obs_noise * N(0, I) through one shared map G.
/// The target moves every class mean by shift * mean_shift * sep * N(0, I),
/// rotates the latent space by shift * rotation radians in each consecutive
/// coordinate plane, and damps a dead_fraction of input features towards
/// dead_scale. shift = 0 gives identical distributions.
struct TransferSpec {
  std::size_t input_dim = 32;
  std::size_t latent_dim = 8;
  std::size_t classes = 10;
  std::size_t n_source = 2000;
  std::size_t n_source_eval = 500;
  std::size_t n_target = 50;
  std::size_t n_target_eval = 1000;
  double class_sep = 3.0;
  double noise = 1.0;
  double obs_noise = 0.1;
  double shift = 1.0;
  double mean_shift = 0.6;
  double rotation = 0.2;
  double dead_fraction = 0.5;
  double dead_scale = 0.05;
  double label_noise = 0.3;  // target training labels only

  void validate() const {
    if (classes < 2) throw ConfigError("task: classes must be >= 2");
    if (input_dim < 1 || latent_dim < 1) throw ConfigError("task: degenerate dims");
    if (n_source < 1 || n_target < 1 || n_target_eval < 1) throw ConfigError("task: empty split");
    for (double v : {class_sep, noise, obs_noise, shift, mean_shift, dead_scale}) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("task: scales must be finite and >= 0");
    }
    if (!std::isfinite(rotation)) throw ConfigError("task: rotation must be finite");
    if (!(dead_fraction >= 0.0 && dead_fraction <= 1.0)) throw ConfigError("task: dead_fraction outside [0,1]");
    if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw ConfigError("task: label_noise outside [0,1]");
  }
};

/// Generator state for one task of the pair.
struct TaskDistribution {
  MatrixD map;            // input_dim x latent_dim, includes the latent rotation
  MatrixD means;          // classes x latent_dim
  std::vector<double> gain;
  double noise = 0.0;
  double obs_noise = 0.0;

  friend bool operator==(const TaskDistribution&, const TaskDistribution&) = default;
};

struct TransferPair {
  TaskDistribution source_dist;
  TaskDistribution target_dist;
  Dataset source;
  Dataset source_eval;
  Dataset target;
  Dataset target_eval;
};

namespace detail {

inline Dataset sample_task(const TaskDistribution& d, std::size_t n, Rng& rng) {
  const std::size_t classes = d.means.rows();
  const std::size_t L = d.means.cols();
  const std::size_t D = d.map.rows();
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  rng.shuffle(labels.begin(), labels.end());
  MatrixF x(n, D);
  std::vector<double> z(L);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mu = d.means.row(static_cast<std::size_t>(labels[i]));
    for (std::size_t l = 0; l < L; ++l) z[l] = mu[l] + d.noise * rng.normal();
    for (std::size_t j = 0; j < D; ++j) {
      double acc = 0.0;
      const auto g = d.map.row(j);
      for (std::size_t l = 0; l < L; ++l) acc += g[l] * z[l];
      x(i, j) = static_cast<float>(d.gain[j] * acc + d.obs_noise * rng.normal());
    }
  }
  return {std::move(x), std::move(labels)};
}

}  // namespace detail

inline TransferPair make_transfer_pair(std::uint64_t seed, const TransferSpec& spec) {
  spec.validate();
  const Rng root(seed);
  const std::size_t D = spec.input_dim, L = spec.latent_dim, C = spec.classes;

  Rng map_rng = root.fork("map");
  MatrixD g(D, L);
  const double scale = 1.0 / std::sqrt(static_cast<double>(L));
  for (auto& v : g.data()) v = scale * map_rng.normal();

  Rng mean_rng = root.fork("means");
  MatrixD means(C, L);
  for (auto& v : means.data()) v = spec.class_sep * mean_rng.normal();

  TransferPair out;
  out.source_dist = {g, means, std::vector<double>(D, 1.0), spec.noise, spec.obs_noise};

  Rng shift_rng = root.fork("shift");
  MatrixD shifted = means;
  for (auto& v : shifted.data()) v += spec.shift * spec.mean_shift * spec.class_sep * shift_rng.normal();

  // G R with R a Givens rotation in planes (0,1), (2,3), ...
  MatrixD rotated = g;
  const double angle = spec.shift * spec.rotation;
  if (angle != 0.0) {
    const double c = std::cos(angle), s = std::sin(angle);
    for (std::size_t j = 0; j < D; ++j) {
      for (std::size_t l = 0; l + 1 < L; l += 2) {
        const double a = g(j, l), b = g(j, l + 1);
        rotated(j, l) = a * c + b * s;
        rotated(j, l + 1) = -a * s + b * c;
      }
    }
  }

  std::vector<double> gain(D, 1.0);
  Rng dead_rng = root.fork("dead");
  std::vector<std::size_t> order(D);
  std::iota(order.begin(), order.end(), std::size_t{0});
  dead_rng.shuffle(order.begin(), order.end());
  const auto n_dead = static_cast<std::size_t>(std::floor(spec.dead_fraction * static_cast<double>(D)));
  const double damp = 1.0 - std::min(spec.shift, 1.0) * (1.0 - spec.dead_scale);
  for (std::size_t i = 0; i < n_dead; ++i) gain[order[i]] = damp;

  out.target_dist = {rotated, shifted, gain, spec.noise, spec.obs_noise};

  Rng s1 = root.fork("source-train"), s2 = root.fork("source-eval");
  Rng t1 = root.fork("target-train"), t2 = root.fork("target-eval");
  out.source = detail::sample_task(out.source_dist, spec.n_source, s1);
  out.source_eval = detail::sample_task(out.source_dist, spec.n_source_eval, s2);
  out.target = detail::sample_task(out.target_dist, spec.n_target, t1);
  out.target_eval = detail::sample_task(out.target_dist, spec.n_target_eval, t2);

  Rng flip_rng = root.fork("label-noise");
  for (auto& y : out.target.labels) {
    if (flip_rng.uniform() < spec.label_noise) {
      // uniformly among the other classes
      int other = static_cast<int>(flip_rng.below(C - 1));
      y = other >= y ? other + 1 : other;
    }
  }
  return out;
}

}  // namespace sparsetune::workbench
