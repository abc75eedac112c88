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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sparsetune.hpp"

using namespace sparsetune;
using namespace sparsetune::workbench;
namespace fs = std::filesystem;

namespace {

const fs::path kData = SPARSETUNE_TEST_DATA;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("sparsetune_accept_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

template <typename T>
Matrix<T> random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix<T> m(r, c);
  for (auto& v : m.data()) v = static_cast<T>(rng.uniform(-scale, scale));
  return m;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

// Every pre-activation of a ReLU layer at least `margin` away from the kink.
bool kink_free(const Network<double>& net, const MatrixD& x, double margin) {
  MatrixD h = x;
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const auto& l = net.layer(k);
    MatrixD z = matmul_nt(h, l.weight);
    for (std::size_t t = 0; t < z.rows(); ++t) {
      for (std::size_t i = 0; i < z.cols(); ++i) {
        z(t, i) += l.bias.empty() ? 0.0 : l.bias[i];
        if (l.spec.nonlinearity == Activation::relu && std::abs(z(t, i)) < margin) return false;
      }
    }
    h = z;
    for (auto& v : h.data()) v = l.spec.nonlinearity == Activation::relu ? std::max(v, 0.0) : v;
    if (l.spec.nonlinearity == Activation::gelu) {
      for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] = sparsetune::detail::activate(Activation::gelu, z.data()[i]);
    }
  }
  return true;
}

Outcome criterion1() {
  const auto start = std::chrono::steady_clock::now();
  const double h = 1e-5;
  Rng rng(1001);
  double worst = 0.0;
  std::size_t checked = 0, nets = 0;
  while (nets < 20) {
    const Activation act = nets % 2 == 0 ? Activation::gelu : Activation::relu;
    const std::vector<std::size_t> dims{2 + rng.below(6), 2 + rng.below(6), 2 + rng.below(6), 2 + rng.below(4)};
    auto net = Network<double>::init(Network<double>::mlp_specs(dims, act, true), rng);
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
      for (auto& b : net.layer(k).bias) b = rng.uniform(-0.5, 0.5);
    }
    const std::size_t n = 3 + rng.below(6);
    MatrixD x;
    bool found = false;
    for (int attempt = 0; attempt < 500 && !found; ++attempt) {
      x = random_matrix<double>(n, dims[0], rng, 2.0);
      found = kink_free(net, x, 0.05);
    }
    if (!found) continue;  // redraw the network
    ++nets;
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng.below(dims.back()));

    const auto bw = backward(net, x, labels);
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
      auto f = [&](const MatrixD& w) {
        Network<double> copy = net;
        copy.layer(k).weight = w;
        return loss(forward(copy, x).logits, labels);
      };
      const auto fd = finite_diff_grad(f, net.layer(k).weight, h);
      const auto& g = bw.grads.weight[k];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (std::abs(g.data()[i]) <= 1e-6) continue;
        worst = std::max(worst, std::abs(g.data()[i] - fd.data()[i]) / std::abs(g.data()[i]));
        ++checked;
      }
      // biases through the same oracle, as a 1 x out matrix
      if (!net.layer(k).bias.empty()) {
        auto fb = [&](const MatrixD& b) {
          Network<double> copy = net;
          std::copy(b.data().begin(), b.data().end(), copy.layer(k).bias.begin());
          return loss(forward(copy, x).logits, labels);
        };
        const auto& b = net.layer(k).bias;
        const auto fdb = finite_diff_grad(fb, MatrixD(1, b.size(), std::vector<double>(b.begin(), b.end())), h);
        for (std::size_t i = 0; i < b.size(); ++i) {
          const double gb = bw.grads.bias[k][i];
          if (std::abs(gb) <= 1e-6) continue;
          worst = std::max(worst, std::abs(gb - fdb.data()[i]) / std::abs(gb));
          ++checked;
        }
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst <= 1e-3 && secs < 60.0 && checked > 0,
          fmt("20 nets (gelu/relu), h=1e-5, %zu entries, max rel err %.3g (<= 1e-3), %.2fs (< 60s)", checked, worst, secs)};
}

// ---------------------------------------------------------------------------
// 2. Importance oracle

Outcome criterion2() {
  Rng rng(2002);
  double worst = 0.0;
  for (int arch = 0; arch < 10; ++arch) {
    std::vector<std::size_t> dims{1 + rng.below(12)};
    const std::size_t depth = 1 + rng.below(4);
    for (std::size_t i = 0; i < depth; ++i) dims.push_back(1 + rng.below(12));
    const Activation act = arch % 3 == 0 ? Activation::gelu : Activation::relu;
    const auto net = Network<float>::init(Network<float>::mlp_specs(dims, act), rng);

    // Stream several batches through the stats accumulator.
    std::vector<MatrixF> batches;
    ActivationStats stats = ActivationStats::for_network(net);
    const std::size_t nb = 1 + rng.below(5);
    for (std::size_t b = 0; b < nb; ++b) {
      batches.push_back(random_matrix<float>(1 + rng.below(40), dims[0], rng, 3.0));
      stats.accumulate(*forward(net, batches.back(), true).trace);
    }
    const auto scores = score_model(net, stats);

    // Brute force: one pass over the concatenated data.
    const auto all = vstack(std::span<const MatrixF>(batches));
    const auto trace = *forward(net, all, true).trace;
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
      const auto& w = net.layer(k).weight;
      const auto& xin = trace.inputs[k];
      for (std::size_t j = 0; j < w.cols(); ++j) {
        long double ss = 0.0L;
        for (std::size_t t = 0; t < xin.rows(); ++t) ss += static_cast<long double>(xin(t, j)) * xin(t, j);
        const long double norm = std::sqrt(ss);
        for (std::size_t i = 0; i < w.rows(); ++i) {
          const long double expect = std::abs(static_cast<long double>(w(i, j))) * norm;
          const long double got = scores.layers[k].scores(i, j);
          if (expect == 0.0L) {
            if (got != 0.0L) worst = std::max(worst, 1.0);
          } else {
            worst = std::max(worst, static_cast<double>(std::abs(got - expect) / expect));
          }
        }
      }
    }
  }
  return {worst <= 1e-12, fmt("10 architectures, max rel diff %.3g (<= 1e-12)", worst)};
}

// ---------------------------------------------------------------------------
// 3. Mask cardinality and selection optimality

// Lexicographically smallest index set of size k with maximal sum.
std::vector<std::size_t> brute_best(const std::vector<double>& s, std::size_t k) {
  const std::size_t w = s.size();
  double best = -1.0;
  std::vector<std::size_t> best_set;
  for (std::uint32_t bits = 0; bits < (1u << w); ++bits) {
    if (static_cast<std::size_t>(std::popcount(bits)) != k) continue;
    std::vector<std::size_t> set;
    double sum = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
      if (bits >> i & 1u) {
        set.push_back(i);
        sum += s[i];
      }
    }
    if (sum > best || (sum == best && set < best_set)) {
      best = sum;
      best_set = set;
    }
  }
  return best_set;
}

Outcome criterion3() {
  Rng rng(3003);
  std::size_t violations = 0, matrices = 0, windows = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 1 + rng.below(8), cols = 1 + rng.below(20);
    MatrixD s(rows, cols);
    for (auto& v : s.data()) v = trial % 4 == 0 ? static_cast<double>(rng.below(3)) : rng.uniform();
    ++matrices;
    for (std::size_t k : {std::size_t{0}, std::size_t{1}, std::size_t{3}, cols}) {
      const auto m = allocate_per_neuron(s, std::min(k, cols), 0, "l");
      for (std::size_t r = 0; r < rows; ++r) violations += m.row_popcount(r) != std::min(k, cols);
    }
    for (auto [n, mm] : {std::pair<std::size_t, std::size_t>{1, 4}, {2, 4}, {4, 4}}) {
      const auto m = allocate_structured(s, n, mm, 0, "l");
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t g = 0; g < cols; g += mm) {
          const std::size_t width = std::min(mm, cols - g);
          std::size_t pop = 0;
          for (std::size_t c = g; c < g + width; ++c) pop += m.test(r, c);
          violations += pop != std::min(n, width);
          ++windows;
        }
      }
    }
  }
  // Exhaustive optimality for widths <= 16.
  std::size_t optimal_checks = 0;
  for (std::size_t w = 1; w <= 16; ++w) {
    for (int rep = 0; rep < 2; ++rep) {
      MatrixD s(1, w);
      for (auto& v : s.data()) v = rep == 0 ? rng.uniform() : static_cast<double>(rng.below(4));
      const std::vector<double> row(s.data().begin(), s.data().end());
      for (std::size_t k = 0; k <= w; ++k) {
        const auto m = allocate_per_neuron(s, k, 0, "l");
        violations += m.selected() != brute_best(row, k);
        ++optimal_checks;
      }
      for (auto [n, mm] : {std::pair<std::size_t, std::size_t>{1, 4}, {2, 4}, {4, 4}}) {
        const auto m = allocate_structured(s, n, mm, 0, "l");
        std::vector<std::size_t> expect;
        for (std::size_t g = 0; g < w; g += mm) {
          const std::vector<double> win(row.begin() + static_cast<std::ptrdiff_t>(g),
                                        row.begin() + static_cast<std::ptrdiff_t>(std::min(w, g + mm)));
          for (auto i : brute_best(win, std::min(n, win.size()))) expect.push_back(g + i);
        }
        violations += m.selected() != expect;
        ++optimal_checks;
      }
    }
  }
  return {violations == 0, fmt("%zu matrices, %zu N:M windows, %zu exhaustive optimality checks, %zu violations",
                               matrices, windows, optimal_checks, violations)};
}

// ---------------------------------------------------------------------------
// 4. Freeze exactness

Outcome criterion4() {
  Rng rng(4004);
  const std::vector<std::size_t> dims{32, 64, 64, 10};
  const auto base = Network<float>::init(Network<float>::mlp_specs(dims, Activation::relu), rng);
  const auto x = random_matrix<float>(256, 32, rng, 2.0);
  std::vector<int> y(256);
  for (auto& v : y) v = static_cast<int>(rng.below(10));
  const auto masks = allocate(score_model(base, collect_activation_stats(base, x)), MaskRatio{0.999});

  OptimizerConfig cfg;  // adam
  cfg.lr = 1e-2;
  Network<float> sparse = base;
  OptimizerState state(cfg, sparse, masks, false);

  // Dense reference: Adam on every weight with gradients pre-multiplied by the mask.
  Network<float> dense = base;
  std::vector<std::vector<double>> m1(dims.size() - 1), m2(dims.size() - 1);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    m1[k].assign(dense.layer(k).weight.size(), 0.0);
    m2[k].assign(dense.layer(k).weight.size(), 0.0);
  }
  double max_diff = 0.0;
  for (std::size_t step = 1; step <= 500; ++step) {
    std::vector<std::size_t> idx(32);
    for (auto& i : idx) i = rng.below(256);
    const auto xb = gather_rows(x, idx);
    std::vector<int> yb;
    for (auto i : idx) yb.push_back(y[i]);

    masked_step(sparse, backward(sparse, xb, yb).grads, masks, state, cfg.lr);

    const auto g = backward(dense, xb, yb).grads;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < dense.num_layers(); ++k) {
      const Mask* mk = masks.find(k);
      auto w = dense.layer(k).weight.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = (mk && mk->test(i)) ? static_cast<double>(g.weight[k].data()[i]) : 0.0;
        m1[k][i] = cfg.beta1 * m1[k][i] + (1.0 - cfg.beta1) * gi;
        m2[k][i] = cfg.beta2 * m2[k][i] + (1.0 - cfg.beta2) * gi * gi;
        const double upd = cfg.lr * (m1[k][i] / bc1) / (std::sqrt(m2[k][i] / bc2) + cfg.eps);
        w[i] = static_cast<float>(static_cast<double>(w[i]) - upd);
      }
    }
  }
  std::size_t frozen_changed = 0, selected = 0;
  for (std::size_t k = 0; k < base.num_layers(); ++k) {
    const Mask* mk = masks.find(k);
    const auto a = sparse.layer(k).weight.data();
    const auto b = base.layer(k).weight.data();
    const auto d = dense.layer(k).weight.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (mk && mk->test(i)) {
        ++selected;
        max_diff = std::max(max_diff, std::abs(static_cast<double>(a[i]) - static_cast<double>(d[i])));
      } else if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) {
        ++frozen_changed;
      }
    }
    if (sparse.layer(k).bias != base.layer(k).bias) ++frozen_changed;
  }
  return {frozen_changed == 0 && max_diff <= 1e-6 && selected > 0,
          fmt("ratio %.5f, 500 Adam steps, %zu frozen weights changed, %zu selected with max |sparse-dense| %.3g",
              mask_ratio(masks), frozen_changed, selected, max_diff)};
}

// ---------------------------------------------------------------------------
// 5. Parameter accounting

Outcome criterion5() {
  auto c = config_from_string(R"({"budget": "ratio:0.999"})");
  c.out_dir = scratch("c5").string();
  const auto r = run_pipeline(c);
  const double pct = r.run.params.pct();
  return {pct < 0.1 && r.run.params.trainable > 0,
          fmt("default pipeline at 99.90%%: %zu of %zu trainable = %.4f%% (< 0.1%%)", r.run.params.trainable,
              r.run.params.total, pct)};
}

// ---------------------------------------------------------------------------
// 6. Ablation trend

Outcome criterion6() {
  const auto start = std::chrono::steady_clock::now();
  auto c = config_from_string("{}");
  c.out_dir = scratch("c6").string();
  const auto& ratios = default_sweep_ratios();
  const auto rep = run_sweep(c, ratios, {1, 2, 3});
  std::size_t latest = 0;
  std::size_t argmax = 0;
  std::string rows;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& r = rep.rows[i];
    for (auto e : r.best_epochs) latest = std::max(latest, e);
    if (r.mean_final_top1 > rep.rows[argmax].mean_final_top1) argmax = i;
    rows += fmt(" %.2f%%:%.3f", 100.0 * r.mask_ratio, r.mean_final_top1);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool a = latest <= 30;
  const bool b = argmax != 0;
  return {a && b && secs < 900.0,
          fmt("(a) latest best epoch %zu (<= 30) %s; (b) best mean final top1 at %.2f%% (not 91.06%%) %s;"
              " final top1 by ratio:%s; %.1fs",
              latest, a ? "ok" : "FAIL", 100.0 * ratios[argmax], b ? "ok" : "FAIL", rows.c_str(), secs)};
}

// ---------------------------------------------------------------------------
// 7. Importance vs random

Outcome criterion7() {
  double imp = 0.0, rnd = 0.0;
  std::size_t wins = 0;
  const auto root = scratch("c7");
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto c = config_from_string(R"({"budget": "ratio:0.995", "baselines": ["random"]})");
    c.seed = seed;
    c.train.seed = seed;
    c.out_dir = (root / std::to_string(seed)).string();
    const auto r = run_pipeline(c);
    imp += r.run.final_top1;
    rnd += r.baselines.at(0).final_top1;
    wins += r.run.final_top1 > r.baselines.at(0).final_top1;
  }
  imp /= 10.0;
  rnd /= 10.0;
  return {imp >= rnd, fmt("ratio 99.5%%, 10 paired seeds: importance %.4f vs random %.4f, margin %+.4f, %zu/10 wins",
                          imp, rnd, imp - rnd, wins)};
}

// ---------------------------------------------------------------------------
// 8. Global concentration

Outcome criterion8() {
  // layer 0 sees unit inputs through small weights; layer 1 sees large
  // activations through large weights, so every layer-1 score dominates.
  Rng rng(8008);
  const std::vector<std::size_t> dims{6, 8, 5};
  auto net = Network<float>::init(Network<float>::mlp_specs(dims, Activation::relu), rng);
  for (auto& v : net.layer(0).weight.data()) v = static_cast<float>(rng.uniform(0.5, 1.0));
  for (auto& v : net.layer(1).weight.data()) v = static_cast<float>(rng.uniform(10.0, 20.0));
  MatrixF x(16, 6);
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(0.0, 1.0));
  const auto scores = score_model(net, collect_activation_stats(net, x));
  double max0 = 0.0, min1 = 1e300;
  for (double v : scores.layers[0].scores.data()) max0 = std::max(max0, v);
  for (double v : scores.layers[1].scores.data()) min1 = std::min(min1, v);

  const auto global = allocate(scores, GlobalFraction{0.3});
  const auto per_neuron = allocate(scores, PerNeuronK{1});
  std::size_t empty_rows = 0;
  for (const auto& m : per_neuron.layers) {
    for (std::size_t r = 0; r < m.rows(); ++r) empty_rows += m.row_popcount(r) == 0;
  }
  const std::size_t g0 = global.layers[0].cardinality(), g1 = global.layers[1].cardinality();
  return {g0 == 0 && g1 > 0 && empty_rows == 0 && max0 < min1,
          fmt("global 30%%: layer0=%zu layer1=%zu; per-neuron K=1: layer0=%zu layer1=%zu, %zu neurons without a weight",
              g0, g1, per_neuron.layers[0].cardinality(), per_neuron.layers[1].cardinality(), empty_rows)};
}

// ---------------------------------------------------------------------------
// 9. LoRA contracts

Outcome criterion9() {
  Rng rng(9009);
  bool zero_exact = true;
  for (int t = 0; t < 20; ++t) {
    const std::size_t r = 1 + rng.below(8), c = 1 + rng.below(8);
    const auto w0 = random_matrix<float>(r, c, rng, 3.0);
    Mask m(r, c, 0, "layer0");
    for (std::size_t i = 0; i < m.size(); ++i) m.set(i, rng.below(2) == 1);
    LoraAdapter ad{0, MatrixF(r, 2), random_matrix<float>(2, c, rng), m, 1.5};
    const auto eff = lora_effective_weights(w0, ad);
    for (std::size_t i = 0; i < w0.size(); ++i) {
      zero_exact = zero_exact && std::bit_cast<std::uint32_t>(eff.data()[i]) == std::bit_cast<std::uint32_t>(w0.data()[i]);
    }
  }

  // Masked LoRA training leaves W0 alone and moves only masked entries.
  const std::vector<std::size_t> dims{6, 8, 3};
  const auto base = Network<float>::init(Network<float>::mlp_specs(dims, Activation::relu), rng);
  const Network<float> snapshot = base;
  Dataset d{random_matrix<float>(60, 6, rng, 2.0), std::vector<int>(60)};
  for (auto& y : d.labels) y = static_cast<int>(rng.below(3));
  const auto masks = allocate(score_model(base, collect_activation_stats(base, d.x)), MaskRatio{0.7});
  TrainConfig tc;
  tc.epochs = 20;
  tc.warmup_epochs = 2;
  tc.batch_size = 16;
  tc.lora_rank = 2;
  tc.optimizer.lr = 0.05;
  Rng init(3);
  auto result = lora_train(base, d, d, make_lora_adapters(base, masks, 2, 1.0, init), tc);
  const bool w0_intact = base == snapshot;
  const auto merged = lora_merged(base, result.adapters);
  std::size_t outside = 0, moved = 0;
  for (const auto& m : masks.layers) {
    const auto a = merged.layer(m.layer()).weight.data();
    const auto b = base.layer(m.layer()).weight.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const bool changed = std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i]);
      if (changed && !m.test(i)) ++outside;
      moved += changed;
    }
  }

  std::size_t r1_bad = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d1 = 1 + rng.below(6), d2 = 1 + rng.below(6);
    MatrixD b(d1, 1), a(1, d2), mb(d1, 1), ma(1, d2);
    for (auto& v : b.data()) v = rng.uniform(-1, 1);
    for (auto& v : a.data()) v = rng.uniform(-1, 1);
    for (auto& v : mb.data()) v = static_cast<double>(rng.below(2));
    for (auto& v : ma.data()) v = static_cast<double>(rng.below(2));
    r1_bad += factored_mask_check(b, a, mb, ma).max_abs_diff != 0.0;
  }
  // B = [1 1], A = [1; 1], M_B = [1 1], M_A = [1; 0]: (B⊙M_B)(A⊙M_A) = 1, (BA)⊙[M_B M_A > 0] = 2.
  const auto cx = factored_mask_check(MatrixD::from_rows({{1, 1}}), MatrixD::from_rows({{1}, {1}}),
                                      MatrixD::from_rows({{1, 1}}), MatrixD::from_rows({{1}, {0}}));
  const bool pass = zero_exact && w0_intact && outside == 0 && moved > 0 && r1_bad == 0 && cx.max_abs_diff > 0.0;
  return {pass, fmt("B=0 bit-exact %s; W0 intact %s; %zu entries moved, %zu outside mask; r=1 mismatches %zu/100;"
                    " r=2 counterexample diff %.1f",
                    zero_exact ? "yes" : "no", w0_intact ? "yes" : "no", moved, outside, r1_bad, cx.max_abs_diff)};
}

// ---------------------------------------------------------------------------
// 10. Determinism and formats

Outcome criterion10() {
  const auto root = scratch("c10");
  auto cfg = [&](const char* sub) {
    auto c = config_from_string(R"({"budget": "ratio:0.99", "baselines": ["random"], "train": {"epochs": 20}})");
    c.out_dir = (root / sub).string();
    return c;
  };
  run_pipeline(cfg("a"));
  run_pipeline(cfg("b"));
  std::size_t differ = 0;
  for (const char* f : {"metrics.csv", "mask.temk", "tuned.tetd", "pretrained.tetd", "baselines/random/mask.temk"}) {
    differ += read_file(root / "a" / f) != read_file(root / "b" / f);
  }
  // Round trips.
  const auto dump = TensorDump::read(root / "a" / "tuned.tetd");
  const bool dump_rt = TensorDump::from_bytes(dump.to_bytes()).to_bytes() == read_file(root / "a" / "tuned.tetd");
  const auto masks = read_masks(root / "a" / "mask.temk");
  const bool mask_rt = mask_file_bytes(masks) == read_file(root / "a" / "mask.temk");
  // Golden files written by an independent encoder, and a frozen pipeline checksum.
  const bool golden = checksum(read_file(kData / "golden.tetd")) == 0x4B3C4066BF1B3D96ULL &&
                      checksum(read_file(kData / "golden.temk")) == 0xFBDC2AC434F03189ULL &&
                      TensorDump::read(kData / "golden.tetd").to_bytes() == read_file(kData / "golden.tetd") &&
                      mask_file_bytes(read_masks(kData / "golden.temk")) == read_file(kData / "golden.temk");
  const std::string mask_sum = hex64(file_checksum(root / "a" / "mask.temk"));
  const bool frozen = mask_sum == "0c4ef06992a4108f";
  return {differ == 0 && dump_rt && mask_rt && golden && frozen,
          fmt("%zu differing artifacts across identical runs; TETD round trip %s; TEMK round trip %s; golden files %s;"
              " pipeline mask checksum %s %s",
              differ, dump_rt ? "ok" : "FAIL", mask_rt ? "ok" : "FAIL", golden ? "ok" : "FAIL", mask_sum.c_str(),
              frozen ? "ok" : "FAIL")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", criterion1},   {"importance oracle", criterion2},
      {"mask cardinality", criterion3},       {"freeze exactness", criterion4},
      {"parameter accounting", criterion5},   {"ablation trend", criterion6},
      {"importance vs random", criterion7},   {"global concentration", criterion8},
      {"LoRA contracts", criterion9},         {"determinism and formats", criterion10},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
