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

// Algorithm walk-through on the synthetic transfer task, using the library
// directly: pretrain on the source task, calibrate on the target task, score,
// allocate a per-neuron mask, then fine-tune only the selected weights.

#include <cstdio>

#include "sparsetune.hpp"

using namespace sparsetune;

int main() {
  workbench::TransferSpec spec;
  const auto task = workbench::make_transfer_pair(/*seed=*/1, spec);

  const std::vector<std::size_t> dims{spec.input_dim, 64, 64, spec.classes};
  Rng rng(1);
  const auto init = Network<float>::init(Network<float>::mlp_specs(dims, Activation::relu), rng);

  TrainConfig pre;
  pre.mode = TuneMode::full;
  pre.epochs = 30;
  pre.batch_size = 64;
  pre.schedule = Schedule::constant;
  pre.warmup_epochs = 0;
  pre.optimizer.lr = 3e-3;
  const auto source_model = train(init, task.source, task.source_eval, {}, pre).net;
  std::printf("source top1 %.3f, target top1 before tuning %.3f\n",
              evaluate(source_model, task.source_eval, task.source_eval).top1,
              evaluate(source_model, task.target, task.target_eval).top1);

  const auto stats = collect_activation_stats(source_model, task.target.x);
  const auto scores = score_model(source_model, stats);
  const auto masks = allocate(scores, MaskRatio{0.995});
  for (const auto& m : masks.layers) {
    std::printf("  %s: %zu of %zu weights trainable\n", m.name().c_str(), m.cardinality(), m.size());
  }

  TrainConfig tune;
  tune.epochs = 100;
  tune.batch_size = 5;
  tune.optimizer.lr = 0.05;
  const auto tuned = train(source_model, task.target, task.target_eval, masks, tune);
  const auto& last = tuned.history.back();
  std::printf("mask ratio %.4f: target top1 %.3f (best %.3f at epoch %zu)\n", mask_ratio(masks), last.top1,
              [&] {
                double b = 0;
                for (const auto& m : tuned.history) b = std::max(b, m.top1);
                return b;
              }(),
              best_epoch(tuned.history));
  return 0;
}
