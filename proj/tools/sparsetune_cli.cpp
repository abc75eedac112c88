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

// sparsetune: staged sparse fine-tuning workbench.
//
//   sparsetune pipeline --config cfg.json --out runs/a
//   sparsetune pretrain | collect-stats | score | allocate | train | eval --out runs/a
//   sparsetune sweep --ratios 0.9106,0.999 --seeds 1,2,3 --out runs/sweep
//   sparsetune report --out runs/a
//
// Exit codes: 0 ok, 1 configuration error, 2 runtime error or divergence, 3 IO error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sparsetune.hpp"

using namespace sparsetune;
using namespace sparsetune::workbench;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  std::optional<double> mask_ratio;
  std::string budget;
  std::string checkpoint;
  std::vector<double> ratios;
  std::vector<std::uint64_t> seeds;
};

PipelineConfig resolve(const Options& o) {
  PipelineConfig c = o.config.empty() ? config_from_string("{}") : load_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = *o.seed;
  }
  if (!o.out.empty()) c.out_dir = o.out;
  if (!o.mode.empty()) c.train.mode = tune_mode_from_string(o.mode);
  if (o.mask_ratio && !o.budget.empty()) throw ConfigError("--mask-ratio and --budget are exclusive");
  if (o.mask_ratio) c.budget = MaskRatio{*o.mask_ratio};
  if (!o.budget.empty()) c.budget = parse_budget(o.budget);
  c.validate();
  return c;
}

fs::path base_checkpoint(const PipelineConfig& c) {
  const RunPaths paths{c.out_dir};
  if (fs::exists(paths.checkpoint()) || c.pretrain.checkpoint.empty()) return paths.checkpoint();
  return c.pretrain.checkpoint;
}

void print_run(const RunSummary& r) {
  std::printf("%-14s mask_ratio=%.6f trainable=%zu/%zu (%.4f%%) best_top1=%.4f@%zu final_top1=%.4f\n",
              r.name.c_str(), r.params.mask_ratio, r.params.trainable, r.params.total, r.params.pct(),
              r.best_top1, r.best_epoch, r.final_top1);
}

int cmd_pretrain(const Options& o) {
  const auto c = resolve(o);
  const auto data = run_stage("load-data", [&] { return load_data(c); });
  const auto r = pretrain(c, data);
  if (!r.history.empty()) {
    MetricsLog log;
    log.append_history("pretrain", r.history, 0.0, 100.0, c.record_wall_time);
    run_stage("pretrain", [&] { log.write(fs::path(c.out_dir) / "pretrain_metrics.csv"); });
    std::printf("source top1 %.4f after %zu epochs\n", r.history.back().top1, r.history.back().epoch);
  }
  std::printf("wrote %s\n", RunPaths{c.out_dir}.checkpoint().string().c_str());
  return 0;
}

int cmd_collect_stats(const Options& o) {
  const auto c = resolve(o);
  const auto data = run_stage("load-data", [&] { return load_data(c); });
  const auto net = run_stage("collect-stats", [&] { return load_network(base_checkpoint(c)); });
  const auto stats = collect_stats_stage(c, net, data.target);
  std::printf("%zu tokens over %zu layers -> %s\n", stats.token_count(), stats.num_layers(),
              RunPaths{c.out_dir}.stats().string().c_str());
  return 0;
}

int cmd_score(const Options& o) {
  const auto c = resolve(o);
  const RunPaths paths{c.out_dir};
  const auto net = run_stage("score", [&] { return load_network(base_checkpoint(c)); });
  const auto stats = run_stage("score", [&] { return stats_from_dump(TensorDump::read(paths.stats())); });
  const auto scores = score_stage(c, net, stats);
  std::printf("scored %zu weights in %zu layers -> %s\n", scores.total(), scores.layers.size(),
              paths.scores().string().c_str());
  return 0;
}

int cmd_allocate(const Options& o) {
  const auto c = resolve(o);
  const RunPaths paths{c.out_dir};
  const auto scores = run_stage("allocate", [&] { return scores_from_dump(TensorDump::read(paths.scores())); });
  const auto masks = allocate_stage(c, scores);
  for (const auto& m : masks.layers) {
    std::printf("%s: %zu of %zu trainable\n", m.name().c_str(), m.cardinality(), m.size());
  }
  std::printf("budget %s, mask ratio %.6f -> %s\n", to_string(c.budget).c_str(), mask_ratio(masks),
              paths.mask().string().c_str());
  return 0;
}

int cmd_train(const Options& o) {
  const auto c = resolve(o);
  const RunPaths paths{c.out_dir};
  const auto data = run_stage("load-data", [&] { return load_data(c); });
  const auto net = run_stage("train", [&] { return load_network(base_checkpoint(c)); });
  const auto masks = run_stage("train", [&] { return read_masks(paths.mask()); });
  const auto r = run_stage("train", [&] {
    return tune_run(to_string(c.train.mode), net, data, masks, c.train, paths.dir, make_refresh(c, data.target));
  });
  MetricsLog log;
  log.append_history("train", r.history, r.params.mask_ratio, r.params.pct(), c.record_wall_time);
  run_stage("train", [&] { log.write(paths.metrics()); });
  print_run(r);
  return 0;
}

int cmd_eval(const Options& o) {
  const auto c = resolve(o);
  const RunPaths paths{c.out_dir};
  const fs::path ckpt = o.checkpoint.empty() ? paths.tuned() : fs::path(o.checkpoint);
  const auto data = run_stage("load-data", [&] { return load_data(c); });
  const auto net = run_stage("evaluate", [&] { return load_network(ckpt); });
  const auto m = run_stage("evaluate", [&] { return evaluate(net, data.target, data.target_eval); });
  const json j{{"checkpoint", ckpt.string()}, {"train_loss", m.train_loss}, {"eval_loss", m.eval_loss},
               {"top1", m.top1},              {"top5", m.top5}};
  run_stage("evaluate", [&] { write_text(paths.dir / "eval.json", j.dump(2) + "\n"); });
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_pipeline(const Options& o) {
  const auto r = run_pipeline(resolve(o));
  std::printf("pretrained: source top1 %.4f, target top1 %.4f\n", r.source_top1, r.target_top1_before);
  print_run(r.run);
  for (const auto& b : r.baselines) print_run(b);
  std::printf("report: %s\n", RunPaths{r.config.out_dir}.report().string().c_str());
  return 0;
}

void print_sweep(const json& j) {
  std::printf("%-10s %-10s %-12s %-10s %-10s %s\n", "ratio", "realized", "trainable%", "final", "best",
              "best_epochs");
  for (const auto& row : j.at("rows")) {
    std::string epochs;
    for (const auto& e : row.at("best_epochs")) epochs += (epochs.empty() ? "" : ",") + e.dump();
    std::printf("%-10.4f %-10.6f %-12.4f %-10.4f %-10.4f %s\n", row.at("mask_ratio").get<double>(),
                row.at("realized_mask_ratio").get<double>(), row.at("trainable_param_pct").get<double>(),
                row.at("mean_final_top1").get<double>(), row.at("mean_best_top1").get<double>(), epochs.c_str());
  }
}

int cmd_sweep(const Options& o) {
  const auto c = resolve(o);
  const auto ratios = o.ratios.empty() ? default_sweep_ratios() : o.ratios;
  const auto seeds = o.seeds.empty() ? std::vector<std::uint64_t>{1, 2, 3} : o.seeds;
  const auto rep = run_sweep(c, ratios, seeds);
  print_sweep(rep.to_json());
  return 0;
}

int cmd_report(const Options& o) {
  const fs::path dir = o.out.empty() ? fs::path(resolve(o).out_dir) : fs::path(o.out);
  if (fs::exists(dir / "sweep.json")) {
    print_sweep(json::parse(read_text(dir / "sweep.json")));
    return 0;
  }
  json j;
  try {
    j = json::parse(read_text(dir / "report.json"));
  } catch (const json::exception& e) {
    throw IoError(std::string("report: malformed report.json: ") + e.what());
  }
  std::printf("pretrained: source top1 %.4f, target top1 %.4f\n", j["pretrained"]["source_top1"].get<double>(),
              j["pretrained"]["target_top1"].get<double>());
  auto row = [](const json& r) {
    std::printf("%-14s mask_ratio=%.6f trainable=%s/%s (%.4f%%) best_top1=%.4f@%s final_top1=%.4f\n",
                r["name"].get<std::string>().c_str(), r["mask_ratio"].get<double>(),
                r["trainable_params"].dump().c_str(), r["total_params"].dump().c_str(),
                r["trainable_param_pct"].get<double>(), r["best_top1"].get<double>(),
                r["best_epoch"].dump().c_str(), r["final_top1"].get<double>());
  };
  row(j["run"]);
  for (const auto& b : j["baselines"]) row(b);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-aware sparse fine-tuning workbench"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub, bool budget) {
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Run seed (overrides config)");
    sub->add_option("--out", o.out, "Output directory (overrides config)");
    if (budget) {
      sub->add_option("--mode", o.mode, "sparse_direct | sparse_lora | full | frozen");
      sub->add_option("--mask-ratio", o.mask_ratio, "Fraction of weights frozen, e.g. 0.999");
      sub->add_option("--budget", o.budget, "kN | global:R | structured:N:M | ratio:R");
    }
  };

  using Handler = int (*)(const Options&);
  std::vector<std::pair<CLI::App*, Handler>> subs{
      {app.add_subcommand("pretrain", "Dense training on the source task; writes pretrained.tetd"), cmd_pretrain},
      {app.add_subcommand("collect-stats", "Calibration pass on target data; writes stats.tetd"), cmd_collect_stats},
      {app.add_subcommand("score", "Importance scores from stats; writes scores.tetd"), cmd_score},
      {app.add_subcommand("allocate", "Masks from scores under the budget; writes mask.temk"), cmd_allocate},
      {app.add_subcommand("train", "Fine-tune with the persisted mask; writes tuned.tetd, metrics.csv"), cmd_train},
      {app.add_subcommand("eval", "Evaluate a checkpoint on the target eval split"), cmd_eval},
      {app.add_subcommand("pipeline", "All stages end to end plus baselines"), cmd_pipeline},
      {app.add_subcommand("sweep", "Mask-ratio sweep over several seeds"), cmd_sweep},
      {app.add_subcommand("report", "Summarize report.json or sweep.json in --out"), cmd_report},
  };
  for (auto& [sub, _] : subs) common(sub, true);
  subs[5].first->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate (default <out>/tuned.tetd)");
  subs[7].first->add_option("--ratios", o.ratios, "Mask ratios")->delimiter(',');
  subs[7].first->add_option("--seeds", o.seeds, "Seeds")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (auto& [sub, handler] : subs) {
      if (sub->parsed()) return handler(o);
    }
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
