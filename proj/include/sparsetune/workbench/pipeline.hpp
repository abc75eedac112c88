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
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sparsetune/activation_stats.hpp"
#include "sparsetune/allocation.hpp"
#include "sparsetune/importance.hpp"
#include "sparsetune/network.hpp"
#include "sparsetune/sparse_tuner.hpp"
#include "sparsetune/workbench/checkpoint.hpp"
#include "sparsetune/workbench/config.hpp"
#include "sparsetune/workbench/mask_file.hpp"
#include "sparsetune/workbench/metrics.hpp"
#include "sparsetune/workbench/synthetic.hpp"

namespace sparsetune::workbench {

namespace fs = std::filesystem;

/// Runs f, re-raising any library error with "<stage>: " prepended and the type kept.
template <typename F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const DivergenceError& e) {
    throw e.with_context(stage);
  } catch (const ConfigError& e) {
    throw ConfigError(stage + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(stage + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(stage + ": " + e.what());
  } catch (const ValueError& e) {
    throw ValueError(stage + ": " + e.what());
  } catch (const Error& e) {
    throw Error(stage + ": " + e.what());
  }
}

/// File names inside a run directory.
struct RunPaths {
  fs::path dir;

  fs::path checkpoint() const { return dir / "pretrained.tetd"; }
  fs::path stats() const { return dir / "stats.tetd"; }
  fs::path scores() const { return dir / "scores.tetd"; }
  fs::path mask() const { return dir / "mask.temk"; }
  fs::path tuned() const { return dir / "tuned.tetd"; }
  fs::path metrics() const { return dir / "metrics.csv"; }
  fs::path report() const { return dir / "report.json"; }
  fs::path baseline(const std::string& name) const { return dir / "baselines" / name; }
};

struct TaskData {
  Dataset source;
  Dataset source_eval;
  Dataset target;
  Dataset target_eval;
};

inline TaskData load_data(const PipelineConfig& c) {
  TaskData d;
  if (c.data.external()) {
    if (!c.data.source_train.empty()) d.source = read_dataset_csv(c.data.source_train);
    if (!c.data.source_eval.empty()) d.source_eval = read_dataset_csv(c.data.source_eval);
    d.target = read_dataset_csv(c.data.target_train);
    d.target_eval = read_dataset_csv(c.data.target_eval);
  } else {
    auto pair = make_transfer_pair(c.data_seed(), c.task);
    d = {std::move(pair.source), std::move(pair.source_eval), std::move(pair.target), std::move(pair.target_eval)};
  }
  const std::size_t in = c.model.dims.front();
  const int classes = static_cast<int>(c.model.dims.back());
  for (const Dataset* ds : {&d.source, &d.source_eval, &d.target, &d.target_eval}) {
    if (ds->empty()) continue;
    ds->validate();
    if (ds->x.cols() != in) {
      throw ConfigError("dataset has " + std::to_string(ds->x.cols()) + " features, model expects " +
                        std::to_string(in));
    }
    for (int y : ds->labels) {
      if (y >= classes) throw ConfigError("dataset label " + std::to_string(y) + " exceeds model classes");
    }
  }
  if (d.target.empty()) throw ConfigError("target training set is empty");
  return d;
}

inline Network<float> init_network(const PipelineConfig& c) {
  Rng rng = Rng(c.seed).fork("init");
  const auto specs = Network<float>::mlp_specs(c.model.dims, c.model.activation, c.model.bias);
  return Network<float>::init(specs, rng);
}

struct PretrainResult {
  Network<float> net;
  std::vector<EpochMetrics> history;
};

/// Dense training of every weight and bias on the source task (constant lr, Adam).
inline PretrainResult pretrain_network(const PipelineConfig& c, const Dataset& source, const Dataset& source_eval) {
  TrainConfig t;
  t.epochs = c.pretrain.epochs;
  t.batch_size = c.pretrain.batch_size;
  t.schedule = Schedule::constant;
  t.warmup_epochs = 0;
  t.seed = Rng(c.seed).fork("pretrain").seed();
  t.mode = TuneMode::full;
  t.optimizer.lr = c.pretrain.lr;
  auto r = train(init_network(c), source, source_eval, {}, t);
  return {std::move(r.net), std::move(r.history)};
}

/// Pretrains (or loads pretrain.checkpoint) and writes <out>/pretrained.tetd.
inline PretrainResult pretrain(const PipelineConfig& c, const TaskData& data) {
  const RunPaths paths{c.out_dir};
  if (!c.pretrain.checkpoint.empty()) {
    auto net = run_stage("pretrain", [&] { return load_network(c.pretrain.checkpoint); });
    if (net.input_dim() != c.model.dims.front() || net.output_dim() != c.model.dims.back()) {
      throw ConfigError("pretrain: checkpoint does not match model.dims");
    }
    if (fs::absolute(c.pretrain.checkpoint) != fs::absolute(paths.checkpoint())) {
      run_stage("pretrain", [&] { save_network(paths.checkpoint(), net); });
    }
    return {std::move(net), {}};
  }
  return run_stage("pretrain", [&] {
    if (data.source.empty()) throw ConfigError("no source data to pretrain on");
    auto r = pretrain_network(c, data.source, data.source_eval);
    save_network(paths.checkpoint(), r.net);
    return r;
  });
}

inline PretrainResult pretrain(const PipelineConfig& c) { return pretrain(c, run_stage("load-data", [&] { return load_data(c); })); }

inline ActivationStats collect_stats_stage(const PipelineConfig& c, const Network<float>& net, const Dataset& target) {
  return run_stage("collect-stats", [&] {
    auto stats = collect_activation_stats(net, target.x, c.stats.batch_rows, c.stats.max_tokens);
    stats_to_dump(stats).write(RunPaths{c.out_dir}.stats());
    return stats;
  });
}

inline ImportanceScores score_stage(const PipelineConfig& c, const Network<float>& net, const ActivationStats& stats) {
  return run_stage("score", [&] {
    auto scores = score_model(net, stats, c.exclusions());
    scores_to_dump(scores).write(RunPaths{c.out_dir}.scores());
    return scores;
  });
}

inline MaskSet allocate_stage(const PipelineConfig& c, const ImportanceScores& scores) {
  return run_stage("allocate", [&] {
    auto masks = allocate(scores, c.budget);
    write_masks(RunPaths{c.out_dir}.mask(), masks);
    return masks;
  });
}

// ---------------------------------------------------------------------------
// Accounting and summaries

struct ParamAccount {
  std::size_t trainable = 0;
  std::size_t total = 0;  // weights, plus biases when they are trainable
  double mask_ratio = 1.0;

  double pct() const noexcept {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(trainable) / static_cast<double>(total);
  }
};

/// Trainable parameters of a run. mask_ratio is over all weights of the
/// network; excluded layers count as frozen.
inline ParamAccount account(const Network<float>& net, const MaskSet& masks, const TrainConfig& t) {
  const std::size_t weights = net.weight_count();
  ParamAccount a;
  switch (t.mode) {
    case TuneMode::frozen:
      a = {0, weights, 1.0};
      break;
    case TuneMode::full:
      a = {weights + net.bias_count(), weights + net.bias_count(), 0.0};
      break;
    case TuneMode::sparse_direct: {
      const std::size_t bias = t.train_bias ? net.bias_count() : 0;
      a = {masks.cardinality() + bias, weights + bias, 0.0};
      break;
    }
    case TuneMode::sparse_lora: {
      a.total = weights;
      for (const auto& m : masks.layers) {
        const auto& s = net.layer(m.layer()).spec;
        const std::size_t r = std::max<std::size_t>(1, std::min({t.lora_rank, s.out_dim, s.in_dim}));
        a.trainable += r * (s.out_dim + s.in_dim);
      }
      break;
    }
  }
  if (t.mode == TuneMode::sparse_direct || t.mode == TuneMode::sparse_lora) {
    a.mask_ratio = weights == 0 ? 1.0 : 1.0 - static_cast<double>(masks.cardinality()) / static_cast<double>(weights);
  }
  return a;
}

struct RunSummary {
  std::string name;
  TuneMode mode = TuneMode::sparse_direct;
  ParamAccount params;
  std::size_t best_epoch = 0;
  double best_top1 = 0.0;
  double final_top1 = 0.0;
  double final_top5 = 0.0;
  double final_eval_loss = 0.0;
  bool weights_unchanged = false;
  std::string checkpoint_fnv1a64;
  std::vector<EpochMetrics> history;
};

inline json to_json(const RunSummary& r) {
  return {{"name", r.name},
          {"mode", to_string(r.mode)},
          {"mask_ratio", r.params.mask_ratio},
          {"trainable_params", r.params.trainable},
          {"total_params", r.params.total},
          {"trainable_param_pct", r.params.pct()},
          {"best_epoch", r.best_epoch},
          {"best_top1", r.best_top1},
          {"final_top1", r.final_top1},
          {"final_top5", r.final_top5},
          {"final_eval_loss", r.final_eval_loss},
          {"weights_unchanged", r.weights_unchanged},
          {"checkpoint_fnv1a64", r.checkpoint_fnv1a64}};
}

inline json history_json(const std::vector<EpochMetrics>& h, bool keep_wall_time) {
  json out = json::array();
  for (const auto& m : h) {
    out.push_back({{"epoch", m.epoch},
                   {"train_loss", m.train_loss},
                   {"eval_loss", m.eval_loss},
                   {"top1", m.top1},
                   {"top5", m.top5},
                   {"wall_ms", keep_wall_time ? m.wall_ms : 0.0}});
  }
  return out;
}

/// Fine-tunes `base` under `t` with `masks`, writing <dir>/tuned.tetd.
inline RunSummary tune_run(const std::string& name, const Network<float>& base, const TaskData& data,
                           const MaskSet& masks, const TrainConfig& t, const fs::path& dir,
                           const MaskRefresh& refresh = {}) {
  auto result = train(base, data.target, data.target_eval, masks, t, refresh);
  RunSummary s;
  s.name = name;
  s.mode = t.mode;
  s.params = account(base, masks, t);
  s.best_epoch = best_epoch(result.history);
  for (const auto& m : result.history) {
    if (m.epoch == s.best_epoch) s.best_top1 = m.top1;
  }
  const auto& last = result.history.back();
  s.final_top1 = last.top1;
  s.final_top5 = last.top5;
  s.final_eval_loss = last.eval_loss;
  s.weights_unchanged = result.net == base;
  const auto bytes = network_to_dump(result.net).to_bytes();
  write_file(dir / "tuned.tetd", bytes);
  s.checkpoint_fnv1a64 = hex64(checksum(bytes));
  s.history = std::move(result.history);
  return s;
}

/// Rebuilds stats and masks from the current weights every `every` epochs.
inline MaskRefresh make_refresh(const PipelineConfig& c, const Dataset& target) {
  if (c.stats.refresh_every == 0) return {};
  return [c, &target](std::size_t epoch, const Network<float>& net) -> std::optional<MaskSet> {
    if ((epoch - 1) % c.stats.refresh_every != 0) return std::nullopt;
    const auto stats = collect_activation_stats(net, target.x, c.stats.batch_rows, c.stats.max_tokens);
    return allocate(score_model(net, stats, c.exclusions()), c.budget);
  };
}

// ---------------------------------------------------------------------------
// End-to-end run

struct PipelineReport {
  PipelineConfig config;
  double source_top1 = 0.0;         // pretrained model on the source eval split (if any)
  double target_top1_before = 0.0;  // pretrained model on the target eval split
  std::vector<std::size_t> layer_trainable;
  RunSummary run;
  std::vector<RunSummary> baselines;
  std::map<std::string, std::string> artifacts;  // file name -> fnv1a64

  json to_json() const {
    json j;
    j["config"] = config_to_json(config);
    j["pretrained"] = {{"source_top1", source_top1}, {"target_top1", target_top1_before}};
    j["layer_trainable"] = layer_trainable;
    j["run"] = workbench::to_json(run);
    j["run"]["history"] = history_json(run.history, config.record_wall_time);
    j["baselines"] = json::array();
    for (const auto& b : baselines) j["baselines"].push_back(workbench::to_json(b));
    j["artifacts"] = artifacts;
    return j;
  }
};

/// collect-stats -> score -> allocate -> train -> evaluate, plus requested baselines.
inline PipelineReport run_pipeline(const PipelineConfig& c) {
  c.validate();
  const RunPaths paths{c.out_dir};
  const TaskData data = run_stage("load-data", [&] { return load_data(c); });
  PretrainResult pre = pretrain(c, data);
  const Network<float>& base = pre.net;

  PipelineReport report;
  report.config = c;
  run_stage("evaluate", [&] {
    if (!data.source_eval.empty()) report.source_top1 = evaluate(base, data.source_eval, data.source_eval).top1;
    report.target_top1_before = evaluate(base, data.target, data.target_eval).top1;
  });

  const auto stats = collect_stats_stage(c, base, data.target);
  const auto scores = score_stage(c, base, stats);
  const auto masks = allocate_stage(c, scores);
  for (const auto& m : masks.layers) report.layer_trainable.push_back(m.cardinality());

  MetricsLog log;
  if (!pre.history.empty()) {
    log.append_history("pretrain", pre.history, 0.0, 100.0, c.record_wall_time);
  }
  report.run = run_stage("train", [&] {
    return tune_run(to_string(c.train.mode), base, data, masks, c.train, paths.dir, make_refresh(c, data.target));
  });
  log.append_history("train", report.run.history, report.run.params.mask_ratio, report.run.params.pct(),
                     c.record_wall_time);

  for (const auto& name : c.baselines) {
    report.baselines.push_back(run_stage("baseline:" + name, [&] {
      TrainConfig t = c.train;
      MaskSet bm = masks;
      if (name == "full") {
        t.mode = TuneMode::full;
      } else if (name == "frozen") {
        t.mode = TuneMode::frozen;
      } else if (name == "random") {
        t.mode = TuneMode::sparse_direct;
        Rng rng = Rng(c.seed).fork("random-mask");
        bm = random_mask(masks, rng);
      } else if (name == "global") {
        t.mode = TuneMode::sparse_direct;
        // +0.5 keeps floor(fraction * total) at exactly the main run's cardinality.
        const double total = static_cast<double>(scores.total());
        bm = allocate(scores, GlobalFraction{
                                  std::min(1.0, (static_cast<double>(masks.cardinality()) + 0.5) / total)});
      } else if (name == "lora") {
        t.mode = TuneMode::sparse_lora;
        bm = dense_masks(base, true);
      }
      const fs::path dir = paths.baseline(name);
      if (t.mode == TuneMode::sparse_direct) write_masks(dir / "mask.temk", bm);
      auto s = tune_run(name, base, data, bm, t, dir);
      log.append_history("baseline:" + name, s.history, s.params.mask_ratio, s.params.pct(), c.record_wall_time);
      return s;
    }));
  }

  run_stage("report", [&] {
    log.write(paths.metrics());
    emit_plot_data(paths.dir, {{report.run.params.mask_ratio, report.run.params.pct(), report.run.history}});
    for (const char* f : {"pretrained.tetd", "stats.tetd", "scores.tetd", "mask.temk", "tuned.tetd", "metrics.csv"}) {
      report.artifacts[f] = hex64(file_checksum(paths.dir / f));
    }
    write_text(paths.report(), report.to_json().dump(2) + "\n");
  });
  return report;
}

// ---------------------------------------------------------------------------
// Ratio sweep

inline const std::vector<double>& default_sweep_ratios() {
  static const std::vector<double> r{0.9106, 0.9552, 0.9955, 0.9990, 0.9998};
  return r;
}

struct SweepRow {
  double mask_ratio = 0.0;  // requested
  double realized_ratio = 0.0;
  double trainable_pct = 0.0;
  double mean_final_top1 = 0.0;
  double mean_best_top1 = 0.0;
  double final_of_mean_top1 = 0.0;  // last epoch of the seed-averaged curve
  std::vector<std::size_t> best_epochs;  // one per seed
  std::vector<EpochMetrics> mean_history;
};

struct SweepReport {
  std::vector<std::uint64_t> seeds;
  std::vector<SweepRow> rows;

  json to_json() const {
    json j;
    j["seeds"] = seeds;
    j["rows"] = json::array();
    for (const auto& r : rows) {
      j["rows"].push_back({{"mask_ratio", r.mask_ratio},
                           {"realized_mask_ratio", r.realized_ratio},
                           {"trainable_param_pct", r.trainable_pct},
                           {"mean_final_top1", r.mean_final_top1},
                           {"mean_best_top1", r.mean_best_top1},
                           {"best_epochs", r.best_epochs}});
    }
    return j;
  }
};

inline std::string ratio_tag(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ratio_%.4f", r * 100.0);
  return buf;
}

/// Pretrains once per seed, then runs the pipeline for each ratio from that checkpoint.
inline SweepReport run_sweep(const PipelineConfig& base_cfg, const std::vector<double>& ratios,
                             const std::vector<std::uint64_t>& seeds) {
  if (ratios.empty() || seeds.empty()) throw ConfigError("sweep needs at least one ratio and one seed");
  for (double r : ratios) sparsetune::validate(Budget{MaskRatio{r}});
  const fs::path root = base_cfg.out_dir;
  SweepReport report;
  report.seeds = seeds;
  std::vector<std::vector<RunSummary>> runs(ratios.size());
  for (auto seed : seeds) {
    PipelineConfig sc = base_cfg;
    sc.seed = seed;
    sc.train.seed = seed;
    sc.out_dir = (root / ("seed_" + std::to_string(seed))).string();
    sc.baselines.clear();
    pretrain(sc);
    sc.pretrain.checkpoint = RunPaths{sc.out_dir}.checkpoint().string();
    for (std::size_t i = 0; i < ratios.size(); ++i) {
      PipelineConfig rc = sc;
      rc.budget = MaskRatio{ratios[i]};
      rc.out_dir = (fs::path(sc.out_dir) / ratio_tag(ratios[i])).string();
      runs[i].push_back(run_pipeline(rc).run);
    }
  }
  MetricsLog log;
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    SweepRow row;
    row.mask_ratio = ratios[i];
    row.realized_ratio = runs[i].front().params.mask_ratio;
    row.trainable_pct = runs[i].front().params.pct();
    std::vector<std::vector<EpochMetrics>> hs;
    for (const auto& r : runs[i]) {
      row.mean_final_top1 += r.final_top1;
      row.mean_best_top1 += r.best_top1;
      row.best_epochs.push_back(r.best_epoch);
      hs.push_back(r.history);
    }
    row.mean_final_top1 /= static_cast<double>(runs[i].size());
    row.mean_best_top1 /= static_cast<double>(runs[i].size());
    row.mean_history = mean_history(hs);
    row.final_of_mean_top1 = row.mean_history.empty() ? 0.0 : row.mean_history.back().top1;
    log.append_history("sweep:" + ratio_tag(ratios[i]), row.mean_history, row.realized_ratio, row.trainable_pct,
                       base_cfg.record_wall_time);
    series.push_back({row.realized_ratio, row.trainable_pct, row.mean_history});
    report.rows.push_back(std::move(row));
  }
  run_stage("report", [&] {
    log.write(root / "sweep_metrics.csv");
    emit_plot_data(root, series);
    write_text(root / "sweep.json", report.to_json().dump(2) + "\n");
  });
  return report;
}

}  // namespace sparsetune::workbench
