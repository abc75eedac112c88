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

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparsetune/allocation.hpp"
#include "sparsetune/network.hpp"
#include "sparsetune/sparse_tuner.hpp"
#include "sparsetune/workbench/binary_io.hpp"
#include "sparsetune/workbench/synthetic.hpp"

namespace sparsetune::workbench {

using json = nlohmann::json;

struct ModelConfig {
  std::vector<std::size_t> dims{32, 64, 64, 10};
  Activation activation = Activation::relu;
  bool bias = true;
};

/// CSV datasets; when target_train is set the synthetic task is not generated.
struct DataPaths {
  std::string source_train;
  std::string source_eval;
  std::string target_train;
  std::string target_eval;

  bool external() const noexcept { return !target_train.empty(); }
};

struct PretrainConfig {
  bool enabled = true;
  std::string checkpoint;  // load instead of pretraining when set
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 3e-3;
};

struct StatsConfig {
  std::size_t batch_rows = 256;
  std::size_t max_tokens = 0;
  std::size_t refresh_every = 0;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> task_seed;  // defaults to seed
  std::string out_dir = "sparsetune_out";
  ModelConfig model;
  TransferSpec task;
  DataPaths data;
  PretrainConfig pretrain;
  StatsConfig stats;
  Budget budget = MaskRatio{0.999};
  std::vector<std::size_t> exclude_layers;
  TrainConfig train = default_train();
  std::vector<std::string> baselines;
  bool record_wall_time = false;

  static TrainConfig default_train() {
    TrainConfig t;
    t.epochs = 100;
    t.warmup_epochs = 10;
    t.batch_size = 5;
    t.optimizer.lr = 0.05;
    return t;
  }

  std::uint64_t data_seed() const noexcept { return task_seed.value_or(seed); }

  std::set<std::size_t> exclusions() const { return {exclude_layers.begin(), exclude_layers.end()}; }

  void validate() const {
    if (model.dims.size() < 2) throw ConfigError("model.dims needs at least two entries");
    for (auto d : model.dims) {
      if (d < 1) throw ConfigError("model.dims entries must be >= 1");
    }
    if (model.dims.back() < 2) throw ConfigError("model needs at least two classes");
    if (!data.external()) {
      task.validate();
      if (task.input_dim != model.dims.front()) throw ConfigError("task.input_dim must equal model.dims[0]");
      if (task.classes != model.dims.back()) throw ConfigError("task.classes must equal the last model dim");
    } else if (data.target_eval.empty()) {
      throw ConfigError("data.target_eval is required with data.target_train");
    }
    if (!pretrain.enabled && pretrain.checkpoint.empty()) {
      throw ConfigError("pretraining disabled and no pretrain.checkpoint given");
    }
    if (pretrain.enabled && pretrain.checkpoint.empty() && data.external() && data.source_train.empty()) {
      throw ConfigError("pretraining on external data needs data.source_train");
    }
    if (pretrain.batch_size < 1) throw ConfigError("pretrain.batch_size must be >= 1");
    if (!(pretrain.lr > 0.0) || !std::isfinite(pretrain.lr)) throw ConfigError("pretrain.lr must be > 0");
    sparsetune::validate(budget);
    for (auto k : exclude_layers) {
      if (k + 1 >= model.dims.size()) throw ConfigError("exclude_layers: no layer " + std::to_string(k));
    }
    train.validate();
    for (const auto& b : baselines) {
      if (b != "full" && b != "frozen" && b != "random" && b != "global" && b != "lora") {
        throw ConfigError("unknown baseline '" + b + "' (full, frozen, random, global, lora)");
      }
    }
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  }
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + (where.empty() ? std::string(key) : where + "." + key) + "'");
  }
}

inline const char* to_string(Schedule s) { return s == Schedule::cosine ? "cosine" : "constant"; }

inline Schedule schedule_from_string(const std::string& s) {
  if (s == "cosine") return Schedule::cosine;
  if (s == "constant") return Schedule::constant;
  throw ConfigError("unknown schedule '" + s + "'");
}

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + s + "'");
}

}  // namespace detail

inline PipelineConfig config_from_json(const json& j) {
  using detail::read;
  detail::check_keys(j,
                     {"seed", "task_seed", "out_dir", "model", "task", "data", "pretrain", "stats", "budget",
                      "exclude_layers", "train", "baselines", "record_wall_time"},
                     "");
  PipelineConfig c;
  read(j, "seed", c.seed, "");
  if (j.contains("task_seed") && !j["task_seed"].is_null()) {
    std::uint64_t s = 0;
    read(j, "task_seed", s, "");
    c.task_seed = s;
  }
  read(j, "out_dir", c.out_dir, "");
  read(j, "exclude_layers", c.exclude_layers, "");
  read(j, "baselines", c.baselines, "");
  read(j, "record_wall_time", c.record_wall_time, "");
  if (j.contains("budget")) {
    std::string b;
    read(j, "budget", b, "");
    c.budget = parse_budget(b);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    detail::check_keys(m, {"dims", "activation", "bias"}, "model");
    read(m, "dims", c.model.dims, "model");
    read(m, "bias", c.model.bias, "model");
    if (m.contains("activation")) {
      std::string a;
      read(m, "activation", a, "model");
      c.model.activation = activation_from_string(a);
    }
  }
  // Task dims follow the model unless given explicitly.
  c.task.input_dim = c.model.dims.front();
  c.task.classes = c.model.dims.back();
  if (j.contains("task")) {
    const auto& t = j["task"];
    detail::check_keys(t,
                       {"input_dim", "latent_dim", "classes", "n_source", "n_source_eval", "n_target",
                        "n_target_eval", "class_sep", "noise", "obs_noise", "shift", "mean_shift", "rotation",
                        "dead_fraction", "dead_scale", "label_noise"},
                       "task");
    read(t, "input_dim", c.task.input_dim, "task");
    read(t, "latent_dim", c.task.latent_dim, "task");
    read(t, "classes", c.task.classes, "task");
    read(t, "n_source", c.task.n_source, "task");
    read(t, "n_source_eval", c.task.n_source_eval, "task");
    read(t, "n_target", c.task.n_target, "task");
    read(t, "n_target_eval", c.task.n_target_eval, "task");
    read(t, "class_sep", c.task.class_sep, "task");
    read(t, "noise", c.task.noise, "task");
    read(t, "obs_noise", c.task.obs_noise, "task");
    read(t, "shift", c.task.shift, "task");
    read(t, "mean_shift", c.task.mean_shift, "task");
    read(t, "rotation", c.task.rotation, "task");
    read(t, "dead_fraction", c.task.dead_fraction, "task");
    read(t, "dead_scale", c.task.dead_scale, "task");
    read(t, "label_noise", c.task.label_noise, "task");
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    detail::check_keys(d, {"source_train", "source_eval", "target_train", "target_eval"}, "data");
    read(d, "source_train", c.data.source_train, "data");
    read(d, "source_eval", c.data.source_eval, "data");
    read(d, "target_train", c.data.target_train, "data");
    read(d, "target_eval", c.data.target_eval, "data");
  }
  if (j.contains("pretrain")) {
    const auto& p = j["pretrain"];
    detail::check_keys(p, {"enabled", "checkpoint", "epochs", "batch_size", "lr"}, "pretrain");
    read(p, "enabled", c.pretrain.enabled, "pretrain");
    read(p, "checkpoint", c.pretrain.checkpoint, "pretrain");
    read(p, "epochs", c.pretrain.epochs, "pretrain");
    read(p, "batch_size", c.pretrain.batch_size, "pretrain");
    read(p, "lr", c.pretrain.lr, "pretrain");
  }
  if (j.contains("stats")) {
    const auto& s = j["stats"];
    detail::check_keys(s, {"batch_rows", "max_tokens", "refresh_every"}, "stats");
    read(s, "batch_rows", c.stats.batch_rows, "stats");
    read(s, "max_tokens", c.stats.max_tokens, "stats");
    read(s, "refresh_every", c.stats.refresh_every, "stats");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::check_keys(t,
                       {"epochs", "batch_size", "schedule", "warmup_epochs", "mode", "optimizer", "lr",
                        "momentum", "beta1", "beta2", "eps", "train_bias", "lora_rank", "lora_alpha"},
                       "train");
    auto& tc = c.train;
    read(t, "epochs", tc.epochs, "train");
    // Warmup defaults to the first 10% of epochs.
    tc.warmup_epochs = tc.epochs / 10;
    read(t, "warmup_epochs", tc.warmup_epochs, "train");
    read(t, "batch_size", tc.batch_size, "train");
    std::string s;
    if (t.contains("schedule")) {
      read(t, "schedule", s, "train");
      tc.schedule = detail::schedule_from_string(s);
    }
    if (t.contains("mode")) {
      read(t, "mode", s, "train");
      tc.mode = tune_mode_from_string(s);
    }
    if (t.contains("optimizer")) {
      read(t, "optimizer", s, "train");
      tc.optimizer.kind = detail::optimizer_from_string(s);
    }
    read(t, "lr", tc.optimizer.lr, "train");
    read(t, "momentum", tc.optimizer.momentum, "train");
    read(t, "beta1", tc.optimizer.beta1, "train");
    read(t, "beta2", tc.optimizer.beta2, "train");
    read(t, "eps", tc.optimizer.eps, "train");
    read(t, "train_bias", tc.train_bias, "train");
    read(t, "lora_rank", tc.lora_rank, "train");
    read(t, "lora_alpha", tc.lora_alpha, "train");
  }
  c.train.seed = c.seed;
  c.validate();
  return c;
}

inline PipelineConfig config_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline PipelineConfig load_config(const std::filesystem::path& path) { return config_from_string(read_text(path)); }

/// Every field, defaults included.
inline json config_to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["task_seed"] = c.task_seed ? json(*c.task_seed) : json(nullptr);
  j["out_dir"] = c.out_dir;
  j["model"] = {{"dims", c.model.dims}, {"activation", to_string(c.model.activation)}, {"bias", c.model.bias}};
  const auto& t = c.task;
  j["task"] = {{"input_dim", t.input_dim},         {"latent_dim", t.latent_dim},
               {"classes", t.classes},             {"n_source", t.n_source},
               {"n_source_eval", t.n_source_eval}, {"n_target", t.n_target},
               {"n_target_eval", t.n_target_eval}, {"class_sep", t.class_sep},
               {"noise", t.noise},                 {"obs_noise", t.obs_noise},
               {"shift", t.shift},                 {"mean_shift", t.mean_shift},
               {"rotation", t.rotation},           {"dead_fraction", t.dead_fraction},
               {"dead_scale", t.dead_scale},       {"label_noise", t.label_noise}};
  j["data"] = {{"source_train", c.data.source_train},
               {"source_eval", c.data.source_eval},
               {"target_train", c.data.target_train},
               {"target_eval", c.data.target_eval}};
  j["pretrain"] = {{"enabled", c.pretrain.enabled},
                   {"checkpoint", c.pretrain.checkpoint},
                   {"epochs", c.pretrain.epochs},
                   {"batch_size", c.pretrain.batch_size},
                   {"lr", c.pretrain.lr}};
  j["stats"] = {{"batch_rows", c.stats.batch_rows},
                {"max_tokens", c.stats.max_tokens},
                {"refresh_every", c.stats.refresh_every}};
  j["budget"] = to_string(c.budget);
  j["exclude_layers"] = c.exclude_layers;
  const auto& tc = c.train;
  j["train"] = {{"epochs", tc.epochs},
                {"batch_size", tc.batch_size},
                {"schedule", detail::to_string(tc.schedule)},
                {"warmup_epochs", tc.warmup_epochs},
                {"mode", to_string(tc.mode)},
                {"optimizer", detail::to_string(tc.optimizer.kind)},
                {"lr", tc.optimizer.lr},
                {"momentum", tc.optimizer.momentum},
                {"beta1", tc.optimizer.beta1},
                {"beta2", tc.optimizer.beta2},
                {"eps", tc.optimizer.eps},
                {"train_bias", tc.train_bias},
                {"lora_rank", tc.lora_rank},
                {"lora_alpha", tc.lora_alpha}};
  j["baselines"] = c.baselines;
  j["record_wall_time"] = c.record_wall_time;
  return j;
}

}  // namespace sparsetune::workbench
