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

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sparsetune/dataset.hpp"
#include "sparsetune/sparse_tuner.hpp"
#include "sparsetune/workbench/binary_io.hpp"

namespace sparsetune::workbench {

/// One CSV row: a single epoch of a single run.
struct MetricsRecord {
  std::string stage;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  double mask_ratio = 0.0;
  double trainable_param_pct = 0.0;
  double wall_ms = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "stage,epoch,train_loss,eval_loss,top1,top5,mask_ratio,trainable_param_pct,wall_ms";

/// Locale-independent shortest-enough decimal ("%.9g" with '.' separator).
inline std::string fmt_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

inline std::string metrics_row(const MetricsRecord& r) {
  std::string s = r.stage;
  s += ',' + std::to_string(r.epoch);
  for (double v : {r.train_loss, r.eval_loss, r.top1, r.top5, r.mask_ratio, r.trainable_param_pct, r.wall_ms}) {
    s += ',' + fmt_real(v);
  }
  return s;
}

/// Append-only metrics log backed by a CSV file.
class MetricsLog {
 public:
  void append(MetricsRecord r) { records_.push_back(std::move(r)); }

  void append_history(const std::string& stage, const std::vector<EpochMetrics>& history, double mask_ratio,
                      double trainable_pct, bool keep_wall_time) {
    for (const auto& m : history) {
      append({stage, m.epoch, m.train_loss, m.eval_loss, m.top1, m.top5, mask_ratio, trainable_pct,
              keep_wall_time ? m.wall_ms : 0.0});
    }
  }

  const std::vector<MetricsRecord>& records() const noexcept { return records_; }

  std::string csv() const {
    std::string out = kMetricsHeader;
    out += '\n';
    for (const auto& r : records_) out += metrics_row(r) + '\n';
    return out;
  }

  void write(const std::filesystem::path& path) const { write_text(path, csv()); }

 private:
  std::vector<MetricsRecord> records_;
};

/// Mask ratio, trainable share and per-epoch history of one plotted run.
struct PlotSeries {
  double mask_ratio = 0.0;
  double trainable_pct = 0.0;
  std::vector<EpochMetrics> history;
};

/// Elementwise mean of histories with identical epoch lists.
inline std::vector<EpochMetrics> mean_history(const std::vector<std::vector<EpochMetrics>>& runs) {
  if (runs.empty()) return {};
  std::vector<EpochMetrics> out = runs.front();
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].size() != out.size()) throw ShapeError("mean_history: histories differ in length");
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].train_loss += runs[r][i].train_loss;
      out[i].eval_loss += runs[r][i].eval_loss;
      out[i].top1 += runs[r][i].top1;
      out[i].top5 += runs[r][i].top5;
      out[i].wall_ms += runs[r][i].wall_ms;
    }
  }
  const double n = static_cast<double>(runs.size());
  for (auto& m : out) {
    m.train_loss /= n;
    m.eval_loss /= n;
    m.top1 /= n;
    m.top5 /= n;
    m.wall_ms /= n;
  }
  return out;
}

/// Writes epochs_vs_accuracy.csv (one row per series and epoch >= 1) and
/// params_vs_accuracy.csv (one row per series with a history).
inline void emit_plot_data(const std::filesystem::path& dir, const std::vector<PlotSeries>& series) {
  std::string epochs = "mask_ratio,epoch,top1,top5\n";
  std::string params = "mask_ratio,trainable_pct,best_top1\n";
  for (const auto& s : series) {
    double best = -1.0;
    for (const auto& m : s.history) {
      best = std::max(best, m.top1);
      if (m.epoch == 0) continue;
      epochs += fmt_real(s.mask_ratio) + ',' + std::to_string(m.epoch) + ',' + fmt_real(m.top1) + ',' +
                fmt_real(m.top5) + '\n';
    }
    if (!s.history.empty()) {
      params += fmt_real(s.mask_ratio) + ',' + fmt_real(s.trainable_pct) + ',' + fmt_real(best) + '\n';
    }
  }
  write_text(dir / "epochs_vs_accuracy.csv", epochs);
  write_text(dir / "params_vs_accuracy.csv", params);
}

// ---------------------------------------------------------------------------
// Dataset CSV: header row, integer label in the first column, features after.

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline Dataset parse_dataset_csv(std::string_view text, const std::string& origin = "csv") {
  std::vector<float> values;
  std::vector<int> labels;
  std::size_t cols = 0;
  std::size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (header) {
      if (fields.size() < 2) throw IoError(origin + ": header needs a label and at least one feature");
      cols = fields.size() - 1;
      header = false;
      continue;
    }
    if (fields.size() != cols + 1) {
      throw IoError(origin + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols + 1) + " fields");
    }
    auto trim = [](std::string_view f) {
      while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
      while (!f.empty() && f.back() == ' ') f.remove_suffix(1);
      return f;
    };
    int label = 0;
    const auto lf = trim(fields[0]);
    auto [lp, lec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (lec != std::errc{} || lp != lf.data() + lf.size() || label < 0) {
      throw IoError(origin + ":" + std::to_string(line_no) + ": bad label");
    }
    labels.push_back(label);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const auto f = trim(fields[j]);
      double v = 0.0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc{} || p != f.data() + f.size() || !std::isfinite(v)) {
        throw IoError(origin + ":" + std::to_string(line_no) + ": bad number in column " + std::to_string(j));
      }
      values.push_back(static_cast<float>(v));
    }
  }
  if (header) throw IoError(origin + ": missing header");
  return {MatrixF(labels.size(), cols, std::move(values)), std::move(labels)};
}

inline Dataset read_dataset_csv(const std::filesystem::path& path) {
  return parse_dataset_csv(read_text(path), path.string());
}

inline void write_dataset_csv(const std::filesystem::path& path, const Dataset& d) {
  std::string out = "label";
  for (std::size_t j = 0; j < d.x.cols(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    out += std::to_string(d.labels[i]);
    for (float v : d.x.row(i)) out += ',' + fmt_real(v);
    out += '\n';
  }
  write_text(path, out);
}

}  // namespace sparsetune::workbench
