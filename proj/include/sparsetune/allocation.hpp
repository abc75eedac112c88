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
#include <bit>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "sparsetune/errors.hpp"
#include "sparsetune/importance.hpp"
#include "sparsetune/matrix.hpp"
#include "sparsetune/rng.hpp"
#include "sparsetune/select.hpp"

namespace sparsetune {

enum class MaskStrategy : std::uint8_t {
  per_neuron,
  per_neuron_ratio,
  global,
  structured,
  random,
  dense,
  loaded,
};

inline const char* to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::per_neuron: return "per_neuron";
    case MaskStrategy::per_neuron_ratio: return "per_neuron_ratio";
    case MaskStrategy::global: return "global";
    case MaskStrategy::structured: return "structured";
    case MaskStrategy::random: return "random";
    case MaskStrategy::dense: return "dense";
    case MaskStrategy::loaded: return "loaded";
  }
  return "?";
}

/// Binary trainability mask for one layer's weight matrix, packed row-major.
class Mask {
 public:
  Mask() = default;

  Mask(std::size_t rows, std::size_t cols, std::size_t layer = 0, std::string name = {},
       MaskStrategy strategy = MaskStrategy::loaded)
      : rows_(rows),
        cols_(cols),
        layer_(layer),
        name_(std::move(name)),
        strategy_(strategy),
        words_((rows * cols + 63) / 64, 0) {}

  static Mask filled(std::size_t rows, std::size_t cols, bool value, std::size_t layer = 0,
                     std::string name = {}) {
    Mask m(rows, cols, layer, std::move(name), MaskStrategy::dense);
    if (value) {
      for (std::size_t i = 0; i < m.size(); ++i) m.set(i, true);
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return rows_ * cols_; }
  std::size_t layer() const noexcept { return layer_; }
  const std::string& name() const noexcept { return name_; }
  MaskStrategy strategy() const noexcept { return strategy_; }
  void set_strategy(MaskStrategy s) noexcept { strategy_ = s; }

  /// Number of ones; kept equal to the popcount of the bitset.
  std::size_t cardinality() const noexcept { return cardinality_; }

  bool test(std::size_t flat) const noexcept { return (words_[flat / 64] >> (flat % 64)) & 1U; }
  bool test(std::size_t r, std::size_t c) const noexcept { return test(r * cols_ + c); }

  void set(std::size_t flat, bool value) noexcept {
    const std::uint64_t bit = std::uint64_t{1} << (flat % 64);
    std::uint64_t& w = words_[flat / 64];
    const bool was = (w & bit) != 0;
    if (value && !was) {
      w |= bit;
      ++cardinality_;
    } else if (!value && was) {
      w &= ~bit;
      --cardinality_;
    }
  }
  void set(std::size_t r, std::size_t c, bool value) noexcept { set(r * cols_ + c, value); }

  std::size_t popcount() const noexcept {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  std::size_t row_popcount(std::size_t r) const noexcept {
    std::size_t n = 0;
    for (std::size_t c = 0; c < cols_; ++c) n += test(r, c) ? 1 : 0;
    return n;
  }

  /// Flat indices of selected entries, ascending.
  std::vector<std::size_t> selected() const {
    std::vector<std::size_t> out;
    out.reserve(cardinality_);
    for (std::size_t i = 0; i < size(); ++i) {
      if (test(i)) out.push_back(i);
    }
    return out;
  }

  /// ceil(size/8) bytes, row-major, most significant bit first.
  std::vector<std::uint8_t> to_bytes() const {
    std::vector<std::uint8_t> out((size() + 7) / 8, 0);
    for (std::size_t i = 0; i < size(); ++i) {
      if (test(i)) out[i / 8] |= static_cast<std::uint8_t>(0x80U >> (i % 8));
    }
    return out;
  }

  static Mask from_bytes(std::size_t rows, std::size_t cols, std::span<const std::uint8_t> bytes,
                         std::size_t layer = 0, std::string name = {}) {
    Mask m(rows, cols, layer, std::move(name), MaskStrategy::loaded);
    if (bytes.size() != (m.size() + 7) / 8) throw IoError("mask payload has wrong length");
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (bytes[i / 8] & (0x80U >> (i % 8))) m.set(i, true);
    }
    return m;
  }

  /// Shape and bits; layer, name and strategy tag are metadata.
  bool same_bits(const Mask& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_ && words_ == o.words_;
  }

  friend bool operator==(const Mask& a, const Mask& b) {
    return a.same_bits(b) && a.layer_ == b.layer_ && a.name_ == b.name_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t layer_ = 0;
  std::string name_;
  MaskStrategy strategy_ = MaskStrategy::loaded;
  std::vector<std::uint64_t> words_;
  std::size_t cardinality_ = 0;
};

/// Masks for the maskable layers of one network. Layers without an entry are frozen.
struct MaskSet {
  std::vector<Mask> layers;

  const Mask* find(std::size_t layer) const noexcept {
    for (const auto& m : layers) {
      if (m.layer() == layer) return &m;
    }
    return nullptr;
  }

  std::size_t cardinality() const noexcept {
    std::size_t n = 0;
    for (const auto& m : layers) n += m.cardinality();
    return n;
  }

  std::size_t total() const noexcept {
    std::size_t n = 0;
    for (const auto& m : layers) n += m.size();
    return n;
  }

  friend bool operator==(const MaskSet& a, const MaskSet& b) { return a.layers == b.layers; }
};

/// Fraction of masked (frozen) entries. An empty set counts as fully frozen.
inline double mask_ratio(const MaskSet& masks) {
  const std::size_t total = masks.total();
  if (total == 0) return 1.0;
  return 1.0 - static_cast<double>(masks.cardinality()) / static_cast<double>(total);
}

struct PerNeuronK {
  std::size_t k = 0;
};
/// Target mask ratio realized per layer; see allocate_per_neuron_ratio.
struct MaskRatio {
  double ratio = 0.0;
};
struct GlobalFraction {
  double fraction = 0.0;
};
struct Structured {
  std::size_t n = 0;
  std::size_t m = 1;
};

using Budget = std::variant<PerNeuronK, MaskRatio, GlobalFraction, Structured>;

inline void validate(const Budget& b) {
  std::visit(
      [](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, MaskRatio>) {
          if (!(v.ratio >= 0.0 && v.ratio <= 1.0)) throw ConfigError("mask ratio must be in [0, 1]");
        } else if constexpr (std::is_same_v<V, GlobalFraction>) {
          if (!(v.fraction >= 0.0 && v.fraction <= 1.0)) {
            throw ConfigError("global fraction must be in [0, 1]");
          }
        } else if constexpr (std::is_same_v<V, Structured>) {
          if (v.m < 1 || v.n > v.m) throw ConfigError("structured budget needs 0 <= N <= M, M >= 1");
        }
      },
      b);
}

/// Parses "kN", "global:R", "structured:N:M" or "ratio:R".
inline Budget parse_budget(const std::string& text) {
  auto to_count = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("bad budget '" + text + "'");
    }
    return static_cast<std::size_t>(std::stoull(s));
  };
  auto to_real = [&](const std::string& s) -> double {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad budget '" + text + "'");
    }
    if (used != s.size()) throw ConfigError("bad budget '" + text + "'");
    return v;
  };
  Budget b;
  if (!text.empty() && text[0] == 'k') {
    b = PerNeuronK{to_count(text.substr(1))};
  } else if (text.rfind("global:", 0) == 0) {
    b = GlobalFraction{to_real(text.substr(7))};
  } else if (text.rfind("ratio:", 0) == 0) {
    b = MaskRatio{to_real(text.substr(6))};
  } else if (text.rfind("structured:", 0) == 0) {
    const std::string rest = text.substr(11);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) throw ConfigError("bad budget '" + text + "'");
    b = Structured{to_count(rest.substr(0, colon)), to_count(rest.substr(colon + 1))};
  } else {
    throw ConfigError("bad budget '" + text + "' (expected kN, global:R, structured:N:M, ratio:R)");
  }
  validate(b);
  return b;
}

namespace detail {

inline std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

}  // namespace detail

inline std::string to_string(const Budget& b) {
  return std::visit(
      [](const auto& v) -> std::string {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, PerNeuronK>) return "k" + std::to_string(v.k);
        if constexpr (std::is_same_v<V, MaskRatio>) return "ratio:" + detail::shortest(v.ratio);
        if constexpr (std::is_same_v<V, GlobalFraction>) return "global:" + detail::shortest(v.fraction);
        if constexpr (std::is_same_v<V, Structured>) {
          return "structured:" + std::to_string(v.n) + ":" + std::to_string(v.m);
        }
      },
      b);
}

/// Integer per-neuron K for a target ratio: round((1 - ratio) * d_in), at least
/// 1 while ratio < 1. Reported alongside ratio-driven masks.
inline std::size_t per_neuron_k_for_ratio(std::size_t d_in, double ratio) {
  if (ratio >= 1.0) return 0;
  const auto k = static_cast<std::size_t>(std::llround((1.0 - ratio) * static_cast<double>(d_in)));
  return std::clamp<std::size_t>(k, 1, d_in);
}

namespace detail {

/// Column indices of one row in rank order (score desc, column asc).
inline std::vector<std::size_t> row_rank_order(const MatrixD& s, std::size_t r) {
  std::vector<std::size_t> idx(s.cols());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), RankBefore{s.row(r)});
  return idx;
}

}  // namespace detail

/// Each row keeps exactly k entries: its top-k scores, lower column on ties.
inline Mask allocate_per_neuron(const MatrixD& scores, std::size_t k, std::size_t layer = 0,
                                std::string name = {}) {
  if (k > scores.cols()) {
    throw ValueError("allocate_per_neuron: k=" + std::to_string(k) + " exceeds row width " +
                     std::to_string(scores.cols()));
  }
  Mask mask(scores.rows(), scores.cols(), layer, std::move(name), MaskStrategy::per_neuron);
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    for (std::size_t c : top_k_indices(scores.row(r), k)) mask.set(r, c, true);
  }
  return mask;
}

/// Per-neuron allocation for a fractional budget.
///
/// The layer keeps floor(trainable_fraction * rows * cols) entries. Every row
/// gets floor(budget / rows) of its top-scored entries; the remaining
/// budget % rows slots go to the rows whose next-ranked candidate scores
/// highest (lower row on ties), one extra slot per row.
inline Mask allocate_per_neuron_ratio(const MatrixD& scores, double trainable_fraction,
                                      std::size_t layer = 0, std::string name = {}) {
  if (!(trainable_fraction >= 0.0 && trainable_fraction <= 1.0)) {
    throw ValueError("allocate_per_neuron_ratio: fraction must be in [0, 1]");
  }
  Mask mask(scores.rows(), scores.cols(), layer, std::move(name), MaskStrategy::per_neuron_ratio);
  if (scores.size() == 0) return mask;
  // Slack absorbs representation error such as (1 - 0.999) * 1000 = 0.99999...
  const double exact = trainable_fraction * static_cast<double>(scores.size());
  const auto budget = std::min<std::size_t>(static_cast<std::size_t>(std::floor(exact + 1e-9)),
                                            scores.size());
  const std::size_t base = budget / scores.rows();
  const std::size_t extra = budget % scores.rows();

  std::vector<std::vector<std::size_t>> order(scores.rows());
  std::vector<double> next(scores.rows(), 0.0);
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    order[r] = detail::row_rank_order(scores, r);
    for (std::size_t i = 0; i < base; ++i) mask.set(r, order[r][i], true);
    if (extra > 0) next[r] = scores(r, order[r][base]);
  }
  for (std::size_t r : top_k_indices(next, extra)) mask.set(r, order[r][base], true);
  return mask;
}

/// Within every aligned group of m consecutive columns of each row, keep the
/// group's top-min(n, width) entries. A trailing short group of width w keeps min(n, w).
inline Mask allocate_structured(const MatrixD& scores, std::size_t n, std::size_t m,
                                std::size_t layer = 0, std::string name = {}) {
  if (m < 1 || n > m) throw ValueError("allocate_structured: need 0 <= n <= m and m >= 1");
  Mask mask(scores.rows(), scores.cols(), layer, std::move(name), MaskStrategy::structured);
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    for (std::size_t g = 0; g < scores.cols(); g += m) {
      const std::size_t width = std::min(m, scores.cols() - g);
      for (std::size_t c : top_k_indices(row.subspan(g, width), std::min(n, width))) {
        mask.set(r, g + c, true);
      }
    }
  }
  return mask;
}

/// Model-wide selection of the floor(fraction * total) top scores, ties to the
/// lower flat index over the concatenation of all layers in layer order.
inline MaskSet allocate_global(const ImportanceScores& scores, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValueError("allocate_global: fraction must be in [0, 1]");
  std::vector<double> flat;
  flat.reserve(scores.total());
  for (const auto& l : scores.layers) flat.insert(flat.end(), l.scores.data().begin(), l.scores.data().end());
  const auto count = std::min<std::size_t>(
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(flat.size()))), flat.size());
  MaskSet out;
  for (const auto& l : scores.layers) {
    out.layers.emplace_back(l.scores.rows(), l.scores.cols(), l.layer, l.name, MaskStrategy::global);
  }
  std::size_t li = 0;
  std::size_t offset = 0;
  for (std::size_t idx : top_k_indices(flat, count)) {
    while (idx >= offset + out.layers[li].size()) offset += out.layers[li++].size();
    out.layers[li].set(idx - offset, true);
  }
  return out;
}

/// Dispatches a budget over every scored layer.
inline MaskSet allocate(const ImportanceScores& scores, const Budget& budget) {
  validate(budget);
  if (const auto* g = std::get_if<GlobalFraction>(&budget)) return allocate_global(scores, g->fraction);
  MaskSet out;
  for (const auto& l : scores.layers) {
    std::visit(
        [&](const auto& v) {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, PerNeuronK>) {
            out.layers.push_back(
                allocate_per_neuron(l.scores, std::min(v.k, l.scores.cols()), l.layer, l.name));
          } else if constexpr (std::is_same_v<V, MaskRatio>) {
            out.layers.push_back(allocate_per_neuron_ratio(l.scores, 1.0 - v.ratio, l.layer, l.name));
          } else if constexpr (std::is_same_v<V, Structured>) {
            out.layers.push_back(allocate_structured(l.scores, v.n, v.m, l.layer, l.name));
          }
        },
        budget);
  }
  return out;
}

/// Same shapes and per-layer cardinalities as the reference, uniformly random positions.
inline MaskSet random_mask(const MaskSet& reference, Rng& rng) {
  MaskSet out;
  for (const auto& ref : reference.layers) {
    Mask m(ref.rows(), ref.cols(), ref.layer(), ref.name(), MaskStrategy::random);
    std::vector<std::size_t> idx(m.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < ref.cardinality(); ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
      m.set(idx[i], true);
    }
    out.layers.push_back(std::move(m));
  }
  return out;
}

/// All-ones (or all-zeros) masks over every layer of a network.
template <typename T>
MaskSet dense_masks(const Network<T>& net, bool value) {
  MaskSet out;
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const auto& w = net.layer(k).weight;
    out.layers.push_back(Mask::filled(w.rows(), w.cols(), value, k, Network<T>::layer_name(k)));
  }
  return out;
}

}  // namespace sparsetune
