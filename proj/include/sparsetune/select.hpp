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
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sparsetune/errors.hpp"

namespace sparsetune {

/// Strict "ranks before" relation: larger value first, lower index on ties.
struct RankBefore {
  std::span<const double> values;
  bool operator()(std::size_t a, std::size_t b) const noexcept {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  }
};

/// Indices of the k largest values, ties to the lower index, returned ascending.
inline std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
  if (k > values.size()) {
    throw ValueError("top_k_indices: k=" + std::to_string(k) + " exceeds length " +
                     std::to_string(values.size()));
  }
  for (double v : values) {
    if (std::isnan(v)) throw ValueError("top_k_indices: NaN value");
  }
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                     RankBefore{values});
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace sparsetune
