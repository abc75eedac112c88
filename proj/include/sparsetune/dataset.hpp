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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sparsetune/errors.hpp"
#include "sparsetune/matrix.hpp"

namespace sparsetune {

/// Labeled classification data: one row of x per example (one token per row).
struct Dataset {
  MatrixF x;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  void validate() const {
    if (x.rows() != labels.size()) {
      throw ShapeError("dataset: " + std::to_string(x.rows()) + " rows but " +
                       std::to_string(labels.size()) + " labels");
    }
    require_finite(x, "dataset features");
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out{gather_rows(x, idx), {}};
    out.labels.reserve(idx.size());
    for (auto i : idx) out.labels.push_back(labels[i]);
    return out;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.x == b.x && a.labels == b.labels;
  }
};

}  // namespace sparsetune
