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

#include <cmath>
#include <functional>

#include "sparsetune/matrix.hpp"

namespace sparsetune {

/// Central-difference gradient of a scalar function of a matrix.
///
/// Test oracle only; costs two evaluations of f per entry.
inline MatrixD finite_diff_grad(const std::function<double(const MatrixD&)>& f,
                                const MatrixD& at, double h) {
  if (!(h > 0.0)) throw ValueError("finite_diff_grad: h must be > 0");
  MatrixD probe = at;
  MatrixD grad(at.rows(), at.cols());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double fp = f(probe);
    probe.data()[i] = orig - h;
    const double fm = f(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw ValueError("finite_diff_grad: non-finite function value");
    }
    grad.data()[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace sparsetune
