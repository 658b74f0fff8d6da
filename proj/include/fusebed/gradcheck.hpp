/*
 * Copyright 2026 the fusebed authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "fusebed/tensor.hpp"

namespace fusebed {

// Central-difference validation of an analytic gradient. The caller
// evaluates its backward pass first so that p.grad holds dL/dp; f must
// be a deterministic scalar function of p.value. Returns the max
// relative error over all coordinates, with the denominator
// max(|analytic|, |numeric|, 1e-8).
inline double finite_diff_check(const std::function<double()>& f, Parameter& p, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_check: h must be positive");
  double max_rel = 0.0;
  for (size_t i = 0; i < p.value.data.size(); ++i) {
    const double saved = p.value.data[i];
    p.value.data[i] = saved + h;
    const double f_plus = f();
    p.value.data[i] = saved - h;
    const double f_minus = f();
    p.value.data[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      throw std::runtime_error("finite_diff_check: non-finite function value at parameter " +
                               p.name);
    }
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double analytic = p.grad.data[i];
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::fabs(analytic - numeric) / denom);
  }
  return max_rel;
}

}  // namespace fusebed
