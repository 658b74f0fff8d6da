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
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace fusebed {

// Dense row-major matrix of doubles. All model math runs in double
// precision so that gradient checks stay sharp and runs are
// seed-reproducible.
struct Tensor2D {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor2D() = default;
  Tensor2D(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

  static Tensor2D from_rows(std::initializer_list<std::initializer_list<double>> rows_init);

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  double* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return data.size(); }
  bool same_shape(const Tensor2D& other) const {
    return rows == other.rows && cols == other.cols;
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(0.0); }

  // this += other (shapes must match)
  void add_(const Tensor2D& other);
  // this += alpha * other
  void axpy_(double alpha, const Tensor2D& other);
  void scale_(double alpha);

  Tensor2D row(int r) const;
  void set_row(int r, const Tensor2D& v);

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_str() const;
};

// A learnable tensor with an additively-accumulated gradient. Callers
// must zero grads explicitly between optimizer steps.
struct Parameter {
  Tensor2D value;
  Tensor2D grad;
  std::string name;

  Parameter() = default;
  Parameter(std::string n, int r, int c)
      : value(r, c), grad(r, c), name(std::move(n)) {}

  void zero_grad() { grad.zero(); }
};

// Throws std::invalid_argument naming both shapes on mismatch.
void check_shapes_match(const Tensor2D& a, const Tensor2D& b, const char* where);

}  // namespace fusebed
