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

#include "fusebed/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace fusebed {

Tensor2D Tensor2D::from_rows(std::initializer_list<std::initializer_list<double>> rows_init) {
  const int r = static_cast<int>(rows_init.size());
  const int c = r > 0 ? static_cast<int>(rows_init.begin()->size()) : 0;
  Tensor2D t(r, c);
  int i = 0;
  for (const auto& row : rows_init) {
    if (static_cast<int>(row.size()) != c) {
      throw std::invalid_argument("Tensor2D::from_rows: ragged initializer");
    }
    int j = 0;
    for (double v : row) t.at(i, j++) = v;
    ++i;
  }
  return t;
}

void Tensor2D::add_(const Tensor2D& other) {
  check_shapes_match(*this, other, "Tensor2D::add_");
  for (size_t i = 0; i < data.size(); ++i) data[i] += other.data[i];
}

void Tensor2D::axpy_(double alpha, const Tensor2D& other) {
  check_shapes_match(*this, other, "Tensor2D::axpy_");
  for (size_t i = 0; i < data.size(); ++i) data[i] += alpha * other.data[i];
}

void Tensor2D::scale_(double alpha) {
  for (double& v : data) v *= alpha;
}

Tensor2D Tensor2D::row(int r) const {
  Tensor2D out(1, cols);
  const double* src = row_ptr(r);
  std::copy(src, src + cols, out.data.begin());
  return out;
}

void Tensor2D::set_row(int r, const Tensor2D& v) {
  if (v.rows != 1 || v.cols != cols) {
    throw std::invalid_argument("Tensor2D::set_row: shape " + v.shape_str() +
                                " does not fit row of " + shape_str());
  }
  std::copy(v.data.begin(), v.data.end(), data.begin() + static_cast<size_t>(r) * cols);
}

std::string Tensor2D::shape_str() const {
  std::ostringstream ss;
  ss << rows << "x" << cols;
  return ss.str();
}

void check_shapes_match(const Tensor2D& a, const Tensor2D& b, const char* where) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(where) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  }
}

}  // namespace fusebed
