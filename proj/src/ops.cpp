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

#include "fusebed/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fusebed {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: inner dimensions differ, " + a.shape_str() + " * " +
                                b.shape_str());
  }
  Tensor2D out(a.rows, b.cols);
  // i-k-j order keeps both b and out accesses sequential.
  for (int i = 0; i < a.rows; ++i) {
    double* out_row = out.row_ptr(i);
    const double* a_row = a.row_ptr(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a_row[k];
      if (aik == 0.0) continue;
      const double* b_row = b.row_ptr(k);
      for (int j = 0; j < b.cols; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

void matmul_at_b_acc(const Tensor2D& a, const Tensor2D& b, Tensor2D& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols) {
    throw std::invalid_argument("matmul_at_b_acc: incompatible shapes " + a.shape_str() +
                                "^T * " + b.shape_str() + " -> " + c.shape_str());
  }
  for (int k = 0; k < a.rows; ++k) {
    const double* a_row = a.row_ptr(k);
    const double* b_row = b.row_ptr(k);
    for (int i = 0; i < a.cols; ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      double* c_row = c.row_ptr(i);
      for (int j = 0; j < b.cols; ++j) c_row[j] += aki * b_row[j];
    }
  }
}

Tensor2D matmul_a_bt(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols != b.cols) {
    throw std::invalid_argument("matmul_a_bt: inner dimensions differ, " + a.shape_str() +
                                " * " + b.shape_str() + "^T");
  }
  Tensor2D out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* a_row = a.row_ptr(i);
    double* out_row = out.row_ptr(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* b_row = b.row_ptr(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += a_row[k] * b_row[k];
      out_row[j] = acc;
    }
  }
  return out;
}

Tensor2D linear_forward(const Tensor2D& x, const Parameter& w, const Parameter& b) {
  if (x.cols != w.value.rows) {
    throw std::invalid_argument("linear_forward: x is " + x.shape_str() + " but w is " +
                                w.value.shape_str());
  }
  if (b.value.rows != 1 || b.value.cols != w.value.cols) {
    throw std::invalid_argument("linear_forward: bias is " + b.value.shape_str() +
                                " but w is " + w.value.shape_str());
  }
  Tensor2D out = matmul(x, w.value);
  for (int i = 0; i < out.rows; ++i) {
    double* row = out.row_ptr(i);
    const double* bias = b.value.row_ptr(0);
    for (int j = 0; j < out.cols; ++j) row[j] += bias[j];
  }
  return out;
}

Tensor2D linear_backward(const Tensor2D& x, const Tensor2D& grad_out, Parameter& w,
                         Parameter& b) {
  if (grad_out.rows != x.rows || grad_out.cols != w.value.cols) {
    throw std::invalid_argument("linear_backward: grad is " + grad_out.shape_str() +
                                ", expected " + std::to_string(x.rows) + "x" +
                                std::to_string(w.value.cols));
  }
  matmul_at_b_acc(x, grad_out, w.grad);
  for (int i = 0; i < grad_out.rows; ++i) {
    const double* g = grad_out.row_ptr(i);
    double* bg = b.grad.row_ptr(0);
    for (int j = 0; j < grad_out.cols; ++j) bg[j] += g[j];
  }
  return matmul_a_bt(grad_out, w.value);
}

Tensor2D softmax_rows(const Tensor2D& x) {
  Tensor2D out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* in = x.row_ptr(i);
    double* o = out.row_ptr(i);
    double mx = in[0];
    for (int j = 1; j < x.cols; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (int j = 0; j < x.cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < x.cols; ++j) o[j] *= inv;
  }
  return out;
}

Tensor2D softmax_rows_backward(const Tensor2D& softmax_out, const Tensor2D& grad_out) {
  check_shapes_match(softmax_out, grad_out, "softmax_rows_backward");
  Tensor2D grad_in(softmax_out.rows, softmax_out.cols);
  for (int i = 0; i < softmax_out.rows; ++i) {
    const double* y = softmax_out.row_ptr(i);
    const double* g = grad_out.row_ptr(i);
    double dot = 0.0;
    for (int j = 0; j < softmax_out.cols; ++j) dot += y[j] * g[j];
    double* gi = grad_in.row_ptr(i);
    for (int j = 0; j < softmax_out.cols; ++j) gi[j] = y[j] * (g[j] - dot);
  }
  return grad_in;
}

Tensor2D layer_norm(const Tensor2D& x, const Parameter& gamma, const Parameter& beta,
                    double eps) {
  if (gamma.value.cols != x.cols || beta.value.cols != x.cols) {
    throw std::invalid_argument("layer_norm: gamma/beta width must equal x cols (" +
                                x.shape_str() + ")");
  }
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  Tensor2D out(x.rows, x.cols);
  const int n = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    const double* in = x.row_ptr(i);
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += in[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = in[j] - mean;
      var += d * d;
    }
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    double* o = out.row_ptr(i);
    const double* g = gamma.value.row_ptr(0);
    const double* b = beta.value.row_ptr(0);
    for (int j = 0; j < n; ++j) o[j] = (in[j] - mean) * inv_std * g[j] + b[j];
  }
  return out;
}

Tensor2D layer_norm_backward(const Tensor2D& x, const Tensor2D& grad_out, Parameter& gamma,
                             Parameter& beta, double eps) {
  check_shapes_match(x, grad_out, "layer_norm_backward");
  Tensor2D grad_in(x.rows, x.cols);
  const int n = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    const double* in = x.row_ptr(i);
    const double* g = grad_out.row_ptr(i);
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += in[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = in[j] - mean;
      var += d * d;
    }
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + eps);

    // dxhat_j = g_j * gamma_j; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat.xhat)) / std
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    const double* gam = gamma.value.row_ptr(0);
    for (int j = 0; j < n; ++j) {
      const double xhat = (in[j] - mean) * inv_std;
      const double dxhat = g[j] * gam[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
      gamma.grad.at(0, j) += g[j] * xhat;
      beta.grad.at(0, j) += g[j];
    }
    const double mean_dxhat = sum_dxhat / n;
    const double mean_dxhat_xhat = sum_dxhat_xhat / n;
    double* gi = grad_in.row_ptr(i);
    for (int j = 0; j < n; ++j) {
      const double xhat = (in[j] - mean) * inv_std;
      const double dxhat = g[j] * gam[j];
      gi[j] = (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * inv_std;
    }
  }
  return grad_in;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

Tensor2D gelu_rows(const Tensor2D& x) {
  Tensor2D out(x.rows, x.cols);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = gelu(x.data[i]);
  return out;
}

Tensor2D gelu_rows_backward(const Tensor2D& x, const Tensor2D& grad_out) {
  check_shapes_match(x, grad_out, "gelu_rows_backward");
  Tensor2D grad_in(x.rows, x.cols);
  for (size_t i = 0; i < x.data.size(); ++i) {
    grad_in.data[i] = grad_out.data[i] * gelu_derivative(x.data[i]);
  }
  return grad_in;
}

double l2_norm(const Tensor2D& v) {
  double acc = 0.0;
  for (double x : v.data) acc += x * x;
  return std::sqrt(acc);
}

namespace {
std::vector<double> row_norms(const Tensor2D& m, const char* which) {
  std::vector<double> norms(static_cast<size_t>(m.rows));
  for (int i = 0; i < m.rows; ++i) {
    const double* row = m.row_ptr(i);
    double acc = 0.0;
    for (int j = 0; j < m.cols; ++j) acc += row[j] * row[j];
    norms[static_cast<size_t>(i)] = std::sqrt(acc);
    if (norms[static_cast<size_t>(i)] == 0.0) {
      throw std::domain_error(std::string("cosine_sim_matrix: zero-norm row ") +
                              std::to_string(i) + " in " + which + " input");
    }
  }
  return norms;
}
}  // namespace

Tensor2D cosine_sim_matrix(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols != b.cols) {
    throw std::invalid_argument("cosine_sim_matrix: width mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  }
  const auto na = row_norms(a, "first");
  const auto nb = row_norms(b, "second");
  Tensor2D out = matmul_a_bt(a, b);
  for (int i = 0; i < out.rows; ++i) {
    double* row = out.row_ptr(i);
    for (int j = 0; j < out.cols; ++j) {
      row[j] /= na[static_cast<size_t>(i)] * nb[static_cast<size_t>(j)];
    }
  }
  return out;
}

void cosine_sim_matrix_backward(const Tensor2D& a, const Tensor2D& b,
                                const Tensor2D& grad_sim, Tensor2D& grad_a,
                                Tensor2D& grad_b) {
  if (grad_sim.rows != a.rows || grad_sim.cols != b.rows) {
    throw std::invalid_argument("cosine_sim_matrix_backward: grad shape " +
                                grad_sim.shape_str() + " does not match inputs");
  }
  check_shapes_match(a, grad_a, "cosine_sim_matrix_backward (grad_a)");
  check_shapes_match(b, grad_b, "cosine_sim_matrix_backward (grad_b)");
  const auto na = row_norms(a, "first");
  const auto nb = row_norms(b, "second");
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row_ptr(i);
    const double nai = na[static_cast<size_t>(i)];
    for (int j = 0; j < b.rows; ++j) {
      const double g = grad_sim.at(i, j);
      if (g == 0.0) continue;
      const double* bj = b.row_ptr(j);
      const double nbj = nb[static_cast<size_t>(j)];
      double dot = 0.0;
      for (int k = 0; k < a.cols; ++k) dot += ai[k] * bj[k];
      const double c = dot / (nai * nbj);
      double* ga = grad_a.row_ptr(i);
      double* gb = grad_b.row_ptr(j);
      const double inv_ab = 1.0 / (nai * nbj);
      const double ca = c / (nai * nai);
      const double cb = c / (nbj * nbj);
      for (int k = 0; k < a.cols; ++k) {
        ga[k] += g * (bj[k] * inv_ab - ca * ai[k]);
        gb[k] += g * (ai[k] * inv_ab - cb * bj[k]);
      }
    }
  }
}

double cosine_sim(const Tensor2D& a, const Tensor2D& b) {
  const Tensor2D m = cosine_sim_matrix(a, b);
  return m.at(0, 0);
}

void cosine_sim_backward(const Tensor2D& a, const Tensor2D& b, double upstream,
                         Tensor2D& grad_a, Tensor2D& grad_b) {
  Tensor2D g(1, 1);
  g.at(0, 0) = upstream;
  cosine_sim_matrix_backward(a, b, g, grad_a, grad_b);
}

Tensor2D positional_encoding(int length, int dim) {
  if (dim % 2 != 0) {
    throw std::invalid_argument("positional_encoding: dimension must be even, got " +
                                std::to_string(dim));
  }
  Tensor2D pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    double* row = pe.row_ptr(pos);
    for (int i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / dim);
      row[2 * i] = std::sin(pos * freq);
      row[2 * i + 1] = std::cos(pos * freq);
    }
  }
  return pe;
}

}  // namespace fusebed
