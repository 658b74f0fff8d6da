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

#include "fusebed/tensor.hpp"

namespace fusebed {

// Dense layers and activations, forward plus hand-derived backward.
// Backward functions accumulate into Parameter.grad and return the
// gradient with respect to their input.

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
// c += a^T * b
void matmul_at_b_acc(const Tensor2D& a, const Tensor2D& b, Tensor2D& c);
// c = a * b^T
Tensor2D matmul_a_bt(const Tensor2D& a, const Tensor2D& b);

// out[i][j] = sum_k x[i][k] * w[k][j] + b[0][j]
Tensor2D linear_forward(const Tensor2D& x, const Parameter& w, const Parameter& b);
// Accumulates w.grad += x^T * g, b.grad += colsum(g); returns g * w^T.
Tensor2D linear_backward(const Tensor2D& x, const Tensor2D& grad_out, Parameter& w,
                         Parameter& b);

// Row-wise softmax with max subtraction; rows sum to 1.
Tensor2D softmax_rows(const Tensor2D& x);
// Given y = softmax_rows(x) and dL/dy, returns dL/dx.
Tensor2D softmax_rows_backward(const Tensor2D& softmax_out, const Tensor2D& grad_out);

// Per-row normalization: (x - mean) / sqrt(var + eps) * gamma + beta.
// gamma and beta are 1 x cols.
Tensor2D layer_norm(const Tensor2D& x, const Parameter& gamma, const Parameter& beta,
                    double eps);
Tensor2D layer_norm_backward(const Tensor2D& x, const Tensor2D& grad_out, Parameter& gamma,
                             Parameter& beta, double eps);

// Gaussian error linear unit, exact (erf) form and its derivative.
double gelu(double x);
double gelu_derivative(double x);
Tensor2D gelu_rows(const Tensor2D& x);
Tensor2D gelu_rows_backward(const Tensor2D& x, const Tensor2D& grad_out);

// out[i][j] = <a_i, b_j> / (|a_i| |b_j|). Throws std::domain_error
// naming the row index if any row has zero norm.
Tensor2D cosine_sim_matrix(const Tensor2D& a, const Tensor2D& b);
// Given dL/dsim, accumulates dL/da into grad_a and dL/db into grad_b
// (both must be pre-sized and may hold prior accumulation).
void cosine_sim_matrix_backward(const Tensor2D& a, const Tensor2D& b,
                                const Tensor2D& grad_sim, Tensor2D& grad_a,
                                Tensor2D& grad_b);

// Cosine similarity of two single vectors (1 x d tensors).
double cosine_sim(const Tensor2D& a, const Tensor2D& b);
// d cos(a,b) / da accumulated into grad_a, d cos(a,b) / db into grad_b,
// both scaled by upstream.
void cosine_sim_backward(const Tensor2D& a, const Tensor2D& b, double upstream,
                         Tensor2D& grad_a, Tensor2D& grad_b);

// Fixed sinusoidal table: pe[pos][2i] = sin(pos / 10000^(2i/d)),
// pe[pos][2i+1] = cos(pos / 10000^(2i/d)). d must be even.
Tensor2D positional_encoding(int length, int dim);

double l2_norm(const Tensor2D& v);

}  // namespace fusebed
