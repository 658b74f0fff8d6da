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

#include <string>
#include <vector>

#include "fusebed/ops.hpp"
#include "fusebed/tensor.hpp"

namespace fusebed {

class Rng;

// Validity flags per sequence position; false positions are excluded
// from attention (their key logits are pushed to -1e30, which is zero
// weight after softmax without NaN risk).
using PositionMask = std::vector<char>;

PositionMask all_valid_mask(int length);

struct AttentionCache {
  Tensor2D input;
  Tensor2D q, k, v;
  Tensor2D concat;                     // heads concatenated, pre output projection
  std::vector<Tensor2D> attn_weights;  // per head, n x n
};

// Scaled dot-product attention with h heads over a single sequence.
// Residual connection and layer norm are the enclosing layer's job.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& prefix, int dim, int heads);

  Tensor2D forward(const Tensor2D& x, const PositionMask& mask, AttentionCache& cache) const;
  // Accumulates parameter grads; returns dL/dx.
  Tensor2D backward(const Tensor2D& grad_out, const AttentionCache& cache);

  void init(Rng& rng);
  std::vector<Parameter*> parameters();

  int dim() const { return dim_; }
  int heads() const { return heads_; }

  Parameter wq, bq, wk, bk, wv, bv, wo, bo;

 private:
  int dim_ = 0;
  int heads_ = 0;
  int head_dim_ = 0;
};

struct EncoderLayerCache {
  Tensor2D input;
  Tensor2D normed1;
  Tensor2D resid1;
  Tensor2D normed2;
  Tensor2D ffn_pre;  // pre-activation of the hidden layer
  Tensor2D ffn_act;
  AttentionCache attn;
};

// Pre-norm transformer encoder layer:
//   r = x + Attn(LN1(x));  out = r + FFN(LN2(r))
// Zeroing the attention output projection and the second FFN matrix
// turns the layer into an exact identity, which the degenerate-config
// oracles rely on.
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(const std::string& prefix, int dim, int heads, int ffn_mult, double ln_eps);

  Tensor2D forward(const Tensor2D& x, const PositionMask& mask, EncoderLayerCache& cache) const;
  Tensor2D backward(const Tensor2D& grad_out, const EncoderLayerCache& cache);

  void init(Rng& rng);
  std::vector<Parameter*> parameters();

  // Zeroes the residual-branch outputs so the layer maps x to x.
  void make_identity();

  MultiHeadAttention attn;
  Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Parameter ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;

 private:
  double ln_eps_ = 1e-5;
};

// Xavier-uniform init for a weight matrix, zero for biases.
void init_linear(Parameter& w, Rng& rng);

}  // namespace fusebed
