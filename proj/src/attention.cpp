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

#include "fusebed/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "fusebed/rng.hpp"

namespace fusebed {

namespace {
constexpr double kMaskedLogit = -1e30;

Tensor2D column_block(const Tensor2D& m, int col0, int width) {
  Tensor2D out(m.rows, width);
  for (int i = 0; i < m.rows; ++i) {
    const double* src = m.row_ptr(i) + col0;
    double* dst = out.row_ptr(i);
    for (int j = 0; j < width; ++j) dst[j] = src[j];
  }
  return out;
}

void add_column_block(Tensor2D& m, int col0, const Tensor2D& block) {
  for (int i = 0; i < m.rows; ++i) {
    double* dst = m.row_ptr(i) + col0;
    const double* src = block.row_ptr(i);
    for (int j = 0; j < block.cols; ++j) dst[j] += src[j];
  }
}
}  // namespace

PositionMask all_valid_mask(int length) {
  return PositionMask(static_cast<size_t>(length), 1);
}

void init_linear(Parameter& w, Rng& rng) {
  const double bound = std::sqrt(6.0 / (w.value.rows + w.value.cols));
  for (double& v : w.value.data) v = (rng.uniform() * 2.0 - 1.0) * bound;
}

MultiHeadAttention::MultiHeadAttention(const std::string& prefix, int dim, int heads)
    : wq(prefix + ".wq", dim, dim),
      bq(prefix + ".bq", 1, dim),
      wk(prefix + ".wk", dim, dim),
      bk(prefix + ".bk", 1, dim),
      wv(prefix + ".wv", dim, dim),
      bv(prefix + ".bv", 1, dim),
      wo(prefix + ".wo", dim, dim),
      bo(prefix + ".bo", 1, dim),
      dim_(dim),
      heads_(heads) {
  if (heads <= 0 || dim % heads != 0) {
    throw std::invalid_argument("MultiHeadAttention: dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
  }
  head_dim_ = dim / heads;
}

void MultiHeadAttention::init(Rng& rng) {
  init_linear(wq, rng);
  init_linear(wk, rng);
  init_linear(wv, rng);
  init_linear(wo, rng);
}

std::vector<Parameter*> MultiHeadAttention::parameters() {
  return {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo};
}

Tensor2D MultiHeadAttention::forward(const Tensor2D& x, const PositionMask& mask,
                                     AttentionCache& cache) const {
  if (x.cols != dim_) {
    throw std::invalid_argument("MultiHeadAttention: input width " + x.shape_str() +
                                " != dim " + std::to_string(dim_));
  }
  if (static_cast<int>(mask.size()) != x.rows) {
    throw std::invalid_argument("MultiHeadAttention: mask length " +
                                std::to_string(mask.size()) + " != sequence length " +
                                std::to_string(x.rows));
  }
  const int n = x.rows;
  cache.input = x;
  cache.q = linear_forward(x, wq, bq);
  cache.k = linear_forward(x, wk, bk);
  cache.v = linear_forward(x, wv, bv);
  cache.concat = Tensor2D(n, dim_);
  cache.attn_weights.assign(static_cast<size_t>(heads_), Tensor2D());

  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  for (int h = 0; h < heads_; ++h) {
    const int c0 = h * head_dim_;
    Tensor2D scores(n, n);
    for (int i = 0; i < n; ++i) {
      const double* qi = cache.q.row_ptr(i) + c0;
      double* srow = scores.row_ptr(i);
      for (int j = 0; j < n; ++j) {
        const double* kj = cache.k.row_ptr(j) + c0;
        double acc = 0.0;
        for (int t = 0; t < head_dim_; ++t) acc += qi[t] * kj[t];
        srow[j] = acc * scale;
        if (!mask[static_cast<size_t>(j)]) srow[j] += kMaskedLogit;
      }
    }
    Tensor2D weights = softmax_rows(scores);
    // O_h = A * V_h
    for (int i = 0; i < n; ++i) {
      double* out = cache.concat.row_ptr(i) + c0;
      const double* wrow = weights.row_ptr(i);
      for (int j = 0; j < n; ++j) {
        const double a = wrow[j];
        if (a == 0.0) continue;
        const double* vj = cache.v.row_ptr(j) + c0;
        for (int t = 0; t < head_dim_; ++t) out[t] += a * vj[t];
      }
    }
    cache.attn_weights[static_cast<size_t>(h)] = std::move(weights);
  }
  return linear_forward(cache.concat, wo, bo);
}

Tensor2D MultiHeadAttention::backward(const Tensor2D& grad_out, const AttentionCache& cache) {
  const int n = cache.input.rows;
  Tensor2D grad_concat = linear_backward(cache.concat, grad_out, wo, bo);

  Tensor2D grad_q(n, dim_);
  Tensor2D grad_k(n, dim_);
  Tensor2D grad_v(n, dim_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));

  for (int h = 0; h < heads_; ++h) {
    const int c0 = h * head_dim_;
    const Tensor2D& weights = cache.attn_weights[static_cast<size_t>(h)];
    const Tensor2D g_out_h = column_block(grad_concat, c0, head_dim_);
    const Tensor2D v_h = column_block(cache.v, c0, head_dim_);
    const Tensor2D q_h = column_block(cache.q, c0, head_dim_);
    const Tensor2D k_h = column_block(cache.k, c0, head_dim_);

    // O = A V  =>  dA = dO V^T, dV = A^T dO
    Tensor2D grad_weights = matmul_a_bt(g_out_h, v_h);
    Tensor2D grad_v_h(n, head_dim_);
    matmul_at_b_acc(weights, g_out_h, grad_v_h);

    Tensor2D grad_scores = softmax_rows_backward(weights, grad_weights);
    grad_scores.scale_(scale);

    Tensor2D grad_q_h = matmul(grad_scores, k_h);
    Tensor2D grad_k_h(n, head_dim_);
    matmul_at_b_acc(grad_scores, q_h, grad_k_h);

    add_column_block(grad_q, c0, grad_q_h);
    add_column_block(grad_k, c0, grad_k_h);
    add_column_block(grad_v, c0, grad_v_h);
  }

  Tensor2D grad_x = linear_backward(cache.input, grad_q, wq, bq);
  grad_x.add_(linear_backward(cache.input, grad_k, wk, bk));
  grad_x.add_(linear_backward(cache.input, grad_v, wv, bv));
  return grad_x;
}

EncoderLayer::EncoderLayer(const std::string& prefix, int dim, int heads, int ffn_mult,
                           double ln_eps)
    : attn(prefix + ".attn", dim, heads),
      ffn_w1(prefix + ".ffn.w1", dim, dim * ffn_mult),
      ffn_b1(prefix + ".ffn.b1", 1, dim * ffn_mult),
      ffn_w2(prefix + ".ffn.w2", dim * ffn_mult, dim),
      ffn_b2(prefix + ".ffn.b2", 1, dim),
      ln1_gamma(prefix + ".ln1.gamma", 1, dim),
      ln1_beta(prefix + ".ln1.beta", 1, dim),
      ln2_gamma(prefix + ".ln2.gamma", 1, dim),
      ln2_beta(prefix + ".ln2.beta", 1, dim),
      ln_eps_(ln_eps) {
  ln1_gamma.value.fill(1.0);
  ln2_gamma.value.fill(1.0);
}

void EncoderLayer::init(Rng& rng) {
  attn.init(rng);
  init_linear(ffn_w1, rng);
  init_linear(ffn_w2, rng);
}

std::vector<Parameter*> EncoderLayer::parameters() {
  std::vector<Parameter*> out = attn.parameters();
  for (Parameter* p : {&ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2, &ln1_gamma, &ln1_beta, &ln2_gamma,
                       &ln2_beta}) {
    out.push_back(p);
  }
  return out;
}

void EncoderLayer::make_identity() {
  attn.wo.value.zero();
  attn.bo.value.zero();
  ffn_w2.value.zero();
  ffn_b2.value.zero();
}

Tensor2D EncoderLayer::forward(const Tensor2D& x, const PositionMask& mask,
                               EncoderLayerCache& cache) const {
  cache.input = x;
  cache.normed1 = layer_norm(x, ln1_gamma, ln1_beta, ln_eps_);
  Tensor2D attn_out = attn.forward(cache.normed1, mask, cache.attn);
  cache.resid1 = x;
  cache.resid1.add_(attn_out);
  cache.normed2 = layer_norm(cache.resid1, ln2_gamma, ln2_beta, ln_eps_);
  cache.ffn_pre = linear_forward(cache.normed2, ffn_w1, ffn_b1);
  cache.ffn_act = gelu_rows(cache.ffn_pre);
  Tensor2D out = linear_forward(cache.ffn_act, ffn_w2, ffn_b2);
  out.add_(cache.resid1);
  return out;
}

Tensor2D EncoderLayer::backward(const Tensor2D& grad_out, const EncoderLayerCache& cache) {
  // out = resid1 + W2 gelu(W1 LN2(resid1))
  Tensor2D grad_act = linear_backward(cache.ffn_act, grad_out, ffn_w2, ffn_b2);
  Tensor2D grad_pre = gelu_rows_backward(cache.ffn_pre, grad_act);
  Tensor2D grad_normed2 = linear_backward(cache.normed2, grad_pre, ffn_w1, ffn_b1);
  Tensor2D grad_resid1 =
      layer_norm_backward(cache.resid1, grad_normed2, ln2_gamma, ln2_beta, ln_eps_);
  grad_resid1.add_(grad_out);

  // resid1 = input + Attn(LN1(input))
  Tensor2D grad_normed1 = attn.backward(grad_resid1, cache.attn);
  Tensor2D grad_in =
      layer_norm_backward(cache.input, grad_normed1, ln1_gamma, ln1_beta, ln_eps_);
  grad_in.add_(grad_resid1);
  return grad_in;
}

}  // namespace fusebed
