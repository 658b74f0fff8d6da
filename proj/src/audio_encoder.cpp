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

#include "fusebed/audio_encoder.hpp"

#include <stdexcept>

#include "fusebed/rng.hpp"

namespace fusebed {

AudioEncoder::AudioEncoder(const std::string& prefix, int frame_dim, int dim, int n_layers,
                           int heads, int ffn_mult, double ln_eps)
    : frame_w(prefix + ".frame.w", frame_dim, dim),
      frame_b(prefix + ".frame.b", 1, dim),
      global_token_bias(prefix + ".global_bias", 1, dim),
      proj_w(prefix + ".proj.w", dim, dim),
      proj_b(prefix + ".proj.b", 1, dim),
      frame_dim_(frame_dim),
      dim_(dim) {
  layers.reserve(static_cast<size_t>(n_layers));
  for (int l = 0; l < n_layers; ++l) {
    layers.emplace_back(prefix + ".layer" + std::to_string(l), dim, heads, ffn_mult, ln_eps);
  }
}

void AudioEncoder::init(Rng& rng) {
  init_linear(frame_w, rng);
  for (auto& layer : layers) layer.init(rng);
  init_linear(proj_w, rng);
}

std::vector<Parameter*> AudioEncoder::parameters() {
  std::vector<Parameter*> out = {&frame_w, &frame_b, &global_token_bias};
  for (auto& layer : layers) {
    for (Parameter* p : layer.parameters()) out.push_back(p);
  }
  out.push_back(&proj_w);
  out.push_back(&proj_b);
  return out;
}

Tensor2D AudioEncoder::embed_frames(const FrameSequence& x) const {
  if (x.length() < 1) throw std::invalid_argument("AudioEncoder: empty frame sequence");
  if (x.feature_width() != frame_dim_) {
    throw std::invalid_argument("AudioEncoder: frame width " +
                                std::to_string(x.feature_width()) + " != configured " +
                                std::to_string(frame_dim_));
  }
  Tensor2D embedded = linear_forward(x.frames, frame_w, frame_b);
  const Tensor2D pe = positional_encoding(x.length(), dim_);
  embedded.add_(pe);
  return embedded;
}

AudioEncoding AudioEncoder::forward(const FrameSequence& x, AudioEncoderCache& cache) const {
  cache.frames = x.frames;
  cache.embedded = embed_frames(x);
  const int t = cache.embedded.rows;

  cache.with_token = Tensor2D(t + 1, dim_);
  for (int i = 0; i < t; ++i) {
    const double* src = cache.embedded.row_ptr(i);
    double* dst = cache.with_token.row_ptr(i);
    for (int j = 0; j < dim_; ++j) dst[j] = src[j];
  }
  // global token: column mean of the sequence plus the learnable bias
  double* token = cache.with_token.row_ptr(t);
  for (int j = 0; j < dim_; ++j) {
    double acc = 0.0;
    for (int i = 0; i < t; ++i) acc += cache.embedded.at(i, j);
    token[j] = acc / t + global_token_bias.value.at(0, j);
  }

  const PositionMask mask = all_valid_mask(t + 1);
  cache.layers.assign(layers.size(), EncoderLayerCache());
  Tensor2D h = cache.with_token;
  for (size_t l = 0; l < layers.size(); ++l) {
    h = layers[l].forward(h, mask, cache.layers[l]);
  }
  cache.transformed = std::move(h);
  cache.global_row = cache.transformed.row(t);

  AudioEncoding out;
  out.pooled = linear_forward(cache.global_row, proj_w, proj_b);
  out.transformed_seq = cache.transformed;
  return out;
}

AudioEncoding AudioEncoder::forward(const FrameSequence& x) const {
  AudioEncoderCache cache;
  return forward(x, cache);
}

void AudioEncoder::backward(const Tensor2D& grad_pooled, const Tensor2D& grad_seq,
                            const AudioEncoderCache& cache) {
  const int t = cache.embedded.rows;
  Tensor2D grad_transformed(t + 1, dim_);
  if (grad_seq.rows > 0) {
    check_shapes_match(grad_seq, grad_transformed, "AudioEncoder::backward (grad_seq)");
    grad_transformed.add_(grad_seq);
  }
  if (grad_pooled.rows > 0) {
    Tensor2D grad_global = linear_backward(cache.global_row, grad_pooled, proj_w, proj_b);
    for (int j = 0; j < dim_; ++j) grad_transformed.at(t, j) += grad_global.at(0, j);
  }

  for (size_t l = layers.size(); l-- > 0;) {
    grad_transformed = layers[l].backward(grad_transformed, cache.layers[l]);
  }

  // split off the global-token row; its mean term spreads over frames
  Tensor2D grad_embedded(t, dim_);
  const double* token_grad = grad_transformed.row_ptr(t);
  const double inv_t = 1.0 / t;
  for (int i = 0; i < t; ++i) {
    const double* src = grad_transformed.row_ptr(i);
    double* dst = grad_embedded.row_ptr(i);
    for (int j = 0; j < dim_; ++j) dst[j] = src[j] + token_grad[j] * inv_t;
  }
  for (int j = 0; j < dim_; ++j) global_token_bias.grad.at(0, j) += token_grad[j];

  linear_backward(cache.frames, grad_embedded, frame_w, frame_b);
}

}  // namespace fusebed
