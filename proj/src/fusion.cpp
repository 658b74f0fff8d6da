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

#include "fusebed/fusion.hpp"

#include <cmath>
#include <stdexcept>

#include "fusebed/rng.hpp"

namespace fusebed {

Tensor2D late_fuse(const Tensor2D& audio_emb, const Tensor2D& meta_emb) {
  check_shapes_match(audio_emb, meta_emb, "late_fuse");
  Tensor2D out = audio_emb;
  out.add_(meta_emb);
  return out;
}

GatedEmbedding::GatedEmbedding(const std::string& prefix, int dim)
    : w1(prefix + ".w1", dim, dim),
      b1(prefix + ".b1", 1, dim),
      w2(prefix + ".w2", dim, dim),
      b2(prefix + ".b2", 1, dim),
      dim_(dim) {}

void GatedEmbedding::init(Rng& rng) {
  init_linear(w1, rng);
  init_linear(w2, rng);
}

std::vector<Parameter*> GatedEmbedding::parameters() { return {&w1, &b1, &w2, &b2}; }

Tensor2D GatedEmbedding::forward(const Tensor2D& q, GemCache& cache) const {
  if (q.rows != 1 || q.cols != dim_) {
    throw std::invalid_argument("GatedEmbedding: expected 1x" + std::to_string(dim_) +
                                " query, got " + q.shape_str());
  }
  cache.input = q;
  cache.z1 = linear_forward(q, w1, b1);
  Tensor2D pre_gate = linear_forward(cache.z1, w2, b2);
  cache.gate = Tensor2D(1, dim_);
  for (int j = 0; j < dim_; ++j) {
    cache.gate.at(0, j) = 1.0 / (1.0 + std::exp(-pre_gate.at(0, j)));
  }
  cache.gated = Tensor2D(1, dim_);
  for (int j = 0; j < dim_; ++j) {
    cache.gated.at(0, j) = cache.z1.at(0, j) * cache.gate.at(0, j);
  }
  cache.norm = l2_norm(cache.gated);
  if (cache.norm == 0.0) {
    throw std::domain_error("GatedEmbedding: gated vector has zero norm");
  }
  Tensor2D out = cache.gated;
  out.scale_(1.0 / cache.norm);
  return out;
}

Tensor2D GatedEmbedding::forward(const Tensor2D& q) const {
  GemCache cache;
  return forward(q, cache);
}

Tensor2D GatedEmbedding::backward(const Tensor2D& grad_out, const GemCache& cache) {
  // through the normalization: d(z/|z|) = (g - zhat <g, zhat>) / |z|
  const double inv_norm = 1.0 / cache.norm;
  double dot = 0.0;
  for (int j = 0; j < dim_; ++j) {
    dot += grad_out.at(0, j) * cache.gated.at(0, j) * inv_norm;
  }
  Tensor2D grad_gated(1, dim_);
  for (int j = 0; j < dim_; ++j) {
    const double zhat = cache.gated.at(0, j) * inv_norm;
    grad_gated.at(0, j) = (grad_out.at(0, j) - zhat * dot) * inv_norm;
  }

  // z = z1 * gate
  Tensor2D grad_z1(1, dim_);
  Tensor2D grad_pre_gate(1, dim_);
  for (int j = 0; j < dim_; ++j) {
    const double g = cache.gate.at(0, j);
    grad_z1.at(0, j) = grad_gated.at(0, j) * g;
    grad_pre_gate.at(0, j) = grad_gated.at(0, j) * cache.z1.at(0, j) * g * (1.0 - g);
  }
  grad_z1.add_(linear_backward(cache.z1, grad_pre_gate, w2, b2));
  return linear_backward(cache.input, grad_z1, w1, b1);
}

MidFusion::MidFusion(const std::string& prefix, int dim, int n_layers, int heads, int ffn_mult,
                     double ln_eps)
    : gem_audio(prefix + ".gem_audio", dim),
      gem_meta(prefix + ".gem_meta", dim),
      modality_w(prefix + ".modality.w", dim, 2),
      modality_b(prefix + ".modality.b", 1, 2),
      dim_(dim) {
  layers.reserve(static_cast<size_t>(n_layers));
  for (int l = 0; l < n_layers; ++l) {
    layers.emplace_back(prefix + ".layer" + std::to_string(l), dim, heads, ffn_mult, ln_eps);
  }
}

void MidFusion::init(Rng& rng) {
  for (auto& layer : layers) layer.init(rng);
  gem_audio.init(rng);
  gem_meta.init(rng);
  init_linear(modality_w, rng);
}

std::vector<Parameter*> MidFusion::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers) {
    for (Parameter* p : layer.parameters()) out.push_back(p);
  }
  for (Parameter* p : gem_audio.parameters()) out.push_back(p);
  for (Parameter* p : gem_meta.parameters()) out.push_back(p);
  out.push_back(&modality_w);
  out.push_back(&modality_b);
  return out;
}

void MidFusion::make_layers_identity() {
  for (auto& layer : layers) layer.make_identity();
}

void MidFusion::fuse_item(const Tensor2D& audio_seq, const Tensor2D& meta_emb,
                          MidItemCache& cache) const {
  if (audio_seq.cols != dim_ || meta_emb.cols != dim_ || meta_emb.rows != 1) {
    throw std::invalid_argument("MidFusion: width mismatch, audio " + audio_seq.shape_str() +
                                ", metadata " + meta_emb.shape_str());
  }
  cache.audio_rows = audio_seq.rows;
  cache.joint = Tensor2D(audio_seq.rows + 1, dim_);
  for (int i = 0; i < audio_seq.rows; ++i) {
    const double* src = audio_seq.row_ptr(i);
    double* dst = cache.joint.row_ptr(i);
    for (int j = 0; j < dim_; ++j) dst[j] = src[j];
  }
  cache.joint.set_row(audio_seq.rows, meta_emb);

  const PositionMask mask = all_valid_mask(cache.joint.rows);
  cache.layers.assign(layers.size(), EncoderLayerCache());
  Tensor2D h = cache.joint;
  for (size_t l = 0; l < layers.size(); ++l) {
    h = layers[l].forward(h, mask, cache.layers[l]);
  }
  cache.transformed = std::move(h);
  // global audio token is the last audio row; metadata token follows it
  cache.audio_token = cache.transformed.row(cache.audio_rows - 1);
  cache.meta_token = cache.transformed.row(cache.audio_rows);
}

void MidFusion::prepare_query(const Tensor2D& q, MidQueryCache& cache) const {
  cache.query = q;
  cache.audio_query = gem_audio.forward(q, cache.gem_audio);
  cache.meta_query = gem_meta.forward(q, cache.gem_meta);
  cache.logits = linear_forward(q, modality_w, modality_b);
  cache.weights = softmax_rows(cache.logits);
}

std::pair<double, double> MidFusion::query_modality_weights(const Tensor2D& q) const {
  const Tensor2D weights = softmax_rows(linear_forward(q, modality_w, modality_b));
  return {weights.at(0, 0), weights.at(0, 1)};
}

double MidFusion::score(const MidItemCache& item, const MidQueryCache& query) const {
  const double w_audio = query.weights.at(0, 0);
  const double w_meta = query.weights.at(0, 1);
  const double cos_audio = cosine_sim(query.audio_query, item.audio_token);
  const double cos_meta = cosine_sim(query.meta_query, item.meta_token);
  return w_audio * cos_audio + w_meta * cos_meta;
}

double MidFusion::score(const Tensor2D& audio_seq, const Tensor2D& meta_emb,
                        const Tensor2D& q) const {
  MidItemCache item;
  fuse_item(audio_seq, meta_emb, item);
  MidQueryCache query;
  prepare_query(q, query);
  return score(item, query);
}

MidBatchGrads MidFusion::backward_batch(const std::vector<MidItemCache>& items,
                                        const std::vector<MidQueryCache>& queries,
                                        const Tensor2D& grad_scores) {
  const int n_items = static_cast<int>(items.size());
  const int n_queries = static_cast<int>(queries.size());
  if (grad_scores.rows != n_items || grad_scores.cols != n_queries) {
    throw std::invalid_argument("MidFusion::backward_batch: grad matrix " +
                                grad_scores.shape_str() + " does not match batch");
  }

  std::vector<Tensor2D> grad_audio_token(static_cast<size_t>(n_items));
  std::vector<Tensor2D> grad_meta_token(static_cast<size_t>(n_items));
  for (int i = 0; i < n_items; ++i) {
    grad_audio_token[static_cast<size_t>(i)] = Tensor2D(1, dim_);
    grad_meta_token[static_cast<size_t>(i)] = Tensor2D(1, dim_);
  }
  std::vector<Tensor2D> grad_audio_query(static_cast<size_t>(n_queries));
  std::vector<Tensor2D> grad_meta_query(static_cast<size_t>(n_queries));
  std::vector<Tensor2D> grad_weights(static_cast<size_t>(n_queries));
  for (int j = 0; j < n_queries; ++j) {
    grad_audio_query[static_cast<size_t>(j)] = Tensor2D(1, dim_);
    grad_meta_query[static_cast<size_t>(j)] = Tensor2D(1, dim_);
    grad_weights[static_cast<size_t>(j)] = Tensor2D(1, 2);
  }

  for (int i = 0; i < n_items; ++i) {
    const MidItemCache& item = items[static_cast<size_t>(i)];
    for (int j = 0; j < n_queries; ++j) {
      const double g = grad_scores.at(i, j);
      if (g == 0.0) continue;
      const MidQueryCache& query = queries[static_cast<size_t>(j)];
      const double w_audio = query.weights.at(0, 0);
      const double w_meta = query.weights.at(0, 1);
      const double cos_audio = cosine_sim(query.audio_query, item.audio_token);
      const double cos_meta = cosine_sim(query.meta_query, item.meta_token);

      grad_weights[static_cast<size_t>(j)].at(0, 0) += g * cos_audio;
      grad_weights[static_cast<size_t>(j)].at(0, 1) += g * cos_meta;

      cosine_sim_backward(query.audio_query, item.audio_token, g * w_audio,
                          grad_audio_query[static_cast<size_t>(j)],
                          grad_audio_token[static_cast<size_t>(i)]);
      cosine_sim_backward(query.meta_query, item.meta_token, g * w_meta,
                          grad_meta_query[static_cast<size_t>(j)],
                          grad_meta_token[static_cast<size_t>(i)]);
    }
  }

  MidBatchGrads out;
  out.query.resize(static_cast<size_t>(n_queries));
  for (int j = 0; j < n_queries; ++j) {
    const MidQueryCache& query = queries[static_cast<size_t>(j)];
    Tensor2D grad_logits =
        softmax_rows_backward(query.weights, grad_weights[static_cast<size_t>(j)]);
    Tensor2D grad_q = linear_backward(query.query, grad_logits, modality_w, modality_b);
    grad_q.add_(
        gem_audio.backward(grad_audio_query[static_cast<size_t>(j)], query.gem_audio));
    grad_q.add_(gem_meta.backward(grad_meta_query[static_cast<size_t>(j)], query.gem_meta));
    out.query[static_cast<size_t>(j)] = std::move(grad_q);
  }

  out.audio_seq.resize(static_cast<size_t>(n_items));
  out.meta_emb.resize(static_cast<size_t>(n_items));
  for (int i = 0; i < n_items; ++i) {
    const MidItemCache& item = items[static_cast<size_t>(i)];
    Tensor2D grad_joint_out(item.transformed.rows, dim_);
    grad_joint_out.set_row(item.audio_rows - 1, grad_audio_token[static_cast<size_t>(i)]);
    grad_joint_out.set_row(item.audio_rows, grad_meta_token[static_cast<size_t>(i)]);
    for (size_t l = layers.size(); l-- > 0;) {
      grad_joint_out = layers[l].backward(grad_joint_out, item.layers[l]);
    }
    Tensor2D grad_audio_seq(item.audio_rows, dim_);
    for (int r = 0; r < item.audio_rows; ++r) {
      const double* src = grad_joint_out.row_ptr(r);
      double* dst = grad_audio_seq.row_ptr(r);
      for (int j = 0; j < dim_; ++j) dst[j] = src[j];
    }
    out.audio_seq[static_cast<size_t>(i)] = std::move(grad_audio_seq);
    out.meta_emb[static_cast<size_t>(i)] = grad_joint_out.row(item.audio_rows);
  }
  return out;
}

}  // namespace fusebed
