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
#include <utility>
#include <vector>

#include "fusebed/attention.hpp"
#include "fusebed/tensor.hpp"

namespace fusebed {

// Elementwise sum of the two modality vectors. Cosine matching absorbs
// scale, so no normalization is applied here.
Tensor2D late_fuse(const Tensor2D& audio_emb, const Tensor2D& meta_emb);

struct GemCache {
  Tensor2D input;
  Tensor2D z1;
  Tensor2D gate;  // sigmoid(z1 W2 + b2)
  Tensor2D gated; // z1 * gate, pre normalization
  double norm = 0.0;
};

// Gated transform of a query vector into a modality-specific query:
// z1 = q W1 + b1, z = z1 * sigmoid(z1 W2 + b2), output z / |z|.
class GatedEmbedding {
 public:
  GatedEmbedding() = default;
  GatedEmbedding(const std::string& prefix, int dim);

  Tensor2D forward(const Tensor2D& q, GemCache& cache) const;
  Tensor2D forward(const Tensor2D& q) const;
  // Returns dL/dq, accumulating parameter grads.
  Tensor2D backward(const Tensor2D& grad_out, const GemCache& cache);

  void init(Rng& rng);
  std::vector<Parameter*> parameters();

  Parameter w1, b1, w2, b2;

 private:
  int dim_ = 0;
};

struct MidItemCache {
  Tensor2D joint;        // (T+2) x d: audio sequence rows, then metadata row
  std::vector<EncoderLayerCache> layers;
  Tensor2D transformed;
  Tensor2D audio_token;  // transformed global audio token (row T)
  Tensor2D meta_token;   // transformed metadata token (row T+1)
  int audio_rows = 0;    // T+1
};

struct MidQueryCache {
  Tensor2D query;
  GemCache gem_audio;
  GemCache gem_meta;
  Tensor2D audio_query;  // unit norm
  Tensor2D meta_query;   // unit norm
  Tensor2D logits;       // 1 x 2
  Tensor2D weights;      // softmax(logits)
};

struct MidBatchGrads {
  std::vector<Tensor2D> audio_seq;  // per item, (T+1) x d
  std::vector<Tensor2D> meta_emb;   // per item, 1 x d
  std::vector<Tensor2D> query;      // per query, 1 x d
};

// Joint transformer over the audio embedding sequence with the metadata
// vector appended, scored against query-conditioned modality vectors:
//   score = w_a cos(GEM_a(q), A) + w_m cos(GEM_m(q), M)
// with (w_a, w_m) a softmax of a linear map of the query embedding.
class MidFusion {
 public:
  MidFusion() = default;
  MidFusion(const std::string& prefix, int dim, int layers, int heads, int ffn_mult,
            double ln_eps);

  // audio_seq must include the transformed global audio token as its
  // last row.
  void fuse_item(const Tensor2D& audio_seq, const Tensor2D& meta_emb,
                 MidItemCache& cache) const;
  void prepare_query(const Tensor2D& q, MidQueryCache& cache) const;

  double score(const MidItemCache& item, const MidQueryCache& query) const;
  // Convenience path for single pairs (evaluation, tests).
  double score(const Tensor2D& audio_seq, const Tensor2D& meta_emb, const Tensor2D& q) const;

  std::pair<double, double> query_modality_weights(const Tensor2D& q) const;

  // Full backward over a batch score matrix: grad_scores[i][j] is the
  // upstream gradient for score(item i, query j).
  MidBatchGrads backward_batch(const std::vector<MidItemCache>& items,
                               const std::vector<MidQueryCache>& queries,
                               const Tensor2D& grad_scores);

  void init(Rng& rng);
  std::vector<Parameter*> parameters();

  // Turns the joint transformer into an identity map (degenerate
  // configuration used by oracle tests).
  void make_layers_identity();

  std::vector<EncoderLayer> layers;
  GatedEmbedding gem_audio;
  GatedEmbedding gem_meta;
  Parameter modality_w, modality_b;  // d x 2 projection + bias

 private:
  int dim_ = 0;
};

}  // namespace fusebed
