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

#include "fusebed/attention.hpp"
#include "fusebed/tensor.hpp"

namespace fusebed {

// A variable-length sequence of precomputed audio feature frames,
// T x feature_width, T >= 1.
struct FrameSequence {
  Tensor2D frames;

  int length() const { return frames.rows; }
  int feature_width() const { return frames.cols; }
};

struct AudioEncoderCache {
  Tensor2D frames;
  Tensor2D embedded;     // T x dim, projection + positional encoding
  Tensor2D with_token;   // (T+1) x dim, global token appended last
  std::vector<EncoderLayerCache> layers;
  Tensor2D transformed;  // (T+1) x dim
  Tensor2D global_row;   // 1 x dim, transformed global token
};

struct AudioEncoding {
  Tensor2D pooled;           // 1 x dim, retrieval-space vector
  Tensor2D transformed_seq;  // (T+1) x dim, for mid-level fusion
};

// Maps a frame sequence to a single vector: project frames, add the
// fixed positional encoding, append a global token (sequence mean plus
// a learnable bias; the token itself carries no positional code), run
// the transformer stack, project the transformed global token.
class AudioEncoder {
 public:
  AudioEncoder() = default;
  AudioEncoder(const std::string& prefix, int frame_dim, int dim, int layers, int heads,
               int ffn_mult, double ln_eps);

  Tensor2D embed_frames(const FrameSequence& x) const;

  AudioEncoding forward(const FrameSequence& x, AudioEncoderCache& cache) const;
  AudioEncoding forward(const FrameSequence& x) const;

  // Either gradient may be empty (0x0). grad_pooled is 1 x dim;
  // grad_seq matches transformed_seq.
  void backward(const Tensor2D& grad_pooled, const Tensor2D& grad_seq,
                const AudioEncoderCache& cache);

  void init(Rng& rng);
  std::vector<Parameter*> parameters();

  int dim() const { return dim_; }
  int frame_dim() const { return frame_dim_; }

  Parameter frame_w, frame_b;   // frame projection
  Parameter global_token_bias;  // 1 x dim
  std::vector<EncoderLayer> layers;
  Parameter proj_w, proj_b;     // retrieval-space projection

 private:
  int frame_dim_ = 0;
  int dim_ = 0;
};

}  // namespace fusebed
