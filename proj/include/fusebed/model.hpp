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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fusebed/audio_encoder.hpp"
#include "fusebed/fusion.hpp"
#include "fusebed/text_encoder.hpp"

namespace fusebed {

// How an item is represented against a text query.
enum class FusionMode {
  kContent,   // audio embedding only
  kMetadata,  // metadata text embedding only
  kLate,      // sum of audio and metadata embeddings
  kMid,       // joint transformer over audio sequence + metadata token
};

// Accepts "content", "metadata", "late", "mid"; throws
// std::invalid_argument otherwise.
FusionMode parse_fusion_mode(const std::string& name);
std::string fusion_mode_name(FusionMode mode);

struct ModelConfig {
  int embed_dim = 64;
  int frame_dim = 32;
  int text_layers = 2;
  int audio_layers = 2;
  int fusion_layers = 2;
  int heads = 4;
  int ffn_mult = 4;
  int max_text_tokens = 32;
  double layer_norm_eps = 1e-5;
  FusionMode mode = FusionMode::kLate;
  bool shared_text_encoder = true;
  // Unit-normalize each summand before late fusion (ablation switch;
  // the default sums raw embeddings).
  bool late_normalize = false;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// The dual-encoder retrieval model. Query text and items are embedded
// into a shared space; items additionally carry metadata depending on
// the fusion mode. The metadata text encoder is the query encoder
// itself unless shared_text_encoder is false.
class RetrievalModel {
 public:
  RetrievalModel() = default;
  RetrievalModel(const ModelConfig& cfg, const Vocabulary& vocab);

  void init(uint64_t seed);
  // Deterministic enumeration order: query text encoder, separate
  // metadata encoder (if any), audio encoder, mid fusion (if any).
  std::vector<Parameter*> parameters();
  void zero_grads();

  // Raw text in, retrieval-space vector out (preprocess + tokenize +
  // encode). Training code drives the encoders directly for caches.
  Tensor2D embed_query(const std::string& raw_text) const;
  Tensor2D embed_metadata(const std::string& raw_text) const;

  TextEncoder& metadata_encoder();
  const TextEncoder& metadata_encoder() const;

  ModelConfig config;
  Vocabulary vocab;
  TextEncoder text;
  std::optional<TextEncoder> meta_text;  // present iff separate encoders
  AudioEncoder audio;
  std::optional<MidFusion> mid;  // present iff mode == kMid
};

}  // namespace fusebed
