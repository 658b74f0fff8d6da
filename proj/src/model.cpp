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

#include "fusebed/model.hpp"

#include <stdexcept>

#include "fusebed/rng.hpp"

namespace fusebed {

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "content") return FusionMode::kContent;
  if (name == "metadata") return FusionMode::kMetadata;
  if (name == "late") return FusionMode::kLate;
  if (name == "mid") return FusionMode::kMid;
  throw std::invalid_argument("mode: expected content|metadata|late|mid, got \"" + name +
                              "\"");
}

std::string fusion_mode_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::kContent: return "content";
    case FusionMode::kMetadata: return "metadata";
    case FusionMode::kLate: return "late";
    case FusionMode::kMid: return "mid";
  }
  throw std::invalid_argument("mode: unknown enum value");
}

void ModelConfig::validate() const {
  if (embed_dim <= 0) throw std::invalid_argument("embed_dim: must be positive");
  if (embed_dim % 2 != 0) throw std::invalid_argument("embed_dim: must be even");
  if (frame_dim <= 0) throw std::invalid_argument("frame_dim: must be positive");
  if (text_layers <= 0) throw std::invalid_argument("text_layers: must be positive");
  if (audio_layers <= 0) throw std::invalid_argument("audio_layers: must be positive");
  if (fusion_layers <= 0) throw std::invalid_argument("fusion_layers: must be positive");
  if (heads <= 0) throw std::invalid_argument("heads: must be positive");
  if (embed_dim % heads != 0)
    throw std::invalid_argument("heads: must divide embed_dim");
  if (ffn_mult <= 0) throw std::invalid_argument("ffn_mult: must be positive");
  if (max_text_tokens <= 0) throw std::invalid_argument("max_text_tokens: must be positive");
  if (layer_norm_eps <= 0.0) throw std::invalid_argument("layer_norm_eps: must be positive");
}

RetrievalModel::RetrievalModel(const ModelConfig& cfg, const Vocabulary& v)
    : config(cfg), vocab(v) {
  config.validate();
  text = TextEncoder("text", vocab.size(), cfg.embed_dim, cfg.text_layers, cfg.heads,
                     cfg.ffn_mult, cfg.layer_norm_eps, cfg.max_text_tokens);
  if (!cfg.shared_text_encoder) {
    meta_text = TextEncoder("meta_text", vocab.size(), cfg.embed_dim, cfg.text_layers,
                            cfg.heads, cfg.ffn_mult, cfg.layer_norm_eps,
                            cfg.max_text_tokens);
  }
  audio = AudioEncoder("audio", cfg.frame_dim, cfg.embed_dim, cfg.audio_layers, cfg.heads,
                       cfg.ffn_mult, cfg.layer_norm_eps);
  if (cfg.mode == FusionMode::kMid) {
    mid = MidFusion("mid", cfg.embed_dim, cfg.fusion_layers, cfg.heads, cfg.ffn_mult,
                    cfg.layer_norm_eps);
  }
}

void RetrievalModel::init(uint64_t seed) {
  Rng rng(seed);
  text.init(rng);
  if (meta_text) meta_text->init(rng);
  audio.init(rng);
  if (mid) mid->init(rng);
}

std::vector<Parameter*> RetrievalModel::parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : text.parameters()) out.push_back(p);
  if (meta_text) {
    for (Parameter* p : meta_text->parameters()) out.push_back(p);
  }
  for (Parameter* p : audio.parameters()) out.push_back(p);
  if (mid) {
    for (Parameter* p : mid->parameters()) out.push_back(p);
  }
  return out;
}

void RetrievalModel::zero_grads() {
  for (Parameter* p : parameters()) p->zero_grad();
}

TextEncoder& RetrievalModel::metadata_encoder() {
  return meta_text ? *meta_text : text;
}

const TextEncoder& RetrievalModel::metadata_encoder() const {
  return meta_text ? *meta_text : text;
}

Tensor2D RetrievalModel::embed_query(const std::string& raw_text) const {
  const TokenSequence seq =
      tokenize(preprocess_text(raw_text), vocab, config.max_text_tokens);
  return text.forward(seq);
}

Tensor2D RetrievalModel::embed_metadata(const std::string& raw_text) const {
  const TokenSequence seq =
      tokenize(preprocess_text(raw_text), vocab, config.max_text_tokens);
  return metadata_encoder().forward(seq);
}

}  // namespace fusebed
