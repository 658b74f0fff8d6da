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
#include <unordered_map>
#include <vector>

#include "fusebed/attention.hpp"
#include "fusebed/tensor.hpp"

namespace fusebed {

// Lowercase, strip everything but letters/digits/whitespace, collapse
// whitespace runs. Empty output is allowed.
std::string preprocess_text(const std::string& raw);

std::vector<std::string> split_whitespace(const std::string& text);

// Word-level vocabulary with dense ids. Ids 0..2 are reserved.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;

  Vocabulary();

  // Registers a token (preprocessed form) if new; returns its id.
  int add_token(const std::string& token);
  // Lookup; unknown tokens map to kUnk.
  int id_of(const std::string& token) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Builds from already-preprocessed texts, keeping tokens whose corpus
  // frequency reaches min_freq, in first-appearance order.
  static Vocabulary build(const std::vector<std::string>& texts, int min_freq = 1);

  // One corpus token per line; line number equals id minus the 3
  // reserved entries.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Token ids, CLS first, at most max_content tokens after it.
struct TokenSequence {
  std::vector<int> ids;

  int length() const { return static_cast<int>(ids.size()); }
};

// Whitespace-split lookup with CLS prepended; content truncated to
// max_content tokens. Padding to a common length is the batching
// caller's concern.
TokenSequence tokenize(const std::string& clean, const Vocabulary& vocab,
                       int max_content = 32);

// Appends n PAD ids (mask handling below keeps the encoding unchanged).
TokenSequence pad_sequence(const TokenSequence& seq, int n_pad);

struct TextEncoderCache {
  TokenSequence seq;
  PositionMask mask;
  Tensor2D embedded;  // token embeddings + positional encoding
  std::vector<EncoderLayerCache> layers;
  Tensor2D final_seq;
  Tensor2D cls_row;
};

// Maps a token sequence to a single retrieval-space vector: embed, add
// positional encoding, run the transformer stack with PAD masking, and
// project the transformed CLS position.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const std::string& prefix, int vocab_size, int dim, int layers, int heads,
              int ffn_mult, double ln_eps, int max_content_tokens);

  // Returns a 1 x dim retrieval-space vector.
  Tensor2D forward(const TokenSequence& seq, TextEncoderCache& cache) const;
  Tensor2D forward(const TokenSequence& seq) const;

  // grad_out is 1 x dim; accumulates into all parameters.
  void backward(const Tensor2D& grad_out, const TextEncoderCache& cache);

  void init(Rng& rng);
  std::vector<Parameter*> parameters();

  int dim() const { return dim_; }
  int vocab_size() const { return vocab_size_; }
  int max_content_tokens() const { return max_content_tokens_; }

  Parameter token_embedding;  // vocab_size x dim
  std::vector<EncoderLayer> layers;
  Parameter proj_w, proj_b;  // retrieval-space projection

 private:
  int vocab_size_ = 0;
  int dim_ = 0;
  int max_content_tokens_ = 32;
  Tensor2D positional_;  // fixed table, (max_content_tokens + 1) x dim
};

}  // namespace fusebed
