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

#include "fusebed/text_encoder.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

#include "fusebed/rng.hpp"

namespace fusebed {

std::string preprocess_text(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      pending_space = true;
    }
    // anything else (punctuation, non-ASCII bytes) is dropped
  }
  return out;
}

std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> words;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    size_t start = i;
    while (i < text.size() && text[i] != ' ') ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<unk>", "<cls>"};
  token_to_id_ = {{"<pad>", kPad}, {"<unk>", kUnk}, {"<cls>", kCls}};
}

int Vocabulary::add_token(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  token_to_id_.emplace(token, id);
  return id;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, int min_freq) {
  // First-appearance order keeps ids independent of hash iteration.
  std::vector<std::string> order;
  std::unordered_map<std::string, int> counts;
  for (const auto& text : texts) {
    for (const auto& word : split_whitespace(text)) {
      if (counts[word]++ == 0) order.push_back(word);
    }
  }
  Vocabulary vocab;
  for (const auto& word : order) {
    if (counts[word] >= min_freq) vocab.add_token(word);
  }
  return vocab;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Vocabulary::save: cannot open " + path);
  for (size_t i = 3; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Vocabulary::load: cannot open " + path);
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) vocab.add_token(line);
  }
  return vocab;
}

TokenSequence tokenize(const std::string& clean, const Vocabulary& vocab, int max_content) {
  TokenSequence seq;
  seq.ids.push_back(Vocabulary::kCls);
  const auto words = split_whitespace(clean);
  const int limit = std::min<int>(static_cast<int>(words.size()), max_content);
  for (int i = 0; i < limit; ++i) seq.ids.push_back(vocab.id_of(words[static_cast<size_t>(i)]));
  return seq;
}

TokenSequence pad_sequence(const TokenSequence& seq, int n_pad) {
  TokenSequence padded = seq;
  for (int i = 0; i < n_pad; ++i) padded.ids.push_back(Vocabulary::kPad);
  return padded;
}

TextEncoder::TextEncoder(const std::string& prefix, int vocab_size, int dim, int n_layers,
                         int heads, int ffn_mult, double ln_eps, int max_content_tokens)
    : token_embedding(prefix + ".emb", vocab_size, dim),
      proj_w(prefix + ".proj.w", dim, dim),
      proj_b(prefix + ".proj.b", 1, dim),
      vocab_size_(vocab_size),
      dim_(dim),
      max_content_tokens_(max_content_tokens),
      positional_(positional_encoding(max_content_tokens + 1, dim)) {
  layers.reserve(static_cast<size_t>(n_layers));
  for (int l = 0; l < n_layers; ++l) {
    layers.emplace_back(prefix + ".layer" + std::to_string(l), dim, heads, ffn_mult, ln_eps);
  }
}

void TextEncoder::init(Rng& rng) {
  for (double& v : token_embedding.value.data) v = (rng.uniform() * 2.0 - 1.0) * 0.05;
  for (auto& layer : layers) layer.init(rng);
  init_linear(proj_w, rng);
}

std::vector<Parameter*> TextEncoder::parameters() {
  std::vector<Parameter*> out = {&token_embedding};
  for (auto& layer : layers) {
    for (Parameter* p : layer.parameters()) out.push_back(p);
  }
  out.push_back(&proj_w);
  out.push_back(&proj_b);
  return out;
}

Tensor2D TextEncoder::forward(const TokenSequence& seq, TextEncoderCache& cache) const {
  const int n = seq.length();
  if (n < 1 || seq.ids[0] != Vocabulary::kCls) {
    throw std::invalid_argument("TextEncoder: sequence must start with CLS");
  }
  if (n > positional_.rows) {
    throw std::invalid_argument("TextEncoder: sequence length " + std::to_string(n) +
                                " exceeds maximum " + std::to_string(positional_.rows));
  }
  cache.seq = seq;
  cache.mask.assign(static_cast<size_t>(n), 1);
  cache.embedded = Tensor2D(n, dim_);
  for (int i = 0; i < n; ++i) {
    const int id = seq.ids[static_cast<size_t>(i)];
    if (id < 0 || id >= vocab_size_) {
      throw std::out_of_range("TextEncoder: token id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(vocab_size_));
    }
    if (id == Vocabulary::kPad) cache.mask[static_cast<size_t>(i)] = 0;
    const double* emb = token_embedding.value.row_ptr(id);
    const double* pe = positional_.row_ptr(i);
    double* dst = cache.embedded.row_ptr(i);
    for (int j = 0; j < dim_; ++j) dst[j] = emb[j] + pe[j];
  }

  cache.layers.assign(layers.size(), EncoderLayerCache());
  Tensor2D h = cache.embedded;
  for (size_t l = 0; l < layers.size(); ++l) {
    h = layers[l].forward(h, cache.mask, cache.layers[l]);
  }
  cache.final_seq = std::move(h);
  cache.cls_row = cache.final_seq.row(0);
  return linear_forward(cache.cls_row, proj_w, proj_b);
}

Tensor2D TextEncoder::forward(const TokenSequence& seq) const {
  TextEncoderCache cache;
  return forward(seq, cache);
}

void TextEncoder::backward(const Tensor2D& grad_out, const TextEncoderCache& cache) {
  Tensor2D grad_cls = linear_backward(cache.cls_row, grad_out, proj_w, proj_b);
  Tensor2D grad_seq(cache.final_seq.rows, dim_);
  grad_seq.set_row(0, grad_cls);
  for (size_t l = layers.size(); l-- > 0;) {
    grad_seq = layers[l].backward(grad_seq, cache.layers[l]);
  }
  // positional table is fixed; token embedding rows pick up the rest
  for (int i = 0; i < grad_seq.rows; ++i) {
    const int id = cache.seq.ids[static_cast<size_t>(i)];
    double* dst = token_embedding.grad.row_ptr(id);
    const double* src = grad_seq.row_ptr(i);
    for (int j = 0; j < dim_; ++j) dst[j] += src[j];
  }
}

}  // namespace fusebed
