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

#include "fusebed/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace fusebed {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'U', 'S', 'E', 'B', 'E', 'D', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& in, const std::string& what) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated while reading " + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor2D& t) {
  write_u64(out, name.size());
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(out, static_cast<uint64_t>(t.rows));
  write_u64(out, static_cast<uint64_t>(t.cols));
  for (double d : t.data) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(out, bits);
  }
}

std::pair<std::string, Tensor2D> read_tensor(std::istream& in) {
  const uint64_t name_len = read_u64(in, "tensor name length");
  if (name_len > 4096) throw std::runtime_error("checkpoint: implausible tensor name length");
  std::string name(name_len, '\0');
  in.read(name.data(), static_cast<std::streamsize>(name_len));
  if (!in) throw std::runtime_error("checkpoint: truncated while reading tensor name");
  const uint64_t rows = read_u64(in, "rows of " + name);
  const uint64_t cols = read_u64(in, "cols of " + name);
  if (rows > (1u << 24) || cols > (1u << 24)) {
    throw std::runtime_error("checkpoint: implausible shape for tensor \"" + name + "\"");
  }
  Tensor2D t(static_cast<int>(rows), static_cast<int>(cols));
  for (size_t i = 0; i < t.data.size(); ++i) {
    const uint64_t bits = read_u64(in, "data of " + name);
    double d;
    std::memcpy(&d, &bits, 8);
    t.data[i] = d;
  }
  return {std::move(name), std::move(t)};
}

json config_to_json(const RetrievalModel& model, MetadataKind metadata) {
  const ModelConfig& c = model.config;
  json j;
  j["embed_dim"] = c.embed_dim;
  j["frame_dim"] = c.frame_dim;
  j["text_layers"] = c.text_layers;
  j["audio_layers"] = c.audio_layers;
  j["fusion_layers"] = c.fusion_layers;
  j["heads"] = c.heads;
  j["ffn_mult"] = c.ffn_mult;
  j["max_text_tokens"] = c.max_text_tokens;
  j["layer_norm_eps"] = c.layer_norm_eps;
  j["mode"] = fusion_mode_name(c.mode);
  j["shared_text_encoder"] = c.shared_text_encoder;
  j["late_normalize"] = c.late_normalize;
  j["metadata"] = metadata_kind_name(metadata);
  json vocab = json::array();
  const std::vector<std::string>& tokens = model.vocab.tokens();
  for (size_t i = 3; i < tokens.size(); ++i) vocab.push_back(tokens[i]);
  j["vocab"] = std::move(vocab);
  return j;
}

}  // namespace

void save_checkpoint(const std::string& path, RetrievalModel& model, MetadataKind metadata,
                     AdamOptimizer* opt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, 8);

  const std::string config = config_to_json(model, metadata).dump();
  write_u64(out, config.size());
  out.write(config.data(), static_cast<std::streamsize>(config.size()));

  const std::vector<Parameter*> params = model.parameters();
  uint64_t count = params.size();
  if (opt != nullptr) count += 2 * opt->params().size() + 1;
  write_u64(out, count);
  for (const Parameter* p : params) write_tensor(out, p->name, p->value);
  if (opt != nullptr) {
    const std::vector<Parameter*>& opt_params = opt->params();
    for (size_t i = 0; i < opt_params.size(); ++i) {
      write_tensor(out, "opt.m." + opt_params[i]->name, opt->moment1(i));
      write_tensor(out, "opt.v." + opt_params[i]->name, opt->moment2(i));
    }
    Tensor2D step(1, 1);
    step.at(0, 0) = static_cast<double>(opt->step_count());
    write_tensor(out, "opt.step", step);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }

  const uint64_t config_len = read_u64(in, "config length");
  if (config_len > (1u << 26)) throw std::runtime_error("checkpoint: implausible config size");
  std::string config_text(config_len, '\0');
  in.read(config_text.data(), static_cast<std::streamsize>(config_len));
  if (!in) throw std::runtime_error("checkpoint: truncated config block");
  json j;
  try {
    j = json::parse(config_text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint: malformed config block: ") + e.what());
  }

  ModelConfig cfg;
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.frame_dim = j.at("frame_dim").get<int>();
  cfg.text_layers = j.at("text_layers").get<int>();
  cfg.audio_layers = j.at("audio_layers").get<int>();
  cfg.fusion_layers = j.at("fusion_layers").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.ffn_mult = j.at("ffn_mult").get<int>();
  cfg.max_text_tokens = j.at("max_text_tokens").get<int>();
  cfg.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  cfg.mode = parse_fusion_mode(j.at("mode").get<std::string>());
  cfg.shared_text_encoder = j.at("shared_text_encoder").get<bool>();
  cfg.late_normalize = j.at("late_normalize").get<bool>();

  Vocabulary vocab;
  for (const json& tok : j.at("vocab")) vocab.add_token(tok.get<std::string>());

  LoadedCheckpoint loaded;
  loaded.model = RetrievalModel(cfg, vocab);
  loaded.metadata = parse_metadata_kind(j.at("metadata").get<std::string>());

  std::unordered_map<std::string, Parameter*> by_name;
  for (Parameter* p : loaded.model.parameters()) by_name.emplace(p->name, p);
  std::unordered_map<std::string, bool> filled;
  for (const auto& [name, p] : by_name) filled.emplace(name, false);

  const uint64_t count = read_u64(in, "tensor count");
  for (uint64_t k = 0; k < count; ++k) {
    auto [name, tensor] = read_tensor(in);
    if (name.rfind("opt.", 0) == 0) {
      if (name == "opt.step") {
        loaded.has_optimizer = true;
        loaded.opt_step = static_cast<long>(tensor.at(0, 0));
      } else {
        loaded.opt_tensors.emplace_back(std::move(name), std::move(tensor));
      }
      continue;
    }
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw std::runtime_error("checkpoint: unexpected tensor \"" + name + "\"");
    }
    if (!it->second->value.same_shape(tensor)) {
      throw std::runtime_error("checkpoint: tensor \"" + name + "\" has shape " +
                               tensor.shape_str() + ", expected " +
                               it->second->value.shape_str());
    }
    it->second->value = std::move(tensor);
    filled[name] = true;
  }
  for (const auto& [name, was_filled] : filled) {
    if (!was_filled) throw std::runtime_error("checkpoint: missing tensor \"" + name + "\"");
  }
  return loaded;
}

void restore_optimizer(AdamOptimizer& opt, const LoadedCheckpoint& loaded) {
  if (!loaded.has_optimizer) {
    throw std::runtime_error("checkpoint: no optimizer state stored");
  }
  std::unordered_map<std::string, const Tensor2D*> by_name;
  for (const auto& [name, tensor] : loaded.opt_tensors) by_name.emplace(name, &tensor);
  const std::vector<Parameter*>& params = opt.params();
  for (size_t i = 0; i < params.size(); ++i) {
    for (const char* prefix : {"opt.m.", "opt.v."}) {
      const std::string key = prefix + params[i]->name;
      const auto it = by_name.find(key);
      if (it == by_name.end()) {
        throw std::runtime_error("checkpoint: missing tensor \"" + key + "\"");
      }
      Tensor2D& target = prefix[4] == 'm' ? opt.moment1(i) : opt.moment2(i);
      if (!target.same_shape(*it->second)) {
        throw std::runtime_error("checkpoint: tensor \"" + key + "\" shape mismatch");
      }
      target = *it->second;
    }
  }
  opt.set_step_count(loaded.opt_step);
}

}  // namespace fusebed
