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

#include "fusebed/data.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "fusebed/text_encoder.hpp"

namespace fusebed {

using nlohmann::json;

MetadataKind parse_metadata_kind(const std::string& name) {
  if (name == "cs") return MetadataKind::kCs;
  if (name == "os") return MetadataKind::kOs;
  if (name == "fs") return MetadataKind::kFs;
  if (name == "none") return MetadataKind::kNone;
  throw std::invalid_argument("metadata: expected cs|os|fs|none, got \"" + name + "\"");
}

std::string metadata_kind_name(MetadataKind kind) {
  switch (kind) {
    case MetadataKind::kCs: return "cs";
    case MetadataKind::kOs: return "os";
    case MetadataKind::kFs: return "fs";
    case MetadataKind::kNone: return "none";
  }
  throw std::invalid_argument("metadata: unknown enum value");
}

void Dataset::rebuild_index() {
  index_.clear();
  index_.reserve(items.size());
  for (int i = 0; i < static_cast<int>(items.size()); ++i) {
    const auto [it, inserted] = index_.emplace(items[static_cast<size_t>(i)].id, i);
    if (!inserted) {
      throw std::invalid_argument("dataset: duplicate item id \"" +
                                  items[static_cast<size_t>(i)].id + "\"");
    }
  }
}

const Item& Dataset::by_id(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) {
    throw std::out_of_range("dataset: unknown item id \"" + id + "\"");
  }
  return items[static_cast<size_t>(it->second)];
}

std::vector<const Item*> Dataset::split_items(const std::vector<std::string>& ids) const {
  std::vector<const Item*> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) out.push_back(&by_id(id));
  return out;
}

namespace {

std::string loc(const std::string& path, int line) {
  return path + ":" + std::to_string(line) + ": ";
}

Item parse_item_record(const json& rec, const std::string& path, int line) {
  if (!rec.is_object()) throw std::runtime_error(loc(path, line) + "record is not an object");
  for (const char* field : {"id", "frames", "tags", "captions"}) {
    if (!rec.contains(field)) {
      throw std::runtime_error(loc(path, line) + "missing field \"" + field + "\"");
    }
  }
  Item item;
  if (!rec["id"].is_string()) throw std::runtime_error(loc(path, line) + "\"id\" must be a string");
  item.id = rec["id"].get<std::string>();
  if (item.id.empty()) throw std::runtime_error(loc(path, line) + "\"id\" must be nonempty");

  const json& frames = rec["frames"];
  if (!frames.is_array() || frames.empty()) {
    throw std::runtime_error(loc(path, line) + "\"frames\" must be a nonempty array");
  }
  const int t_len = static_cast<int>(frames.size());
  int width = -1;
  for (int t = 0; t < t_len; ++t) {
    const json& row = frames[static_cast<size_t>(t)];
    if (!row.is_array() || row.empty()) {
      throw std::runtime_error(loc(path, line) + "frame " + std::to_string(t) +
                               " must be a nonempty array");
    }
    if (width < 0) {
      width = static_cast<int>(row.size());
      item.frames.frames = Tensor2D(t_len, width);
    } else if (static_cast<int>(row.size()) != width) {
      throw std::runtime_error(loc(path, line) + "frame " + std::to_string(t) +
                               " has width " + std::to_string(row.size()) + ", expected " +
                               std::to_string(width));
    }
    for (int j = 0; j < width; ++j) {
      const json& v = row[static_cast<size_t>(j)];
      if (!v.is_number()) {
        throw std::runtime_error(loc(path, line) + "frame " + std::to_string(t) +
                                 " entry " + std::to_string(j) + " is not a number");
      }
      item.frames.frames.at(t, j) = v.get<double>();
    }
  }

  const json& tags = rec["tags"];
  if (!tags.is_array()) throw std::runtime_error(loc(path, line) + "\"tags\" must be an array");
  for (const json& t : tags) {
    if (!t.is_string()) throw std::runtime_error(loc(path, line) + "tags must be strings");
    item.tags.push_back(t.get<std::string>());
  }

  const json& captions = rec["captions"];
  if (!captions.is_array() || captions.empty()) {
    throw std::runtime_error(loc(path, line) + "\"captions\" must be a nonempty array");
  }
  for (const json& c : captions) {
    if (!c.is_string()) throw std::runtime_error(loc(path, line) + "captions must be strings");
    item.captions.push_back(c.get<std::string>());
  }
  return item;
}

std::vector<std::string> read_id_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot write " + path);
  for (const std::string& l : lines) out << l << "\n";
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  const std::string items_path = dir + "/items.jsonl";
  std::ifstream in(items_path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + items_path);

  Dataset data;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(loc(items_path, line_no) + "malformed record: " + e.what());
    }
    data.items.push_back(parse_item_record(rec, items_path, line_no));
  }
  if (data.items.empty()) {
    throw std::runtime_error(items_path + ": empty dataset");
  }
  data.rebuild_index();

  const std::string meta_path = dir + "/meta.json";
  if (std::ifstream meta_in{meta_path}) {
    json meta;
    try {
      meta = json::parse(meta_in);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(meta_path + ": malformed: " + e.what());
    }
    if (meta.contains("metadata_kind")) {
      data.metadata_kind = parse_metadata_kind(meta["metadata_kind"].get<std::string>());
    }
  }

  data.train_ids = read_id_list(dir + "/train.ids");
  data.val_ids = read_id_list(dir + "/val.ids");
  data.test_ids = read_id_list(dir + "/test.ids");

  std::unordered_set<std::string> seen;
  for (const auto* split : {&data.train_ids, &data.val_ids, &data.test_ids}) {
    for (const std::string& id : *split) {
      data.by_id(id);  // throws if the id does not resolve
      if (!seen.insert(id).second) {
        throw std::runtime_error("load_dataset: id \"" + id +
                                 "\" appears in more than one split");
      }
    }
  }
  return data;
}

void save_dataset(const Dataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string items_path = dir + "/items.jsonl";
  std::ofstream out(items_path);
  if (!out) throw std::runtime_error("save_dataset: cannot write " + items_path);
  for (const Item& item : data.items) {
    json rec;
    rec["id"] = item.id;
    json frames = json::array();
    for (int t = 0; t < item.frames.length(); ++t) {
      json row = json::array();
      for (int j = 0; j < item.frames.feature_width(); ++j) {
        row.push_back(item.frames.frames.at(t, j));
      }
      frames.push_back(std::move(row));
    }
    rec["frames"] = std::move(frames);
    rec["tags"] = item.tags;
    rec["captions"] = item.captions;
    out << rec.dump() << "\n";
  }

  json meta;
  meta["metadata_kind"] = metadata_kind_name(data.metadata_kind);
  std::ofstream meta_out(dir + "/meta.json");
  meta_out << meta.dump() << "\n";

  write_lines(dir + "/train.ids", data.train_ids);
  write_lines(dir + "/val.ids", data.val_ids);
  write_lines(dir + "/test.ids", data.test_ids);
}

std::string metadata_to_text(const Item& item, MetadataKind kind) {
  switch (kind) {
    case MetadataKind::kCs:
    case MetadataKind::kOs: {
      std::string joined;
      for (size_t i = 0; i < item.tags.size(); ++i) {
        if (i > 0) joined += ' ';
        joined += item.tags[i];
      }
      return preprocess_text(joined);
    }
    case MetadataKind::kFs:
      if (item.captions.size() < 2) {
        throw std::invalid_argument("metadata: item \"" + item.id +
                                    "\" needs at least 2 captions for full-sentence "
                                    "metadata");
      }
      return preprocess_text(item.captions[1]);
    case MetadataKind::kNone:
      return "";
  }
  throw std::invalid_argument("metadata: unknown enum value");
}

std::pair<int, int> simulate_fs_split(const Item& item, Rng& rng) {
  const int n = static_cast<int>(item.captions.size());
  if (n < 2) {
    throw std::invalid_argument("metadata: item \"" + item.id +
                                "\" needs at least 2 captions for a query/metadata split");
  }
  const int query = rng.uniform_int(n);
  int meta = rng.uniform_int(n - 1);
  if (meta >= query) ++meta;
  return {query, meta};
}

void SynthConfig::validate() const {
  if (n_train < 1) throw std::invalid_argument("n_train: must be at least 1");
  if (n_val < 0) throw std::invalid_argument("n_val: must be non-negative");
  if (n_test < 1) throw std::invalid_argument("n_test: must be at least 1");
  if (n_topics < 2) throw std::invalid_argument("n_topics: must be at least 2");
  if (words_per_topic < 1) throw std::invalid_argument("words_per_topic: must be at least 1");
  if (item_pool_words < 1) throw std::invalid_argument("item_pool_words: must be at least 1");
  if (noise_vocab < item_pool_words) {
    throw std::invalid_argument("noise_vocab: must be at least item_pool_words");
  }
  if (captions_per_item < 1) {
    throw std::invalid_argument("captions_per_item: must be at least 1");
  }
  if (min_caption_tokens < 1 || max_caption_tokens < min_caption_tokens) {
    throw std::invalid_argument("caption_tokens: need 1 <= min <= max");
  }
  if (topic_word_prob < 0.0 || topic_word_prob > 1.0) {
    throw std::invalid_argument("topic_word_prob: must be in [0, 1]");
  }
  if (tags_per_item < 1) throw std::invalid_argument("tags_per_item: must be at least 1");
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("rho: must be in [0, 1]");
  if (min_frames < 1 || max_frames < min_frames) {
    throw std::invalid_argument("frames: need 1 <= min <= max");
  }
  if (frame_dim < 1) throw std::invalid_argument("frame_dim: must be at least 1");
  if (topic_audio_scale < 0.0) throw std::invalid_argument("topic_audio_scale: must be >= 0");
  if (item_audio_scale < 0.0) throw std::invalid_argument("item_audio_scale: must be >= 0");
  if (frame_noise_scale < 0.0) throw std::invalid_argument("frame_noise_scale: must be >= 0");
}

namespace {

std::string make_word(Rng& rng) {
  static constexpr char kConsonants[] = "bdfghjklmnprstvz";
  static constexpr char kVowels[] = "aeiou";
  const int syllables = rng.uniform_int_range(2, 3);
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += kConsonants[rng.uniform_int(16)];
    w += kVowels[rng.uniform_int(5)];
  }
  return w;
}

std::vector<std::string> make_unique_words(int n, Rng& rng) {
  std::vector<std::string> words;
  words.reserve(static_cast<size_t>(n));
  std::unordered_set<std::string> seen;
  while (static_cast<int>(words.size()) < n) {
    std::string w = make_word(rng);
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

std::string item_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "item%05d", index);
  return buf;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  const int n_words = cfg.n_topics * cfg.words_per_topic + cfg.noise_vocab;
  const std::vector<std::string> words = make_unique_words(n_words, rng);
  const int noise_base = cfg.n_topics * cfg.words_per_topic;

  std::vector<Tensor2D> topic_means;
  topic_means.reserve(static_cast<size_t>(cfg.n_topics));
  for (int t = 0; t < cfg.n_topics; ++t) {
    Tensor2D mu(1, cfg.frame_dim);
    for (int j = 0; j < cfg.frame_dim; ++j) mu.at(0, j) = rng.normal() * cfg.topic_audio_scale;
    topic_means.push_back(std::move(mu));
  }

  Dataset data;
  data.metadata_kind = MetadataKind::kOs;
  const int total = cfg.total_items();
  data.items.reserve(static_cast<size_t>(total));

  for (int i = 0; i < total; ++i) {
    Item item;
    item.id = item_id(i);
    const int topic = i % cfg.n_topics;

    std::vector<int> pool;
    std::unordered_set<int> pool_seen;
    while (static_cast<int>(pool.size()) < cfg.item_pool_words) {
      const int w = noise_base + rng.uniform_int(cfg.noise_vocab);
      if (pool_seen.insert(w).second) pool.push_back(w);
    }

    Tensor2D offset(1, cfg.frame_dim);
    for (int j = 0; j < cfg.frame_dim; ++j) {
      offset.at(0, j) = rng.normal() * cfg.item_audio_scale;
    }
    const int t_len = rng.uniform_int_range(cfg.min_frames, cfg.max_frames);
    item.frames.frames = Tensor2D(t_len, cfg.frame_dim);
    for (int t = 0; t < t_len; ++t) {
      for (int j = 0; j < cfg.frame_dim; ++j) {
        item.frames.frames.at(t, j) = topic_means[static_cast<size_t>(topic)].at(0, j) +
                                      offset.at(0, j) + rng.normal() * cfg.frame_noise_scale;
      }
    }

    for (int c = 0; c < cfg.captions_per_item; ++c) {
      const int len = rng.uniform_int_range(cfg.min_caption_tokens, cfg.max_caption_tokens);
      std::string caption;
      for (int k = 0; k < len; ++k) {
        int word_index;
        if (rng.uniform() < cfg.topic_word_prob) {
          word_index = topic * cfg.words_per_topic + rng.uniform_int(cfg.words_per_topic);
        } else {
          word_index = pool[static_cast<size_t>(rng.uniform_int(cfg.item_pool_words))];
        }
        if (k > 0) caption += ' ';
        caption += words[static_cast<size_t>(word_index)];
      }
      item.captions.push_back(std::move(caption));
    }

    // Realized caption vocabulary in first-appearance order; tags are
    // drawn from it with probability rho, from outside it otherwise.
    std::vector<std::string> cap_vocab;
    std::unordered_set<std::string> cap_seen;
    for (const std::string& caption : item.captions) {
      for (const std::string& tok : split_whitespace(caption)) {
        if (cap_seen.insert(tok).second) cap_vocab.push_back(tok);
      }
    }
    for (int g = 0; g < cfg.tags_per_item; ++g) {
      if (rng.uniform() < cfg.rho) {
        item.tags.push_back(cap_vocab[static_cast<size_t>(
            rng.uniform_int(static_cast<int>(cap_vocab.size())))]);
      } else {
        std::string tag;
        do {
          tag = words[static_cast<size_t>(rng.uniform_int(n_words))];
        } while (cap_seen.count(tag) > 0);
        item.tags.push_back(std::move(tag));
      }
    }

    if (cfg.caption_from_tags && i < cfg.n_train + cfg.n_val) {
      std::vector<std::string> degraded;
      for (int c = 0; c < cfg.captions_per_item; ++c) {
        std::vector<std::string> shuffled = item.tags;
        rng.shuffle(shuffled);
        std::string caption;
        for (size_t k = 0; k < shuffled.size(); ++k) {
          if (k > 0) caption += ' ';
          caption += shuffled[k];
        }
        degraded.push_back(std::move(caption));
      }
      item.captions = std::move(degraded);
    }

    data.items.push_back(std::move(item));
  }

  for (int i = 0; i < cfg.n_train; ++i) data.train_ids.push_back(data.items[i].id);
  for (int i = cfg.n_train; i < cfg.n_train + cfg.n_val; ++i) {
    data.val_ids.push_back(data.items[static_cast<size_t>(i)].id);
  }
  for (int i = cfg.n_train + cfg.n_val; i < total; ++i) {
    data.test_ids.push_back(data.items[static_cast<size_t>(i)].id);
  }
  data.rebuild_index();
  return data;
}

}  // namespace fusebed
