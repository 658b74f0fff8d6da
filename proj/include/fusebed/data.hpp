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
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fusebed/audio_encoder.hpp"
#include "fusebed/rng.hpp"

namespace fusebed {

// What kind of metadata accompanies the audio items: closed-set tags,
// open-set tags, full-sentence descriptions, or nothing.
enum class MetadataKind { kCs, kOs, kFs, kNone };

// Accepts "cs", "os", "fs", "none"; throws std::invalid_argument
// otherwise.
MetadataKind parse_metadata_kind(const std::string& name);
std::string metadata_kind_name(MetadataKind kind);

struct Item {
  std::string id;
  FrameSequence frames;
  std::vector<std::string> tags;
  std::vector<std::string> captions;
};

// An immutable collection of items plus train/val/test id lists.
// Loaded via load_dataset, which enforces every invariant (unique ids,
// nonempty captions, disjoint splits, split ids resolvable).
struct Dataset {
  std::vector<Item> items;
  MetadataKind metadata_kind = MetadataKind::kOs;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;

  // Rebuilds the id lookup; throws std::invalid_argument on duplicates.
  void rebuild_index();
  const Item& by_id(const std::string& id) const;
  std::vector<const Item*> split_items(const std::vector<std::string>& ids) const;

 private:
  std::unordered_map<std::string, int> index_;
};

// Directory layout: items.jsonl (one record per line with fields
// "id", "frames", "tags", "captions"), sidecar split files train.ids /
// val.ids / test.ids (one id per line), and meta.json declaring the
// metadata kind. Load errors carry the file and line number.
Dataset load_dataset(const std::string& dir);
void save_dataset(const Dataset& data, const std::string& dir);

// CS/OS: tags joined by single spaces, then text preprocessing.
// FS: the designated metadata caption (the second one). none: "".
std::string metadata_to_text(const Item& item, MetadataKind kind);

// Draws two distinct caption indices; first is the query, second the
// metadata. Requires >= 2 captions.
std::pair<int, int> simulate_fs_split(const Item& item, Rng& rng);

// Synthetic latent-topic corpus. Each item belongs to a topic; frames
// are Gaussian around a topic centroid (plus a per-item offset that is
// uncorrelated with the text); captions mix the topic's keyword pool
// with a small item-specific word pool, so captions of the same item
// resemble each other the way human descriptions of one recording do;
// tags land inside the item's caption vocabulary with probability rho
// per tag. With caption_from_tags set, train/val captions are replaced
// by shuffled copies of the tag list while test captions stay natural.
struct SynthConfig {
  int n_train = 512;
  int n_val = 64;
  int n_test = 128;
  int n_topics = 8;
  int words_per_topic = 8;
  int noise_vocab = 400;
  int item_pool_words = 6;
  int captions_per_item = 5;
  int min_caption_tokens = 6;
  int max_caption_tokens = 12;
  double topic_word_prob = 0.7;
  int tags_per_item = 5;
  double rho = 0.8;
  int min_frames = 12;
  int max_frames = 24;
  int frame_dim = 32;
  double topic_audio_scale = 1.0;
  double item_audio_scale = 0.5;
  double frame_noise_scale = 0.5;
  bool caption_from_tags = false;
  uint64_t seed = 1;

  int total_items() const { return n_train + n_val + n_test; }
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

Dataset generate_synthetic(const SynthConfig& cfg);

}  // namespace fusebed
