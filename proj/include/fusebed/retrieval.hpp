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
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fusebed/data.hpp"
#include "fusebed/model.hpp"

namespace fusebed {

// Frozen item-side state for ranking. Content/metadata/late modes
// store one embedding row per item; mid mode caches the raw
// (audio sequence, metadata embedding) pairs plus the transformed
// audio/metadata tokens, which are query-independent.
struct RetrievalIndex {
  FusionMode mode = FusionMode::kContent;
  std::vector<std::string> ids;
  Tensor2D embeddings;  // N x d, unused in mid mode

  std::vector<Tensor2D> audio_seqs;    // mid: encoder output sequences
  std::vector<Tensor2D> meta_embs;     // mid: metadata embeddings
  std::vector<Tensor2D> audio_tokens;  // mid: fused audio token per item
  std::vector<Tensor2D> meta_tokens;   // mid: fused metadata token per item

  int size() const { return static_cast<int>(ids.size()); }
  // Position of an id; throws std::out_of_range on unknown ids.
  int position_of(const std::string& id) const;

  std::unordered_map<std::string, int> id_positions;
};

// Embeds every item according to the model's fusion mode. Item order
// (and therefore tie-breaking order) follows the input order.
RetrievalIndex build_index(const std::vector<const Item*>& items, const RetrievalModel& model,
                           MetadataKind kind);

struct ScoredItem {
  std::string id;
  double score = 0.0;
};

// Scores the raw query text against every indexed item and returns the
// top min(k, N), scores descending, ties broken by item insertion
// order.
std::vector<ScoredItem> rank_items(const RetrievalIndex& index, const std::string& query_text,
                                   const RetrievalModel& model, int k);

// All item scores for a query, in index insertion order.
std::vector<double> score_all(const RetrievalIndex& index, const std::string& query_text,
                              const RetrievalModel& model);

// 1-based rank of each (query text, target id) pair under the full
// ranking. Unknown target ids raise std::out_of_range.
std::vector<int> compute_ranks(const RetrievalIndex& index, const RetrievalModel& model,
                               const std::vector<std::pair<std::string, std::string>>& queries);

// 1/rank when rank <= k, else 0. rank is 1-based; rank < 1 throws.
double average_precision_at_k(int rank, int k);
// Mean inverse-rank weight over queries; empty input throws.
double map_at_k(const std::vector<int>& ranks, int k);
// Fraction of ranks <= k; empty input throws.
double recall_at_k(const std::vector<int>& ranks, int k);

struct SplitMetrics {
  double map10 = 0.0;
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  int n_queries = 0;
};

// Queries each item of the split with its first caption against an
// index over the same split (FS metadata uses the second caption, so
// query and metadata never coincide).
SplitMetrics evaluate_split(const RetrievalModel& model, const Dataset& data,
                            const std::vector<std::string>& ids, MetadataKind kind);

struct ModeReport {
  FusionMode mode = FusionMode::kContent;
  std::vector<SplitMetrics> per_seed;
  SplitMetrics mean;
};

struct EvalReport {
  int n_items = 0;
  int n_queries = 0;
  MetadataKind metadata = MetadataKind::kOs;
  std::vector<uint64_t> seeds;
  std::vector<ModeReport> modes;
};

// Supplies a ready-to-evaluate model for (seed, mode) — typically a
// freshly trained one; evaluation itself is deterministic.
using ModelProvider = std::function<RetrievalModel(uint64_t seed, FusionMode mode)>;

EvalReport evaluate_benchmark(const ModelProvider& provider, const Dataset& data,
                              const std::vector<FusionMode>& modes,
                              const std::vector<uint64_t>& seeds, MetadataKind kind);

// One record per (mode, seed) plus one mean record per mode.
void write_report_jsonl(const EvalReport& report, const std::string& path);
// Fixed-width table with columns map@10, delta map@10 (vs the content
// row when present), R@1, R@5, R@10.
std::string format_report_table(const EvalReport& report);

}  // namespace fusebed
