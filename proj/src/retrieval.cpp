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

#include "fusebed/retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fusebed/ops.hpp"

namespace fusebed {

using nlohmann::json;

int RetrievalIndex::position_of(const std::string& id) const {
  const auto it = id_positions.find(id);
  if (it == id_positions.end()) {
    throw std::out_of_range("index: unknown item id \"" + id + "\"");
  }
  return it->second;
}

namespace {

Tensor2D normalized_copy(const Tensor2D& v, const std::string& what) {
  const double n = l2_norm(v);
  if (n == 0.0) throw std::domain_error(what + ": zero-norm embedding");
  Tensor2D out = v;
  out.scale_(1.0 / n);
  return out;
}

Tensor2D item_embedding(const Item& item, const RetrievalModel& model, MetadataKind kind) {
  switch (model.config.mode) {
    case FusionMode::kContent:
      return model.audio.forward(item.frames).pooled;
    case FusionMode::kMetadata:
      return model.embed_metadata(metadata_to_text(item, kind));
    case FusionMode::kLate: {
      Tensor2D a = model.audio.forward(item.frames).pooled;
      Tensor2D m = model.embed_metadata(metadata_to_text(item, kind));
      if (model.config.late_normalize) {
        a = normalized_copy(a, "late_fuse audio");
        m = normalized_copy(m, "late_fuse metadata");
      }
      return late_fuse(a, m);
    }
    case FusionMode::kMid:
      throw std::logic_error("item_embedding: mid mode caches sequences instead");
  }
  throw std::invalid_argument("mode: unknown enum value");
}

}  // namespace

RetrievalIndex build_index(const std::vector<const Item*>& items, const RetrievalModel& model,
                           MetadataKind kind) {
  if (items.empty()) throw std::invalid_argument("build_index: no items");
  RetrievalIndex index;
  index.mode = model.config.mode;
  const int n = static_cast<int>(items.size());
  index.ids.reserve(static_cast<size_t>(n));

  if (index.mode == FusionMode::kMid) {
    index.audio_seqs.reserve(static_cast<size_t>(n));
    index.meta_embs.reserve(static_cast<size_t>(n));
    index.audio_tokens.reserve(static_cast<size_t>(n));
    index.meta_tokens.reserve(static_cast<size_t>(n));
    for (const Item* item : items) {
      Tensor2D seq = model.audio.forward(item->frames).transformed_seq;
      Tensor2D meta = model.embed_metadata(metadata_to_text(*item, kind));
      MidItemCache cache;
      model.mid->fuse_item(seq, meta, cache);
      index.audio_seqs.push_back(std::move(seq));
      index.meta_embs.push_back(std::move(meta));
      index.audio_tokens.push_back(cache.audio_token);
      index.meta_tokens.push_back(cache.meta_token);
      index.ids.push_back(item->id);
    }
  } else {
    index.embeddings = Tensor2D(n, model.config.embed_dim);
    for (int i = 0; i < n; ++i) {
      const Tensor2D emb = item_embedding(*items[static_cast<size_t>(i)], model, kind);
      index.embeddings.set_row(i, emb);
      index.ids.push_back(items[static_cast<size_t>(i)]->id);
    }
  }

  index.id_positions.reserve(index.ids.size());
  for (int i = 0; i < n; ++i) {
    const auto [it, inserted] = index.id_positions.emplace(index.ids[static_cast<size_t>(i)], i);
    if (!inserted) {
      throw std::invalid_argument("build_index: duplicate item id \"" +
                                  index.ids[static_cast<size_t>(i)] + "\"");
    }
  }
  return index;
}

std::vector<double> score_all(const RetrievalIndex& index, const std::string& query_text,
                              const RetrievalModel& model) {
  const Tensor2D q = model.embed_query(query_text);
  const int n = index.size();
  std::vector<double> scores(static_cast<size_t>(n));
  if (index.mode == FusionMode::kMid) {
    MidQueryCache qc;
    model.mid->prepare_query(q, qc);
    const double w_audio = qc.weights.at(0, 0);
    const double w_meta = qc.weights.at(0, 1);
    for (int i = 0; i < n; ++i) {
      scores[static_cast<size_t>(i)] =
          w_audio * cosine_sim(qc.audio_query, index.audio_tokens[static_cast<size_t>(i)]) +
          w_meta * cosine_sim(qc.meta_query, index.meta_tokens[static_cast<size_t>(i)]);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      scores[static_cast<size_t>(i)] = cosine_sim(q, index.embeddings.row(i));
    }
  }
  return scores;
}

namespace {

// Indices sorted by score descending, equal scores keeping insertion
// order.
std::vector<int> ranking_order(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });
  return order;
}

}  // namespace

std::vector<ScoredItem> rank_items(const RetrievalIndex& index, const std::string& query_text,
                                   const RetrievalModel& model, int k) {
  if (k < 1) throw std::invalid_argument("k: must be at least 1");
  const std::vector<double> scores = score_all(index, query_text, model);
  const std::vector<int> order = ranking_order(scores);
  const int take = std::min(k, index.size());
  std::vector<ScoredItem> out;
  out.reserve(static_cast<size_t>(take));
  for (int r = 0; r < take; ++r) {
    const int i = order[static_cast<size_t>(r)];
    out.push_back({index.ids[static_cast<size_t>(i)], scores[static_cast<size_t>(i)]});
  }
  return out;
}

std::vector<int> compute_ranks(const RetrievalIndex& index, const RetrievalModel& model,
                               const std::vector<std::pair<std::string, std::string>>& queries) {
  std::vector<int> ranks;
  ranks.reserve(queries.size());
  for (const auto& [text, target_id] : queries) {
    const int target = index.position_of(target_id);
    const std::vector<double> scores = score_all(index, text, model);
    const std::vector<int> order = ranking_order(scores);
    for (int r = 0; r < static_cast<int>(order.size()); ++r) {
      if (order[static_cast<size_t>(r)] == target) {
        ranks.push_back(r + 1);
        break;
      }
    }
  }
  return ranks;
}

double average_precision_at_k(int rank, int k) {
  if (rank < 1) {
    throw std::invalid_argument("rank: ranks are 1-based, got " + std::to_string(rank));
  }
  if (k < 1) throw std::invalid_argument("k: must be at least 1");
  return rank <= k ? 1.0 / static_cast<double>(rank) : 0.0;
}

double map_at_k(const std::vector<int>& ranks, int k) {
  if (ranks.empty()) throw std::invalid_argument("ranks: empty evaluation");
  double sum = 0.0;
  for (int r : ranks) sum += average_precision_at_k(r, k);
  return sum / static_cast<double>(ranks.size());
}

double recall_at_k(const std::vector<int>& ranks, int k) {
  if (ranks.empty()) throw std::invalid_argument("ranks: empty evaluation");
  if (k < 1) throw std::invalid_argument("k: must be at least 1");
  int hits = 0;
  for (int r : ranks) {
    if (r < 1) throw std::invalid_argument("rank: ranks are 1-based");
    if (r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

SplitMetrics evaluate_split(const RetrievalModel& model, const Dataset& data,
                            const std::vector<std::string>& ids, MetadataKind kind) {
  const std::vector<const Item*> items = data.split_items(ids);
  const RetrievalIndex index = build_index(items, model, kind);
  std::vector<std::pair<std::string, std::string>> queries;
  queries.reserve(items.size());
  for (const Item* item : items) {
    queries.emplace_back(item->captions.front(), item->id);
  }
  const std::vector<int> ranks = compute_ranks(index, model, queries);
  SplitMetrics m;
  m.map10 = map_at_k(ranks, 10);
  m.r1 = recall_at_k(ranks, 1);
  m.r5 = recall_at_k(ranks, 5);
  m.r10 = recall_at_k(ranks, 10);
  m.n_queries = static_cast<int>(ranks.size());
  return m;
}

EvalReport evaluate_benchmark(const ModelProvider& provider, const Dataset& data,
                              const std::vector<FusionMode>& modes,
                              const std::vector<uint64_t>& seeds, MetadataKind kind) {
  if (modes.empty()) throw std::invalid_argument("modes: empty evaluation");
  if (seeds.empty()) throw std::invalid_argument("seeds: empty evaluation");
  EvalReport report;
  report.metadata = kind;
  report.seeds = seeds;
  report.n_items = static_cast<int>(data.test_ids.size());
  report.n_queries = report.n_items;
  for (FusionMode mode : modes) {
    ModeReport mr;
    mr.mode = mode;
    SplitMetrics mean;
    for (uint64_t seed : seeds) {
      const RetrievalModel model = provider(seed, mode);
      const SplitMetrics m = evaluate_split(model, data, data.test_ids, kind);
      mean.map10 += m.map10;
      mean.r1 += m.r1;
      mean.r5 += m.r5;
      mean.r10 += m.r10;
      mean.n_queries = m.n_queries;
      mr.per_seed.push_back(m);
    }
    const double inv = 1.0 / static_cast<double>(seeds.size());
    mean.map10 *= inv;
    mean.r1 *= inv;
    mean.r5 *= inv;
    mean.r10 *= inv;
    mr.mean = mean;
    report.modes.push_back(std::move(mr));
  }
  return report;
}

void write_report_jsonl(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("report: cannot write " + path);
  for (const ModeReport& mr : report.modes) {
    for (size_t s = 0; s < mr.per_seed.size(); ++s) {
      const SplitMetrics& m = mr.per_seed[s];
      json rec;
      rec["record"] = "per_seed";
      rec["mode"] = fusion_mode_name(mr.mode);
      rec["metadata"] = metadata_kind_name(report.metadata);
      rec["seed"] = report.seeds[s];
      rec["map10"] = m.map10;
      rec["r1"] = m.r1;
      rec["r5"] = m.r5;
      rec["r10"] = m.r10;
      rec["n_items"] = report.n_items;
      rec["n_queries"] = m.n_queries;
      out << rec.dump() << "\n";
    }
  }
  for (const ModeReport& mr : report.modes) {
    json rec;
    rec["record"] = "mean";
    rec["mode"] = fusion_mode_name(mr.mode);
    rec["metadata"] = metadata_kind_name(report.metadata);
    rec["seeds"] = report.seeds.size();
    rec["map10"] = mr.mean.map10;
    rec["r1"] = mr.mean.r1;
    rec["r5"] = mr.mean.r5;
    rec["r10"] = mr.mean.r10;
    rec["n_items"] = report.n_items;
    rec["n_queries"] = mr.mean.n_queries;
    out << rec.dump() << "\n";
  }
}

std::string format_report_table(const EvalReport& report) {
  const ModeReport* content = nullptr;
  for (const ModeReport& mr : report.modes) {
    if (mr.mode == FusionMode::kContent) content = &mr;
  }
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "mode       map@10   Δmap@10  R@1      R@5      R@10\n";
  for (const ModeReport& mr : report.modes) {
    std::string name = fusion_mode_name(mr.mode);
    name.resize(10, ' ');
    os << name << " " << mr.mean.map10 << "   ";
    if (content != nullptr) {
      const double delta = mr.mean.map10 - content->mean.map10;
      os << (delta < 0 ? "-" : "+");
      os.precision(4);
      os << std::abs(delta);
    } else {
      os << "   --  ";
    }
    os << "  " << mr.mean.r1 << "   " << mr.mean.r5 << "   " << mr.mean.r10 << "\n";
  }
  return os.str();
}

}  // namespace fusebed
