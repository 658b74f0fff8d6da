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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "fusebed/data.hpp"
#include "fusebed/model.hpp"
#include "fusebed/ops.hpp"
#include "fusebed/retrieval.hpp"
#include "fusebed/training.hpp"

using namespace fusebed;

namespace {

SynthConfig small_synth(int n, uint64_t seed) {
  SynthConfig sc;
  sc.n_train = n;
  sc.n_val = 0;
  sc.n_test = std::max(1, n / 4);
  sc.n_topics = 2;
  sc.words_per_topic = 4;
  sc.noise_vocab = 40;
  sc.min_frames = 3;
  sc.max_frames = 7;
  sc.frame_dim = 6;
  sc.seed = seed;
  return sc;
}

RetrievalModel untrained_model(const Dataset& data, FusionMode mode, MetadataKind kind,
                               uint64_t seed) {
  ModelConfig mc;
  mc.embed_dim = 16;
  mc.frame_dim = data.items[0].frames.feature_width();
  mc.text_layers = 1;
  mc.audio_layers = 1;
  mc.fusion_layers = 1;
  mc.heads = 2;
  mc.ffn_mult = 2;
  mc.mode = mode;
  RetrievalModel model(mc, build_vocabulary(data, kind));
  model.init(seed);
  return model;
}

// Scores one (item, query) pair straight from the encoders, bypassing
// RetrievalIndex entirely.
double reference_score(const RetrievalModel& model, const Item& item, const std::string& query,
                       MetadataKind kind) {
  const Tensor2D q = model.embed_query(query);
  const AudioEncoding enc = model.audio.forward(item.frames);
  switch (model.config.mode) {
    case FusionMode::kContent:
      return cosine_sim(q, enc.pooled);
    case FusionMode::kMetadata:
      return cosine_sim(q, model.embed_metadata(metadata_to_text(item, kind)));
    case FusionMode::kLate: {
      Tensor2D a = enc.pooled;
      Tensor2D m = model.embed_metadata(metadata_to_text(item, kind));
      if (model.config.late_normalize) {
        a.scale_(1.0 / l2_norm(a));
        m.scale_(1.0 / l2_norm(m));
      }
      return cosine_sim(q, late_fuse(a, m));
    }
    case FusionMode::kMid:
      return model.mid->score(enc.transformed_seq,
                              model.embed_metadata(metadata_to_text(item, kind)), q);
  }
  throw std::logic_error("unreachable");
}

std::vector<const Item*> split_ptrs(const Dataset& d, const std::vector<std::string>& ids) {
  return d.split_items(ids);
}

}  // namespace

TEST_SUITE("retrieval") {
  TEST_CASE("average precision of a single relevant item") {
    CHECK(average_precision_at_k(1, 10) == 1.0);
    CHECK(average_precision_at_k(2, 10) == 0.5);
    CHECK(average_precision_at_k(10, 10) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(average_precision_at_k(11, 10) == 0.0);
    CHECK(average_precision_at_k(3, 2) == 0.0);
    CHECK_THROWS_AS(average_precision_at_k(0, 10), std::invalid_argument);
    CHECK_THROWS_AS(average_precision_at_k(-3, 10), std::invalid_argument);
  }

  TEST_CASE("map and recall over hand-computed rank lists") {
    const std::vector<int> ranks{2, 20};
    CHECK(map_at_k(ranks, 10) == 0.25);
    CHECK(recall_at_k(ranks, 10) == 0.5);
    CHECK(recall_at_k(ranks, 1) == 0.0);

    const std::vector<int> three{1, 2, 5};
    CHECK(map_at_k(three, 5) == doctest::Approx((1.0 + 0.5 + 0.2) / 3.0).epsilon(1e-15));
    CHECK(recall_at_k(three, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(recall_at_k(three, 5) == 1.0);

    CHECK_THROWS_AS(map_at_k({}, 10), std::invalid_argument);
    CHECK_THROWS_AS(recall_at_k({}, 10), std::invalid_argument);
  }

  TEST_CASE("recall is monotone in k") {
    const std::vector<int> ranks{3, 1, 8, 2, 14, 6};
    double prev = 0.0;
    for (int k = 1; k <= 15; ++k) {
      const double r = recall_at_k(ranks, k);
      CHECK(r >= prev);
      prev = r;
    }
    CHECK(prev == 1.0);
  }

  TEST_CASE("index ranking matches a brute-force rescore in every mode") {
    const Dataset data = generate_synthetic(small_synth(12, 60));
    const std::vector<const Item*> items = split_ptrs(data, data.train_ids);
    int instance = 0;
    for (FusionMode mode :
         {FusionMode::kContent, FusionMode::kMetadata, FusionMode::kLate, FusionMode::kMid}) {
      for (uint64_t seed : {1ull, 2ull, 3ull}) {
        const MetadataKind kind =
            mode == FusionMode::kContent ? MetadataKind::kNone : MetadataKind::kOs;
        const RetrievalModel model = untrained_model(data, mode, kind, seed);
        const RetrievalIndex index = build_index(items, model, kind);

        const std::string query = data.items[instance % data.items.size()].captions[0];
        ++instance;

        std::vector<double> expect(items.size());
        for (size_t i = 0; i < items.size(); ++i) {
          expect[i] = reference_score(model, *items[i], query, kind);
        }
        const std::vector<double> got = score_all(index, query, model);
        REQUIRE(got.size() == expect.size());
        for (size_t i = 0; i < got.size(); ++i) {
          CHECK(std::fabs(got[i] - expect[i]) < 1e-12);
        }

        // Full ranking agrees with a stable sort of the reference scores.
        std::vector<size_t> order(items.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return expect[a] > expect[b]; });
        const auto ranked = rank_items(index, query, model, static_cast<int>(items.size()));
        REQUIRE(ranked.size() == items.size());
        for (size_t r = 0; r < ranked.size(); ++r) {
          CHECK(ranked[r].id == items[order[r]]->id);
          CHECK(std::fabs(ranked[r].score - expect[order[r]]) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("late normalization ablation changes scores but not the oracle") {
    const Dataset data = generate_synthetic(small_synth(8, 61));
    const std::vector<const Item*> items = split_ptrs(data, data.train_ids);
    ModelConfig mc;
    mc.embed_dim = 16;
    mc.frame_dim = data.items[0].frames.feature_width();
    mc.text_layers = 1;
    mc.audio_layers = 1;
    mc.heads = 2;
    mc.ffn_mult = 2;
    mc.mode = FusionMode::kLate;
    mc.late_normalize = true;
    RetrievalModel model(mc, build_vocabulary(data, MetadataKind::kOs));
    model.init(4);

    const RetrievalIndex index = build_index(items, model, MetadataKind::kOs);
    const std::string query = data.items[0].captions[0];
    const std::vector<double> got = score_all(index, query, model);
    for (size_t i = 0; i < items.size(); ++i) {
      CHECK(std::fabs(got[i] - reference_score(model, *items[i], query, MetadataKind::kOs)) <
            1e-12);
    }
  }

  TEST_CASE("ties keep insertion order") {
    Dataset d;
    for (int i = 0; i < 5; ++i) {
      Item item;
      item.id = "clone" + std::to_string(i);
      item.frames.frames = Tensor2D(3, 6, 0.25);
      item.tags = {"same"};
      item.captions = {"identical clip", "identical clip"};
      d.items.push_back(item);
      d.train_ids.push_back(item.id);
    }
    d.rebuild_index();
    const RetrievalModel model = untrained_model(d, FusionMode::kLate, MetadataKind::kOs, 2);
    const RetrievalIndex index = build_index(split_ptrs(d, d.train_ids), model, MetadataKind::kOs);
    const auto ranked = rank_items(index, "identical clip", model, 5);
    REQUIRE(ranked.size() == 5);
    for (int i = 0; i < 5; ++i) {
      CHECK(ranked[static_cast<size_t>(i)].id == "clone" + std::to_string(i));
    }
    // Every clone therefore occupies the rank of its insertion slot.
    std::vector<std::pair<std::string, std::string>> queries;
    for (int i = 0; i < 5; ++i) queries.emplace_back("identical clip", "clone" + std::to_string(i));
    const std::vector<int> ranks = compute_ranks(index, model, queries);
    for (int i = 0; i < 5; ++i) CHECK(ranks[static_cast<size_t>(i)] == i + 1);
  }

  TEST_CASE("rank_items truncates to min(k, n) and rejects bad k") {
    const Dataset data = generate_synthetic(small_synth(6, 62));
    const RetrievalModel model = untrained_model(data, FusionMode::kContent, MetadataKind::kNone, 1);
    const RetrievalIndex index =
        build_index(split_ptrs(data, data.train_ids), model, MetadataKind::kNone);
    const std::string q = data.items[0].captions[0];
    CHECK(rank_items(index, q, model, 3).size() == 3);
    CHECK(rank_items(index, q, model, 100).size() == 6);
    CHECK_THROWS_AS(rank_items(index, q, model, 0), std::invalid_argument);
    CHECK_THROWS_AS(rank_items(index, q, model, -1), std::invalid_argument);

    // Top-k is a prefix of the full ranking.
    const auto full = rank_items(index, q, model, 6);
    const auto top = rank_items(index, q, model, 2);
    CHECK(top[0].id == full[0].id);
    CHECK(top[1].id == full[1].id);
    CHECK(std::is_sorted(full.begin(), full.end(),
                         [](const ScoredItem& a, const ScoredItem& b) { return a.score > b.score; }));
  }

  TEST_CASE("the cached mid-fusion path equals the pairwise path") {
    const Dataset data = generate_synthetic(small_synth(7, 63));
    const std::vector<const Item*> items = split_ptrs(data, data.train_ids);
    const RetrievalModel model = untrained_model(data, FusionMode::kMid, MetadataKind::kOs, 5);
    const RetrievalIndex index = build_index(items, model, MetadataKind::kOs);
    REQUIRE(index.audio_tokens.size() == items.size());
    for (const std::string& query : {data.items[1].captions[0], data.items[4].captions[1]}) {
      const std::vector<double> cached = score_all(index, query, model);
      for (size_t i = 0; i < items.size(); ++i) {
        const double pairwise = reference_score(model, *items[i], query, MetadataKind::kOs);
        CHECK(std::fabs(cached[i] - pairwise) < 1e-15);
      }
    }
  }

  TEST_CASE("index lookup and input validation") {
    const Dataset data = generate_synthetic(small_synth(4, 64));
    const RetrievalModel model = untrained_model(data, FusionMode::kContent, MetadataKind::kNone, 1);
    const std::vector<const Item*> items = split_ptrs(data, data.train_ids);
    const RetrievalIndex index = build_index(items, model, MetadataKind::kNone);
    CHECK(index.size() == 4);
    CHECK(index.position_of(items[2]->id) == 2);
    CHECK_THROWS_AS(index.position_of("missing"), std::out_of_range);

    CHECK_THROWS_AS(build_index({}, model, MetadataKind::kNone), std::invalid_argument);
    std::vector<const Item*> dup = {items[0], items[0]};
    CHECK_THROWS_AS(build_index(dup, model, MetadataKind::kNone), std::invalid_argument);

    std::vector<std::pair<std::string, std::string>> bad{{"query", "missing"}};
    CHECK_THROWS_AS(compute_ranks(index, model, bad), std::out_of_range);
  }

  TEST_CASE("evaluate_split replays the first-caption protocol") {
    const Dataset data = generate_synthetic(small_synth(10, 65));
    const RetrievalModel model = untrained_model(data, FusionMode::kLate, MetadataKind::kOs, 6);
    const SplitMetrics m = evaluate_split(model, data, data.train_ids, MetadataKind::kOs);
    CHECK(m.n_queries == 10);

    const std::vector<const Item*> items = split_ptrs(data, data.train_ids);
    const RetrievalIndex index = build_index(items, model, MetadataKind::kOs);
    std::vector<std::pair<std::string, std::string>> queries;
    for (const Item* item : items) queries.emplace_back(item->captions[0], item->id);
    const std::vector<int> ranks = compute_ranks(index, model, queries);
    CHECK(m.map10 == map_at_k(ranks, 10));
    CHECK(m.r1 == recall_at_k(ranks, 1));
    CHECK(m.r5 == recall_at_k(ranks, 5));
    CHECK(m.r10 == recall_at_k(ranks, 10));
  }

  TEST_CASE("fs evaluation reads the second caption and nothing later") {
    Dataset base = generate_synthetic(small_synth(6, 66));
    const RetrievalModel model = untrained_model(base, FusionMode::kLate, MetadataKind::kFs, 2);
    const SplitMetrics before = evaluate_split(model, base, base.train_ids, MetadataKind::kFs);

    // Rewriting captions past the second changes nothing.
    Dataset later = base;
    for (Item& item : later.items) {
      for (size_t c = 2; c < item.captions.size(); ++c) item.captions[c] = "ignored filler words";
    }
    later.rebuild_index();
    const SplitMetrics same = evaluate_split(model, later, later.train_ids, MetadataKind::kFs);
    CHECK(same.map10 == before.map10);
    CHECK(same.r10 == before.r10);

    // Rewriting the second caption (the FS metadata) does change scores.
    Dataset meta_edit = base;
    for (Item& item : meta_edit.items) item.captions[1] = "completely unrelated metadata text";
    meta_edit.rebuild_index();
    bool changed = false;
    const std::vector<const Item*> a = split_ptrs(base, base.train_ids);
    const std::vector<const Item*> b = split_ptrs(meta_edit, meta_edit.train_ids);
    const RetrievalIndex ia = build_index(a, model, MetadataKind::kFs);
    const RetrievalIndex ib = build_index(b, model, MetadataKind::kFs);
    const std::vector<double> sa = score_all(ia, base.items[0].captions[0], model);
    const std::vector<double> sb = score_all(ib, base.items[0].captions[0], model);
    for (size_t i = 0; i < sa.size(); ++i) changed = changed || sa[i] != sb[i];
    CHECK(changed);
  }

  TEST_CASE("benchmark report shape, means, and serialization") {
    const Dataset data = generate_synthetic(small_synth(8, 67));
    ModelProvider provider = [&](uint64_t seed, FusionMode mode) {
      const MetadataKind kind =
          mode == FusionMode::kContent ? MetadataKind::kNone : MetadataKind::kOs;
      return untrained_model(data, mode, kind, seed);
    };
    const std::vector<FusionMode> modes{FusionMode::kContent, FusionMode::kLate};
    const std::vector<uint64_t> seeds{1, 2, 3};
    const EvalReport report = evaluate_benchmark(provider, data, modes, seeds, MetadataKind::kOs);

    REQUIRE(report.modes.size() == 2);
    CHECK(report.n_items == static_cast<int>(data.test_ids.size()));
    CHECK(report.seeds == seeds);
    for (const ModeReport& mr : report.modes) {
      REQUIRE(mr.per_seed.size() == 3);
      double mean = 0.0;
      for (const SplitMetrics& s : mr.per_seed) mean += s.map10;
      mean /= 3.0;
      CHECK(mr.mean.map10 == doctest::Approx(mean).epsilon(1e-15));
    }

    const auto dir = std::filesystem::temp_directory_path() / "fusebed_report_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "report.jsonl").string();
    write_report_jsonl(report, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    int records = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const nlohmann::json rec = nlohmann::json::parse(line);
      CHECK(rec.contains("mode"));
      CHECK(rec.contains("map10"));
      ++records;
    }
    CHECK(records == 2 * (3 + 1));  // per-seed rows plus a mean row per mode

    const std::string table = format_report_table(report);
    CHECK(table.find("map@10") != std::string::npos);
    CHECK(table.find("content") != std::string::npos);
    CHECK(table.find("late") != std::string::npos);
  }
}
