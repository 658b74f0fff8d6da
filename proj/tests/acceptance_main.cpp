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

// End-to-end acceptance gate. Each numbered criterion prints exactly one
// PASS/FAIL line; the binary exits nonzero if any criterion fails.
//
// The trained comparisons (criteria 4-7) share one reference corpus and
// one training protocol so that every mode sees identical data, seeds,
// and step budget. The corpus is sized so a from-scratch run finishes in
// seconds while still separating the fusion strategies: audio identifies
// an item's topic but (by construction) carries almost no item-specific
// signal, whereas tags and captions share rare per-item words.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "fusebed/cli.hpp"
#include "fusebed/data.hpp"
#include "fusebed/model.hpp"
#include "fusebed/ops.hpp"
#include "fusebed/retrieval.hpp"
#include "fusebed/rng.hpp"
#include "fusebed/service.hpp"
#include "fusebed/training.hpp"

#include "grad_suite.hpp"

using namespace fusebed;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s — %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "fusebed_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Runs the CLI entry point with stdout/stderr captured at the fd level
// (the rank table goes through std::printf).
struct CliResult {
  int exit_code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  static int counter = 0;
  const fs::path out_path = scratch_dir() / ("cli_out_" + std::to_string(counter) + ".txt");
  const fs::path err_path = scratch_dir() / ("cli_err_" + std::to_string(counter) + ".txt");
  ++counter;

  std::vector<const char*> argv;
  argv.push_back("fusebed");
  for (const std::string& a : args) argv.push_back(a.c_str());

  std::fflush(stdout);
  std::fflush(stderr);
  std::cout.flush();
  std::cerr.flush();
  const int saved_out = dup(1);
  const int saved_err = dup(2);
  const int fd_out = open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
  const int fd_err = open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
  dup2(fd_out, 1);
  dup2(fd_err, 2);
  close(fd_out);
  close(fd_err);

  CliResult result;
  result.exit_code = run_command(static_cast<int>(argv.size()), argv.data());

  std::fflush(stdout);
  std::fflush(stderr);
  std::cout.flush();
  std::cerr.flush();
  dup2(saved_out, 1);
  dup2(saved_err, 2);
  close(saved_out);
  close(saved_err);

  result.out = slurp(out_path);
  result.err = slurp(err_path);
  return result;
}

// ---------------------------------------------------------------------------
// Reference experiment configuration (criteria 4-8)
// ---------------------------------------------------------------------------

SynthConfig reference_synth() {
  SynthConfig sc;
  sc.n_train = 512;
  sc.n_val = 64;
  sc.n_test = 128;
  sc.n_topics = 4;
  sc.words_per_topic = 8;
  sc.noise_vocab = 160;
  sc.item_pool_words = 8;
  sc.captions_per_item = 5;
  sc.min_caption_tokens = 10;
  sc.max_caption_tokens = 16;
  sc.topic_word_prob = 0.35;
  sc.tags_per_item = 8;
  sc.rho = 0.8;
  sc.min_frames = 12;
  sc.max_frames = 24;
  sc.frame_dim = 32;
  sc.item_audio_scale = 0.05;
  sc.frame_noise_scale = 1.0;
  sc.seed = 1;
  return sc;
}

ModelConfig reference_model(FusionMode mode, bool shared_text) {
  ModelConfig mc;
  mc.embed_dim = 32;
  mc.frame_dim = 32;
  mc.text_layers = 1;
  mc.audio_layers = 1;
  mc.fusion_layers = 1;
  mc.heads = 4;
  mc.ffn_mult = 2;
  mc.mode = mode;
  mc.shared_text_encoder = shared_text;
  return mc;
}

TrainConfig reference_train(FusionMode mode, MetadataKind kind, uint64_t seed, bool shared_text) {
  TrainConfig tc;
  tc.batch_size = 64;
  tc.epochs = 250;
  tc.warmup_epochs = 10;
  tc.lr_max = 1.5e-3;
  tc.lr_min = 1e-5;
  tc.seed = seed;
  tc.mode = mode;
  tc.metadata = kind;
  tc.shared_text_encoder = shared_text;
  return tc;
}

const std::vector<std::string> kReferenceTrainFlags = {
    "--epochs", "250", "--batch-size", "64", "--lr-max", "1.5e-3", "--lr-min", "1e-5",
    "--warmup-epochs", "10", "--embed-dim", "32", "--heads", "4", "--text-layers", "1",
    "--audio-layers", "1", "--fusion-layers", "1", "--ffn-mult", "2"};

struct TrainedRun {
  RetrievalModel model;
  SplitMetrics test;
  double seconds = 0.0;
};

TrainedRun train_reference(const Dataset& data, FusionMode mode, MetadataKind kind, uint64_t seed,
                           bool shared_text) {
  Timer timer;
  TrainedRun run;
  run.model = RetrievalModel(reference_model(mode, shared_text), build_vocabulary(data, kind));
  run.model.init(seed);
  train_model(run.model, data, reference_train(mode, kind, seed, shared_text), nullptr);
  run.test = evaluate_split(run.model, data, data.test_ids, kind);
  run.seconds = timer.seconds();
  std::fprintf(stderr, "  %s/%s seed %llu: test map@10 %.4f (%.1fs)\n", fusion_mode_name(mode).c_str(),
               metadata_kind_name(kind).c_str(), static_cast<unsigned long long>(seed),
               run.test.map10, run.seconds);
  return run;
}

// Scores one (item, query) pair straight from the encoders, bypassing
// the retrieval index. Used as the brute-force oracle in criterion 2.
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
  return 0.0;
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient suite
// ---------------------------------------------------------------------------

void criterion_gradients() {
  Timer timer;
  const auto results = gradsuite::run_gradient_suite(10);
  const double elapsed = timer.seconds();
  double worst = 0.0;
  std::string worst_op = "none";
  for (const auto& r : results) {
    if (r.max_rel > worst) {
      worst = r.max_rel;
      worst_op = r.op;
    }
  }
  const bool pass = worst < 1e-3 && elapsed < 120.0;
  report(1, pass,
         "gradient checks on " + std::to_string(results.size()) + " ops x 10 instances; worst " +
             worst_op + " rel err " + fmt(worst, 8) + " (limit 1e-3); " + fmt(elapsed, 1) + "s");
}

// ---------------------------------------------------------------------------
// Criterion 2: metric + ranking oracle
// ---------------------------------------------------------------------------

void criterion_metric_oracle() {
  Timer timer;
  // A pool of micro corpora the randomized instances draw from.
  std::vector<Dataset> pool;
  for (int d = 0; d < 10; ++d) {
    SynthConfig sc;
    sc.n_train = 50;
    sc.n_val = 0;
    sc.n_test = 2;
    sc.n_topics = 2 + d % 3;
    sc.words_per_topic = 4;
    sc.noise_vocab = 30;
    sc.item_pool_words = 3;
    sc.captions_per_item = 2;
    sc.min_caption_tokens = 3;
    sc.max_caption_tokens = 6;
    sc.tags_per_item = 3;
    sc.min_frames = 2;
    sc.max_frames = 4;
    sc.frame_dim = 5;
    sc.seed = 500 + static_cast<uint64_t>(d);
    pool.push_back(generate_synthetic(sc));
  }
  const FusionMode modes[] = {FusionMode::kContent, FusionMode::kMetadata, FusionMode::kLate,
                              FusionMode::kMid};

  Rng rng(20260202);
  int checked = 0;
  double worst_score_err = 0.0;
  std::string failure;
  for (int i = 0; i < 200 && failure.empty(); ++i) {
    const Dataset& data = pool[static_cast<size_t>(i % 10)];
    const int n = 2 + rng.uniform_int(49);  // 2..50 items
    const FusionMode mode = modes[i % 4];
    const MetadataKind kind = mode == FusionMode::kContent ? MetadataKind::kNone : MetadataKind::kOs;

    ModelConfig mc;
    mc.embed_dim = 16;
    mc.frame_dim = 5;
    mc.text_layers = 1;
    mc.audio_layers = 1;
    mc.fusion_layers = 1;
    mc.heads = 2;
    mc.ffn_mult = 2;
    mc.mode = mode;
    RetrievalModel model(mc, build_vocabulary(data, kind));
    model.init(1000 + static_cast<uint64_t>(i));

    std::vector<const Item*> items;
    for (int j = 0; j < n; ++j) items.push_back(&data.items[static_cast<size_t>(j)]);
    const RetrievalIndex index = build_index(items, model, kind);
    const std::string query =
        data.items[static_cast<size_t>(rng.uniform_int(n))].captions[0];

    std::vector<double> expect(items.size());
    for (size_t j = 0; j < items.size(); ++j) {
      expect[j] = reference_score(model, *items[j], query, kind);
    }
    const std::vector<double> got = score_all(index, query, model);
    for (size_t j = 0; j < items.size(); ++j) {
      worst_score_err = std::max(worst_score_err, std::fabs(got[j] - expect[j]));
    }
    if (worst_score_err >= 1e-12) {
      failure = "score mismatch " + fmt(worst_score_err, 15) + " on instance " + std::to_string(i);
      break;
    }

    std::vector<size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return expect[a] > expect[b]; });
    const int k = 1 + rng.uniform_int(n);
    const auto ranked = rank_items(index, query, model, k);
    if (static_cast<int>(ranked.size()) != std::min(k, n)) {
      failure = "rank_items size mismatch on instance " + std::to_string(i);
      break;
    }
    for (size_t r = 0; r < ranked.size(); ++r) {
      if (ranked[r].id != items[order[r]]->id ||
          std::fabs(ranked[r].score - expect[order[r]]) >= 1e-12) {
        failure = "rank order mismatch at position " + std::to_string(r) + " on instance " +
                  std::to_string(i);
        break;
      }
    }

    // Metric functions against a direct reimplementation on random ranks.
    const int m = 1 + rng.uniform_int(50);
    std::vector<int> ranks;
    for (int j = 0; j < m; ++j) ranks.push_back(1 + rng.uniform_int(3 * n));
    for (const int kk : {1, 5, 10, n}) {
      double ap_sum = 0.0, hits = 0.0;
      for (const int r : ranks) {
        ap_sum += r <= kk ? 1.0 / r : 0.0;
        hits += r <= kk ? 1.0 : 0.0;
      }
      if (map_at_k(ranks, kk) != ap_sum / m || recall_at_k(ranks, kk) != hits / m) {
        failure = "metric mismatch at k=" + std::to_string(kk) + " on instance " +
                  std::to_string(i);
        break;
      }
      for (const int r : ranks) {
        if (average_precision_at_k(r, kk) != (r <= kk ? 1.0 / r : 0.0)) {
          failure = "ap mismatch on instance " + std::to_string(i);
          break;
        }
      }
    }
    ++checked;
  }
  const bool pass = failure.empty() && checked == 200;
  report(2, pass,
         pass ? "200 randomized instances (N<=50, all fusion modes); worst score deviation " +
                    fmt(worst_score_err, 15) + "; " + fmt(timer.seconds(), 1) + "s"
              : failure);
}

// ---------------------------------------------------------------------------
// Criterion 3: untrained baseline calibration
// ---------------------------------------------------------------------------

void criterion_random_baseline() {
  Timer timer;
  SynthConfig sc = reference_synth();
  sc.n_train = 100;
  sc.n_val = 0;
  sc.n_test = 100;
  sc.seed = 33;
  const Dataset data = generate_synthetic(sc);

  double sum = 0.0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    RetrievalModel model(reference_model(FusionMode::kLate, true),
                         build_vocabulary(data, MetadataKind::kOs));
    model.init(seed);
    sum += evaluate_split(model, data, data.test_ids, MetadataKind::kOs).map10;
  }
  const double mean = sum / 20.0;
  const bool pass = mean >= 0.015 && mean <= 0.045;
  report(3, pass,
         "untrained mean map@10 " + fmt(mean) + " over 20 seeds on 100 items (expected band "
         "[0.015, 0.045] around 0.0293); " + fmt(timer.seconds(), 1) + "s");
}

// ---------------------------------------------------------------------------
// Criteria 4-7: trained comparisons on the shared reference corpus
// ---------------------------------------------------------------------------

struct ModeSummary {
  double mean_map10 = 0.0;
  double seconds = 0.0;
  std::vector<double> per_seed;
};

ModeSummary run_mode(const Dataset& data, FusionMode mode, MetadataKind kind, bool shared_text) {
  ModeSummary s;
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const TrainedRun run = train_reference(data, mode, kind, seed, shared_text);
    s.per_seed.push_back(run.test.map10);
    s.mean_map10 += run.test.map10;
    s.seconds += run.seconds;
  }
  s.mean_map10 /= 3.0;
  return s;
}

void criteria_trained_comparisons(const Dataset& data, RetrievalModel* service_model) {
  std::fprintf(stderr, "training the reference comparison grid (15 runs)...\n");
  const ModeSummary content = run_mode(data, FusionMode::kContent, MetadataKind::kNone, true);
  ModeSummary late_os;
  {
    // Keep the first late/os model alive for the service criterion.
    for (uint64_t seed = 1; seed <= 3; ++seed) {
      TrainedRun run = train_reference(data, FusionMode::kLate, MetadataKind::kOs, seed, true);
      late_os.per_seed.push_back(run.test.map10);
      late_os.mean_map10 += run.test.map10;
      late_os.seconds += run.seconds;
      if (seed == 1 && service_model != nullptr) *service_model = std::move(run.model);
    }
    late_os.mean_map10 /= 3.0;
  }

  const double hybrid_delta = late_os.mean_map10 - content.mean_map10;
  const double grid_seconds = content.seconds + late_os.seconds;
  report(4, hybrid_delta >= 0.05 && grid_seconds < 600.0,
         "late " + fmt(late_os.mean_map10) + " vs content " + fmt(content.mean_map10) +
             " mean map@10, delta +" + fmt(hybrid_delta) + " (need >= +0.05); 3 seeds, " +
             fmt(grid_seconds, 1) + "s of 600s budget");

  const ModeSummary late_fs = run_mode(data, FusionMode::kLate, MetadataKind::kFs, true);
  report(5, late_fs.mean_map10 >= late_os.mean_map10,
         "fs metadata " + fmt(late_fs.mean_map10) + " vs tag metadata " + fmt(late_os.mean_map10) +
             " mean map@10 (need fs >= tags)");

  const ModeSummary mid = run_mode(data, FusionMode::kMid, MetadataKind::kOs, true);
  report(6, mid.mean_map10 > content.mean_map10,
         "mid " + fmt(mid.mean_map10) + " vs content " + fmt(content.mean_map10) +
             " mean map@10 (need mid > content)");

  const ModeSummary separate = run_mode(data, FusionMode::kLate, MetadataKind::kOs, false);
  report(7, late_os.mean_map10 >= separate.mean_map10,
         "shared text encoder " + fmt(late_os.mean_map10) + " vs separate " +
             fmt(separate.mean_map10) + " mean map@10 (need shared >= separate)");
}

// ---------------------------------------------------------------------------
// Criterion 8: metadata degradation experiment via the CLI
// ---------------------------------------------------------------------------

void criterion_degradation() {
  Timer timer;
  const fs::path corpus = scratch_dir() / "degraded_corpus";
  const fs::path gen_cfg = scratch_dir() / "degraded_gen.json";
  {
    const SynthConfig sc = reference_synth();
    json cfg;
    cfg["n_train"] = sc.n_train;
    cfg["n_val"] = sc.n_val;
    cfg["n_test"] = sc.n_test;
    cfg["n_topics"] = sc.n_topics;
    cfg["words_per_topic"] = sc.words_per_topic;
    cfg["noise_vocab"] = sc.noise_vocab;
    cfg["item_pool_words"] = sc.item_pool_words;
    cfg["captions_per_item"] = sc.captions_per_item;
    cfg["min_caption_tokens"] = sc.min_caption_tokens;
    cfg["max_caption_tokens"] = sc.max_caption_tokens;
    cfg["topic_word_prob"] = sc.topic_word_prob;
    cfg["tags_per_item"] = sc.tags_per_item;
    cfg["rho"] = sc.rho;
    cfg["min_frames"] = sc.min_frames;
    cfg["max_frames"] = sc.max_frames;
    cfg["frame_dim"] = sc.frame_dim;
    cfg["item_audio_scale"] = sc.item_audio_scale;
    cfg["frame_noise_scale"] = sc.frame_noise_scale;
    cfg["caption_from_tags"] = true;
    cfg["seed"] = 2;
    std::ofstream(gen_cfg) << cfg.dump(2) << "\n";
  }
  const CliResult gen =
      run_cli({"gen-data", "--out", corpus.string(), "--config", gen_cfg.string()});
  if (gen.exit_code != 0) {
    report(8, false, "gen-data failed: " + gen.err);
    return;
  }

  const fs::path out = scratch_dir() / "degradation.jsonl";
  std::vector<std::string> args = {"compare",  "--data", corpus.string(), "--degradation",
                                   "--metadata", "os",   "--seeds",       "1",
                                   "--seed",     "1",    "--out",         out.string()};
  args.insert(args.end(), kReferenceTrainFlags.begin(), kReferenceTrainFlags.end());
  const CliResult run = run_cli(args);

  double none_map = -1.0, tags_map = -1.0;
  std::ifstream in(out);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || rec.value("record", "") != "degradation") continue;
    if (rec.value("metadata", "") == "none") none_map = rec.value("map10", -1.0);
    if (rec.value("metadata", "") == "tags") tags_map = rec.value("map10", -1.0);
  }
  const bool has_rows = run.exit_code == 0 && run.out.find("none") != std::string::npos &&
                        run.out.find("tags") != std::string::npos && none_map >= 0.0 &&
                        tags_map >= 0.0;
  // The direction is reported, not gated: with tag-permutation captions
  // replacing train/val text, the hybrid's metadata matching degrades
  // against natural test captions.
  const std::string direction = tags_map < none_map
                                    ? "hybrid dropped below content-only as expected"
                                    : "hybrid stayed above content-only on this draw";
  report(8, has_rows,
         has_rows ? "two-row report emitted; none " + fmt(none_map) + " vs tags " + fmt(tags_map) +
                        " map@10 (" + direction + "); " + fmt(timer.seconds(), 1) + "s"
                  : "degradation run failed (exit " + std::to_string(run.exit_code) + ")");
}

// ---------------------------------------------------------------------------
// Criterion 9: end-to-end determinism through the CLI
// ---------------------------------------------------------------------------

void criterion_determinism() {
  Timer timer;
  const fs::path base = scratch_dir() / "determinism";
  fs::create_directories(base);

  // Identical gen-data invocations must produce identical files.
  std::vector<std::string> mismatches;
  const std::vector<std::string> gen_args = {"--items", "48", "--topics", "3",
                                             "--frame-dim", "8", "--seed", "11"};
  for (const char* tag : {"a", "b"}) {
    std::vector<std::string> args = {"gen-data", "--out", (base / ("corpus_" + std::string(tag))).string()};
    args.insert(args.end(), gen_args.begin(), gen_args.end());
    if (run_cli(args).exit_code != 0) mismatches.push_back("gen-data failed");
  }
  for (const char* file : {"items.jsonl", "meta.json", "train.ids", "val.ids", "test.ids"}) {
    if (slurp(base / "corpus_a" / file) != slurp(base / "corpus_b" / file)) {
      mismatches.push_back(std::string("gen-data file ") + file);
    }
  }

  // Identical training runs must produce byte-identical checkpoints
  // (parameters and optimizer state both ride in the file).
  for (const char* tag : {"a", "b"}) {
    const CliResult r = run_cli({"train", "--data", (base / "corpus_a").string(), "--out",
                                 (base / ("ckpt_" + std::string(tag) + ".bin")).string(),
                                 "--epochs", "30", "--batch-size", "16", "--lr-max", "1e-3",
                                 "--seed", "7", "--embed-dim", "16", "--heads", "2",
                                 "--text-layers", "1", "--audio-layers", "1", "--fusion-layers",
                                 "1", "--ffn-mult", "2"});
    if (r.exit_code != 0) mismatches.push_back("train failed: " + r.err);
  }
  if (slurp(base / "ckpt_a.bin") != slurp(base / "ckpt_b.bin")) {
    mismatches.push_back("checkpoint bytes");
  }

  // Identical evaluations must produce byte-identical reports.
  for (const char* tag : {"a", "b"}) {
    const CliResult r = run_cli({"evaluate", "--data", (base / "corpus_a").string(),
                                 "--checkpoint", (base / "ckpt_a.bin").string(), "--split", "test",
                                 "--out", (base / ("report_" + std::string(tag) + ".jsonl")).string()});
    if (r.exit_code != 0) mismatches.push_back("evaluate failed: " + r.err);
  }
  if (slurp(base / "report_a.jsonl") != slurp(base / "report_b.jsonl")) {
    mismatches.push_back("report bytes");
  }

  std::string joined;
  for (const std::string& m : mismatches) joined += (joined.empty() ? "" : ", ") + m;
  report(9, mismatches.empty(),
         mismatches.empty()
             ? "gen-data, train, and evaluate each repeated bitwise-identically; " +
                   fmt(timer.seconds(), 1) + "s"
             : "mismatch in: " + joined);
}

// ---------------------------------------------------------------------------
// Criterion 10: service equivalence under concurrent load
// ---------------------------------------------------------------------------

void criterion_service(const Dataset& data, RetrievalModel model) {
  Timer timer;
  std::vector<const Item*> items = data.split_items(data.test_ids);
  RetrievalIndex index = build_index(items, model, MetadataKind::kOs);

  // Expected payloads straight from rank_items, before the server runs.
  std::vector<std::string> queries;
  for (int i = 0; i < 8; ++i) {
    queries.push_back(data.by_id(data.test_ids[static_cast<size_t>(i * 3)]).captions[0]);
  }
  std::vector<std::vector<ScoredItem>> expected;
  for (const std::string& q : queries) expected.push_back(rank_items(index, q, model, 10));

  QueryService service(std::move(model), std::move(index), 8);
  httplib::Server server;
  service.attach(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  // Serial reference responses, then the concurrent load.
  std::vector<std::string> reference_bodies(queries.size());
  bool serial_ok = true;
  {
    httplib::Client probe("127.0.0.1", port);
    for (size_t i = 0; i < queries.size(); ++i) {
      const auto res =
          probe.Post("/rank", json{{"query", queries[i]}, {"k", 10}}.dump(), "application/json");
      if (!res || res->status != 200) {
        serial_ok = false;
        break;
      }
      reference_bodies[i] = res->body;
      const json body = json::parse(res->body);
      const auto& results = body["results"];
      if (results.size() != expected[i].size()) serial_ok = false;
      for (size_t r = 0; serial_ok && r < expected[i].size(); ++r) {
        if (results[r]["id"] != expected[i][r].id ||
            results[r]["score"].get<double>() != expected[i][r].score) {
          serial_ok = false;
        }
      }
    }
  }

  std::atomic<int> failures{0};
  std::atomic<int> mismatches{0};
  constexpr int kClients = 32;
  constexpr int kRequestsPerClient = 4;
  std::vector<std::thread> clients;
  clients.reserve(kClients);
  for (int c = 0; c < kClients; ++c) {
    clients.emplace_back([&, c] {
      httplib::Client client("127.0.0.1", port);
      for (int r = 0; r < kRequestsPerClient; ++r) {
        const size_t qi = static_cast<size_t>(c + r) % queries.size();
        const auto res = client.Post(
            "/rank", json{{"query", queries[qi]}, {"k", 10}}.dump(), "application/json");
        if (!res || res->status != 200) {
          ++failures;
        } else if (res->body != reference_bodies[qi]) {
          ++mismatches;
        }
      }
    });
  }
  for (std::thread& t : clients) t.join();
  server.stop();
  runner.join();

  const bool pass = serial_ok && failures.load() == 0 && mismatches.load() == 0;
  report(10, pass,
         pass ? "32 concurrent clients x 4 requests byte-matched in-process rank_items; " +
                    fmt(timer.seconds(), 1) + "s"
              : "serial_ok=" + std::string(serial_ok ? "yes" : "no") + ", transport failures " +
                    std::to_string(failures.load()) + ", body mismatches " +
                    std::to_string(mismatches.load()));
}

}  // namespace

int main() {
  Timer total;
  std::fprintf(stderr, "acceptance: building reference corpus...\n");
  const Dataset reference = generate_synthetic(reference_synth());

  criterion_gradients();
  criterion_metric_oracle();
  criterion_random_baseline();

  RetrievalModel service_model;
  criteria_trained_comparisons(reference, &service_model);
  criterion_degradation();
  criterion_determinism();
  criterion_service(reference, std::move(service_model));

  std::printf("acceptance: %s (%d/10 criteria, %.1fs total)\n",
              g_failures == 0 ? "ALL PASS" : "FAILURES PRESENT", 10 - g_failures,
              total.seconds());
  return g_failures == 0 ? 0 : 1;
}
