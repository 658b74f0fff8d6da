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

#include "fusebed/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fusebed/checkpoint.hpp"
#include "fusebed/data.hpp"
#include "fusebed/model.hpp"
#include "fusebed/retrieval.hpp"
#include "fusebed/service.hpp"
#include "fusebed/training.hpp"

namespace fusebed {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Flag containers
// ---------------------------------------------------------------------------

struct ModelFlags {
  int embed_dim = 64;
  int heads = 4;
  int text_layers = 2;
  int audio_layers = 2;
  int fusion_layers = 2;
  int ffn_mult = 4;
  int max_text_tokens = 32;
  bool late_normalize = false;
};

// Everything the training-family subcommands (train, evaluate, rank,
// compare, serve) share. Mode/metadata stay strings until after flag
// parsing so config files and flags go through one code path.
struct RunFlags {
  std::string data_dir;
  std::string checkpoint;
  std::string out_path;
  std::string metrics_path;
  std::string config_path;
  std::string mode_name = "late";
  std::string metadata_name = "os";
  bool metadata_given = false;
  bool untrained = false;
  bool no_augment = false;
  bool separate_text_encoders = false;
  bool degradation = false;
  uint64_t seed = 1;
  int n_seeds = 3;
  int k = 10;
  std::string split = "test";
  std::string host = "0.0.0.0";
  int port = 8750;
  int threads = 8;
  std::string query;
  TrainConfig train;
  ModelFlags model;
};

struct GenFlags {
  SynthConfig synth;
  std::string out_dir;
  std::string config_path;
  int items = -1;
  int n_train = -1;
  int n_val = -1;
  int n_test = -1;
};

// ---------------------------------------------------------------------------
// Config file handling. The file is one JSON object in the same record
// syntax as the dataset files; values land in the flag structs before
// CLI parsing so explicit flags win.
// ---------------------------------------------------------------------------

template <typename T>
T config_field(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config: field \"" + key + "\" has the wrong type");
  }
}

json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: " + path + " must hold a JSON object");
  return j;
}

void apply_run_config(const json& j, RunFlags& f) {
  for (const auto& [key, value] : j.items()) {
    if (key == "batch_size") {
      f.train.batch_size = config_field<int>(value, key);
    } else if (key == "epochs") {
      f.train.epochs = config_field<int>(value, key);
    } else if (key == "warmup_epochs") {
      f.train.warmup_epochs = config_field<int>(value, key);
    } else if (key == "lr_max") {
      f.train.lr_max = config_field<double>(value, key);
    } else if (key == "lr_min") {
      f.train.lr_min = config_field<double>(value, key);
    } else if (key == "temperature") {
      f.train.temperature = config_field<double>(value, key);
    } else if (key == "seed") {
      f.seed = config_field<uint64_t>(value, key);
    } else if (key == "seeds") {
      f.n_seeds = config_field<int>(value, key);
    } else if (key == "mode") {
      f.mode_name = config_field<std::string>(value, key);
    } else if (key == "metadata") {
      f.metadata_name = config_field<std::string>(value, key);
      f.metadata_given = true;
    } else if (key == "shared_text_encoder") {
      f.separate_text_encoders = !config_field<bool>(value, key);
    } else if (key == "augment") {
      f.train.augment.enabled = config_field<bool>(value, key);
    } else if (key == "n_time_masks") {
      f.train.augment.n_time_masks = config_field<int>(value, key);
    } else if (key == "n_feature_masks") {
      f.train.augment.n_feature_masks = config_field<int>(value, key);
    } else if (key == "max_span_fraction") {
      f.train.augment.max_span_fraction = config_field<double>(value, key);
    } else if (key == "embed_dim") {
      f.model.embed_dim = config_field<int>(value, key);
    } else if (key == "heads") {
      f.model.heads = config_field<int>(value, key);
    } else if (key == "text_layers") {
      f.model.text_layers = config_field<int>(value, key);
    } else if (key == "audio_layers") {
      f.model.audio_layers = config_field<int>(value, key);
    } else if (key == "fusion_layers") {
      f.model.fusion_layers = config_field<int>(value, key);
    } else if (key == "ffn_mult") {
      f.model.ffn_mult = config_field<int>(value, key);
    } else if (key == "max_text_tokens") {
      f.model.max_text_tokens = config_field<int>(value, key);
    } else if (key == "late_normalize") {
      f.model.late_normalize = config_field<bool>(value, key);
    } else if (key == "k") {
      f.k = config_field<int>(value, key);
    } else {
      throw std::invalid_argument("config: unknown field \"" + key + "\"");
    }
  }
}

void apply_gen_config(const json& j, GenFlags& f) {
  for (const auto& [key, value] : j.items()) {
    if (key == "n_train") {
      f.n_train = config_field<int>(value, key);
    } else if (key == "n_val") {
      f.n_val = config_field<int>(value, key);
    } else if (key == "n_test") {
      f.n_test = config_field<int>(value, key);
    } else if (key == "n_topics") {
      f.synth.n_topics = config_field<int>(value, key);
    } else if (key == "words_per_topic") {
      f.synth.words_per_topic = config_field<int>(value, key);
    } else if (key == "noise_vocab") {
      f.synth.noise_vocab = config_field<int>(value, key);
    } else if (key == "item_pool_words") {
      f.synth.item_pool_words = config_field<int>(value, key);
    } else if (key == "captions_per_item") {
      f.synth.captions_per_item = config_field<int>(value, key);
    } else if (key == "min_caption_tokens") {
      f.synth.min_caption_tokens = config_field<int>(value, key);
    } else if (key == "max_caption_tokens") {
      f.synth.max_caption_tokens = config_field<int>(value, key);
    } else if (key == "topic_word_prob") {
      f.synth.topic_word_prob = config_field<double>(value, key);
    } else if (key == "tags_per_item") {
      f.synth.tags_per_item = config_field<int>(value, key);
    } else if (key == "rho") {
      f.synth.rho = config_field<double>(value, key);
    } else if (key == "min_frames") {
      f.synth.min_frames = config_field<int>(value, key);
    } else if (key == "max_frames") {
      f.synth.max_frames = config_field<int>(value, key);
    } else if (key == "frame_dim") {
      f.synth.frame_dim = config_field<int>(value, key);
    } else if (key == "topic_audio_scale") {
      f.synth.topic_audio_scale = config_field<double>(value, key);
    } else if (key == "item_audio_scale") {
      f.synth.item_audio_scale = config_field<double>(value, key);
    } else if (key == "frame_noise_scale") {
      f.synth.frame_noise_scale = config_field<double>(value, key);
    } else if (key == "caption_from_tags") {
      f.synth.caption_from_tags = config_field<bool>(value, key);
    } else if (key == "seed") {
      f.synth.seed = config_field<uint64_t>(value, key);
    } else {
      throw std::invalid_argument("config: unknown field \"" + key + "\"");
    }
  }
}

// Pre-scan for --config so file values are staged before CLI11 parses
// the rest of the command line.
std::string find_config_arg(int argc, const char* const* argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return "";
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

ModelConfig model_config_from_flags(const ModelFlags& mf, int frame_dim, FusionMode mode,
                                    bool shared_text) {
  ModelConfig mc;
  mc.embed_dim = mf.embed_dim;
  mc.frame_dim = frame_dim;
  mc.text_layers = mf.text_layers;
  mc.audio_layers = mf.audio_layers;
  mc.fusion_layers = mf.fusion_layers;
  mc.heads = mf.heads;
  mc.ffn_mult = mf.ffn_mult;
  mc.max_text_tokens = mf.max_text_tokens;
  mc.mode = mode;
  mc.shared_text_encoder = shared_text;
  mc.late_normalize = mf.late_normalize;
  mc.validate();
  return mc;
}

TrainConfig train_config_from_flags(const RunFlags& f, FusionMode mode, MetadataKind kind,
                                    uint64_t seed) {
  TrainConfig tc = f.train;
  tc.mode = mode;
  tc.metadata = kind;
  tc.seed = seed;
  tc.shared_text_encoder = !f.separate_text_encoders;
  if (f.no_augment) tc.augment.enabled = false;
  tc.validate();
  return tc;
}

int dataset_frame_dim(const Dataset& data) {
  if (data.items.empty()) throw std::invalid_argument("dataset: no items");
  return data.items.front().frames.feature_width();
}

RetrievalModel fresh_model(const Dataset& data, const RunFlags& f, FusionMode mode,
                           MetadataKind kind, uint64_t seed) {
  const Vocabulary vocab = build_vocabulary(data, kind);
  RetrievalModel model(
      model_config_from_flags(f.model, dataset_frame_dim(data), mode, !f.separate_text_encoders),
      vocab);
  model.init(seed);
  return model;
}

RetrievalModel train_one(const Dataset& data, const RunFlags& f, FusionMode mode,
                         MetadataKind kind, uint64_t seed, std::ostream* log) {
  RetrievalModel model = fresh_model(data, f, mode, kind, seed);
  const TrainConfig tc = train_config_from_flags(f, mode, kind, seed);
  train_model(model, data, tc, log);
  return model;
}

// Model + metadata kind for the read-only subcommands (evaluate, rank,
// serve): either a checkpoint or a seeded untrained model.
struct Runtime {
  RetrievalModel model;
  MetadataKind kind = MetadataKind::kOs;
};

Runtime load_runtime(const Dataset& data, const RunFlags& f) {
  if (!f.checkpoint.empty() && f.untrained) {
    throw std::invalid_argument("checkpoint: pass either --checkpoint or --untrained, not both");
  }
  Runtime rt;
  if (!f.checkpoint.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(f.checkpoint);
    rt.model = std::move(loaded.model);
    rt.kind = f.metadata_given ? parse_metadata_kind(f.metadata_name) : loaded.metadata;
  } else if (f.untrained) {
    rt.kind = parse_metadata_kind(f.metadata_name);
    rt.model = fresh_model(data, f, parse_fusion_mode(f.mode_name), rt.kind, f.seed);
  } else {
    throw std::invalid_argument("checkpoint: pass --checkpoint PATH or --untrained");
  }
  return rt;
}

const std::vector<std::string>& split_ids(const Dataset& data, const std::string& split) {
  if (split == "train") return data.train_ids;
  if (split == "val") return data.val_ids;
  if (split == "test") return data.test_ids;
  throw std::invalid_argument("split: expected train|val|test, got " + split);
}

std::vector<const Item*> split_pointers(const Dataset& data, const std::string& split) {
  if (split == "all") {
    std::vector<const Item*> out;
    out.reserve(data.items.size());
    for (const Item& item : data.items) out.push_back(&item);
    return out;
  }
  return data.split_items(split_ids(data, split));
}

std::vector<uint64_t> seed_range(uint64_t base, int n) {
  if (n < 1) throw std::invalid_argument("seeds: must be at least 1");
  std::vector<uint64_t> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(base + static_cast<uint64_t>(i));
  return out;
}

SplitMetrics mean_metrics(const std::vector<SplitMetrics>& xs) {
  SplitMetrics m;
  if (xs.empty()) return m;
  for (const SplitMetrics& x : xs) {
    m.map10 += x.map10;
    m.r1 += x.r1;
    m.r5 += x.r5;
    m.r10 += x.r10;
  }
  const double n = static_cast<double>(xs.size());
  m.map10 /= n;
  m.r1 /= n;
  m.r5 /= n;
  m.r10 /= n;
  m.n_queries = xs.front().n_queries;
  return m;
}

void write_epoch_metrics(const std::string& path, const TrainResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("metrics: cannot open " + path + " for writing");
  for (const EpochLog& e : result.epochs) {
    json rec;
    rec["epoch"] = e.epoch;
    rec["loss"] = e.mean_loss;
    rec["lr"] = e.lr;
    if (e.val_map10 >= 0.0) rec["val_map10"] = e.val_map10;
    out << rec.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

int cmd_gen_data(GenFlags& f) {
  if (f.items >= 0) {
    f.synth.n_train = f.items;
    f.synth.n_val = std::max(1, f.items / 8);
    f.synth.n_test = std::max(1, f.items / 4);
  }
  if (f.n_train >= 0) f.synth.n_train = f.n_train;
  if (f.n_val >= 0) f.synth.n_val = f.n_val;
  if (f.n_test >= 0) f.synth.n_test = f.n_test;
  f.synth.validate();
  const Dataset data = generate_synthetic(f.synth);
  save_dataset(data, f.out_dir);
  std::cerr << "wrote " << data.items.size() << " items (" << data.train_ids.size() << " train, "
            << data.val_ids.size() << " val, " << data.test_ids.size() << " test) to " << f.out_dir
            << "\n";
  return 0;
}

int cmd_train(const RunFlags& f) {
  const Dataset data = load_dataset(f.data_dir);
  const FusionMode mode = parse_fusion_mode(f.mode_name);
  const MetadataKind kind = parse_metadata_kind(f.metadata_name);
  const TrainConfig tc = train_config_from_flags(f, mode, kind, f.seed);

  RetrievalModel model = fresh_model(data, f, mode, kind, f.seed);
  AdamOptimizer opt(model.parameters());
  const TrainResult result = train_model(model, opt, data, tc, &std::cerr);

  if (result.has_validation) {
    std::cerr << "best epoch " << result.best_epoch << " with val map@10 " << result.best_val_map10
              << "\n";
  }
  if (!f.out_path.empty()) {
    save_checkpoint(f.out_path, model, kind, &opt);
    std::cerr << "checkpoint written to " << f.out_path << "\n";
  }
  if (!f.metrics_path.empty()) write_epoch_metrics(f.metrics_path, result);
  return 0;
}

int cmd_evaluate(const RunFlags& f) {
  const Dataset data = load_dataset(f.data_dir);
  const std::vector<std::string>& ids = split_ids(data, f.split);

  EvalReport report;
  if (f.untrained) {
    const FusionMode mode = parse_fusion_mode(f.mode_name);
    const MetadataKind kind = parse_metadata_kind(f.metadata_name);
    const Vocabulary vocab = build_vocabulary(data, kind);
    const ModelConfig mc = model_config_from_flags(f.model, dataset_frame_dim(data), mode,
                                                   !f.separate_text_encoders);
    const ModelProvider provider = [&](uint64_t seed, FusionMode m) {
      ModelConfig cfg = mc;
      cfg.mode = m;
      RetrievalModel model(cfg, vocab);
      model.init(seed);
      return model;
    };
    report = evaluate_benchmark(provider, data, {mode}, seed_range(f.seed, f.n_seeds), kind);
  } else {
    Runtime rt = load_runtime(data, f);
    const SplitMetrics m = evaluate_split(rt.model, data, ids, rt.kind);
    report.n_items = static_cast<int>(ids.size());
    report.n_queries = m.n_queries;
    report.metadata = rt.kind;
    report.seeds = {f.seed};
    ModeReport mr;
    mr.mode = rt.model.config.mode;
    mr.per_seed = {m};
    mr.mean = m;
    report.modes = {mr};
  }

  std::cout << format_report_table(report);
  if (!f.out_path.empty()) write_report_jsonl(report, f.out_path);
  return 0;
}

int cmd_rank(const RunFlags& f) {
  const Dataset data = load_dataset(f.data_dir);
  Runtime rt = load_runtime(data, f);
  const RetrievalIndex index = build_index(split_pointers(data, f.split), rt.model, rt.kind);
  if (f.k < 1) throw std::invalid_argument("k: must be at least 1");
  const std::vector<ScoredItem> top = rank_items(index, f.query, rt.model, f.k);
  for (const ScoredItem& s : top) {
    std::printf("%s\t%.6f\n", s.id.c_str(), s.score);
  }
  return 0;
}

int cmd_compare(const RunFlags& f) {
  const Dataset data = load_dataset(f.data_dir);
  const MetadataKind kind = parse_metadata_kind(f.metadata_name);
  const std::vector<uint64_t> seeds = seed_range(f.seed, f.n_seeds);
  const std::vector<FusionMode> modes = {FusionMode::kContent, FusionMode::kMetadata,
                                         FusionMode::kLate, FusionMode::kMid};

  const ModelProvider provider = [&](uint64_t seed, FusionMode mode) {
    std::cerr << "training mode=" << fusion_mode_name(mode) << " seed=" << seed << "\n";
    return train_one(data, f, mode, kind, seed, &std::cerr);
  };
  const EvalReport report = evaluate_benchmark(provider, data, modes, seeds, kind);

  std::cout << format_report_table(report);
  if (!f.out_path.empty()) write_report_jsonl(report, f.out_path);
  return 0;
}

// Trains content-only ("none") and hybrid-late ("tags") on the given
// data — intended to be a corpus whose train captions were generated
// from tags — and evaluates both on the natural-caption test split.
int cmd_degradation(const RunFlags& f) {
  const Dataset data = load_dataset(f.data_dir);
  const MetadataKind kind = parse_metadata_kind(f.metadata_name);
  if (kind != MetadataKind::kCs && kind != MetadataKind::kOs) {
    throw std::invalid_argument("metadata: degradation compares none vs tags; use cs or os");
  }
  const std::vector<uint64_t> seeds = seed_range(f.seed, f.n_seeds);

  struct Row {
    const char* label;
    FusionMode mode;
    MetadataKind kind;
  };
  const Row rows[] = {{"none", FusionMode::kContent, MetadataKind::kNone},
                      {"tags", FusionMode::kLate, kind}};

  std::ostringstream table;
  table << "metadata   map@10   R@1      R@5      R@10\n";
  std::ofstream out;
  if (!f.out_path.empty()) {
    out.open(f.out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("out: cannot open " + f.out_path + " for writing");
  }

  for (const Row& row : rows) {
    std::vector<SplitMetrics> per_seed;
    for (uint64_t seed : seeds) {
      std::cerr << "training metadata=" << row.label << " seed=" << seed << "\n";
      RetrievalModel model = train_one(data, f, row.mode, row.kind, seed, &std::cerr);
      per_seed.push_back(evaluate_split(model, data, data.test_ids, row.kind));
    }
    const SplitMetrics m = mean_metrics(per_seed);
    char line[96];
    std::snprintf(line, sizeof(line), "%-10s %-8.4f %-8.4f %-8.4f %-8.4f\n", row.label, m.map10,
                  m.r1, m.r5, m.r10);
    table << line;
    if (out.is_open()) {
      json rec;
      rec["record"] = "degradation";
      rec["metadata"] = row.label;
      rec["map10"] = m.map10;
      rec["r1"] = m.r1;
      rec["r5"] = m.r5;
      rec["r10"] = m.r10;
      rec["n_queries"] = m.n_queries;
      rec["seeds"] = seeds;
      out << rec.dump() << "\n";
    }
  }
  std::cout << table.str();
  return 0;
}

int cmd_serve(const RunFlags& f) {
  const Dataset data = load_dataset(f.data_dir);
  Runtime rt = load_runtime(data, f);
  RetrievalIndex index = build_index(split_pointers(data, f.split), rt.model, rt.kind);
  std::cerr << "serving " << index.size() << " items on " << f.host << ":" << f.port << "\n";
  QueryService service(std::move(rt.model), std::move(index), f.threads);
  if (!service.serve(f.host, f.port)) {
    std::cerr << "error: cannot bind " << f.host << ":" << f.port << "\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Flag registration
// ---------------------------------------------------------------------------

void add_model_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--embed-dim", f.model.embed_dim, "Embedding width");
  cmd->add_option("--heads", f.model.heads, "Attention heads");
  cmd->add_option("--text-layers", f.model.text_layers, "Text encoder depth");
  cmd->add_option("--audio-layers", f.model.audio_layers, "Audio encoder depth");
  cmd->add_option("--fusion-layers", f.model.fusion_layers, "Mid-fusion depth");
  cmd->add_option("--ffn-mult", f.model.ffn_mult, "Feed-forward width multiplier");
  cmd->add_option("--max-text-tokens", f.model.max_text_tokens, "Content token cap");
  cmd->add_flag("--late-normalize", f.model.late_normalize,
                "Unit-normalize summands before late fusion");
}

void add_train_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--epochs", f.train.epochs, "Training epochs");
  cmd->add_option("--batch-size", f.train.batch_size, "Batch size");
  cmd->add_option("--warmup-epochs", f.train.warmup_epochs, "Linear warmup epochs");
  cmd->add_option("--lr-max", f.train.lr_max, "Peak learning rate");
  cmd->add_option("--lr-min", f.train.lr_min, "Final learning rate");
  cmd->add_option("--temperature", f.train.temperature, "Contrastive temperature");
  cmd->add_flag("--no-augment", f.no_augment, "Disable SpecAugment");
  cmd->add_flag("--separate-text-encoders", f.separate_text_encoders,
                "Use a separate metadata text encoder");
  add_model_flags(cmd, f);
}

void add_runtime_source_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint to load");
  cmd->add_flag("--untrained", f.untrained, "Use a freshly initialized model");
  cmd->add_option("--mode", f.mode_name, "Fusion mode for --untrained: content|metadata|late|mid");
  add_model_flags(cmd, f);
}

void add_config_flag(CLI::App* cmd, std::string& path) {
  cmd->add_option("--config", path, "JSON config file; flags override its values");
}

}  // namespace

int run_command(int argc, const char* const* argv) {
  CLI::App app{"fusebed: language-based audio retrieval with metadata fusion"};
  app.require_subcommand(1);

  GenFlags gen_flags;
  RunFlags train_flags;
  RunFlags eval_flags;
  RunFlags rank_flags;
  RunFlags compare_flags;
  RunFlags serve_flags;
  rank_flags.split = "all";
  serve_flags.split = "all";

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--seed", gen_flags.synth.seed, "Generator seed");
  gen->add_option("--items", gen_flags.items,
                  "Training items; val/test sized at 1/8 and 1/4 of this");
  gen->add_option("--train", gen_flags.n_train, "Training split size");
  gen->add_option("--val", gen_flags.n_val, "Validation split size");
  gen->add_option("--test", gen_flags.n_test, "Test split size");
  gen->add_option("--topics", gen_flags.synth.n_topics, "Latent topic count");
  gen->add_option("--rho", gen_flags.synth.rho, "Tag/caption vocabulary overlap");
  gen->add_option("--frame-dim", gen_flags.synth.frame_dim, "Audio feature width");
  gen->add_option("--captions", gen_flags.synth.captions_per_item, "Captions per item");
  gen->add_option("--tags", gen_flags.synth.tags_per_item, "Tags per item");
  gen->add_option("--topic-word-prob", gen_flags.synth.topic_word_prob,
                  "Probability a caption token is a topic word");
  gen->add_option("--topic-scale", gen_flags.synth.topic_audio_scale, "Topic centroid scale");
  gen->add_option("--item-scale", gen_flags.synth.item_audio_scale, "Per-item offset scale");
  gen->add_option("--noise-scale", gen_flags.synth.frame_noise_scale, "Frame noise scale");
  gen->add_flag("--caption-from-tags", gen_flags.synth.caption_from_tags,
                "Replace train/val captions with shuffled tag lists");
  gen->add_option("--out,-o", gen_flags.out_dir, "Output directory")->required();
  add_config_flag(gen, gen_flags.config_path);

  CLI::App* train = app.add_subcommand("train", "Train a retrieval model");
  train->add_option("--data", train_flags.data_dir, "Dataset directory")->required();
  train->add_option("--out,-o", train_flags.out_path, "Checkpoint output path");
  train->add_option("--metrics", train_flags.metrics_path, "Per-epoch metrics JSONL path");
  train->add_option("--seed", train_flags.seed, "Training seed");
  train->add_option("--mode", train_flags.mode_name, "Fusion mode: content|metadata|late|mid");
  train->add_option("--metadata", train_flags.metadata_name, "Metadata kind: cs|os|fs|none");
  add_train_flags(train, train_flags);
  add_config_flag(train, train_flags.config_path);

  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate a model on a dataset split");
  evaluate->add_option("--data", eval_flags.data_dir, "Dataset directory")->required();
  add_runtime_source_flags(evaluate, eval_flags);
  evaluate->add_option("--seed", eval_flags.seed, "Base seed for --untrained");
  evaluate->add_option("--seeds", eval_flags.n_seeds, "Seed count for --untrained");
  CLI::Option* eval_meta =
      evaluate->add_option("--metadata", eval_flags.metadata_name, "Metadata kind: cs|os|fs|none");
  evaluate->add_option("--split", eval_flags.split, "Split to evaluate: train|val|test");
  evaluate->add_option("--out", eval_flags.out_path, "Report JSONL path");
  add_config_flag(evaluate, eval_flags.config_path);

  CLI::App* rank = app.add_subcommand("rank", "Rank items for a query string");
  rank->add_option("query", rank_flags.query, "Query text")->required();
  rank->add_option("--data", rank_flags.data_dir, "Dataset directory")->required();
  add_runtime_source_flags(rank, rank_flags);
  rank->add_option("--seed", rank_flags.seed, "Seed for --untrained");
  CLI::Option* rank_meta =
      rank->add_option("--metadata", rank_flags.metadata_name, "Metadata kind: cs|os|fs|none");
  rank->add_option("--k", rank_flags.k, "Results to return");
  rank->add_option("--split", rank_flags.split, "Items to index: train|val|test|all");
  add_config_flag(rank, rank_flags.config_path);

  CLI::App* compare =
      app.add_subcommand("compare", "Train and compare fusion modes over shared seeds");
  compare->add_option("--data", compare_flags.data_dir, "Dataset directory")->required();
  compare->add_option("--seed", compare_flags.seed, "Base training seed");
  compare->add_option("--seeds", compare_flags.n_seeds, "Runs per mode");
  compare->add_option("--metadata", compare_flags.metadata_name, "Metadata kind: cs|os|fs");
  compare->add_option("--out", compare_flags.out_path, "Report JSONL path");
  compare->add_flag("--degradation", compare_flags.degradation,
                    "Run the metadata-degradation experiment (rows none/tags)");
  add_train_flags(compare, compare_flags);
  add_config_flag(compare, compare_flags.config_path);

  CLI::App* serve = app.add_subcommand("serve", "Serve a retrieval index over HTTP");
  serve->add_option("--data", serve_flags.data_dir, "Dataset directory")->required();
  add_runtime_source_flags(serve, serve_flags);
  serve->add_option("--seed", serve_flags.seed, "Seed for --untrained");
  CLI::Option* serve_meta =
      serve->add_option("--metadata", serve_flags.metadata_name, "Metadata kind: cs|os|fs|none");
  serve->add_option("--split", serve_flags.split, "Items to index: train|val|test|all");
  serve->add_option("--host", serve_flags.host, "Bind address");
  serve->add_option("--port", serve_flags.port, "Listen port");
  serve->add_option("--threads", serve_flags.threads, "Request worker threads");
  add_config_flag(serve, serve_flags.config_path);

  try {
    const std::string config_path = find_config_arg(argc, argv);
    if (!config_path.empty() && argc > 1) {
      const json j = load_config_json(config_path);
      const std::string sub = argv[1];
      if (sub == "gen-data") {
        apply_gen_config(j, gen_flags);
      } else {
        apply_run_config(j, train_flags);
        apply_run_config(j, eval_flags);
        apply_run_config(j, rank_flags);
        apply_run_config(j, compare_flags);
        apply_run_config(j, serve_flags);
      }
    }

    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      std::cerr << e.what() << "\n\n" << app.help() << "\n";
      return 2;
    }

    eval_flags.metadata_given = eval_flags.metadata_given || eval_meta->count() > 0;
    rank_flags.metadata_given = rank_flags.metadata_given || rank_meta->count() > 0;
    serve_flags.metadata_given = serve_flags.metadata_given || serve_meta->count() > 0;

    if (gen->parsed()) return cmd_gen_data(gen_flags);
    if (train->parsed()) return cmd_train(train_flags);
    if (evaluate->parsed()) return cmd_evaluate(eval_flags);
    if (rank->parsed()) return cmd_rank(rank_flags);
    if (compare->parsed()) {
      return compare_flags.degradation ? cmd_degradation(compare_flags)
                                       : cmd_compare(compare_flags);
    }
    if (serve->parsed()) return cmd_serve(serve_flags);
    std::cerr << app.help() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fusebed
