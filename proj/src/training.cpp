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

#include "fusebed/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "fusebed/ops.hpp"
#include "fusebed/retrieval.hpp"

namespace fusebed {

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("batch_size: must be at least 2");
  if (epochs < 1) throw std::invalid_argument("epochs: must be at least 1");
  if (warmup_epochs < 0) throw std::invalid_argument("warmup_epochs: must be non-negative");
  if (warmup_epochs > epochs) {
    throw std::invalid_argument("warmup_epochs: must not exceed epochs");
  }
  if (lr_min <= 0.0) throw std::invalid_argument("lr_min: must be positive");
  if (lr_max <= lr_min) throw std::invalid_argument("lr_max: must exceed lr_min");
  if (temperature <= 0.0) throw std::invalid_argument("temperature: must be positive");
  if (augment.n_time_masks < 0) {
    throw std::invalid_argument("n_time_masks: must be non-negative");
  }
  if (augment.n_feature_masks < 0) {
    throw std::invalid_argument("n_feature_masks: must be non-negative");
  }
  if (augment.max_span_fraction < 0.0 || augment.max_span_fraction > 1.0) {
    throw std::invalid_argument("max_span_fraction: must be in [0, 1]");
  }
}

std::pair<double, Tensor2D> nt_xent_loss(const Tensor2D& sim, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("temperature: must be positive");
  if (sim.rows != sim.cols || sim.rows < 1) {
    throw std::invalid_argument("nt_xent_loss: similarity matrix must be square, got " +
                                sim.shape_str());
  }
  const int b = sim.rows;
  Tensor2D p(b, b);   // row-wise softmax of sim / tau
  Tensor2D q(b, b);   // column-wise softmax of sim / tau
  double loss_rows = 0.0;
  double loss_cols = 0.0;

  for (int i = 0; i < b; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < b; ++j) m = std::max(m, sim.at(i, j) / tau);
    double sum = 0.0;
    for (int j = 0; j < b; ++j) {
      const double e = std::exp(sim.at(i, j) / tau - m);
      p.at(i, j) = e;
      sum += e;
    }
    loss_rows += m + std::log(sum) - sim.at(i, i) / tau;
    for (int j = 0; j < b; ++j) p.at(i, j) /= sum;
  }
  for (int j = 0; j < b; ++j) {
    double m = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < b; ++i) m = std::max(m, sim.at(i, j) / tau);
    double sum = 0.0;
    for (int i = 0; i < b; ++i) {
      const double e = std::exp(sim.at(i, j) / tau - m);
      q.at(i, j) = e;
      sum += e;
    }
    loss_cols += m + std::log(sum) - sim.at(j, j) / tau;
    for (int i = 0; i < b; ++i) q.at(i, j) /= sum;
  }

  const double loss = (loss_rows + loss_cols) / (2.0 * b);
  Tensor2D grad(b, b);
  const double scale = 1.0 / (2.0 * b * tau);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      grad.at(i, j) = scale * (p.at(i, j) + q.at(i, j) - (i == j ? 2.0 : 0.0));
    }
  }
  return {loss, std::move(grad)};
}

double lr_at(long step, long total_steps, long warmup_steps, const TrainConfig& cfg) {
  if (total_steps < 1) throw std::invalid_argument("lr_at: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("lr_at: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + "]");
  }
  if (warmup_steps > 0 && step < warmup_steps) {
    return cfg.lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) return cfg.lr_max;
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(M_PI * progress));
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.rows, p->value.cols);
    v_.emplace_back(p->value.rows, p->value.cols);
  }
}

void AdamOptimizer::step(double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    Tensor2D& m = m_[k];
    Tensor2D& v = v_[k];
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam: non-finite gradient in parameter \"" + p.name + "\"");
      }
      m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g;
      v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g * g;
      const double m_hat = m.data[i] / bc1;
      const double v_hat = v.data[i] / bc2;
      p.value.data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

FrameSequence spec_augment(const FrameSequence& x, Rng& rng, const AugmentConfig& cfg) {
  FrameSequence out = x;
  if (!cfg.enabled) return out;
  const int t_len = x.length();
  const int width = x.feature_width();
  const int max_t = static_cast<int>(std::floor(cfg.max_span_fraction * t_len));
  const int max_f = static_cast<int>(std::floor(cfg.max_span_fraction * width));
  for (int k = 0; k < cfg.n_time_masks; ++k) {
    const int span = rng.uniform_int_range(0, max_t);
    const int start = rng.uniform_int_range(0, t_len - span);
    for (int t = start; t < start + span; ++t) {
      for (int j = 0; j < width; ++j) out.frames.at(t, j) = 0.0;
    }
  }
  for (int k = 0; k < cfg.n_feature_masks; ++k) {
    const int span = rng.uniform_int_range(0, max_f);
    const int start = rng.uniform_int_range(0, width - span);
    for (int t = 0; t < t_len; ++t) {
      for (int j = start; j < start + span; ++j) out.frames.at(t, j) = 0.0;
    }
  }
  return out;
}

Vocabulary build_vocabulary(const Dataset& data, MetadataKind kind) {
  std::vector<std::string> texts;
  for (const std::string& id : data.train_ids) {
    const Item& item = data.by_id(id);
    for (const std::string& caption : item.captions) {
      texts.push_back(preprocess_text(caption));
    }
    if (kind != MetadataKind::kNone) {
      texts.push_back(metadata_to_text(item, kind));
    }
  }
  return Vocabulary::build(texts);
}

namespace {

// Keeps the data-order stream distinct from the parameter-init stream,
// which is seeded with the raw config seed.
constexpr uint64_t kDataStreamSalt = 0x9e3779b97f4a7c15ULL;

std::vector<Tensor2D> snapshot_values(RetrievalModel& model) {
  std::vector<Tensor2D> out;
  for (Parameter* p : model.parameters()) out.push_back(p->value);
  return out;
}

void restore_values(RetrievalModel& model, const std::vector<Tensor2D>& values) {
  const std::vector<Parameter*> params = model.parameters();
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

// Gradient of sum_normalized = a/|a| + ... with respect to a, given the
// upstream gradient of the sum.
Tensor2D normalize_backward(const Tensor2D& a, const Tensor2D& grad_out) {
  const double n = l2_norm(a);
  if (n == 0.0) throw std::domain_error("late_fuse: zero-norm embedding");
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += grad_out.data[i] * a.data[i] / n;
  Tensor2D grad(a.rows, a.cols);
  for (size_t i = 0; i < a.size(); ++i) {
    grad.data[i] = (grad_out.data[i] - (a.data[i] / n) * dot) / n;
  }
  return grad;
}

double train_batch(RetrievalModel& model, const std::vector<const Item*>& batch,
                   const TrainConfig& cfg, Rng& rng) {
  const int b = static_cast<int>(batch.size());
  const int d = model.config.embed_dim;
  const FusionMode mode = cfg.mode;
  const bool uses_metadata = mode != FusionMode::kContent;
  const bool uses_audio = mode != FusionMode::kMetadata;

  std::vector<std::string> query_texts(static_cast<size_t>(b));
  std::vector<std::string> meta_texts(static_cast<size_t>(b));
  std::vector<FrameSequence> frames(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) {
    const Item& item = *batch[static_cast<size_t>(i)];
    if (uses_metadata && cfg.metadata == MetadataKind::kFs) {
      const auto [qi, mi] = simulate_fs_split(item, rng);
      query_texts[static_cast<size_t>(i)] = item.captions[static_cast<size_t>(qi)];
      meta_texts[static_cast<size_t>(i)] = item.captions[static_cast<size_t>(mi)];
    } else {
      const int qi = rng.uniform_int(static_cast<int>(item.captions.size()));
      query_texts[static_cast<size_t>(i)] = item.captions[static_cast<size_t>(qi)];
      if (uses_metadata) {
        meta_texts[static_cast<size_t>(i)] = metadata_to_text(item, cfg.metadata);
      }
    }
    if (uses_audio) {
      frames[static_cast<size_t>(i)] = spec_augment(item.frames, rng, cfg.augment);
    }
  }

  std::vector<TextEncoderCache> qcaches(static_cast<size_t>(b));
  Tensor2D queries(b, d);
  for (int i = 0; i < b; ++i) {
    const TokenSequence seq = tokenize(preprocess_text(query_texts[static_cast<size_t>(i)]),
                                       model.vocab, model.config.max_text_tokens);
    queries.set_row(i, model.text.forward(seq, qcaches[static_cast<size_t>(i)]));
  }

  std::vector<TextEncoderCache> mcaches(static_cast<size_t>(uses_metadata ? b : 0));
  std::vector<Tensor2D> metas(static_cast<size_t>(b));
  if (uses_metadata) {
    for (int i = 0; i < b; ++i) {
      const TokenSequence seq = tokenize(preprocess_text(meta_texts[static_cast<size_t>(i)]),
                                         model.vocab, model.config.max_text_tokens);
      metas[static_cast<size_t>(i)] =
          model.metadata_encoder().forward(seq, mcaches[static_cast<size_t>(i)]);
    }
  }

  std::vector<AudioEncoderCache> acaches(static_cast<size_t>(uses_audio ? b : 0));
  std::vector<AudioEncoding> audio_out(static_cast<size_t>(b));
  if (uses_audio) {
    for (int i = 0; i < b; ++i) {
      audio_out[static_cast<size_t>(i)] =
          model.audio.forward(frames[static_cast<size_t>(i)], acaches[static_cast<size_t>(i)]);
    }
  }

  double loss = 0.0;
  if (mode == FusionMode::kMid) {
    std::vector<MidItemCache> icaches(static_cast<size_t>(b));
    std::vector<MidQueryCache> qmids(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
      model.mid->fuse_item(audio_out[static_cast<size_t>(i)].transformed_seq,
                           metas[static_cast<size_t>(i)], icaches[static_cast<size_t>(i)]);
    }
    for (int j = 0; j < b; ++j) {
      model.mid->prepare_query(queries.row(j), qmids[static_cast<size_t>(j)]);
    }
    Tensor2D sim(b, b);
    for (int i = 0; i < b; ++i) {
      for (int j = 0; j < b; ++j) {
        sim.at(i, j) =
            model.mid->score(icaches[static_cast<size_t>(i)], qmids[static_cast<size_t>(j)]);
      }
    }
    Tensor2D grad_sim;
    std::tie(loss, grad_sim) = nt_xent_loss(sim, cfg.temperature);
    const MidBatchGrads grads = model.mid->backward_batch(icaches, qmids, grad_sim);
    const Tensor2D no_pooled_grad;
    for (int i = 0; i < b; ++i) {
      model.audio.backward(no_pooled_grad, grads.audio_seq[static_cast<size_t>(i)],
                           acaches[static_cast<size_t>(i)]);
      model.metadata_encoder().backward(grads.meta_emb[static_cast<size_t>(i)],
                                        mcaches[static_cast<size_t>(i)]);
    }
    for (int j = 0; j < b; ++j) {
      model.text.backward(grads.query[static_cast<size_t>(j)], qcaches[static_cast<size_t>(j)]);
    }
    return loss;
  }

  Tensor2D items(b, d);
  for (int i = 0; i < b; ++i) {
    switch (mode) {
      case FusionMode::kContent:
        items.set_row(i, audio_out[static_cast<size_t>(i)].pooled);
        break;
      case FusionMode::kMetadata:
        items.set_row(i, metas[static_cast<size_t>(i)]);
        break;
      case FusionMode::kLate: {
        Tensor2D a = audio_out[static_cast<size_t>(i)].pooled;
        Tensor2D m = metas[static_cast<size_t>(i)];
        if (model.config.late_normalize) {
          a.scale_(1.0 / l2_norm(a));
          m.scale_(1.0 / l2_norm(m));
        }
        items.set_row(i, late_fuse(a, m));
        break;
      }
      case FusionMode::kMid:
        break;  // handled above
    }
  }

  const Tensor2D sim = cosine_sim_matrix(items, queries);
  Tensor2D grad_sim;
  std::tie(loss, grad_sim) = nt_xent_loss(sim, cfg.temperature);
  Tensor2D grad_items(b, d);
  Tensor2D grad_queries(b, d);
  cosine_sim_matrix_backward(items, queries, grad_sim, grad_items, grad_queries);

  const Tensor2D no_seq_grad;
  for (int i = 0; i < b; ++i) {
    const Tensor2D g = grad_items.row(i);
    switch (mode) {
      case FusionMode::kContent:
        model.audio.backward(g, no_seq_grad, acaches[static_cast<size_t>(i)]);
        break;
      case FusionMode::kMetadata:
        model.metadata_encoder().backward(g, mcaches[static_cast<size_t>(i)]);
        break;
      case FusionMode::kLate: {
        Tensor2D ga = g;
        Tensor2D gm = g;
        if (model.config.late_normalize) {
          ga = normalize_backward(audio_out[static_cast<size_t>(i)].pooled, g);
          gm = normalize_backward(metas[static_cast<size_t>(i)], g);
        }
        model.audio.backward(ga, no_seq_grad, acaches[static_cast<size_t>(i)]);
        model.metadata_encoder().backward(gm, mcaches[static_cast<size_t>(i)]);
        break;
      }
      case FusionMode::kMid:
        break;
    }
  }
  for (int j = 0; j < b; ++j) {
    model.text.backward(grad_queries.row(j), qcaches[static_cast<size_t>(j)]);
  }
  return loss;
}

}  // namespace

TrainResult train_model(RetrievalModel& model, const Dataset& data, const TrainConfig& cfg,
                        std::ostream* log) {
  AdamOptimizer opt(model.parameters());
  return train_model(model, opt, data, cfg, log);
}

TrainResult train_model(RetrievalModel& model, AdamOptimizer& opt, const Dataset& data,
                        const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (model.config.mode != cfg.mode) {
    throw std::invalid_argument("mode: model is " + fusion_mode_name(model.config.mode) +
                                " but training config says " + fusion_mode_name(cfg.mode));
  }
  if (model.config.shared_text_encoder != cfg.shared_text_encoder) {
    throw std::invalid_argument("shared_text_encoder: model and training config disagree");
  }
  if (data.train_ids.empty()) throw std::invalid_argument("train split: empty");

  const int n = static_cast<int>(data.train_ids.size());
  const long full_batches = n / cfg.batch_size;
  const int remainder = n % cfg.batch_size;
  const long batches_per_epoch = full_batches + (remainder >= 2 ? 1 : 0);
  if (batches_per_epoch < 1) {
    throw std::invalid_argument("train split: smaller than one usable batch");
  }
  const long total_steps = batches_per_epoch * cfg.epochs;
  const long warmup_steps = batches_per_epoch * cfg.warmup_epochs;

  const std::vector<const Item*> train_items = data.split_items(data.train_ids);
  Rng rng(cfg.seed ^ kDataStreamSalt);

  TrainResult result;
  result.has_validation = !data.val_ids.empty();
  std::vector<Tensor2D> best_values;
  long step = 0;

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    long batch_count = 0;
    double last_lr = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, n - start);
      if (bsz < 2) {
        if (log) *log << "train: skipping singleton batch in epoch " << epoch << "\n";
        continue;
      }
      std::vector<const Item*> batch(static_cast<size_t>(bsz));
      for (int k = 0; k < bsz; ++k) {
        batch[static_cast<size_t>(k)] =
            train_items[static_cast<size_t>(order[static_cast<size_t>(start + k)])];
      }
      const double loss = train_batch(model, batch, cfg, rng);
      ++step;
      last_lr = lr_at(step, total_steps, warmup_steps, cfg);
      opt.step(last_lr);
      model.zero_grads();
      loss_sum += loss;
      ++batch_count;
    }

    EpochLog elog;
    elog.epoch = epoch;
    elog.mean_loss = loss_sum / static_cast<double>(batch_count);
    elog.lr = last_lr;
    if (result.has_validation) {
      elog.val_map10 = evaluate_split(model, data, data.val_ids, cfg.metadata).map10;
      if (elog.val_map10 > result.best_val_map10) {
        result.best_val_map10 = elog.val_map10;
        result.best_epoch = epoch;
        best_values = snapshot_values(model);
      }
    }
    result.epochs.push_back(elog);
    if (log) {
      *log << "epoch " << epoch << "/" << cfg.epochs << "  loss " << elog.mean_loss;
      if (result.has_validation) *log << "  val map@10 " << elog.val_map10;
      *log << "  lr " << elog.lr << "\n";
    }
  }

  if (result.has_validation && !best_values.empty()) {
    restore_values(model, best_values);
  }
  return result;
}

}  // namespace fusebed
