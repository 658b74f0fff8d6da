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
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fusebed/data.hpp"
#include "fusebed/model.hpp"
#include "fusebed/rng.hpp"

namespace fusebed {

struct AugmentConfig {
  bool enabled = true;
  int n_time_masks = 2;
  int n_feature_masks = 1;
  double max_span_fraction = 0.10;
};

struct TrainConfig {
  int batch_size = 32;
  int epochs = 25;
  int warmup_epochs = 1;
  double lr_max = 2e-5;
  double lr_min = 1e-7;
  double temperature = 0.05;
  uint64_t seed = 1;
  FusionMode mode = FusionMode::kLate;
  MetadataKind metadata = MetadataKind::kOs;
  bool shared_text_encoder = true;
  AugmentConfig augment;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Symmetric NT-Xent over a square similarity matrix whose diagonal
// holds the matching item-query pairs:
//   loss = 1/2 [ mean_i CE(softmax(sim_i,:/tau), i)
//              + mean_j CE(softmax(sim_:,j/tau), j) ]
// Returns the loss and its exact gradient with respect to sim.
std::pair<double, Tensor2D> nt_xent_loss(const Tensor2D& sim, double tau);

// Linear ramp 0 -> lr_max over the warmup steps, then cosine decay
// lr_min + (lr_max - lr_min)(1 + cos(pi * progress)) / 2. Continuous
// at the warmup boundary and non-increasing after it.
double lr_at(long step, long total_steps, long warmup_steps, const TrainConfig& cfg);

// Bias-corrected Adam. Gradients are read, never written; the caller
// zeroes them between steps.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Parameter*> params, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8);

  // Throws std::runtime_error naming the parameter if its gradient
  // contains a non-finite value.
  void step(double lr);

  long step_count() const { return step_; }
  void set_step_count(long s) { step_ = s; }
  const std::vector<Parameter*>& params() const { return params_; }
  Tensor2D& moment1(size_t i) { return m_[i]; }
  Tensor2D& moment2(size_t i) { return v_[i]; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor2D> m_;
  std::vector<Tensor2D> v_;
  long step_ = 0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
};

// Zeroes up to n_time_masks contiguous frame spans and up to
// n_feature_masks contiguous feature-channel spans, each span width
// drawn uniformly from [0, floor(max_span_fraction * extent)].
// Identity when disabled.
FrameSequence spec_augment(const FrameSequence& x, Rng& rng, const AugmentConfig& cfg);

// Vocabulary over the train split: captions plus metadata text, tokens
// kept in first-appearance order.
Vocabulary build_vocabulary(const Dataset& data, MetadataKind kind);

struct EpochLog {
  int epoch = 0;          // 1-based
  double mean_loss = 0.0;
  double val_map10 = -1.0;  // -1 when there is no validation split
  double lr = 0.0;          // learning rate at the last step of the epoch
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  bool has_validation = false;
  int best_epoch = -1;  // 1-based; -1 when no validation tracking
  double best_val_map10 = -1.0;
};

// Full contrastive training loop. The model must be constructed and
// initialized by the caller with a mode matching cfg; opt must wrap
// exactly the model's parameters. When a validation split exists, the
// parameters of the best-mAP@10 epoch are restored into the model
// before returning. Progress lines go to *log when non-null.
TrainResult train_model(RetrievalModel& model, AdamOptimizer& opt, const Dataset& data,
                        const TrainConfig& cfg, std::ostream* log);

// Convenience wrapper that owns a throwaway optimizer.
TrainResult train_model(RetrievalModel& model, const Dataset& data, const TrainConfig& cfg,
                        std::ostream* log);

}  // namespace fusebed
