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

#include <string>

#include "fusebed/data.hpp"
#include "fusebed/model.hpp"
#include "fusebed/training.hpp"

namespace fusebed {

// Self-describing binary container: the 8-byte magic "FUSEBED1", a
// length-prefixed JSON block (model config, vocabulary, metadata kind),
// then named tensors — u64 name length, name bytes, u64 rows, u64
// cols, row-major doubles — all integers and float bits little-endian.
// Optimizer state rides along as "opt.m.<name>" / "opt.v.<name>"
// tensors plus an "opt.step" scalar when an optimizer is supplied.

void save_checkpoint(const std::string& path, RetrievalModel& model, MetadataKind metadata,
                     AdamOptimizer* opt = nullptr);

struct LoadedCheckpoint {
  RetrievalModel model;
  MetadataKind metadata = MetadataKind::kOs;
  bool has_optimizer = false;
  long opt_step = 0;
  std::vector<std::pair<std::string, Tensor2D>> opt_tensors;  // opt.m.* / opt.v.*
};

// Throws std::runtime_error on bad magic, truncation, or tensors that
// do not match the reconstructed model (each error names the tensor).
LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies saved moments into a freshly built optimizer over the loaded
// model's parameters. Throws if the checkpoint has no optimizer state.
void restore_optimizer(AdamOptimizer& opt, const LoadedCheckpoint& loaded);

}  // namespace fusebed
