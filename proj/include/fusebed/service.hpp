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

#include "fusebed/model.hpp"
#include "fusebed/retrieval.hpp"

namespace httplib {
class Server;
}

namespace fusebed {

// HTTP front end over a frozen model + index pair.
//
//   GET  /health          -> {"status":"ok","items":N}
//   POST /rank            -> {"results":[{"id":...,"score":...}, ...]}
//        body {"query": string, "k": integer >= 1 (default 10)}
//
// Malformed bodies and k < 1 answer 400 with {"error": message};
// scoring failures answer 500. Handlers only read the shared state, so
// concurrent responses are byte-identical to serial ones.
class QueryService {
 public:
  QueryService(RetrievalModel model, RetrievalIndex index, int threads = 8);

  // Registers the endpoints; useful for tests that drive their own
  // server lifecycle.
  void attach(httplib::Server& server);

  // Blocking listen loop with the configured thread pool; returns
  // false if the port cannot be bound.
  bool serve(const std::string& host, int port);

  const RetrievalModel& model() const { return model_; }
  const RetrievalIndex& index() const { return index_; }

 private:
  RetrievalModel model_;
  RetrievalIndex index_;
  int threads_ = 8;
};

}  // namespace fusebed
