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

#include "fusebed/service.hpp"

#include <utility>

#include <httplib.h>
#include <json.hpp>

namespace fusebed {

using nlohmann::json;

namespace {

void answer_error(httplib::Response& res, int status, const std::string& message) {
  json body;
  body["error"] = message;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

QueryService::QueryService(RetrievalModel model, RetrievalIndex index, int threads)
    : model_(std::move(model)), index_(std::move(index)), threads_(threads) {}

void QueryService::attach(httplib::Server& server) {
  server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    json body;
    body["status"] = "ok";
    body["items"] = index_.size();
    res.set_content(body.dump(), "application/json");
  });

  server.Post("/rank", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      answer_error(res, 400, "request body is not valid JSON");
      return;
    }
    if (!body.is_object() || !body.contains("query") || !body["query"].is_string()) {
      answer_error(res, 400, "\"query\" must be a string");
      return;
    }
    int k = 10;
    if (body.contains("k")) {
      if (!body["k"].is_number_integer()) {
        answer_error(res, 400, "\"k\" must be an integer");
        return;
      }
      k = body["k"].get<int>();
    }
    if (k < 1) {
      answer_error(res, 400, "\"k\" must be at least 1");
      return;
    }
    try {
      const std::vector<ScoredItem> ranked =
          rank_items(index_, body["query"].get<std::string>(), model_, k);
      json results = json::array();
      for (const ScoredItem& item : ranked) {
        json entry;
        entry["id"] = item.id;
        entry["score"] = item.score;
        results.push_back(std::move(entry));
      }
      json answer;
      answer["results"] = std::move(results);
      res.set_content(answer.dump(), "application/json");
    } catch (const std::exception& e) {
      answer_error(res, 500, e.what());
    }
  });
}

bool QueryService::serve(const std::string& host, int port) {
  httplib::Server server;
  const int threads = threads_;
  server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  attach(server);
  return server.listen(host, port);
}

}  // namespace fusebed
