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

#include <doctest.h>

#include "grad_suite.hpp"

using namespace fusebed;
using namespace fusebed::gradsuite;

TEST_SUITE("gradients") {
  TEST_CASE("analytic gradients match central differences") {
    const auto results = run_gradient_suite(3);
    REQUIRE(results.size() == 13);
    for (const OpResult& r : results) {
      INFO("op: ", r.op, " max rel err: ", r.max_rel);
      CHECK(r.max_rel < 1e-3);
    }
  }

  TEST_CASE("shallow smooth ops agree to much tighter tolerance") {
    // The deep stacks bottom out at the cancellation-noise floor; the
    // single ops should be near machine precision at a smaller step.
    Rng rng(77);
    const double h = 1e-5;
    CHECK(check_linear(5, rng, h).max_rel < 1e-7);
    CHECK(check_softmax(5, rng, h).max_rel < 1e-6);
    CHECK(check_layer_norm(5, rng, h).max_rel < 1e-6);
    CHECK(check_cosine_matrix(5, rng, h).max_rel < 1e-6);
    CHECK(check_cosine_pair(5, rng, h).max_rel < 1e-6);
    CHECK(check_gated_embedding(5, rng, h).max_rel < 1e-6);
    CHECK(check_nt_xent(5, rng, h).max_rel < 1e-5);
  }

  TEST_CASE("gradient harness rejects bad step sizes") {
    Parameter p("p", 1, 1);
    auto f = [&]() { return p.value.at(0, 0); };
    CHECK_THROWS_AS(finite_diff_check(f, p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(finite_diff_check(f, p, -1e-5), std::invalid_argument);
  }

  TEST_CASE("gradient harness detects a wrong gradient") {
    Parameter p("p", 1, 2);
    p.value = Tensor2D::from_rows({{1.0, 2.0}});
    auto f = [&]() { return p.value.at(0, 0) * p.value.at(0, 0) + p.value.at(0, 1); };
    p.grad = Tensor2D::from_rows({{2.0, 1.0}});  // correct: (2x, 1)
    CHECK(finite_diff_check(f, p, 1e-5) < 1e-8);
    p.grad = Tensor2D::from_rows({{2.5, 1.0}});  // wrong on purpose
    CHECK(finite_diff_check(f, p, 1e-5) > 0.1);
  }
}
