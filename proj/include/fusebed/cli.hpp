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

namespace fusebed {

// Entry point behind main(). Subcommands: gen-data, train, evaluate,
// rank, compare (with --degradation), serve. Exit codes: 0 success,
// 1 invalid configuration or runtime failure (message names the
// offending field), 2 usage errors such as an unknown subcommand.
int run_command(int argc, const char* const* argv);

}  // namespace fusebed
