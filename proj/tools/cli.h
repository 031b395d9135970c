/*
 * Copyright 2026 The icubench Authors.
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

#ifndef ICUBENCH_TOOLS_CLI_H_
#define ICUBENCH_TOOLS_CLI_H_

#include <iostream>
#include <string>
#include <vector>

#include "icubench/error.h"

namespace icubench::cli {

// Process exit code of each error category. Success is 0.
int ExitCode(ErrorCategory category);

// Runs one command line (without the program name). Errors are reported on
// `err` as "icubench: error[<category>]: <message>".
int RunCli(const std::vector<std::string>& args, std::ostream& out = std::cout,
           std::ostream& err = std::cerr);

}  // namespace icubench::cli

#endif  // ICUBENCH_TOOLS_CLI_H_
