/* Copyright 2026 The BCPNet Engine Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef BCPNET_CLI_HPP_
#define BCPNET_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace bcpnet {

inline constexpr int kExitOk = 0;
// Numeric or training failure, or a gradient check over tolerance.
inline constexpr int kExitFailure = 1;
// Bad flags, config, weights or input files.
inline constexpr int kExitUsage = 2;

// Runs one command line (args excludes the program name). Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bcpnet

#endif  // BCPNET_CLI_HPP_
