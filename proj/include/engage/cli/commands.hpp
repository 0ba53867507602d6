// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace engage::cli {

// engage synth|augment|train|eval|ablate|report --config <path> [--out <dir>] [--seed <u64>]
// Returns 0 on success, 1 on usage/config/contract errors, 2 on runtime or
// numeric failures.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace engage::cli
