// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// The `dccrn` command line: enhance, train-toy, bench, verify and synth.

#pragma once

#include <string>
#include <vector>

namespace dccrn::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Parses and runs one command line (args[0] is the program name) and
// returns the process exit code. Log verbosity comes from DCCRN_LOG_LEVEL.
int run(const std::vector<std::string>& args);

}  // namespace dccrn::cli
