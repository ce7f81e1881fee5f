// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cli.hpp"

int main(int argc, char** argv) {
  return dccrn::cli::run(std::vector<std::string>(argv, argv + argc));
}
