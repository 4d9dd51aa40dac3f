// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "sparx_tools/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sparx::tools::run_cli(args, std::cout, std::cerr);
}
