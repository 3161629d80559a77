// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  return compact_attn::cli::run({argv, argv + argc}, std::cout, std::cerr);
}
