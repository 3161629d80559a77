// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <random>
#include <string>

#include <unistd.h>

#include "compact_attn/attention.hpp"
#include "compact_attn/matrix.hpp"

namespace compact_attn::testing {

inline Matrix matrix(std::size_t rows, std::size_t cols,
                     std::initializer_list<float> values) {
  Matrix m(rows, cols);
  std::size_t i = 0;
  for (float v : values) m.data()[i++] = v;
  return m;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols,
                            std::mt19937_64& rng, float lo = -1.0f,
                            float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Matrix m(rows, cols);
  for (float& v : m.data()) v = dist(rng);
  return m;
}

// Random block mask that always keeps the diagonal blocks.
inline BlockMask random_mask(std::size_t tokens, std::size_t block_size,
                             double keep, std::mt19937_64& rng) {
  BlockMask mask(tokens, block_size);
  std::bernoulli_distribution coin(keep);
  for (std::size_t i = 0; i < mask.blocks(); ++i) {
    for (std::size_t j = 0; j < mask.blocks(); ++j) {
      mask.set(i, j, i == j || coin(rng));
    }
  }
  return mask;
}

// Fresh empty directory under the system temp dir, unique per process.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("compact_attn_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace compact_attn::testing
