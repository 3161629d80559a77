// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

// Scaled-dot-product attention: a dense reference, a masked dense oracle, and
// the block-sparse kernel that walks only the allowed key blocks of each query
// block with an online softmax.
//
// Scores and inputs are 32-bit floats. Softmax exponentials, denominators and
// the weighted value sums accumulate in 64-bit.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "compact_attn/layout.hpp"
#include "compact_attn/matrix.hpp"

namespace compact_attn {

inline constexpr std::size_t kDefaultBlockSize = 64;

struct AttentionInputs {
  Matrix q;
  Matrix k;
  Matrix v;
  float scale = 1.0f;

  std::size_t tokens() const noexcept { return q.rows(); }
  std::size_t head_dim() const noexcept { return q.cols(); }
};

// Bundles Q, K, V with scale 1/sqrt(d). Throws ShapeMismatch on inconsistent
// shapes and ValidationError on non-finite entries.
AttentionInputs make_inputs(Matrix q, Matrix k, Matrix v);
void validate(const AttentionInputs& inputs);

// Boolean grid over (query block, key block) pairs. One block size is used for
// both axes; the trailing block is short when block_size does not divide the
// token count.
class BlockMask {
 public:
  BlockMask() = default;
  BlockMask(std::size_t tokens, std::size_t block_size, bool fill = false);

  static BlockMask full(std::size_t tokens, std::size_t block_size);
  static BlockMask diagonal(std::size_t tokens, std::size_t block_size);

  std::size_t tokens() const noexcept { return tokens_; }
  std::size_t block_size() const noexcept { return block_size_; }
  std::size_t blocks() const noexcept { return blocks_; }
  std::size_t block_of(std::size_t token) const noexcept {
    return token / block_size_;
  }
  std::size_t block_begin(std::size_t block) const noexcept {
    return block * block_size_;
  }
  std::size_t block_end(std::size_t block) const noexcept;

  bool allowed(std::size_t query_block, std::size_t key_block) const {
    return cells_[query_block * blocks_ + key_block] != 0;
  }
  void set(std::size_t query_block, std::size_t key_block, bool value = true) {
    cells_[query_block * blocks_ + key_block] = value ? 1 : 0;
  }

  std::size_t allowed_count() const noexcept;
  std::size_t total_count() const noexcept { return blocks_ * blocks_; }

  // Throws EmptyQueryRow if some query block has no allowed key block.
  void require_nonempty_rows() const;

  // True iff every block allowed here is also allowed in `other`.
  bool subset_of(const BlockMask& other) const;

  friend bool operator==(const BlockMask&, const BlockMask&) = default;

 private:
  std::size_t tokens_ = 0;
  std::size_t block_size_ = 1;
  std::size_t blocks_ = 0;
  std::vector<std::uint8_t> cells_;
};

// Fraction of block pairs that are computed; equals 1 - sparsity.
double flop_proxy(const BlockMask& mask);

Matrix dense_attention(const AttentionInputs& inputs);

// Row-stochastic softmax(Q K^T * scale). Throws ShapeMismatch.
ProbMatrix attention_prob_map(const Matrix& q, const Matrix& k, float scale);

// Dense attention with disallowed blocks excluded from every softmax.
Matrix masked_dense_oracle(const AttentionInputs& inputs, const BlockMask& mask);

// Blockwise online-softmax attention over the allowed blocks only.
Matrix block_sparse_attention(const AttentionInputs& inputs,
                              const BlockMask& mask);

float max_abs_diff(const Matrix& a, const Matrix& b);

// Row r of `m` moves to row perm.position_of(r).
Matrix permute_rows(const Matrix& m, const Permutation& perm);
// Undoes permute_rows.
Matrix unpermute_rows(const Matrix& m, const Permutation& perm);

}  // namespace compact_attn
