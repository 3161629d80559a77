// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#include "compact_attn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "compact_attn/errors.hpp"

namespace compact_attn {
namespace {

float scaled_dot(std::span<const float> a, std::span<const float> b,
                 float scale) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc * scale;
}

void check_mask_shape(const AttentionInputs& inputs, const BlockMask& mask) {
  if (mask.tokens() != inputs.tokens()) {
    throw ShapeMismatch("mask covers " + std::to_string(mask.tokens()) +
                        " tokens, inputs have " +
                        std::to_string(inputs.tokens()));
  }
}

// Softmax-weighted sum of V over the keys accepted by `keep`, for one query.
template <typename KeepKey>
void attend_row(const AttentionInputs& in, std::size_t row, KeepKey keep,
                std::span<float> out, std::vector<float>& scores) {
  const std::size_t n = in.tokens();
  const auto q = in.q.row(row);
  float row_max = -std::numeric_limits<float>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (!keep(j)) continue;
    scores[j] = scaled_dot(q, in.k.row(j), in.scale);
    row_max = std::max(row_max, scores[j]);
  }
  double denom = 0.0;
  std::vector<double> acc(in.head_dim(), 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (!keep(j)) continue;
    const double p = std::exp(static_cast<double>(scores[j]) - row_max);
    denom += p;
    const auto v = in.v.row(j);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += p * v[c];
  }
  for (std::size_t c = 0; c < acc.size(); ++c) {
    out[c] = static_cast<float>(acc[c] / denom);
  }
}

}  // namespace

AttentionInputs make_inputs(Matrix q, Matrix k, Matrix v) {
  AttentionInputs in{std::move(q), std::move(k), std::move(v), 1.0f};
  if (in.q.cols() == 0) throw ShapeMismatch("head dimension must be >= 1");
  in.scale = 1.0f / std::sqrt(static_cast<float>(in.q.cols()));
  validate(in);
  return in;
}

void validate(const AttentionInputs& in) {
  if (in.q.rows() == 0) throw ShapeMismatch("attention inputs have no tokens");
  if (in.k.rows() != in.q.rows() || in.v.rows() != in.q.rows()) {
    throw ShapeMismatch("Q, K, V token counts differ: " +
                        std::to_string(in.q.rows()) + ", " +
                        std::to_string(in.k.rows()) + ", " +
                        std::to_string(in.v.rows()));
  }
  if (in.k.cols() != in.q.cols() || in.v.cols() != in.q.cols()) {
    throw ShapeMismatch("Q, K, V head dimensions differ: " +
                        std::to_string(in.q.cols()) + ", " +
                        std::to_string(in.k.cols()) + ", " +
                        std::to_string(in.v.cols()));
  }
  for (const Matrix* m : {&in.q, &in.k, &in.v}) {
    for (float x : m->data()) {
      if (!std::isfinite(x)) {
        throw ValidationError("attention inputs contain non-finite entries");
      }
    }
  }
}

BlockMask::BlockMask(std::size_t tokens, std::size_t block_size, bool fill)
    : tokens_(tokens), block_size_(block_size) {
  if (block_size == 0) throw ValidationError("block size must be >= 1");
  blocks_ = (tokens + block_size - 1) / block_size;
  cells_.assign(blocks_ * blocks_, fill ? 1 : 0);
}

BlockMask BlockMask::full(std::size_t tokens, std::size_t block_size) {
  return BlockMask(tokens, block_size, true);
}

BlockMask BlockMask::diagonal(std::size_t tokens, std::size_t block_size) {
  BlockMask mask(tokens, block_size, false);
  for (std::size_t b = 0; b < mask.blocks(); ++b) mask.set(b, b);
  return mask;
}

std::size_t BlockMask::block_end(std::size_t block) const noexcept {
  return std::min(tokens_, (block + 1) * block_size_);
}

std::size_t BlockMask::allowed_count() const noexcept {
  return static_cast<std::size_t>(
      std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

void BlockMask::require_nonempty_rows() const {
  for (std::size_t i = 0; i < blocks_; ++i) {
    const auto first = cells_.begin() + static_cast<std::ptrdiff_t>(i * blocks_);
    if (std::none_of(first, first + static_cast<std::ptrdiff_t>(blocks_),
                     [](std::uint8_t c) { return c != 0; })) {
      throw EmptyQueryRow("query block " + std::to_string(i) +
                          " has no allowed key block");
    }
  }
}

bool BlockMask::subset_of(const BlockMask& other) const {
  if (other.tokens_ != tokens_ || other.block_size_ != block_size_) {
    throw ShapeMismatch("block masks have different shapes");
  }
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i] && !other.cells_[i]) return false;
  }
  return true;
}

double flop_proxy(const BlockMask& mask) {
  if (mask.total_count() == 0) return 1.0;
  return static_cast<double>(mask.allowed_count()) /
         static_cast<double>(mask.total_count());
}

Matrix dense_attention(const AttentionInputs& inputs) {
  validate(inputs);
  Matrix out(inputs.tokens(), inputs.head_dim());
  std::vector<float> scores(inputs.tokens());
  for (std::size_t i = 0; i < inputs.tokens(); ++i) {
    attend_row(inputs, i, [](std::size_t) { return true; }, out.row(i), scores);
  }
  return out;
}

ProbMatrix attention_prob_map(const Matrix& q, const Matrix& k, float scale) {
  if (q.rows() != k.rows() || q.cols() != k.cols() || q.rows() == 0) {
    throw ShapeMismatch("Q and K must share a non-empty n x d shape");
  }
  const std::size_t n = q.rows();
  ProbMatrix probs(n, n);
  std::vector<float> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    float row_max = -std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      scores[j] = scaled_dot(q.row(i), k.row(j), scale);
      row_max = std::max(row_max, scores[j]);
    }
    double denom = 0.0;
    auto row = probs.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(static_cast<double>(scores[j]) - row_max);
      denom += row[j];
    }
    for (double& p : row) p /= denom;
  }
  return probs;
}

Matrix masked_dense_oracle(const AttentionInputs& inputs,
                           const BlockMask& mask) {
  validate(inputs);
  check_mask_shape(inputs, mask);
  mask.require_nonempty_rows();
  Matrix out(inputs.tokens(), inputs.head_dim());
  std::vector<float> scores(inputs.tokens());
  for (std::size_t i = 0; i < inputs.tokens(); ++i) {
    const std::size_t qb = mask.block_of(i);
    attend_row(
        inputs, i,
        [&](std::size_t j) { return mask.allowed(qb, mask.block_of(j)); },
        out.row(i), scores);
  }
  return out;
}

Matrix block_sparse_attention(const AttentionInputs& inputs,
                              const BlockMask& mask) {
  validate(inputs);
  check_mask_shape(inputs, mask);
  mask.require_nonempty_rows();

  const std::size_t d = inputs.head_dim();
  const std::size_t bs = mask.block_size();
  Matrix out(inputs.tokens(), d);

  std::vector<float> running_max(bs);
  std::vector<double> running_denom(bs);
  std::vector<double> running_acc(bs * d);
  std::vector<float> tile_scores(bs * bs);

  for (std::size_t qb = 0; qb < mask.blocks(); ++qb) {
    const std::size_t q0 = mask.block_begin(qb);
    const std::size_t rows = mask.block_end(qb) - q0;
    std::fill(running_max.begin(), running_max.end(),
              -std::numeric_limits<float>::infinity());
    std::fill(running_denom.begin(), running_denom.end(), 0.0);
    std::fill(running_acc.begin(), running_acc.end(), 0.0);

    for (std::size_t kb = 0; kb < mask.blocks(); ++kb) {
      if (!mask.allowed(qb, kb)) continue;
      const std::size_t k0 = mask.block_begin(kb);
      const std::size_t cols = mask.block_end(kb) - k0;

      for (std::size_t r = 0; r < rows; ++r) {
        const auto q = inputs.q.row(q0 + r);
        float* s = tile_scores.data() + r * bs;
        float tile_max = -std::numeric_limits<float>::infinity();
        for (std::size_t c = 0; c < cols; ++c) {
          s[c] = scaled_dot(q, inputs.k.row(k0 + c), inputs.scale);
          tile_max = std::max(tile_max, s[c]);
        }

        const float new_max = std::max(running_max[r], tile_max);
        // exp(-inf) == 0 wipes the empty initial state on the first tile.
        const double rescale =
            std::exp(static_cast<double>(running_max[r]) - new_max);
        double* acc = running_acc.data() + r * d;
        running_denom[r] *= rescale;
        for (std::size_t c = 0; c < d; ++c) acc[c] *= rescale;

        for (std::size_t c = 0; c < cols; ++c) {
          const double p = std::exp(static_cast<double>(s[c]) - new_max);
          running_denom[r] += p;
          const auto v = inputs.v.row(k0 + c);
          for (std::size_t e = 0; e < d; ++e) acc[e] += p * v[e];
        }
        running_max[r] = new_max;
      }
    }

    for (std::size_t r = 0; r < rows; ++r) {
      auto o = out.row(q0 + r);
      const double* acc = running_acc.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) {
        o[c] = static_cast<float>(acc[c] / running_denom[r]);
      }
    }
  }
  return out;
}

float max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch("cannot compare matrices of different shapes");
  }
  float worst = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

Matrix permute_rows(const Matrix& m, const Permutation& perm) {
  if (perm.size() != m.rows()) {
    throw ShapeMismatch("permutation size does not match matrix rows");
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::copy(m.row(r).begin(), m.row(r).end(),
              out.row(perm.position_of(r)).begin());
  }
  return out;
}

Matrix unpermute_rows(const Matrix& m, const Permutation& perm) {
  if (perm.size() != m.rows()) {
    throw ShapeMismatch("permutation size does not match matrix rows");
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t p = 0; p < m.rows(); ++p) {
    std::copy(m.row(p).begin(), m.row(p).end(),
              out.row(perm.raster_at(p)).begin());
  }
  return out;
}

}  // namespace compact_attn
