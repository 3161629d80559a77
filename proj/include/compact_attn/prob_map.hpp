// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "compact_attn/layout.hpp"
#include "compact_attn/matrix.hpp"

namespace compact_attn {

inline constexpr double kRowSumTolerance = 1e-6;

// Post-softmax attention probabilities of one head. Rows and columns follow
// the token order described by `perm`: position p holds the token with raster
// index perm.raster_at(p).
class AttentionProbMap {
 public:
  // Throws ShapeMismatch if the sizes disagree and ValidationError if an entry
  // is negative or non-finite or a row does not sum to 1 within
  // kRowSumTolerance.
  AttentionProbMap(VideoGrid grid, Permutation perm, ProbMatrix probs);

  // Rescales every row to sum to exactly 1 before validating. For dumps
  // stored at reduced precision.
  static AttentionProbMap renormalized(VideoGrid grid, Permutation perm,
                                       ProbMatrix probs);

  const VideoGrid& grid() const noexcept { return grid_; }
  const Permutation& perm() const noexcept { return perm_; }
  const ProbMatrix& probs() const noexcept { return probs_; }
  std::size_t tokens() const noexcept { return probs_.rows(); }

  double operator()(std::size_t query_pos, std::size_t key_pos) const {
    return probs_(query_pos, key_pos);
  }
  TokenCoord coord_at(std::size_t pos) const {
    return coord_of(grid_, perm_.raster_at(pos));
  }

  // The same map with rows and columns relabelled into `order`.
  AttentionProbMap reordered(const Permutation& order) const;

 private:
  VideoGrid grid_;
  Permutation perm_;
  ProbMatrix probs_;
};

}  // namespace compact_attn
