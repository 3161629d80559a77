// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#include "compact_attn/prob_map.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "compact_attn/errors.hpp"

namespace compact_attn {

AttentionProbMap::AttentionProbMap(VideoGrid grid, Permutation perm,
                                   ProbMatrix probs)
    : grid_(grid), perm_(std::move(perm)), probs_(std::move(probs)) {
  validate(grid_);
  const std::size_t n = grid_.tokens();
  if (perm_.size() != n || probs_.rows() != n || probs_.cols() != n) {
    throw ShapeMismatch("probability map must be " + std::to_string(n) + "x" +
                        std::to_string(n) + " for grid " + to_string(grid_));
  }
  for (std::size_t r = 0; r < n; ++r) {
    double sum = 0.0;
    for (double p : probs_.row(r)) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw ValidationError("probability map row " + std::to_string(r) +
                              " has a negative or non-finite entry");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw ValidationError("probability map row " + std::to_string(r) +
                            " sums to " + std::to_string(sum));
    }
  }
}

AttentionProbMap AttentionProbMap::renormalized(VideoGrid grid,
                                                Permutation perm,
                                                ProbMatrix probs) {
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    if (sum > 0.0) {
      for (double& p : row) p /= sum;
    }
  }
  return AttentionProbMap(grid, std::move(perm), std::move(probs));
}

AttentionProbMap AttentionProbMap::reordered(const Permutation& order) const {
  const std::size_t n = tokens();
  if (order.size() != n) {
    throw ShapeMismatch("reordering permutation does not match the map");
  }
  // old position -> new position
  std::vector<std::size_t> moved(n);
  for (std::size_t p = 0; p < n; ++p) moved[p] = order.position_of(perm_.raster_at(p));
  ProbMatrix out(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto src = probs_.row(r);
    auto dst = out.row(moved[r]);
    for (std::size_t c = 0; c < n; ++c) dst[moved[c]] = src[c];
  }
  AttentionProbMap result = *this;
  result.perm_ = order;
  result.probs_ = std::move(out);
  return result;
}

}  // namespace compact_attn
