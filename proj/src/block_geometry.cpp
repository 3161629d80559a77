// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <climits>
#include <cstdlib>

#include "compact_attn/errors.hpp"
#include "compact_attn/masks.hpp"

namespace compact_attn {

BlockGeometry::BlockGeometry(const VideoGrid& grid, const Permutation& perm,
                             std::size_t block_size,
                             std::span<const int> group_starts)
    : grid_(grid), block_size_(block_size) {
  validate(grid);
  if (block_size == 0) throw ValidationError("block size must be >= 1");
  if (perm.size() != grid.tokens()) {
    throw ShapeMismatch("permutation does not match grid " + to_string(grid));
  }
  for (const auto& g : make_groups(grid, group_starts)) starts_.push_back(g.d_lo);

  const std::size_t n = grid.tokens();
  const std::size_t groups = starts_.size();
  blocks_ = (n + block_size - 1) / block_size;

  std::vector<int> group_of_distance(static_cast<std::size_t>(grid.f));
  for (std::size_t g = 0; g < groups; ++g) {
    const int end = g + 1 < groups ? starts_[g + 1] : grid.f;
    for (int d = starts_[g]; d < end; ++d) group_of_distance[d] = static_cast<int>(g);
  }

  std::vector<TokenCoord> coords(n);
  for (std::size_t p = 0; p < n; ++p) coords[p] = coord_of(grid, perm.raster_at(p));

  // min |dx| seen for each (group, |dy|) within the current block pair.
  const auto h = static_cast<std::size_t>(grid.h);
  std::vector<int> min_dx(groups * h);

  frontier_begin_.reserve(blocks_ * blocks_ * groups + 1);
  frontier_begin_.push_back(0);
  for (std::size_t qb = 0; qb < blocks_; ++qb) {
    const std::size_t q0 = qb * block_size;
    const std::size_t q1 = std::min(n, q0 + block_size);
    for (std::size_t kb = 0; kb < blocks_; ++kb) {
      const std::size_t k0 = kb * block_size;
      const std::size_t k1 = std::min(n, k0 + block_size);
      std::fill(min_dx.begin(), min_dx.end(), INT_MAX);
      for (std::size_t qi = q0; qi < q1; ++qi) {
        const TokenCoord& q = coords[qi];
        for (std::size_t ki = k0; ki < k1; ++ki) {
          const TokenCoord& k = coords[ki];
          const auto g = static_cast<std::size_t>(group_of_distance[std::abs(k.t - q.t)]);
          int& slot = min_dx[g * h + static_cast<std::size_t>(std::abs(k.y - q.y))];
          slot = std::min(slot, std::abs(k.x - q.x));
        }
      }
      for (std::size_t g = 0; g < groups; ++g) {
        int best = INT_MAX;
        for (std::size_t dy = 0; dy < h; ++dy) {
          const int dx = min_dx[g * h + dy];
          if (dx < best) {
            frontier_.push_back(Offset{dx, static_cast<int>(dy)});
            best = dx;
          }
        }
        frontier_begin_.push_back(static_cast<std::uint32_t>(frontier_.size()));
      }
    }
  }
}

BlockMask BlockGeometry::rasterize(const HeadMaskConfig& config) const {
  BlockMask out(tokens(), block_size_);
  rasterize_into(config, out);
  return out;
}

void BlockGeometry::rasterize_into(const HeadMaskConfig& config,
                                   BlockMask& out) const {
  // Groups past the last frame distance of the grid never match a pair.
  std::size_t reachable = 0;
  while (reachable < config.groups.size() &&
         config.groups[reachable].d_lo <= grid_.f - 1) {
    ++reachable;
  }
  if (reachable != starts_.size()) {
    throw GroupBoundaryMismatch("config has " + std::to_string(reachable) +
                                " reachable frame groups, geometry has " +
                                std::to_string(starts_.size()));
  }
  for (std::size_t g = 0; g < starts_.size(); ++g) {
    if (config.groups[g].d_lo != starts_[g]) {
      throw GroupBoundaryMismatch("groups[" + std::to_string(g) +
                                  "] starts at a different frame distance");
    }
  }
  if (out.tokens() != tokens() || out.block_size() != block_size_) {
    throw ShapeMismatch("output mask shape does not match the geometry");
  }

  const std::size_t groups = starts_.size();
  for (std::size_t qb = 0; qb < blocks_; ++qb) {
    for (std::size_t kb = 0; kb < blocks_; ++kb) {
      const std::size_t base = (qb * blocks_ + kb) * groups;
      bool allowed = false;
      for (std::size_t g = 0; g < groups && !allowed; ++g) {
        const DualWindow& window = config.groups[g].window;
        if (window.empty()) continue;
        const std::uint32_t end = frontier_begin_[base + g + 1];
        for (std::uint32_t i = frontier_begin_[base + g]; i < end; ++i) {
          if (window.contains(frontier_[i].dx, frontier_[i].dy)) {
            allowed = true;
            break;
          }
        }
      }
      out.set(qb, kb, allowed);
    }
  }
}

}  // namespace compact_attn
