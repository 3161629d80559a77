// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#include "compact_attn/layout.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "compact_attn/errors.hpp"

namespace compact_attn {

void validate(const VideoGrid& grid) {
  if (grid.f < 1 || grid.h < 1 || grid.w < 1) {
    throw ValidationError("grid dimensions must be >= 1, got " +
                          to_string(grid));
  }
  if (grid.tokens() > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("grid " + to_string(grid) + " has too many tokens");
  }
}

void validate(const VideoGrid& grid, const TileShape& tile) {
  validate(grid);
  if (tile.tf < 1 || tile.th < 1 || tile.tw < 1) {
    throw NonDivisibleTile("tile dimensions must be >= 1, got " +
                           to_string(tile));
  }
  if (grid.f % tile.tf != 0 || grid.h % tile.th != 0 || grid.w % tile.tw != 0) {
    throw NonDivisibleTile("tile " + to_string(tile) +
                           " does not divide grid " + to_string(grid));
  }
}

std::string to_string(const VideoGrid& grid) {
  return std::to_string(grid.f) + "x" + std::to_string(grid.h) + "x" +
         std::to_string(grid.w);
}

std::string to_string(const TileShape& tile) {
  return std::to_string(tile.tf) + "x" + std::to_string(tile.th) + "x" +
         std::to_string(tile.tw);
}

TokenCoord coord_of(const VideoGrid& grid, std::size_t raster_index) {
  if (raster_index >= grid.tokens()) {
    throw OutOfRange("token index " + std::to_string(raster_index) +
                     " outside grid " + to_string(grid));
  }
  const auto w = static_cast<std::size_t>(grid.w);
  const auto hw = grid.frame_tokens();
  return TokenCoord{static_cast<int>(raster_index / hw),
                    static_cast<int>((raster_index % hw) / w),
                    static_cast<int>(raster_index % w)};
}

std::size_t index_of(const VideoGrid& grid, const TokenCoord& c) {
  if (c.t < 0 || c.t >= grid.f || c.y < 0 || c.y >= grid.h || c.x < 0 ||
      c.x >= grid.w) {
    throw OutOfRange("coordinate (" + std::to_string(c.t) + "," +
                     std::to_string(c.y) + "," + std::to_string(c.x) +
                     ") outside grid " + to_string(grid));
  }
  return (static_cast<std::size_t>(c.t) * grid.h + c.y) * grid.w + c.x;
}

Permutation::Permutation(std::vector<std::uint32_t> forward)
    : forward_(std::move(forward)), inverse_(forward_.size()) {
  constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
  std::fill(inverse_.begin(), inverse_.end(), kUnset);
  for (std::size_t i = 0; i < forward_.size(); ++i) {
    const auto p = forward_[i];
    if (p >= forward_.size() || inverse_[p] != kUnset) {
      throw ValidationError("permutation is not a bijection at index " +
                            std::to_string(i));
    }
    inverse_[p] = static_cast<std::uint32_t>(i);
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::uint32_t> forward(n);
  std::iota(forward.begin(), forward.end(), 0u);
  return Permutation(std::move(forward));
}

Permutation raster_order(const VideoGrid& grid) {
  validate(grid);
  return Permutation::identity(grid.tokens());
}

Permutation tile_order(const VideoGrid& grid, const TileShape& tile) {
  validate(grid, tile);
  const int tiles_y = grid.h / tile.th;
  const int tiles_x = grid.w / tile.tw;
  const auto tile_tokens = static_cast<std::uint32_t>(tile.tokens());

  std::vector<std::uint32_t> forward(grid.tokens());
  std::uint32_t raster = 0;
  for (int t = 0; t < grid.f; ++t) {
    for (int y = 0; y < grid.h; ++y) {
      for (int x = 0; x < grid.w; ++x, ++raster) {
        const std::uint32_t tile_index =
            (static_cast<std::uint32_t>(t / tile.tf) * tiles_y + y / tile.th) *
                tiles_x +
            x / tile.tw;
        const std::uint32_t local =
            (static_cast<std::uint32_t>(t % tile.tf) * tile.th + y % tile.th) *
                tile.tw +
            x % tile.tw;
        forward[raster] = tile_index * tile_tokens + local;
      }
    }
  }
  return Permutation(std::move(forward));
}

TokenOrder parse_token_order(const std::string& name) {
  if (name == "raster") return TokenOrder::Raster;
  if (name == "tiled" || name == "tile") return TokenOrder::Tiled;
  throw ValidationError("unknown token order '" + name +
                        "' (expected raster or tiled)");
}

const char* to_string(TokenOrder order) {
  return order == TokenOrder::Raster ? "raster" : "tiled";
}

Permutation make_order(const VideoGrid& grid, TokenOrder order,
                       const TileShape& tile) {
  return order == TokenOrder::Raster ? raster_order(grid)
                                     : tile_order(grid, tile);
}

}  // namespace compact_attn
