// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

// Video token lattice and its flattening orders.
//
// A latent video of f frames with h x w tokens each is flattened to a 1D
// sequence before attention. The raster order is frame-major, then row, then
// column. The tiled order makes every (tf, th, tw) tile of spatially adjacent
// tokens contiguous, so that fixed-length blocks of the sequence line up with
// 3D neighbourhoods.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace compact_attn {

struct VideoGrid {
  int f = 1;
  int h = 1;
  int w = 1;

  std::size_t tokens() const noexcept {
    return static_cast<std::size_t>(f) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t frame_tokens() const noexcept {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  friend bool operator==(const VideoGrid&, const VideoGrid&) = default;
};

struct TileShape {
  int tf = 1;
  int th = 1;
  int tw = 1;

  std::size_t tokens() const noexcept {
    return static_cast<std::size_t>(tf) * static_cast<std::size_t>(th) *
           static_cast<std::size_t>(tw);
  }

  friend bool operator==(const TileShape&, const TileShape&) = default;
};

// Ships as the default: one tile of 16 tokens stays inside a frame and four of
// them fill a 64-token block.
inline constexpr TileShape kDefaultTile{1, 4, 4};

struct TokenCoord {
  int t = 0;
  int y = 0;
  int x = 0;

  friend bool operator==(const TokenCoord&, const TokenCoord&) = default;
};

// Throws ValidationError unless every dimension is >= 1.
void validate(const VideoGrid& grid);
// Throws NonDivisibleTile unless every tile dimension is >= 1 and divides the
// matching grid dimension.
void validate(const VideoGrid& grid, const TileShape& tile);

std::string to_string(const VideoGrid& grid);
std::string to_string(const TileShape& tile);

// Raster index <-> coordinate. Both throw OutOfRange on invalid input.
TokenCoord coord_of(const VideoGrid& grid, std::size_t raster_index);
std::size_t index_of(const VideoGrid& grid, const TokenCoord& coord);

// Bijection between raster indices and positions in a reordered sequence.
// forward[raster_index] is the token's position in the new order;
// inverse[position] is the raster index of the token stored there.
class Permutation {
 public:
  Permutation() = default;
  // Builds from the forward map; throws ValidationError if it is not a
  // bijection on [0, n).
  explicit Permutation(std::vector<std::uint32_t> forward);

  static Permutation identity(std::size_t n);

  std::size_t size() const noexcept { return forward_.size(); }
  const std::vector<std::uint32_t>& forward() const noexcept { return forward_; }
  const std::vector<std::uint32_t>& inverse() const noexcept { return inverse_; }

  std::size_t position_of(std::size_t raster_index) const {
    return forward_[raster_index];
  }
  std::size_t raster_at(std::size_t position) const {
    return inverse_[position];
  }

  friend bool operator==(const Permutation& a, const Permutation& b) {
    return a.forward_ == b.forward_;
  }

 private:
  std::vector<std::uint32_t> forward_;
  std::vector<std::uint32_t> inverse_;
};

Permutation raster_order(const VideoGrid& grid);
Permutation tile_order(const VideoGrid& grid, const TileShape& tile);

enum class TokenOrder { Raster, Tiled };

TokenOrder parse_token_order(const std::string& name);
const char* to_string(TokenOrder order);

// The permutation for `order`; `tile` is ignored for raster order.
Permutation make_order(const VideoGrid& grid, TokenOrder order,
                       const TileShape& tile);

}  // namespace compact_attn
