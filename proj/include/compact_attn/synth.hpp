// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

// Deterministic synthetic attention heads with planted spatial/temporal
// patterns, and random Q/K/V for kernel tests.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "compact_attn/attention.hpp"
#include "compact_attn/layout.hpp"
#include "compact_attn/masks.hpp"
#include "compact_attn/prob_map.hpp"

namespace compact_attn {

enum class SpatialKind { Local, Cross, Global };
enum class TemporalKind { Invariant, Decay, Band };

const char* to_string(SpatialKind k);
const char* to_string(TemporalKind k);
SpatialKind parse_spatial_kind(const std::string& name);
TemporalKind parse_temporal_kind(const std::string& name);

struct SyntheticHeadSpec {
  SpatialKind spatial = SpatialKind::Local;
  TemporalKind temporal = TemporalKind::Invariant;
  double decay_rate = 0.5;  // Decay: weight rate^d at frame distance d
  int band_center = 1;      // Band: weight 1 iff |d - center| <= width
  int band_width = 0;
  SpatialWindow window1{2, 2};  // Local uses window1; Cross uses both
  SpatialWindow window2{0, 0};
  double mass = 0.9;         // in-pattern mass fraction per row
  double noise_floor = 0.0;  // uniform mixture weight
  std::uint64_t seed = 0;

  friend bool operator==(const SyntheticHeadSpec&,
                         const SyntheticHeadSpec&) = default;
};

// Throws ValidationError on out-of-range fractions and ExtentTooLarge when a
// window extent exceeds the frame.
void validate(const SyntheticHeadSpec& spec, const VideoGrid& grid);

// The planted spatial region as a dual window.
DualWindow planted_window(const SyntheticHeadSpec& spec, const VideoGrid& grid);

// Frame-distance weight of the planted region; 0 removes the distance.
double temporal_weight(const SyntheticHeadSpec& spec, int distance);

// For each query, the planted region (window x positive temporal weight)
// receives `mass` split in proportion to the temporal weights, the rest of the
// row receives the remainder uniformly, and the result is mixed with a uniform
// row at weight `noise_floor`. A region covering the whole row takes all the
// mass. Rows follow raster order unless `order` is given.
AttentionProbMap gen_probmap(const SyntheticHeadSpec& spec,
                             const VideoGrid& grid);
AttentionProbMap gen_probmap(const SyntheticHeadSpec& spec,
                             const VideoGrid& grid, const Permutation& order);

// Q, K, V with entries uniform in [-1, 1], reproducible from `seed`.
AttentionInputs gen_qkv(const VideoGrid& grid, std::size_t head_dim,
                        std::uint64_t seed);

struct Perturbation {
  int extent_jitter = 0;     // tokens, at most one tile step
  double mass_jitter = 0.0;  // at most 0.02
  TileShape tile{1, 1, 1};
};

// A nearby spec of the same family, as a different prompt would produce.
// Extents move by up to extent_jitter and the mass by up to mass_jitter.
SyntheticHeadSpec gen_prompt_variant(const SyntheticHeadSpec& spec,
                                     const Perturbation& perturbation,
                                     std::uint64_t seed);

struct NamedSpec {
  std::string name;
  SyntheticHeadSpec spec;
};

// One head per pattern family: local, cross, global, time-variant (decaying
// local), and time-variant at a specific distance (banded cross). The
// patterned heads hold 0.99 of each row inside their region.
std::vector<NamedSpec> pattern_battery(const VideoGrid& grid,
                                       std::uint64_t seed);

}  // namespace compact_attn
