// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

// Attention-map and mask analysis: recall, top-k block coverage, mask
// similarity, spatial/temporal pattern labels, and PSNR/MSE.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "compact_attn/attention.hpp"
#include "compact_attn/masks.hpp"
#include "compact_attn/matrix.hpp"
#include "compact_attn/prob_map.hpp"

namespace compact_attn {

enum class SpatialPattern { Local, Cross, Global };
enum class TemporalPattern { TimeVariant, TimeInvariant };

struct PatternLabel {
  SpatialPattern spatial = SpatialPattern::Global;
  TemporalPattern temporal = TemporalPattern::TimeInvariant;

  friend bool operator==(const PatternLabel&, const PatternLabel&) = default;
};

const char* to_string(SpatialPattern p);
const char* to_string(TemporalPattern p);

// Mean over query rows of the probability mass inside allowed blocks. The map
// must already be in the token order the mask was rasterized for.
double recall(const AttentionProbMap& map, const BlockMask& mask);

// Total probability mass of every (query block, key block) pair.
ProbMatrix block_mass(const AttentionProbMap& map, std::size_t block_size);

// recall() from precomputed block masses of a map with `tokens` rows.
double recall_from_block_mass(const ProbMatrix& mass, const BlockMask& mask,
                              std::size_t tokens);

// Per query row, the fewest key blocks whose mass reaches `target` of the row;
// returns the mean count divided by the number of key blocks.
double topk_block_fraction(const AttentionProbMap& map, std::size_t block_size,
                           double target);

// |a AND b| / |a OR b|, and 1.0 when both masks are empty.
double jaccard(const BlockMask& a, const BlockMask& b);

struct SpatialParams {
  double capture_mass = 0.85;      // mass the fitted dual window must hold
  double global_area = 0.85;       // frame-area fraction above which -> Global
  double cross_aspect_ratio = 4.0; // min ratio between the windows' aspects
};

struct SpatialFit {
  SpatialPattern pattern = SpatialPattern::Global;
  DualWindow window;           // smallest centred dual window holding the mass
  double captured_mass = 0.0;
  double area_fraction = 0.0;  // window area over frame area
  double aspect_ratio = 1.0;   // between the two windows' aspect ratios
};

// Aggregates every row's mass by absolute spatial offset (|dx|, |dy|), then
// finds the smallest-area centred dual window holding `capture_mass` of it.
SpatialFit fit_spatial(const AttentionProbMap& map,
                       const SpatialParams& params = {});
SpatialPattern classify_spatial(const AttentionProbMap& map,
                                const SpatialParams& params = {});

// Mean probability per query/key pair at each absolute frame distance.
std::vector<double> temporal_profile(const AttentionProbMap& map);

// TimeVariant iff max/min of temporal_profile exceeds `ratio_threshold`.
// Throws SingleFrame when the grid has one frame.
TemporalPattern classify_temporal(const AttentionProbMap& map,
                                  double ratio_threshold = 2.0);

PatternLabel classify(const AttentionProbMap& map,
                      const SpatialParams& spatial = {},
                      double temporal_ratio_threshold = 2.0);

double mse(const Matrix& a, const Matrix& b);
// +infinity for identical inputs.
double psnr(const Matrix& a, const Matrix& b, double max_val);

}  // namespace compact_attn
