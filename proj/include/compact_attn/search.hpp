// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

// Offline search of per-head sparse configs.
//
// Starting from full attention, the search repeatedly applies the window
// contraction that loses the least recall per unit of cost saved, where cost
// is the fraction of block pairs computed. It stops when the best move would
// take recall below tau, when its recall/cost ratio exceeds lambda, or when no
// move changes the mask. Configs found on several prompts are merged by union,
// and a model schedule reuses each config over n consecutive denoising steps
// after a dense warm-up prefix.

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "compact_attn/attention.hpp"
#include "compact_attn/layout.hpp"
#include "compact_attn/masks.hpp"
#include "compact_attn/prob_map.hpp"

namespace compact_attn {

// Which sparse geometry the search may produce.
enum class SearchMode {
  DualWindow,      // per-group dual windows (the full model)
  FrameGroupWise,  // per-group single window
  Cubic,           // one window shared by every enabled group; groups may
                   // only be disabled from the farthest distance inwards
};

const char* to_string(SearchMode mode);
SearchMode parse_search_mode(const std::string& name);

struct SearchParams {
  double tau = 0.9;
  double lambda = 0.011;
  TileShape tile = kDefaultTile;
  std::size_t block_size = kDefaultBlockSize;
  std::vector<int> group_starts = kDefaultGroupStarts;
  int step_reuse_n = 1;
  int full_prefix = 0;
  SearchMode mode = SearchMode::DualWindow;
};

// Throws ValidationError unless 0 < tau <= 1, lambda > 0, step_reuse_n >= 1
// and full_prefix >= 0.
void validate(const SearchParams& params);

enum class Axis { X, Y };

// One extent change inside a move. slot is 1 or 2.
struct ExtentChange {
  int slot = 1;
  Axis axis = Axis::X;
  int new_extent = 0;

  friend bool operator==(const ExtentChange&, const ExtentChange&) = default;
};

struct CandidateMove {
  // Frame-group index, or -1 for the window shared by all groups (Cubic).
  int group = 0;
  // Sets the group's dual window empty. Never applies to distance 0.
  bool disable = false;
  // Extents shrunk together, each by one or more tile steps.
  std::vector<ExtentChange> changes;

  std::string describe() const;
  friend bool operator==(const CandidateMove&, const CandidateMove&) = default;
};

struct TraceStep {
  CandidateMove move;
  double recall_after = 0.0;
  double cost_after = 0.0;
  double ratio = 0.0;
};

enum class Termination { RecallThreshold, CostThreshold, Exhausted };
const char* to_string(Termination t);

struct SearchTrace {
  double initial_recall = 1.0;
  double initial_cost = 1.0;
  std::vector<TraceStep> steps;
  Termination termination = Termination::Exhausted;
};

struct SearchResult {
  HeadMaskConfig config;
  SearchTrace trace;
  double recall = 1.0;  // of the returned config on the searched map
  double cost = 1.0;    // flop proxy of the returned config
};

// The starting point of a search in `mode`.
HeadMaskConfig initial_config(const VideoGrid& grid, const SearchParams& params);

// Throws IncompatibleGrid when the tile does not divide the map's grid.
SearchResult shrink_search(const AttentionProbMap& map,
                           const SearchParams& params);

// Left fold of union_configs. Throws GroupBoundaryMismatch.
HeadMaskConfig merge_prompts(const std::vector<HeadMaskConfig>& configs);

struct DumpKey {
  int layer = 0;
  int head = 0;
  int step = 0;

  friend auto operator<=>(const DumpKey&, const DumpKey&) = default;
};

using DumpTable = std::map<DumpKey, AttentionProbMap>;

// Steps below full_prefix run dense. The remaining steps are cut into ranges
// of step_reuse_n; each (layer, head, range) is searched on the map of the
// range's first step. The dumped steps must be contiguous and all maps must
// share one grid. Throws MissingDump when a representative map is absent.
ModelMaskSchedule schedule_search(const DumpTable& dumps,
                                  const SearchParams& params,
                                  std::size_t jobs = 1);

struct ConfigReport {
  std::vector<double> recalls;
  double mean_recall = 0.0;
  double sparsity = 0.0;
  double flop_proxy = 1.0;
};

// Rasterizes `config` in the maps' token order and measures it on each map.
// All maps must share grid and token order.
ConfigReport evaluate_config(const HeadMaskConfig& config,
                             const std::vector<const AttentionProbMap*>& maps,
                             std::size_t block_size);

}  // namespace compact_attn
