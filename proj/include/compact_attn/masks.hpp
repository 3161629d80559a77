// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

// Deformable per-head sparse patterns.
//
// A head's pattern is a list of frame groups keyed by absolute frame distance
// |t_key - t_query|. Each group carries a dual window: the union of two
// axis-aligned boxes centred on the query's (x, y). One box expresses a local
// pattern, two boxes with complementary dominance express a cross, and boxes
// spanning the frame express a global pattern. A non-nearest group may carry
// no window at all, which suppresses those frame distances entirely.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "compact_attn/attention.hpp"
#include "compact_attn/layout.hpp"

namespace compact_attn {

// Half-extents in tokens; 0 keeps only the query's own column (omega) or row
// (eta).
struct SpatialWindow {
  int omega = 0;  // along x
  int eta = 0;    // along y

  bool contains(int dx, int dy) const noexcept {
    return dx <= omega && dy <= eta;
  }
  friend bool operator==(const SpatialWindow&, const SpatialWindow&) = default;
};

struct DualWindow {
  std::optional<SpatialWindow> w1;
  std::optional<SpatialWindow> w2;

  bool empty() const noexcept { return !w1 && !w2; }
  // dx, dy are absolute offsets.
  bool contains(int dx, int dy) const noexcept {
    return (w1 && w1->contains(dx, dy)) || (w2 && w2->contains(dx, dy));
  }
  // (omega1 - omega2)(eta1 - eta2) < 0: each window dominates a different axis.
  bool is_cross() const noexcept {
    return w1 && w2 &&
           (w1->omega - w2->omega) * (w1->eta - w2->eta) < 0;
  }
  friend bool operator==(const DualWindow&, const DualWindow&) = default;
};

struct FrameGroup {
  int d_lo = 0;  // inclusive
  int d_hi = 0;  // inclusive
  DualWindow window;

  bool covers(int distance) const noexcept {
    return distance >= d_lo && distance <= d_hi;
  }
  friend bool operator==(const FrameGroup&, const FrameGroup&) = default;
};

struct HeadMaskConfig {
  std::vector<FrameGroup> groups;

  // Group whose distance range contains `distance`, or nullptr.
  const FrameGroup* group_for(int distance) const noexcept;
  // d_lo of every group, in order.
  std::vector<int> group_starts() const;

  friend bool operator==(const HeadMaskConfig&, const HeadMaskConfig&) = default;
};

// {0}, {1-2}, {3-6}, {7+}.
inline const std::vector<int> kDefaultGroupStarts{0, 1, 3, 7};

// Partitions [0, grid.f - 1] at the given group starts. The starts must begin
// at 0 and increase strictly; starts beyond the last frame distance are
// dropped. Every group gets an empty window.
std::vector<FrameGroup> make_groups(const VideoGrid& grid,
                                    std::span<const int> group_starts);

// Window spanning a whole frame of `grid`.
SpatialWindow full_window(const VideoGrid& grid);

// Every group attends to the whole frame. Both window slots are set unless
// `dual` is false, in which case only w1 is.
HeadMaskConfig full_config(const VideoGrid& grid,
                           std::span<const int> group_starts = kDefaultGroupStarts,
                           bool dual = true);

// Checks the config invariants against `grid`: groups start at distance 0, are
// contiguous and disjoint, reach distance f - 1, extents are non-negative, and
// the distance-0 group has a window. Throws InvariantViolation.
void validate(const HeadMaskConfig& config, const VideoGrid& grid);

bool member(const HeadMaskConfig& config, const TokenCoord& q,
            const TokenCoord& k);

// Block (I, J) is allowed iff some query token in I and key token in J are
// members. `perm` gives the token order of the blocked sequence.
BlockMask rasterize(const HeadMaskConfig& config, const VideoGrid& grid,
                    const Permutation& perm, std::size_t block_size);

// Fraction of skipped block pairs.
double sparsity(const BlockMask& mask);

// Per group and window slot, the componentwise max of extents. The result's
// membership is a superset of both inputs'. Throws GroupBoundaryMismatch when
// the frame-group partitions differ.
HeadMaskConfig union_configs(const HeadMaskConfig& a, const HeadMaskConfig& b);

struct ScheduleEntry {
  int layer = 0;
  int head = 0;
  int step_lo = 0;  // inclusive
  int step_hi = 0;  // inclusive
  HeadMaskConfig config;

  friend bool operator==(const ScheduleEntry&, const ScheduleEntry&) = default;
};

// Denoising-step schedule: steps [0, full_prefix) run dense; later steps look
// up the config of their (layer, head, step range).
struct ModelMaskSchedule {
  int full_prefix = 0;
  int total_steps = 0;
  std::vector<ScheduleEntry> entries;

  // nullptr means dense attention for that step.
  const HeadMaskConfig* lookup(int layer, int head, int step) const noexcept;

  friend bool operator==(const ModelMaskSchedule&,
                         const ModelMaskSchedule&) = default;
};

// Step ranges of each (layer, head) must be disjoint and tile
// [full_prefix, total_steps) exactly; every config must validate against
// `grid`. Throws InvariantViolation.
void validate(const ModelMaskSchedule& schedule, const VideoGrid& grid);

// Precomputed geometry of every block pair for one (grid, order, block size,
// frame-group partition), so that rasterizing a config costs
// O(blocks^2 * groups * frontier) instead of O(tokens^2).
//
// For each (query block, key block, group) it keeps the Pareto frontier of
// (|dx|, |dy|) offsets over the token pairs whose frame distance falls in the
// group: a window admits the block pair iff it admits a frontier point.
class BlockGeometry {
 public:
  BlockGeometry(const VideoGrid& grid, const Permutation& perm,
                std::size_t block_size, std::span<const int> group_starts);

  const VideoGrid& grid() const noexcept { return grid_; }
  std::size_t tokens() const noexcept { return grid_.tokens(); }
  std::size_t block_size() const noexcept { return block_size_; }
  std::size_t blocks() const noexcept { return blocks_; }
  const std::vector<int>& group_starts() const noexcept { return starts_; }

  // Throws GroupBoundaryMismatch if the config's partition differs.
  BlockMask rasterize(const HeadMaskConfig& config) const;
  // Same, reusing `out`'s storage. `out` must have this geometry's shape.
  void rasterize_into(const HeadMaskConfig& config, BlockMask& out) const;

 private:
  struct Offset {
    int dx;
    int dy;
  };

  VideoGrid grid_;
  std::size_t block_size_;
  std::size_t blocks_;
  std::vector<int> starts_;
  std::vector<std::uint32_t> frontier_begin_;  // blocks^2 * groups + 1
  std::vector<Offset> frontier_;
};

}  // namespace compact_attn
