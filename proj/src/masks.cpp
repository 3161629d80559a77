// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#include "compact_attn/masks.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <utility>

#include "compact_attn/errors.hpp"

namespace compact_attn {
namespace {

std::optional<SpatialWindow> max_window(const std::optional<SpatialWindow>& a,
                                        const std::optional<SpatialWindow>& b) {
  if (!a) return b;
  if (!b) return a;
  return SpatialWindow{std::max(a->omega, b->omega), std::max(a->eta, b->eta)};
}

std::string group_label(std::size_t i) {
  return "groups[" + std::to_string(i) + "]";
}

}  // namespace

const FrameGroup* HeadMaskConfig::group_for(int distance) const noexcept {
  for (const auto& g : groups) {
    if (g.covers(distance)) return &g;
  }
  return nullptr;
}

std::vector<int> HeadMaskConfig::group_starts() const {
  std::vector<int> starts;
  starts.reserve(groups.size());
  for (const auto& g : groups) starts.push_back(g.d_lo);
  return starts;
}

std::vector<FrameGroup> make_groups(const VideoGrid& grid,
                                    std::span<const int> group_starts) {
  validate(grid);
  if (group_starts.empty() || group_starts.front() != 0) {
    throw ValidationError("frame-group starts must begin at distance 0");
  }
  for (std::size_t i = 1; i < group_starts.size(); ++i) {
    if (group_starts[i] <= group_starts[i - 1]) {
      throw ValidationError("frame-group starts must increase strictly");
    }
  }
  const int last_distance = grid.f - 1;
  std::vector<FrameGroup> groups;
  for (std::size_t i = 0; i < group_starts.size(); ++i) {
    if (group_starts[i] > last_distance) break;
    FrameGroup g;
    g.d_lo = group_starts[i];
    g.d_hi = (i + 1 < group_starts.size())
                 ? std::min(group_starts[i + 1] - 1, last_distance)
                 : last_distance;
    groups.push_back(g);
  }
  return groups;
}

SpatialWindow full_window(const VideoGrid& grid) {
  return SpatialWindow{grid.w - 1, grid.h - 1};
}

HeadMaskConfig full_config(const VideoGrid& grid,
                           std::span<const int> group_starts, bool dual) {
  HeadMaskConfig config{make_groups(grid, group_starts)};
  for (auto& g : config.groups) {
    g.window.w1 = full_window(grid);
    if (dual) g.window.w2 = full_window(grid);
  }
  return config;
}

void validate(const HeadMaskConfig& config, const VideoGrid& grid) {
  validate(grid);
  if (config.groups.empty()) {
    throw InvariantViolation("config has no frame groups");
  }
  if (config.groups.front().d_lo != 0) {
    throw InvariantViolation("groups[0].d_lo must be 0");
  }
  for (std::size_t i = 0; i < config.groups.size(); ++i) {
    const auto& g = config.groups[i];
    if (g.d_lo > g.d_hi) {
      throw InvariantViolation(group_label(i) + ": d_lo > d_hi");
    }
    if (i > 0 && g.d_lo != config.groups[i - 1].d_hi + 1) {
      throw InvariantViolation(group_label(i) +
                               ": groups must be contiguous and disjoint");
    }
    for (const auto* w : {&g.window.w1, &g.window.w2}) {
      if (*w && ((*w)->omega < 0 || (*w)->eta < 0)) {
        throw InvariantViolation(group_label(i) +
                                 ": window extents must be >= 0");
      }
    }
  }
  if (config.groups.back().d_hi < grid.f - 1) {
    throw InvariantViolation("groups do not cover frame distance " +
                             std::to_string(grid.f - 1));
  }
  if (config.groups.front().window.empty()) {
    throw InvariantViolation(
        "the distance-0 group must have at least one window");
  }
}

bool member(const HeadMaskConfig& config, const TokenCoord& q,
            const TokenCoord& k) {
  const FrameGroup* g = config.group_for(std::abs(k.t - q.t));
  return g != nullptr &&
         g->window.contains(std::abs(k.x - q.x), std::abs(k.y - q.y));
}

BlockMask rasterize(const HeadMaskConfig& config, const VideoGrid& grid,
                    const Permutation& perm, std::size_t block_size) {
  validate(config, grid);
  if (perm.size() != grid.tokens()) {
    throw ShapeMismatch("permutation does not match grid " + to_string(grid));
  }
  const BlockGeometry geometry(grid, perm, block_size, config.group_starts());
  BlockMask mask = geometry.rasterize(config);
  mask.require_nonempty_rows();
  return mask;
}

double sparsity(const BlockMask& mask) {
  if (mask.total_count() == 0) return 0.0;
  return static_cast<double>(mask.total_count() - mask.allowed_count()) /
         static_cast<double>(mask.total_count());
}

HeadMaskConfig union_configs(const HeadMaskConfig& a, const HeadMaskConfig& b) {
  if (a.groups.size() != b.groups.size()) {
    throw GroupBoundaryMismatch("configs have " +
                                std::to_string(a.groups.size()) + " and " +
                                std::to_string(b.groups.size()) +
                                " frame groups");
  }
  HeadMaskConfig out = a;
  for (std::size_t i = 0; i < a.groups.size(); ++i) {
    const auto& ga = a.groups[i];
    const auto& gb = b.groups[i];
    if (ga.d_lo != gb.d_lo || ga.d_hi != gb.d_hi) {
      throw GroupBoundaryMismatch(group_label(i) + " bounds differ");
    }
    out.groups[i].window.w1 = max_window(ga.window.w1, gb.window.w1);
    out.groups[i].window.w2 = max_window(ga.window.w2, gb.window.w2);
  }
  return out;
}

const HeadMaskConfig* ModelMaskSchedule::lookup(int layer, int head,
                                                int step) const noexcept {
  if (step < full_prefix) return nullptr;
  for (const auto& e : entries) {
    if (e.layer == layer && e.head == head && step >= e.step_lo &&
        step <= e.step_hi) {
      return &e.config;
    }
  }
  return nullptr;
}

void validate(const ModelMaskSchedule& schedule, const VideoGrid& grid) {
  if (schedule.full_prefix < 0) {
    throw InvariantViolation("full_prefix must be >= 0");
  }
  if (schedule.total_steps < schedule.full_prefix) {
    throw InvariantViolation("total_steps must be >= full_prefix");
  }
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> ranges;
  for (std::size_t i = 0; i < schedule.entries.size(); ++i) {
    const auto& e = schedule.entries[i];
    const std::string where = "entries[" + std::to_string(i) + "]";
    if (e.step_lo > e.step_hi) {
      throw InvariantViolation(where + ": step_lo > step_hi");
    }
    if (e.step_lo < schedule.full_prefix) {
      throw InvariantViolation(where + ": step range overlaps the dense prefix");
    }
    if (e.step_hi >= schedule.total_steps) {
      throw InvariantViolation(where + ": step range exceeds total_steps");
    }
    try {
      validate(e.config, grid);
    } catch (const InvariantViolation& err) {
      throw InvariantViolation(where + ".config: " + err.what());
    }
    ranges[{e.layer, e.head}].emplace_back(e.step_lo, e.step_hi);
  }
  for (auto& [key, spans] : ranges) {
    std::sort(spans.begin(), spans.end());
    const std::string who = "layer " + std::to_string(key.first) + " head " +
                            std::to_string(key.second);
    int next = schedule.full_prefix;
    for (const auto& [lo, hi] : spans) {
      if (lo < next) {
        throw InvariantViolation(who + ": overlapping step ranges");
      }
      if (lo > next) {
        throw InvariantViolation(who + ": steps " + std::to_string(next) +
                                 ".." + std::to_string(lo - 1) +
                                 " are not covered");
      }
      next = hi + 1;
    }
    if (next != schedule.total_steps) {
      throw InvariantViolation(who + ": steps from " + std::to_string(next) +
                               " are not covered");
    }
  }
}

}  // namespace compact_attn
