// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#include "compact_attn/search.hpp"

#include <algorithm>
#include <set>
#include <utility>

#include "compact_attn/errors.hpp"
#include "compact_attn/metrics.hpp"
#include "compact_attn/parallel.hpp"

namespace compact_attn {
namespace {

// Ratios closer than this are ties, resolved by candidate order.
constexpr double kRatioTieSlack = 1e-12;
constexpr double kRecallSlack = 1e-12;

struct MoveTemplate {
  int group = 0;  // -1: shared window
  bool disable = false;
  std::vector<std::pair<int, Axis>> extents;  // (slot, axis)
};

std::optional<SpatialWindow>& slot_of(DualWindow& w, int slot) {
  return slot == 1 ? w.w1 : w.w2;
}

int& extent_of(SpatialWindow& w, Axis axis) {
  return axis == Axis::X ? w.omega : w.eta;
}

std::vector<MoveTemplate> enumerate_moves(const HeadMaskConfig& config,
                                          SearchMode mode) {
  std::vector<MoveTemplate> moves;
  const int groups = static_cast<int>(config.groups.size());
  if (mode == SearchMode::Cubic) {
    moves.push_back({-1, false, {{1, Axis::X}}});
    moves.push_back({-1, false, {{1, Axis::Y}}});
    for (int g = groups - 1; g > 0; --g) {
      if (!config.groups[g].window.empty()) {
        moves.push_back({g, true, {}});
        break;
      }
    }
    return moves;
  }
  for (int g = 0; g < groups; ++g) {
    const DualWindow& w = config.groups[g].window;
    if (w.empty()) continue;
    moves.push_back({g, false, {{1, Axis::X}}});
    moves.push_back({g, false, {{1, Axis::Y}}});
    if (mode == SearchMode::DualWindow) {
      moves.push_back({g, false, {{2, Axis::X}}});
      moves.push_back({g, false, {{2, Axis::Y}}});
      moves.push_back({g, false, {{1, Axis::X}, {2, Axis::X}}});
      moves.push_back({g, false, {{1, Axis::Y}, {2, Axis::Y}}});
      moves.push_back({g, false, {{1, Axis::Y}, {2, Axis::X}}});
      moves.push_back({g, false, {{1, Axis::X}, {2, Axis::Y}}});
    }
    if (config.groups[g].d_lo > 0) moves.push_back({g, true, {}});
  }
  return moves;
}

class Evaluator {
 public:
  Evaluator(const AttentionProbMap& map, const SearchParams& params)
      : geometry_(map.grid(), map.perm(), params.block_size,
                  params.group_starts),
        mass_(block_mass(map, params.block_size)),
        scratch_(map.tokens(), params.block_size),
        tokens_(map.tokens()) {}

  const BlockGeometry& geometry() const { return geometry_; }

  // (recall, cost) of `config`.
  std::pair<double, double> measure(const HeadMaskConfig& config) {
    geometry_.rasterize_into(config, scratch_);
    return {recall_from_block_mass(mass_, scratch_, tokens_),
            flop_proxy(scratch_)};
  }

 private:
  BlockGeometry geometry_;
  ProbMatrix mass_;
  BlockMask scratch_;
  std::size_t tokens_;
};

struct Trial {
  HeadMaskConfig config;
  CandidateMove move;
  double recall = 0.0;
  double cost = 0.0;
  double ratio = 0.0;
};

// Windows the template touches: the named group, or every enabled group for
// the shared window.
std::vector<DualWindow*> targets(HeadMaskConfig& config, int group) {
  std::vector<DualWindow*> out;
  if (group >= 0) {
    out.push_back(&config.groups[static_cast<std::size_t>(group)].window);
  } else {
    for (auto& g : config.groups) {
      if (!g.window.empty()) out.push_back(&g.window);
    }
  }
  return out;
}

// Applies the template one tile step at a time until the mask changes.
// Returns nothing if an extent bottoms out first.
std::optional<Trial> try_move(const MoveTemplate& t,
                              const HeadMaskConfig& current, double cost,
                              const SearchParams& params, Evaluator& eval) {
  Trial trial{current, CandidateMove{t.group, t.disable, {}}, 0, 0, 0};
  if (t.disable) {
    trial.config.groups[static_cast<std::size_t>(t.group)].window = DualWindow{};
    std::tie(trial.recall, trial.cost) = eval.measure(trial.config);
    if (trial.cost >= cost) return std::nullopt;
    return trial;
  }

  auto windows = targets(trial.config, t.group);
  if (windows.empty()) return std::nullopt;
  for (const auto& [slot, axis] : t.extents) {
    for (DualWindow* w : windows) {
      auto& s = slot_of(*w, slot);
      if (!s || extent_of(*s, axis) <= 0) return std::nullopt;
    }
  }

  while (true) {
    bool bottomed = false;
    for (const auto& [slot, axis] : t.extents) {
      const int step = axis == Axis::X ? params.tile.tw : params.tile.th;
      for (DualWindow* w : windows) {
        int& e = extent_of(*slot_of(*w, slot), axis);
        e = std::max(0, e - step);
        bottomed = bottomed || e == 0;
      }
    }
    std::tie(trial.recall, trial.cost) = eval.measure(trial.config);
    if (trial.cost < cost) break;
    if (bottomed) return std::nullopt;
  }

  const DualWindow& ref = *windows.front();
  for (const auto& [slot, axis] : t.extents) {
    const auto& s = slot == 1 ? ref.w1 : ref.w2;
    trial.move.changes.push_back(
        {slot, axis, axis == Axis::X ? s->omega : s->eta});
  }
  return trial;
}

}  // namespace

const char* to_string(SearchMode mode) {
  switch (mode) {
    case SearchMode::DualWindow: return "dual";
    case SearchMode::FrameGroupWise: return "frame-group";
    case SearchMode::Cubic: return "cubic";
  }
  return "?";
}

SearchMode parse_search_mode(const std::string& name) {
  if (name == "dual") return SearchMode::DualWindow;
  if (name == "frame-group" || name == "fgw") return SearchMode::FrameGroupWise;
  if (name == "cubic") return SearchMode::Cubic;
  throw ValidationError("unknown search mode '" + name +
                        "' (expected dual, frame-group or cubic)");
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::RecallThreshold: return "recall-threshold";
    case Termination::CostThreshold: return "cost-threshold";
    case Termination::Exhausted: return "exhausted";
  }
  return "?";
}

std::string CandidateMove::describe() const {
  std::string out = group < 0 ? "shared" : "g" + std::to_string(group);
  if (disable) return out + " disable";
  for (std::size_t i = 0; i < changes.size(); ++i) {
    const auto& c = changes[i];
    out += i == 0 ? " " : "+";
    out += "w" + std::to_string(c.slot) +
           (c.axis == Axis::X ? ".omega=" : ".eta=") +
           std::to_string(c.new_extent);
  }
  return out;
}

void validate(const SearchParams& p) {
  if (!(p.tau > 0.0 && p.tau <= 1.0)) {
    throw ValidationError("tau must lie in (0, 1]");
  }
  if (!(p.lambda > 0.0)) throw ValidationError("lambda must be > 0");
  if (p.block_size == 0) throw ValidationError("block_size must be >= 1");
  if (p.step_reuse_n < 1) throw ValidationError("step_reuse_n must be >= 1");
  if (p.full_prefix < 0) throw ValidationError("full_prefix must be >= 0");
  if (p.tile.tf < 1 || p.tile.th < 1 || p.tile.tw < 1) {
    throw ValidationError("tile dimensions must be >= 1");
  }
}

HeadMaskConfig initial_config(const VideoGrid& grid,
                              const SearchParams& params) {
  return full_config(grid, params.group_starts,
                     params.mode == SearchMode::DualWindow);
}

SearchResult shrink_search(const AttentionProbMap& map,
                           const SearchParams& params) {
  validate(params);
  try {
    validate(map.grid(), params.tile);
  } catch (const NonDivisibleTile& e) {
    throw IncompatibleGrid(e.what());
  }

  Evaluator eval(map, params);
  SearchResult result;
  result.config = initial_config(map.grid(), params);
  std::tie(result.recall, result.cost) = eval.measure(result.config);
  result.trace.initial_recall = result.recall;
  result.trace.initial_cost = result.cost;

  while (true) {
    std::optional<Trial> best;
    for (const auto& t : enumerate_moves(result.config, params.mode)) {
      auto trial = try_move(t, result.config, result.cost, params, eval);
      if (!trial) continue;
      const double lost = std::max(0.0, result.recall - trial->recall);
      trial->ratio = lost / (result.cost - trial->cost);
      if (!best || trial->ratio < best->ratio - kRatioTieSlack) {
        best = std::move(trial);
      }
    }
    if (!best) {
      result.trace.termination = Termination::Exhausted;
      break;
    }
    if (best->recall < params.tau - kRecallSlack) {
      result.trace.termination = Termination::RecallThreshold;
      break;
    }
    if (best->ratio > params.lambda) {
      result.trace.termination = Termination::CostThreshold;
      break;
    }
    result.trace.steps.push_back(
        TraceStep{best->move, best->recall, best->cost, best->ratio});
    result.config = std::move(best->config);
    result.recall = best->recall;
    result.cost = best->cost;
  }
  return result;
}

HeadMaskConfig merge_prompts(const std::vector<HeadMaskConfig>& configs) {
  if (configs.empty()) throw ValidationError("nothing to merge");
  HeadMaskConfig merged = configs.front();
  for (std::size_t i = 1; i < configs.size(); ++i) {
    merged = union_configs(merged, configs[i]);
  }
  return merged;
}

ModelMaskSchedule schedule_search(const DumpTable& dumps,
                                  const SearchParams& params,
                                  std::size_t jobs) {
  validate(params);
  if (dumps.empty()) throw MissingDump("no attention dumps given");

  const VideoGrid grid = dumps.begin()->second.grid();
  std::set<int> steps;
  std::set<std::pair<int, int>> heads;
  for (const auto& [key, map] : dumps) {
    if (!(map.grid() == grid)) {
      throw IncompatibleGrid("dumps mix grids " + to_string(grid) + " and " +
                             to_string(map.grid()));
    }
    steps.insert(key.step);
    heads.insert({key.layer, key.head});
  }
  if (*steps.rbegin() - *steps.begin() + 1 != static_cast<int>(steps.size())) {
    throw ValidationError("dumped denoising steps are not contiguous");
  }

  ModelMaskSchedule schedule;
  schedule.total_steps = *steps.rbegin() + 1;
  schedule.full_prefix = std::min(params.full_prefix, schedule.total_steps);

  struct Task {
    int layer, head, lo, hi;
  };
  std::vector<Task> tasks;
  for (const auto& [layer, head] : heads) {
    for (int lo = schedule.full_prefix; lo < schedule.total_steps;
         lo += params.step_reuse_n) {
      const int hi = std::min(lo + params.step_reuse_n, schedule.total_steps) - 1;
      if (!dumps.contains(DumpKey{layer, head, lo})) {
        throw MissingDump("no map for layer " + std::to_string(layer) +
                          " head " + std::to_string(head) + " step " +
                          std::to_string(lo));
      }
      tasks.push_back({layer, head, lo, hi});
    }
  }

  std::vector<HeadMaskConfig> configs(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    const Task& t = tasks[i];
    configs[i] = shrink_search(dumps.at(DumpKey{t.layer, t.head, t.lo}), params).config;
  });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    schedule.entries.push_back({t.layer, t.head, t.lo, t.hi, std::move(configs[i])});
  }
  validate(schedule, grid);
  return schedule;
}

ConfigReport evaluate_config(const HeadMaskConfig& config,
                             const std::vector<const AttentionProbMap*>& maps,
                             std::size_t block_size) {
  if (maps.empty()) throw ValidationError("no maps to evaluate on");
  const AttentionProbMap& first = *maps.front();
  for (const auto* m : maps) {
    if (!(m->grid() == first.grid()) || !(m->perm() == first.perm())) {
      throw ShapeMismatch("maps differ in grid or token order");
    }
  }
  const BlockMask mask = rasterize(config, first.grid(), first.perm(), block_size);
  ConfigReport report;
  for (const auto* m : maps) report.recalls.push_back(recall(*m, mask));
  double sum = 0.0;
  for (double r : report.recalls) sum += r;
  report.mean_recall = sum / static_cast<double>(report.recalls.size());
  report.sparsity = sparsity(mask);
  report.flop_proxy = flop_proxy(mask);
  return report;
}

}  // namespace compact_attn
