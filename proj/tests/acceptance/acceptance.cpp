// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "compact_attn/attention.hpp"
#include "compact_attn/errors.hpp"
#include "compact_attn/io.hpp"
#include "compact_attn/layout.hpp"
#include "compact_attn/masks.hpp"
#include "compact_attn/metrics.hpp"
#include "compact_attn/search.hpp"
#include "compact_attn/synth.hpp"
#include "oracles.hpp"
#include "util.hpp"

using namespace compact_attn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

int cli_run(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "compact-attn");
  std::ostringstream o, e;
  int code = cli::run(args, o, e);
  if (out) *out = o.str();
  return code;
}

// --- 1 ----------------------------------------------------------------------

Outcome kernel_equivalence() {
  constexpr double kTol = 1e-5;
  const std::size_t block_sizes[] = {1, 4, 16, 64};
  std::mt19937_64 rng(2024);
  double worst_masked = 0.0, worst_full = 0.0, worst_reference = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 1 + rng() % 256;
    const std::size_t d = 1 + rng() % 32;
    const std::size_t bs = block_sizes[i % 4];
    AttentionInputs in = gen_qkv({1, 1, static_cast<int>(n)}, d, rng());
    BlockMask mask = testing::random_mask(n, bs, 0.1 + 0.8 * (i % 10) / 10.0, rng);
    worst_masked = std::max<double>(
        worst_masked,
        max_abs_diff(block_sparse_attention(in, mask), masked_dense_oracle(in, mask)));
    // Independent double-precision reference as a second witness.
    worst_reference = std::max(
        worst_reference,
        oracle::max_abs_diff(block_sparse_attention(in, mask),
                             oracle::attention(in.q, in.k, in.v, in.scale,
                                               [&](std::size_t i, std::size_t j) {
                                                 return mask.allowed(mask.block_of(i),
                                                                     mask.block_of(j));
                                               })));
    worst_full = std::max<double>(
        worst_full, max_abs_diff(block_sparse_attention(in, BlockMask::full(n, bs)),
                                 dense_attention(in)));
  }
  return {worst_masked <= kTol && worst_full <= kTol && worst_reference <= kTol,
          "100 instances, max err masked " + num(worst_masked) + ", full " +
              num(worst_full) + ", double reference " + num(worst_reference) +
              " (tol 1e-5)"};
}

// --- 2 ----------------------------------------------------------------------

Outcome rasterization_exactness() {
  struct Setup {
    VideoGrid grid;
    TileShape tile;
    std::size_t block_size;
  };
  const Setup setups[] = {{{8, 8, 8}, {1, 4, 4}, 16}, {{4, 8, 8}, {2, 2, 2}, 8},
                          {{2, 16, 16}, {1, 4, 4}, 32}, {{5, 6, 6}, {1, 3, 3}, 7},
                          {{8, 4, 16}, {1, 1, 1}, 12}};
  std::mt19937_64 rng(77);
  std::size_t mismatches = 0, blocks = 0;
  for (int i = 0; i < 50; ++i) {
    const Setup& s = setups[i % 5];
    std::vector<int> starts = (i % 2 == 0) ? kDefaultGroupStarts : std::vector<int>{0, 2};
    HeadMaskConfig config = oracle::random_config(s.grid, starts, rng);
    Permutation perm = (i % 3 == 0) ? raster_order(s.grid) : tile_order(s.grid, s.tile);
    BlockMask got = rasterize(config, s.grid, perm, s.block_size);
    BlockMask want = oracle::rasterize(
        s.grid, perm, s.block_size,
        [&](const TokenCoord& q, const TokenCoord& k) { return member(config, q, k); });
    for (std::size_t a = 0; a < got.blocks(); ++a)
      for (std::size_t b = 0; b < got.blocks(); ++b)
        mismatches += got.allowed(a, b) != want.allowed(a, b);
    blocks += got.total_count();
  }
  return {mismatches == 0, "50 configs, " + std::to_string(mismatches) +
                               " mismatching blocks of " + std::to_string(blocks)};
}

// --- 3 ----------------------------------------------------------------------

Outcome membership_tables() {
  std::size_t mismatches = 0, checked = 0;
  auto compare = [&](const HeadMaskConfig& c, TokenCoord q, int frame,
                     const std::vector<std::string>& table) {
    for (int y = 0; y < int(table.size()); ++y)
      for (int x = 0; x < int(table[y].size()); ++x) {
        mismatches += member(c, q, {frame, y, x}) != (table[y][x] == '#');
        ++checked;
      }
  };

  // Local: omega = eta = 1 for distances 0-1, nothing beyond.
  HeadMaskConfig local;
  local.groups = {{0, 1, {SpatialWindow{1, 1}, std::nullopt}}, {2, 2, {}}};
  const std::vector<std::string> local_table = {
      "......",
      ".###..",
      ".###..",
      ".###..",
      "......"};
  compare(local, {0, 2, 2}, 0, local_table);
  compare(local, {0, 2, 2}, 1, local_table);
  compare(local, {0, 2, 2}, 2, {"......", "......", "......", "......", "......"});
  const std::vector<std::string> corner_table = {
      "##....",
      "##....",
      "......",
      "......",
      "......"};
  compare(local, {1, 0, 0}, 2, corner_table);

  // Cross: w1 = (w - 1, 0) row corridor, w2 = (0, h - 1) column corridor.
  HeadMaskConfig cross;
  cross.groups = {{0, 0, {SpatialWindow{7, 0}, SpatialWindow{0, 7}}}};
  compare(cross, {0, 3, 3}, 0,
          {"...#....",
           "...#....",
           "...#....",
           "########",
           "...#....",
           "...#....",
           "...#....",
           "...#...."});
  mismatches += !member(cross, {0, 3, 3}, {0, 3, 7});
  mismatches += member(cross, {0, 3, 3}, {0, 5, 7});
  checked += 2;
  return {mismatches == 0, std::to_string(checked) + " table cells, " +
                               std::to_string(mismatches) + " mismatches"};
}

// --- 4 ----------------------------------------------------------------------

// Canonical form of a dual window: a window nested in the other adds nothing.
std::pair<SpatialWindow, SpatialWindow> canonical(SpatialWindow a, SpatialWindow b) {
  auto inside = [](SpatialWindow x, SpatialWindow y) {
    return x.omega <= y.omega && x.eta <= y.eta;
  };
  if (inside(a, b)) a = b;
  if (inside(b, a)) b = a;
  if (std::tie(a.omega, a.eta) > std::tie(b.omega, b.eta)) std::swap(a, b);
  return {a, b};
}

bool within_one(std::pair<SpatialWindow, SpatialWindow> x,
                std::pair<SpatialWindow, SpatialWindow> y) {
  auto close = [](SpatialWindow a, SpatialWindow b) {
    return std::abs(a.omega - b.omega) <= 1 && std::abs(a.eta - b.eta) <= 1;
  };
  return (close(x.first, y.first) && close(x.second, y.second)) ||
         (close(x.first, y.second) && close(x.second, y.first));
}

Outcome search_recovery() {
  constexpr double kTau = 0.9;
  const VideoGrid grid{2, 10, 10};
  SearchParams params;
  params.tau = kTau;
  params.lambda = 1e9;  // recall threshold alone decides
  params.tile = {1, 1, 1};
  params.block_size = 1;
  params.group_starts = {0};

  std::vector<SyntheticHeadSpec> heads;
  const SpatialWindow local_windows[] = {{1, 1}, {2, 2}, {3, 2}, {2, 3}, {1, 3},
                                         {3, 3}, {4, 1}};
  const SpatialWindow cross_windows[][2] = {{{4, 0}, {0, 4}}, {{5, 1}, {1, 5}},
                                            {{9, 0}, {0, 9}}};
  for (int i = 0; i < 14; ++i) {
    SyntheticHeadSpec s;
    s.window1 = local_windows[i % 7];
    s.mass = i < 7 ? 0.95 : 0.97;
    s.seed = std::uint64_t(i);
    heads.push_back(s);
  }
  for (int i = 0; i < 6; ++i) {
    SyntheticHeadSpec s;
    s.spatial = SpatialKind::Cross;
    s.window1 = cross_windows[i % 3][0];
    s.window2 = cross_windows[i % 3][1];
    s.mass = i < 3 ? 0.95 : 0.97;
    heads.push_back(s);
  }

  int ok = 0;
  double worst_cost_ratio = 0.0, min_recall = 1.0;
  std::string first_failure;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    AttentionProbMap map = gen_probmap(heads[h], grid);
    SearchResult r = shrink_search(map, params);
    const DualWindow& w = r.config.groups[0].window;
    auto mine = canonical(*w.w1, w.w2.value_or(*w.w1));

    oracle::ExhaustiveDual exhaustive(map);
    auto all = exhaustive.all();
    double best = 2.0;
    for (const auto& c : all)
      if (c.recall >= kTau) best = std::min(best, c.cost);
    bool near = false;
    for (const auto& c : all)
      if (c.recall >= kTau && c.cost <= best + 1e-12)
        near = near || within_one(mine, canonical(c.w1, c.w2));

    const double ratio = r.cost / best;
    worst_cost_ratio = std::max(worst_cost_ratio, ratio);
    min_recall = std::min(min_recall, r.recall);
    if (near && ratio <= 1.10 && r.recall >= kTau) {
      ++ok;
    } else if (first_failure.empty()) {
      first_failure = "; head " + std::to_string(h) + " failed";
    }
  }
  return {ok == int(heads.size()),
          std::to_string(ok) + "/20 heads within +-1 token of the optimum, worst cost " +
              num(worst_cost_ratio) + "x optimum (tol 1.10x), min recall " +
              num(min_recall) + first_failure};
}

// --- 5 ----------------------------------------------------------------------

Outcome ablation_direction() {
  const VideoGrid grid{8, 16, 16};
  SearchParams params;  // tau 0.9, lambda 0.011, tile 1x4x4, groups 0,1,3,7
  params.block_size = 16;
  const Permutation perm = tile_order(grid, params.tile);

  std::vector<SyntheticHeadSpec> heads;
  const TemporalKind temporal[] = {TemporalKind::Invariant, TemporalKind::Decay,
                                   TemporalKind::Band};
  const SpatialWindow corridors[][2] = {{{15, 1}, {1, 15}}, {{15, 0}, {0, 15}},
                                        {{11, 1}, {1, 11}}};
  for (int i = 0; i < 9; ++i) {
    SyntheticHeadSpec s;
    s.spatial = SpatialKind::Cross;
    s.temporal = temporal[i % 3];
    s.band_center = 1 + i % 2;
    s.window1 = corridors[i / 3][0];
    s.window2 = corridors[i / 3][1];
    s.mass = 0.995;
    s.seed = std::uint64_t(i);
    heads.push_back(s);
  }

  const SearchMode modes[] = {SearchMode::Cubic, SearchMode::FrameGroupWise,
                              SearchMode::DualWindow};
  double mean[3] = {0, 0, 0};
  double min_recall = 1.0;
  for (const auto& s : heads) {
    AttentionProbMap map = gen_probmap(s, grid, perm);
    for (int m = 0; m < 3; ++m) {
      params.mode = modes[m];
      SearchResult r = shrink_search(map, params);
      mean[m] += (1.0 - r.cost) / double(heads.size());
      min_recall = std::min(min_recall, r.recall);
    }
  }
  const double gain = mean[2] - mean[0];
  bool pass = mean[0] <= mean[1] + 1e-12 && mean[1] <= mean[2] + 1e-12 &&
              gain >= 0.05 && min_recall >= 0.9;
  return {pass, "mean sparsity cubic " + num(mean[0]) + " <= frame-group " +
                    num(mean[1]) + " <= dual " + num(mean[2]) + ", gain " +
                    num(100 * gain, 3) + " pp (min 5), min recall " + num(min_recall)};
}

// --- 6 ----------------------------------------------------------------------

Outcome reordering_effect() {
  const VideoGrid grid{2, 16, 16};
  const TileShape tile{1, 4, 4};
  const std::size_t bs = 16;
  const Permutation tiled = tile_order(grid, tile);
  int ok = 0;
  double total = 0.0, smallest = 1.0;
  for (int i = 0; i < 20; ++i) {
    SyntheticHeadSpec s;
    s.seed = std::uint64_t(i);
    s.mass = 0.99 - 0.002 * (i % 5);
    if (i % 2 == 0) {
      s.window1 = {1 + (i / 2) % 3, 1 + (i / 6) % 2};
    } else {
      s.spatial = SpatialKind::Cross;
      s.window1 = {15 - 2 * ((i / 2) % 3), (i / 2) % 2};
      s.window2 = {(i / 2) % 2, 15 - 2 * ((i / 2) % 3)};
    }
    AttentionProbMap raster = gen_probmap(s, grid);
    const double r = topk_block_fraction(raster, bs, 0.95);
    const double t = topk_block_fraction(raster.reordered(tiled), bs, 0.95);
    ok += t <= r;
    total += r - t;
    smallest = std::min(smallest, r - t);
  }
  const double mean = total / 20.0;
  return {ok == 20 && mean >= 0.01,
          std::to_string(ok) + "/20 maps tiled <= raster, mean reduction " +
              num(100 * mean, 3) + " pp (min 1), smallest " + num(100 * smallest, 3) +
              " pp"};
}

// --- 7 ----------------------------------------------------------------------

Outcome stability() {
  const VideoGrid grid{4, 16, 16};
  SearchParams params;
  params.block_size = 16;
  const Permutation perm = tile_order(grid, params.tile);
  // Extents 5..7 after jitter all round up to the same tile step.
  SyntheticHeadSpec base;
  base.window1 = {6, 6};
  base.mass = 0.99;
  const Perturbation perturbation{1, 0.02, params.tile};

  std::vector<BlockMask> masks;
  for (std::uint64_t v = 0; v < 10; ++v) {
    SyntheticHeadSpec variant = gen_prompt_variant(base, perturbation, 100 + v);
    AttentionProbMap map = gen_probmap(variant, grid, perm);
    HeadMaskConfig c = shrink_search(map, params).config;
    masks.push_back(rasterize(c, grid, perm, params.block_size));
  }
  double sum = 0.0, lowest = 1.0;
  int pairs = 0;
  for (std::size_t a = 0; a < masks.size(); ++a)
    for (std::size_t b = a + 1; b < masks.size(); ++b) {
      double j = jaccard(masks[a], masks[b]);
      sum += j;
      lowest = std::min(lowest, j);
      ++pairs;
    }
  const double mean = sum / pairs;
  return {mean >= 0.8, "10 variants, pairwise mean jaccard " + num(mean) +
                           " (min 0.8), lowest pair " + num(lowest)};
}

// --- 8 ----------------------------------------------------------------------

Outcome union_monotonicity() {
  const VideoGrid grid{4, 16, 16};
  SearchParams params;
  params.block_size = 16;
  const Permutation perm = tile_order(grid, params.tile);
  const Perturbation perturbation{1, 0.02, params.tile};
  int checks = 0, violations = 0;
  double worst = 0.0;
  for (const auto& family : pattern_battery(grid, 9)) {
    std::vector<AttentionProbMap> maps;
    std::vector<SearchResult> results;
    std::vector<HeadMaskConfig> configs;
    for (std::uint64_t v = 0; v < 3; ++v) {
      SyntheticHeadSpec spec = gen_prompt_variant(family.spec, perturbation, v);
      spec.window1.omega = std::min(spec.window1.omega, grid.w - 1);
      spec.window1.eta = std::min(spec.window1.eta, grid.h - 1);
      spec.window2.omega = std::min(spec.window2.omega, grid.w - 1);
      spec.window2.eta = std::min(spec.window2.eta, grid.h - 1);
      maps.push_back(gen_probmap(spec, grid, perm));
      results.push_back(shrink_search(maps.back(), params));
      configs.push_back(results.back().config);
    }
    HeadMaskConfig merged = merge_prompts(configs);
    BlockMask mask = rasterize(merged, grid, perm, params.block_size);
    for (std::size_t i = 0; i < maps.size(); ++i) {
      const double drop = results[i].recall - recall(maps[i], mask);
      worst = std::max(worst, drop);
      violations += drop > 1e-12;
      ++checks;
    }
  }
  return {violations == 0, std::to_string(checks) +
                               " (family, prompt) pairs, " +
                               std::to_string(violations) +
                               " with merged recall below own recall"};
}

// --- 9 ----------------------------------------------------------------------

Outcome tau_sweep() {
  const VideoGrid grid{4, 16, 16};
  SearchParams params;
  params.block_size = 16;
  params.lambda = 0.2;
  const Permutation perm = tile_order(grid, params.tile);
  std::vector<AttentionProbMap> maps;
  const double masses[] = {0.9, 0.93, 0.96};
  for (double m : masses) {
    for (const auto& ns : pattern_battery(grid, 4)) {
      if (ns.spec.spatial == SpatialKind::Global) continue;
      SyntheticHeadSpec s = ns.spec;
      s.mass = m;
      maps.push_back(gen_probmap(s, grid, perm));
    }
  }
  const double taus[] = {0.95, 0.9, 0.85, 0.8};
  std::vector<double> sparsity;
  for (double tau : taus) {
    params.tau = tau;
    double sum = 0.0;
    for (const auto& m : maps) sum += 1.0 - shrink_search(m, params).cost;
    sparsity.push_back(sum / double(maps.size()));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < sparsity.size(); ++i)
    monotone = monotone && sparsity[i] >= sparsity[i - 1] - 1e-12;
  const double tail = std::abs(sparsity[3] - sparsity[2]);
  std::string series;
  for (std::size_t i = 0; i < 4; ++i)
    series += (i ? ", " : "") + num(taus[i], 3) + ":" + num(sparsity[i]);
  return {monotone && tail <= 0.01, "lambda 0.2, mean sparsity by tau {" + series +
                                        "}, last step " + num(100 * tail, 3) +
                                        " pp (max 1)"};
}

// --- 10 ---------------------------------------------------------------------

Outcome sparsity_bookkeeping() {
  auto dir = testing::scratch_dir("acceptance_bookkeeping");
  const VideoGrid grid{4, 8, 8};
  const TileShape tile{1, 4, 4};
  std::mt19937_64 rng(10);
  double worst = 0.0;
  int cli_mismatch = 0, configs = 0;
  for (int i = 0; i < 30; ++i) {
    const std::size_t bs = std::size_t{1} << (2 + i % 4);
    HeadMaskConfig c = oracle::random_config(grid, kDefaultGroupStarts, rng);
    BlockMask mask = rasterize(c, grid, tile_order(grid, tile), bs);
    worst = std::max(worst, std::abs(flop_proxy(mask) - (1.0 - compact_attn::sparsity(mask))));
    if (i % 3 == 0) {
      fs::path path = dir / ("c" + std::to_string(i) + ".json");
      save_config(path, ConfigDocument{{grid, tile, bs}, c});
      std::string out;
      if (cli_run({"rasterize", "--config", path.string()}, &out) != 0) {
        ++cli_mismatch;
        continue;
      }
      auto stats = nlohmann::json::parse(out);
      cli_mismatch += stats["sparsity"].get<double>() != compact_attn::sparsity(mask);
      cli_mismatch += stats["flop_proxy"].get<double>() != flop_proxy(mask);
      ++configs;
    }
  }
  // Searched configs as reported by `report --search`.
  fs::path battery = dir / "battery";
  int rows = 0;
  if (cli_run({"synth", "--battery", "--grid", "4x8x8", "--out", battery.string()}) != 0 ||
      cli_run({"report", "--manifest", (battery / "manifest.json").string(),
               "--block-size", "16", "--search", "--csv",
               (dir / "report.csv").string()}) != 0) {
    ++cli_mismatch;
  } else {
    std::istringstream csv(read_file(dir / "report.csv"));
    std::string line;
    std::getline(csv, line);
    SearchParams params;
    params.block_size = 16;
    const Permutation perm = tile_order(grid, params.tile);
    for (const auto& ns : pattern_battery(grid, 0)) {
      if (!std::getline(csv, line)) {
        ++cli_mismatch;
        break;
      }
      std::vector<std::string> f;
      std::istringstream row(line);
      for (std::string x; std::getline(row, x, ',');) f.push_back(x);
      HeadMaskConfig c = shrink_search(gen_probmap(ns.spec, grid, perm), params).config;
      BlockMask mask = rasterize(c, grid, perm, params.block_size);
      cli_mismatch += std::stod(f[5]) != compact_attn::sparsity(mask);
      cli_mismatch += std::stod(f[6]) != flop_proxy(mask);
      worst = std::max(worst, std::abs(std::stod(f[6]) - (1.0 - std::stod(f[5]))));
      ++rows;
    }
  }
  return {worst <= 1e-9 && cli_mismatch == 0,
          "30 configs + " + std::to_string(rows) + " report rows, max |flop - (1 - s)| " +
              num(worst) + " (tol 1e-9), " + std::to_string(cli_mismatch) +
              " CLI mismatches over " + std::to_string(configs + rows) + " outputs"};
}

// --- 11 ---------------------------------------------------------------------

template <typename E, typename Fn>
bool rejects_with(Fn&& fn) {
  try {
    fn();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

Outcome file_fidelity() {
  auto dir = testing::scratch_dir("acceptance_io");
  std::mt19937_64 rng(11);
  int identical = 0;
  for (int i = 0; i < 1000; ++i) {
    Tensor t;
    const std::size_t rank = 1 + rng() % 3;
    std::size_t count = 1;
    for (std::size_t r = 0; r < rank; ++r) {
      t.dims.push_back(rng() % 5 + (r == 0));
      count *= t.dims.back();
    }
    for (std::size_t k = 0; k < count; ++k)
      t.data.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(rng())));
    const fs::path path = dir / ("t" + std::to_string(i % 10) + ".catn");
    write_tensor(path, t);
    const Tensor back = read_tensor(path);
    bool same = back.dims == t.dims && back.data.size() == t.data.size();
    for (std::size_t k = 0; same && k < count; ++k)
      same = std::bit_cast<std::uint32_t>(back.data[k]) ==
             std::bit_cast<std::uint32_t>(t.data[k]);
    identical += same;
  }

  const std::string good = encode_tensor(Tensor{{2, 2}, {1, 2, 3, 4}});
  nlohmann::json cfg = nlohmann::json::parse(R"({
    "grid": {"f": 2, "h": 4, "w": 4}, "tile": {"tf": 1, "th": 2, "tw": 2},
    "block_size": 4,
    "groups": [{"d_lo": 0, "d_hi": 0, "w1": {"omega": 1, "eta": 1}, "w2": null},
               {"d_lo": 1, "d_hi": 1, "w1": null, "w2": null}]})");
  auto load_json = [&](const nlohmann::json& j) {
    write_file(dir / "c.json", j.dump());
    return load_config(dir / "c.json");
  };
  auto with = [&](auto edit) {
    nlohmann::json j = cfg;
    edit(j);
    return j;
  };

  struct Case {
    const char* name;
    bool rejected;
  };
  std::string bad_magic = good, bad_version = good, bad_dtype = good;
  bad_magic.replace(0, 4, "XXXX");
  bad_version[4] = 9;
  bad_dtype[6] = 7;
  BlockMask mask = BlockMask::diagonal(8, 2);
  const std::string mask_bytes = encode_mask(mask);
  const std::vector<Case> cases = {
      {"bad magic", rejects_with<BadMagic>([&] { decode_tensor(bad_magic); })},
      {"mask bad magic",
       rejects_with<BadMagic>([&] { decode_mask("XXXX" + mask_bytes.substr(4)); })},
      {"version", rejects_with<UnsupportedVersion>([&] { decode_tensor(bad_version); })},
      {"dtype", rejects_with<UnsupportedDtype>([&] { decode_tensor(bad_dtype); })},
      {"truncated payload",
       rejects_with<TruncatedPayload>([&] { decode_tensor(good.substr(0, good.size() - 1)); })},
      {"truncated header",
       rejects_with<TruncatedPayload>([&] { decode_tensor(good.substr(0, 10)); })},
      {"truncated mask",
       rejects_with<TruncatedPayload>([&] { decode_mask(mask_bytes.substr(0, mask_bytes.size() - 1)); })},
      {"missing field", rejects_with<SchemaViolation>([&] {
         load_json(with([](auto& j) { j["groups"][0].erase("w2"); }));
       })},
      {"wrong type", rejects_with<SchemaViolation>([&] {
         load_json(with([](auto& j) { j["block_size"] = "64"; }));
       })},
      {"not json", rejects_with<SchemaViolation>([&] {
         write_file(dir / "c.json", "{]");
         load_config(dir / "c.json");
       })},
      {"empty centre group", rejects_with<InvariantViolation>([&] {
         load_json(with([](auto& j) { j["groups"][0]["w1"] = nullptr; }));
       })},
      {"uncovered distance", rejects_with<InvariantViolation>([&] {
         load_json(with([](auto& j) { j["groups"].erase(1); }));
       })},
      {"negative extent", rejects_with<InvariantViolation>([&] {
         load_json(with([](auto& j) { j["groups"][0]["w1"]["eta"] = -2; }));
       })},
  };
  int rejected = 0;
  std::string missed;
  for (const auto& c : cases) {
    rejected += c.rejected;
    if (!c.rejected) missed += std::string(" ") + c.name;
  }
  return {identical == 1000 && rejected == int(cases.size()),
          std::to_string(identical) + "/1000 roundtrips bitwise identical, " +
              std::to_string(rejected) + "/" + std::to_string(cases.size()) +
              " malformed cases rejected with the expected error" +
              (missed.empty() ? "" : "; missed:" + missed)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "kernel equivalence", kernel_equivalence},
      {2, "rasterization exactness", rasterization_exactness},
      {3, "membership tables", membership_tables},
      {4, "search recovery", search_recovery},
      {5, "ablation direction", ablation_direction},
      {6, "reordering effect", reordering_effect},
      {7, "mask stability", stability},
      {8, "union monotonicity", union_monotonicity},
      {9, "tau sweep trend", tau_sweep},
      {10, "sparsity bookkeeping", sparsity_bookkeeping},
      {11, "file-format fidelity", file_fidelity},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": "
              << o.detail << " (" << num(secs, 2) << " s)" << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
