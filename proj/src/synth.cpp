// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#include "compact_attn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>

#include "compact_attn/errors.hpp"

namespace compact_attn {
namespace {

// std::uniform_*_distribution differ between standard libraries; these keep
// generated data identical everywhere mt19937_64 is.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(rng() % span);
}

void check_window(const SpatialWindow& w, const VideoGrid& grid,
                  const char* name) {
  if (w.omega < 0 || w.eta < 0) {
    throw ValidationError(std::string(name) + " extents must be >= 0");
  }
  if (w.omega > grid.w - 1) {
    throw ExtentTooLarge(std::string(name) + ".omega = " +
                         std::to_string(w.omega) + " exceeds frame width " +
                         std::to_string(grid.w));
  }
  if (w.eta > grid.h - 1) {
    throw ExtentTooLarge(std::string(name) + ".eta = " +
                         std::to_string(w.eta) + " exceeds frame height " +
                         std::to_string(grid.h));
  }
}

}  // namespace

const char* to_string(SpatialKind k) {
  switch (k) {
    case SpatialKind::Local: return "local";
    case SpatialKind::Cross: return "cross";
    case SpatialKind::Global: return "global";
  }
  return "?";
}

const char* to_string(TemporalKind k) {
  switch (k) {
    case TemporalKind::Invariant: return "invariant";
    case TemporalKind::Decay: return "decay";
    case TemporalKind::Band: return "band";
  }
  return "?";
}

SpatialKind parse_spatial_kind(const std::string& name) {
  if (name == "local") return SpatialKind::Local;
  if (name == "cross") return SpatialKind::Cross;
  if (name == "global") return SpatialKind::Global;
  throw ValidationError("unknown spatial pattern '" + name + "'");
}

TemporalKind parse_temporal_kind(const std::string& name) {
  if (name == "invariant") return TemporalKind::Invariant;
  if (name == "decay") return TemporalKind::Decay;
  if (name == "band") return TemporalKind::Band;
  throw ValidationError("unknown temporal pattern '" + name + "'");
}

void validate(const SyntheticHeadSpec& spec, const VideoGrid& grid) {
  validate(grid);
  if (!(spec.mass > 0.0 && spec.mass <= 1.0)) {
    throw ValidationError("mass must lie in (0, 1]");
  }
  if (!(spec.noise_floor >= 0.0 && spec.noise_floor <= 1.0)) {
    throw ValidationError("noise_floor must lie in [0, 1]");
  }
  if (spec.temporal == TemporalKind::Decay &&
      !(spec.decay_rate > 0.0 && spec.decay_rate <= 1.0)) {
    throw ValidationError("decay_rate must lie in (0, 1]");
  }
  if (spec.temporal == TemporalKind::Band &&
      (spec.band_center < 0 || spec.band_width < 0)) {
    throw ValidationError("band_center and band_width must be >= 0");
  }
  if (spec.spatial != SpatialKind::Global) check_window(spec.window1, grid, "window1");
  if (spec.spatial == SpatialKind::Cross) check_window(spec.window2, grid, "window2");
}

DualWindow planted_window(const SyntheticHeadSpec& spec, const VideoGrid& grid) {
  switch (spec.spatial) {
    case SpatialKind::Local: return DualWindow{spec.window1, std::nullopt};
    case SpatialKind::Cross: return DualWindow{spec.window1, spec.window2};
    case SpatialKind::Global: break;
  }
  return DualWindow{full_window(grid), std::nullopt};
}

double temporal_weight(const SyntheticHeadSpec& spec, int distance) {
  switch (spec.temporal) {
    case TemporalKind::Invariant: return 1.0;
    case TemporalKind::Decay: return std::pow(spec.decay_rate, distance);
    case TemporalKind::Band:
      return std::abs(distance - spec.band_center) <= spec.band_width ? 1.0 : 0.0;
  }
  return 1.0;
}

AttentionProbMap gen_probmap(const SyntheticHeadSpec& spec,
                             const VideoGrid& grid) {
  validate(spec, grid);
  const std::size_t n = grid.tokens();
  const DualWindow region = planted_window(spec, grid);

  std::vector<double> frame_weight(static_cast<std::size_t>(grid.f));
  for (int d = 0; d < grid.f; ++d) frame_weight[d] = temporal_weight(spec, d);

  std::vector<TokenCoord> coords(n);
  for (std::size_t i = 0; i < n; ++i) coords[i] = coord_of(grid, i);

  ProbMatrix probs(n, n);
  std::vector<double> weight(n);
  const double uniform = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const TokenCoord& q = coords[r];
    double region_weight = 0.0;
    std::size_t outside = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const TokenCoord& k = coords[c];
      const double tw = frame_weight[static_cast<std::size_t>(std::abs(k.t - q.t))];
      const bool inside =
          tw > 0.0 && region.contains(std::abs(k.x - q.x), std::abs(k.y - q.y));
      weight[c] = inside ? tw : -1.0;
      if (inside) {
        region_weight += tw;
      } else {
        ++outside;
      }
    }

    double inside_mass = spec.mass;
    if (outside == 0) inside_mass = 1.0;
    if (region_weight == 0.0) inside_mass = 0.0;
    const double outside_each =
        outside > 0 ? (1.0 - inside_mass) / static_cast<double>(outside) : 0.0;

    auto row = probs.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      const double planted = weight[c] >= 0.0
                                 ? inside_mass * weight[c] / region_weight
                                 : outside_each;
      row[c] = (1.0 - spec.noise_floor) * planted + spec.noise_floor * uniform;
    }
  }
  return AttentionProbMap(grid, raster_order(grid), std::move(probs));
}

AttentionProbMap gen_probmap(const SyntheticHeadSpec& spec,
                             const VideoGrid& grid, const Permutation& order) {
  return gen_probmap(spec, grid).reordered(order);
}

AttentionInputs gen_qkv(const VideoGrid& grid, std::size_t head_dim,
                        std::uint64_t seed) {
  validate(grid);
  if (head_dim == 0) throw ValidationError("head dimension must be >= 1");
  std::mt19937_64 rng(seed);
  auto fill = [&] {
    Matrix m(grid.tokens(), head_dim);
    for (float& x : m.data()) x = static_cast<float>(2.0 * uniform01(rng) - 1.0);
    return m;
  };
  Matrix q = fill();
  Matrix k = fill();
  Matrix v = fill();
  return make_inputs(std::move(q), std::move(k), std::move(v));
}

SyntheticHeadSpec gen_prompt_variant(const SyntheticHeadSpec& spec,
                                     const Perturbation& p,
                                     std::uint64_t seed) {
  if (p.extent_jitter < 0 || p.extent_jitter > std::min(p.tile.th, p.tile.tw)) {
    throw ValidationError("extent jitter must lie in [0, one tile step]");
  }
  if (!(p.mass_jitter >= 0.0 && p.mass_jitter <= 0.02)) {
    throw ValidationError("mass jitter must lie in [0, 0.02]");
  }
  if (p.extent_jitter == 0 && p.mass_jitter == 0.0) return spec;

  std::mt19937_64 rng(seed);
  SyntheticHeadSpec out = spec;
  out.seed = seed;
  auto jitter = [&](int& extent) {
    extent = std::max(0, extent + uniform_int(rng, -p.extent_jitter, p.extent_jitter));
  };
  jitter(out.window1.omega);
  jitter(out.window1.eta);
  jitter(out.window2.omega);
  jitter(out.window2.eta);
  out.mass = std::clamp(out.mass + (2.0 * uniform01(rng) - 1.0) * p.mass_jitter,
                        1e-6, 1.0);
  return out;
}

std::vector<NamedSpec> pattern_battery(const VideoGrid& grid,
                                       std::uint64_t seed) {
  const int cw = std::max(0, std::min(1, grid.w - 1));
  const int ch = std::max(0, std::min(1, grid.h - 1));
  const SpatialWindow local{std::min(2, grid.w - 1), std::min(2, grid.h - 1)};
  const SpatialWindow wide{grid.w - 1, ch};
  const SpatialWindow tall{cw, grid.h - 1};

  std::vector<NamedSpec> battery;
  SyntheticHeadSpec s;
  s.seed = seed;
  s.mass = 0.99;

  s.spatial = SpatialKind::Local;
  s.window1 = local;
  battery.push_back({"local", s});

  s.spatial = SpatialKind::Cross;
  s.window1 = wide;
  s.window2 = tall;
  battery.push_back({"cross", s});

  SyntheticHeadSpec g;
  g.seed = seed;
  g.spatial = SpatialKind::Global;
  g.mass = 1.0;
  battery.push_back({"global", g});

  SyntheticHeadSpec decay = battery[0].spec;
  decay.temporal = TemporalKind::Decay;
  decay.decay_rate = 0.5;
  battery.push_back({"local-decay", decay});

  SyntheticHeadSpec band = battery[1].spec;
  band.temporal = TemporalKind::Band;
  band.band_center = std::min(2, grid.f - 1);
  band.band_width = 0;
  battery.push_back({"cross-band", band});
  return battery;
}

}  // namespace compact_attn
