// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#include "compact_attn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numeric>

#include "compact_attn/errors.hpp"

namespace compact_attn {
namespace {

constexpr double kMassSlack = 1e-12;

void check_same_shape(const BlockMask& a, const BlockMask& b) {
  if (a.tokens() != b.tokens() || a.block_size() != b.block_size()) {
    throw ShapeMismatch("block masks have different shapes");
  }
}

double aspect(const SpatialWindow& w, const VideoGrid& grid) {
  const double width = std::min(2 * w.omega + 1, grid.w);
  const double height = std::min(2 * w.eta + 1, grid.h);
  return width / height;
}

}  // namespace

const char* to_string(SpatialPattern p) {
  switch (p) {
    case SpatialPattern::Local: return "Local";
    case SpatialPattern::Cross: return "Cross";
    case SpatialPattern::Global: return "Global";
  }
  return "?";
}

const char* to_string(TemporalPattern p) {
  return p == TemporalPattern::TimeVariant ? "TimeVariant" : "TimeInvariant";
}

ProbMatrix block_mass(const AttentionProbMap& map, std::size_t block_size) {
  if (block_size == 0) throw ValidationError("block size must be >= 1");
  const std::size_t n = map.tokens();
  const std::size_t nb = (n + block_size - 1) / block_size;
  ProbMatrix mass(nb, nb);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = map.probs().row(r);
    auto out = mass.row(r / block_size);
    for (std::size_t c = 0; c < n; ++c) out[c / block_size] += row[c];
  }
  return mass;
}

double recall_from_block_mass(const ProbMatrix& mass, const BlockMask& mask,
                              std::size_t tokens) {
  if (mass.rows() != mask.blocks() || mass.cols() != mask.blocks() ||
      mask.tokens() != tokens) {
    throw ShapeMismatch("block masses do not match the mask");
  }
  double covered = 0.0;
  for (std::size_t i = 0; i < mask.blocks(); ++i) {
    for (std::size_t j = 0; j < mask.blocks(); ++j) {
      if (mask.allowed(i, j)) covered += mass(i, j);
    }
  }
  return covered / static_cast<double>(tokens);
}

double recall(const AttentionProbMap& map, const BlockMask& mask) {
  if (mask.tokens() != map.tokens()) {
    throw ShapeMismatch("mask covers " + std::to_string(mask.tokens()) +
                        " tokens, map has " + std::to_string(map.tokens()));
  }
  return recall_from_block_mass(block_mass(map, mask.block_size()), mask,
                                map.tokens());
}

double topk_block_fraction(const AttentionProbMap& map, std::size_t block_size,
                           double target) {
  if (!(target > 0.0 && target <= 1.0)) {
    throw ValidationError("top-k target must lie in (0, 1]");
  }
  if (block_size == 0) throw ValidationError("block size must be >= 1");
  const std::size_t n = map.tokens();
  const std::size_t nb = (n + block_size - 1) / block_size;
  std::vector<double> masses(nb);
  double total_count = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    std::fill(masses.begin(), masses.end(), 0.0);
    const auto row = map.probs().row(r);
    for (std::size_t c = 0; c < n; ++c) masses[c / block_size] += row[c];
    const double row_total = std::accumulate(masses.begin(), masses.end(), 0.0);
    std::sort(masses.begin(), masses.end(), std::greater<>());
    const double needed = target * row_total - kMassSlack;
    double cumulative = 0.0;
    std::size_t count = 0;
    while (count < nb && cumulative < needed) cumulative += masses[count++];
    total_count += static_cast<double>(count);
  }
  return total_count / static_cast<double>(n) / static_cast<double>(nb);
}

double jaccard(const BlockMask& a, const BlockMask& b) {
  check_same_shape(a, b);
  std::size_t both = 0;
  std::size_t either = 0;
  for (std::size_t i = 0; i < a.blocks(); ++i) {
    for (std::size_t j = 0; j < a.blocks(); ++j) {
      const bool x = a.allowed(i, j);
      const bool y = b.allowed(i, j);
      both += (x && y) ? 1 : 0;
      either += (x || y) ? 1 : 0;
    }
  }
  if (either == 0) return 1.0;
  return static_cast<double>(both) / static_cast<double>(either);
}

SpatialFit fit_spatial(const AttentionProbMap& map,
                       const SpatialParams& params) {
  const VideoGrid& grid = map.grid();
  const std::size_t n = map.tokens();
  const auto W = static_cast<std::size_t>(grid.w);
  const auto H = static_cast<std::size_t>(grid.h);

  std::vector<TokenCoord> coords(n);
  for (std::size_t p = 0; p < n; ++p) coords[p] = map.coord_at(p);

  // offset_mass[dy][dx], normalised to total 1.
  ProbMatrix offset_mass(H, W);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = map.probs().row(r);
    const TokenCoord& q = coords[r];
    for (std::size_t c = 0; c < n; ++c) {
      const TokenCoord& k = coords[c];
      offset_mass(static_cast<std::size_t>(std::abs(k.y - q.y)),
                  static_cast<std::size_t>(std::abs(k.x - q.x))) += row[c];
    }
  }
  // box_mass(eta, omega): mass with |dy| <= eta and |dx| <= omega.
  ProbMatrix box_mass(H, W);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      double v = offset_mass(y, x) / static_cast<double>(n);
      if (y > 0) v += box_mass(y - 1, x);
      if (x > 0) v += box_mass(y, x - 1);
      if (x > 0 && y > 0) v -= box_mass(y - 1, x - 1);
      box_mass(y, x) = v;
    }
  }
  auto area = [&](int omega, int eta) {
    return std::min(2 * omega + 1, grid.w) * std::min(2 * eta + 1, grid.h);
  };

  SpatialFit best;
  int best_area = std::numeric_limits<int>::max();
  const double needed = params.capture_mass - kMassSlack;
  // w1 is the window with the larger omega; the scan covers every pair once.
  for (int o1 = 0; o1 < grid.w; ++o1) {
    for (int e1 = 0; e1 < grid.h; ++e1) {
      const int a1 = area(o1, e1);
      if (a1 > best_area) continue;
      const double m1 = box_mass(e1, o1);
      for (int o2 = 0; o2 <= o1; ++o2) {
        for (int e2 = 0; e2 < grid.h; ++e2) {
          const int oi = std::min(o1, o2);
          const int ei = std::min(e1, e2);
          const int union_area = a1 + area(o2, e2) - area(oi, ei);
          if (union_area > best_area) continue;
          const double mass = m1 + box_mass(e2, o2) - box_mass(ei, oi);
          if (mass < needed) continue;
          if (union_area < best_area ||
              mass > best.captured_mass + kMassSlack) {
            best_area = union_area;
            best.captured_mass = mass;
            best.window = DualWindow{SpatialWindow{o1, e1}, SpatialWindow{o2, e2}};
          }
        }
      }
    }
  }

  best.area_fraction =
      static_cast<double>(best_area) / static_cast<double>(grid.frame_tokens());
  const double a1 = aspect(*best.window.w1, grid);
  const double a2 = aspect(*best.window.w2, grid);
  best.aspect_ratio = std::max(a1 / a2, a2 / a1);

  if (best.area_fraction > params.global_area) {
    best.pattern = SpatialPattern::Global;
  } else if (best.window.is_cross() &&
             best.aspect_ratio >= params.cross_aspect_ratio) {
    best.pattern = SpatialPattern::Cross;
  } else {
    best.pattern = SpatialPattern::Local;
  }
  return best;
}

SpatialPattern classify_spatial(const AttentionProbMap& map,
                                const SpatialParams& params) {
  return fit_spatial(map, params).pattern;
}

std::vector<double> temporal_profile(const AttentionProbMap& map) {
  const VideoGrid& grid = map.grid();
  const std::size_t n = map.tokens();
  std::vector<int> frame(n);
  for (std::size_t p = 0; p < n; ++p) frame[p] = map.coord_at(p).t;

  std::vector<double> mass(static_cast<std::size_t>(grid.f), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = map.probs().row(r);
    for (std::size_t c = 0; c < n; ++c) {
      mass[static_cast<std::size_t>(std::abs(frame[c] - frame[r]))] += row[c];
    }
  }
  const double frame_pairs =
      static_cast<double>(grid.frame_tokens()) * static_cast<double>(grid.frame_tokens());
  for (int d = 0; d < grid.f; ++d) {
    const double frame_count = d == 0 ? grid.f : 2.0 * (grid.f - d);
    mass[static_cast<std::size_t>(d)] /= frame_count * frame_pairs;
  }
  return mass;
}

TemporalPattern classify_temporal(const AttentionProbMap& map,
                                  double ratio_threshold) {
  if (map.grid().f < 2) {
    throw SingleFrame("temporal classification needs at least two frames");
  }
  const auto profile = temporal_profile(map);
  const auto [lo, hi] = std::minmax_element(profile.begin(), profile.end());
  const double ratio = *lo > 0.0 ? *hi / *lo
                                 : std::numeric_limits<double>::infinity();
  return ratio > ratio_threshold ? TemporalPattern::TimeVariant
                                 : TemporalPattern::TimeInvariant;
}

PatternLabel classify(const AttentionProbMap& map, const SpatialParams& spatial,
                      double temporal_ratio_threshold) {
  PatternLabel label;
  label.spatial = classify_spatial(map, spatial);
  label.temporal = map.grid().f < 2
                       ? TemporalPattern::TimeInvariant
                       : classify_temporal(map, temporal_ratio_threshold);
  return label;
}

double mse(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch("mse needs matrices of equal shape");
  }
  if (a.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

double psnr(const Matrix& a, const Matrix& b, double max_val) {
  if (!(max_val > 0.0)) throw ValidationError("psnr max_val must be > 0");
  const double err = mse(a, b);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / err);
}

}  // namespace compact_attn
