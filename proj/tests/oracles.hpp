// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference implementations used only by the tests. They share no
// code with the library beyond its plain data types.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "compact_attn/attention.hpp"
#include "compact_attn/layout.hpp"
#include "compact_attn/masks.hpp"
#include "compact_attn/matrix.hpp"
#include "compact_attn/prob_map.hpp"

namespace compact_attn::oracle {

// Row-major nested-loop attention in double precision. `keep(i, j)` selects
// the key tokens each query may see.
inline std::vector<double> attention(
    const Matrix& q, const Matrix& k, const Matrix& v, double scale,
    const std::function<bool(std::size_t, std::size_t)>& keep) {
  const std::size_t n = q.rows(), d = q.cols(), dv = v.cols();
  std::vector<double> out(n * dv, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(n, -std::numeric_limits<double>::infinity());
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!keep(i, j)) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += double(q(i, c)) * double(k(j, c));
      s[j] = dot * scale;
      m = std::max(m, s[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (keep(i, j)) z += std::exp(s[j] - m);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!keep(i, j)) continue;
      double p = std::exp(s[j] - m) / z;
      for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] += p * double(v(j, c));
    }
  }
  return out;
}

inline double max_abs_diff(const Matrix& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      worst = std::max(worst, std::abs(double(a(i, c)) - b[i * a.cols() + c]));
    }
  }
  return worst;
}

// Membership straight from the definition: the key's frame distance selects
// a group, and the key must sit inside one of its two boxes.
inline bool member(const HeadMaskConfig& config, const TokenCoord& q,
                   const TokenCoord& k) {
  const int dt = std::abs(k.t - q.t);
  const int dx = std::abs(k.x - q.x);
  const int dy = std::abs(k.y - q.y);
  for (const FrameGroup& g : config.groups) {
    if (dt < g.d_lo || dt > g.d_hi) continue;
    for (const auto& w : {g.window.w1, g.window.w2}) {
      if (w && dx <= w->omega && dy <= w->eta) return true;
    }
    return false;
  }
  return false;
}

// Block-wise OR over every token pair, with the token at sequence position p
// being raster token perm.raster_at(p).
template <typename Member>
BlockMask rasterize(const VideoGrid& grid, const Permutation& perm,
                    std::size_t block_size, Member&& is_member) {
  const std::size_t n = grid.tokens();
  BlockMask mask(n, block_size);
  for (std::size_t i = 0; i < n; ++i) {
    TokenCoord qc = coord_of(grid, perm.raster_at(i));
    for (std::size_t j = 0; j < n; ++j) {
      if (is_member(qc, coord_of(grid, perm.raster_at(j)))) {
        mask.set(i / block_size, j / block_size);
      }
    }
  }
  return mask;
}

// Mean over rows of the mass in allowed blocks, summing tokens one by one.
inline double recall(const AttentionProbMap& map, const BlockMask& mask) {
  const std::size_t n = map.tokens(), bs = mask.block_size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask.allowed(i / bs, j / bs)) row += map(i, j);
    }
    total += row;
  }
  return total / double(n);
}

// Per row: sort block masses descending and count how many reach target.
inline double topk_fraction(const AttentionProbMap& map, std::size_t bs,
                            double target) {
  const std::size_t n = map.tokens();
  const std::size_t blocks = (n + bs - 1) / bs;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> mass(blocks, 0.0);
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      mass[j / bs] += map(i, j);
      row += map(i, j);
    }
    std::sort(mass.rbegin(), mass.rend());
    std::size_t k = 0;
    double cum = 0.0;
    while (k < blocks && cum < target * row - 1e-12) cum += mass[k++];
    sum += double(k) / double(blocks);
  }
  return sum / double(n);
}

inline double mse(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      double d = double(a(i, j)) - double(b(i, j));
      s += d * d;
    }
  }
  return s / double(a.rows() * a.cols());
}

// Exhaustive search over single-group dual windows with block size 1 and
// tile (1,1,1): every (omega1, eta1, omega2, eta2) is scored by recall and by
// the fraction of token pairs kept.
struct DualCandidate {
  SpatialWindow w1, w2;
  double recall = 0.0;
  double cost = 0.0;
};

class ExhaustiveDual {
 public:
  explicit ExhaustiveDual(const AttentionProbMap& map)
      : w_(map.grid().w), h_(map.grid().h), n_(map.tokens()) {
    mass_.assign(std::size_t(w_) * h_, 0.0);
    count_.assign(std::size_t(w_) * h_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      TokenCoord a = map.coord_at(i);
      for (std::size_t j = 0; j < n_; ++j) {
        TokenCoord b = map.coord_at(j);
        std::size_t cell = std::size_t(std::abs(a.y - b.y)) * w_ + std::abs(a.x - b.x);
        mass_[cell] += map(i, j);
        count_[cell] += 1.0;
      }
    }
  }

  DualCandidate score(SpatialWindow a, SpatialWindow b) const {
    SpatialWindow c{std::min(a.omega, b.omega), std::min(a.eta, b.eta)};
    DualCandidate out{a, b};
    out.recall = (box(mass_, a) + box(mass_, b) - box(mass_, c)) / double(n_);
    out.cost = (box(count_, a) + box(count_, b) - box(count_, c)) /
               (double(n_) * double(n_));
    return out;
  }

  std::vector<DualCandidate> all() const {
    std::vector<DualCandidate> out;
    for (int o1 = 0; o1 < w_; ++o1)
      for (int e1 = 0; e1 < h_; ++e1)
        for (int o2 = 0; o2 < w_; ++o2)
          for (int e2 = 0; e2 < h_; ++e2) out.push_back(score({o1, e1}, {o2, e2}));
    return out;
  }

 private:
  double box(const std::vector<double>& v, SpatialWindow win) const {
    double s = 0.0;
    for (int dy = 0; dy <= win.eta; ++dy)
      for (int dx = 0; dx <= win.omega; ++dx) s += v[std::size_t(dy) * w_ + dx];
    return s;
  }

  int w_, h_;
  std::size_t n_;
  std::vector<double> mass_;
  std::vector<double> count_;
};

// Random config over `grid` whose distance-0 group always has a window.
inline HeadMaskConfig random_config(const VideoGrid& grid,
                                    const std::vector<int>& starts,
                                    std::mt19937_64& rng) {
  HeadMaskConfig config;
  config.groups = make_groups(grid, starts);
  auto extent = [&](int limit) {
    return int(rng() % std::uint64_t(limit));
  };
  auto window = [&]() { return SpatialWindow{extent(grid.w), extent(grid.h)}; };
  // kind 0: no window, 1: w1 only, 2: w2 only, 3: both.
  for (FrameGroup& g : config.groups) {
    int kind = int(rng() % 4);
    if (g.d_lo == 0 && kind == 0) kind = 1 + int(rng() % 3);
    if (kind == 1 || kind == 3) g.window.w1 = window();
    if (kind == 2 || kind == 3) g.window.w2 = window();
  }
  return config;
}

}  // namespace compact_attn::oracle
