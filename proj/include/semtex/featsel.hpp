#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "semtex/image_ops.hpp"
#include "semtex/solver.hpp"
#include "semtex/warp.hpp"

namespace semtex {

struct FeatureScore {
  std::size_t level = 0;
  std::uint32_t channel = 0;
  double texturedness = 0.0;
  double instability = 0.0;
};

/// Smallest eigenvalue of the symmetric PSD matrix [sxx sxy; sxy syy].
inline double min_eigenvalue_2x2(double sxx, double sxy, double syy) {
  const double tr = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  const double disc = std::sqrt(std::max(tr * tr - 4.0 * det, 0.0));
  // (tr - disc) / 2 cancels badly near rank one; det / lambda_max does not.
  const double lmax = 0.5 * (tr + disc);
  if (lmax <= 0.0) return 0.0;
  return std::max(det / lmax, 0.0);
}

/// Smallest eigenvalue of the structure tensor of a single-channel map, with
/// central differences (one-sided at the border) taken in double precision.
inline double texturedness_score(const FeatureVolume& activation) {
  if (activation.channels() != 1) throw Error(ErrorCode::kChannelMismatch, "texturedness expects one channel");
  const std::uint32_t w = activation.width();
  const std::uint32_t h = activation.height();
  if (w < 2 || h < 2) throw Error(ErrorCode::kDimensionTooSmall, "texturedness needs at least 2x2 pixels");
  auto px = [&](std::uint32_t x, std::uint32_t y) { return static_cast<double>(activation.at(0, y, x)); };
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      const double gx = x == 0 ? px(1, y) - px(0, y) : x == w - 1 ? px(x, y) - px(x - 1, y) : 0.5 * (px(x + 1, y) - px(x - 1, y));
      const double gy = y == 0 ? px(x, 1) - px(x, 0) : y == h - 1 ? px(x, y) - px(x, y - 1) : 0.5 * (px(x, y + 1) - px(x, y - 1));
      sxx += gx * gx;
      sxy += gx * gy;
      syy += gy * gy;
    }
  }
  return min_eigenvalue_2x2(sxx, sxy, syy);
}

/// One frame of a stability sequence: the activation and the warp that maps
/// its pixels into the first frame. The first entry's warp is ignored.
template <WarpModel W>
struct StabilityFrame {
  FeatureVolume activation;
  W to_first;
};

/// Mean over frames 2..N of the per-valid-pixel squared difference between
/// frame 1 sampled at W(x) and frame i at x.
template <WarpModel W>
double stability_score(const std::vector<StabilityFrame<W>>& frames,
                       double min_valid_fraction = kDefaultMinValidFraction) {
  if (frames.size() < 2) throw Error(ErrorCode::kInvalidArgument, "stability needs at least two frames");
  const auto& first = frames.front().activation;
  if (first.channels() != 1) throw Error(ErrorCode::kChannelMismatch, "stability expects single-channel activations");
  double total = 0.0;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const auto& cur = frames[i].activation;
    if (cur.channels() != 1) throw Error(ErrorCode::kChannelMismatch, "stability expects single-channel activations");
    double fraction = 0.0;
    const auto cost = mean_cost_at(cur, first, frames[i].to_first, min_valid_fraction, &fraction);
    if (!cost) {
      throw Error(ErrorCode::kInsufficientOverlap,
                  "frame " + std::to_string(i + 1) + " overlaps frame 1 on " + std::to_string(fraction * 100.0) + "%");
    }
    total += *cost;
  }
  return total / static_cast<double>(frames.size() - 1);
}

/// Weights of the two rank terms in the combined ordering.
struct RankWeights {
  double texturedness = 1.0;
  double instability = 1.0;
};

struct RankedScore {
  FeatureScore score;
  double rank = 0.0;
  bool selected = false;
};

/// ceil(fraction * count), at least 1, robust to fraction rounding.
inline std::size_t quota(double fraction, std::size_t count) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "fraction must lie in (0,1]");
  const auto q = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(count) - 1e-9));
  return std::clamp<std::size_t>(q, 1, count);
}

/// Per-level combined rank (descending texturedness rank + ascending
/// instability rank, ties to the lower channel), keeping the best quota.
inline std::vector<RankedScore> rank_scores(const std::vector<FeatureScore>& scores, double fraction,
                                            RankWeights weights = {}) {
  if (scores.empty()) throw Error(ErrorCode::kEmptyScores, "no feature scores to rank");
  std::map<std::size_t, std::vector<FeatureScore>> by_level;
  for (const auto& s : scores) by_level[s.level].push_back(s);
  std::vector<RankedScore> out;
  for (auto& [level, group] : by_level) {
    std::sort(group.begin(), group.end(), [](const auto& a, const auto& b) { return a.channel < b.channel; });
    const std::size_t n = group.size();
    std::vector<std::size_t> by_tex(n), by_inst(n);
    for (std::size_t i = 0; i < n; ++i) by_tex[i] = by_inst[i] = i;
    std::stable_sort(by_tex.begin(), by_tex.end(),
                     [&](std::size_t a, std::size_t b) { return group[a].texturedness > group[b].texturedness; });
    std::stable_sort(by_inst.begin(), by_inst.end(),
                     [&](std::size_t a, std::size_t b) { return group[a].instability < group[b].instability; });
    // Equal scores share the lowest rank of their run.
    std::vector<double> rank(n, 0.0);
    std::size_t run = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (r > 0 && group[by_tex[r]].texturedness != group[by_tex[r - 1]].texturedness) run = r;
      rank[by_tex[r]] += weights.texturedness * static_cast<double>(run);
    }
    run = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (r > 0 && group[by_inst[r]].instability != group[by_inst[r - 1]].instability) run = r;
      rank[by_inst[r]] += weights.instability * static_cast<double>(run);
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });
    std::vector<bool> keep(n, false);
    for (std::size_t k = 0; k < quota(fraction, n); ++k) keep[order[k]] = true;
    for (std::size_t i = 0; i < n; ++i) out.push_back({group[i], rank[i], keep[i]});
  }
  return out;
}

/// Mask from ranked scores; level_count sizes the mask (levels without scores
/// are an error).
inline FeatureMask mask_from_ranked(const std::vector<RankedScore>& ranked, std::size_t level_count) {
  FeatureMask mask;
  mask.levels.resize(level_count);
  for (const auto& r : ranked) {
    if (r.score.level >= level_count) throw Error(ErrorCode::kInvalidArgument, "score level outside the pyramid");
    if (r.selected) mask.levels[r.score.level].push_back(r.score.channel);
  }
  for (auto& l : mask.levels) {
    if (l.empty()) throw Error(ErrorCode::kEmptyScores, "a pyramid level has no scores");
    std::sort(l.begin(), l.end());
  }
  return mask;
}

inline FeatureMask rank_and_select(const std::vector<FeatureScore>& scores, double fraction, RankWeights weights = {}) {
  if (scores.empty()) throw Error(ErrorCode::kEmptyScores, "no feature scores to rank");
  std::size_t levels = 0;
  for (const auto& s : scores) levels = std::max(levels, s.level + 1);
  return mask_from_ranked(rank_scores(scores, fraction, weights), levels);
}

/// Element-wise mean of per-frame score lists (same (level, channel) order).
inline std::vector<FeatureScore> average_scores(const std::vector<std::vector<FeatureScore>>& per_frame) {
  if (per_frame.empty()) throw Error(ErrorCode::kEmptyScores, "no score lists to average");
  std::vector<FeatureScore> out = per_frame.front();
  for (std::size_t f = 1; f < per_frame.size(); ++f) {
    if (per_frame[f].size() != out.size()) throw Error(ErrorCode::kInvalidArgument, "score lists differ in length");
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].texturedness += per_frame[f][i].texturedness;
      out[i].instability += per_frame[f][i].instability;
    }
  }
  for (auto& s : out) {
    s.texturedness /= static_cast<double>(per_frame.size());
    s.instability /= static_cast<double>(per_frame.size());
  }
  return out;
}

/// Seeded uniform selection without replacement, quota per level. Uses raw
/// mt19937_64 draws so masks match across standard libraries.
inline FeatureMask random_mask(const std::vector<std::uint32_t>& channels_per_level, double fraction,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeatureMask mask;
  for (const auto n : channels_per_level) {
    std::vector<std::uint32_t> idx(n);
    for (std::uint32_t i = 0; i < n; ++i) idx[i] = i;
    const std::size_t k = quota(fraction, n);
    // Partial Fisher-Yates: the first k slots end up uniformly sampled.
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    mask.levels.push_back(std::move(idx));
  }
  return mask;
}

inline std::vector<std::uint32_t> channel_counts(const FeaturePyramid& pyr) {
  std::vector<std::uint32_t> counts;
  for (const auto& l : pyr.levels) counts.push_back(l.channels());
  return counts;
}

}  // namespace semtex
