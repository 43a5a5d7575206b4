#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "semtex/featsel.hpp"
#include "semtex/pyramid.hpp"
#include "support/synthetic.hpp"

namespace semtex {
namespace {

FeatureVolume field(std::uint32_t w, std::uint32_t h, double (*f)(double, double)) {
  FeatureVolume v(w, h, 1);
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) v.at(0, y, x) = static_cast<float>(f(x, y));
  return v;
}

// Structure tensor built from hand-written differences, smallest eigenvalue
// from a generic symmetric solver.
double tensor_oracle(const FeatureVolume& v) {
  const int w = static_cast<int>(v.width()), h = static_cast<int>(v.height());
  auto px = [&](int x, int y) { return static_cast<double>(v.at(0, y, x)); };
  Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = x == 0 ? px(1, y) - px(0, y) : x == w - 1 ? px(x, y) - px(x - 1, y) : 0.5 * (px(x + 1, y) - px(x - 1, y));
      const double gy = y == 0 ? px(x, 1) - px(x, 0) : y == h - 1 ? px(x, y) - px(x, y - 1) : 0.5 * (px(x, y + 1) - px(x, y - 1));
      g += Eigen::Vector2d(gx, gy) * Eigen::Vector2d(gx, gy).transpose();
    }
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(g).eigenvalues()(0);
}

TEST(Texturedness, Examples) {
  EXPECT_EQ(texturedness_score(FeatureVolume(8, 8, 1, 3.0f)), 0.0);
  EXPECT_NEAR(texturedness_score(field(10, 10, [](double x, double) { return x; })), 0.0, 1e-9);
  const auto bowl = field(21, 21, [](double x, double y) { return 0.05 * ((x - 10) * (x - 10) + (y - 10) * (y - 10)); });
  const double t = texturedness_score(bowl);
  EXPECT_GT(t, 0.0);
  EXPECT_NEAR(t, tensor_oracle(bowl), 1e-9 * std::max(1.0, t));
}

TEST(Texturedness, OffsetAndScale) {
  auto v = testing::random_volume(3, 16, 12, 1, -1.0, 1.0);
  // Dyadic values keep the offset exact in float.
  for (float& x : v.channel(0)) x = std::round(x * 256.0f) / 256.0f;
  FeatureVolume shifted = v, scaled = v;
  for (float& x : shifted.channel(0)) x += 4.0f;
  for (float& x : scaled.channel(0)) x *= 2.0f;
  const double t = texturedness_score(v);
  EXPECT_EQ(texturedness_score(shifted), t);
  EXPECT_NEAR(texturedness_score(scaled), 4.0 * t, 1e-9 * t);
  EXPECT_NEAR(t, tensor_oracle(v), 1e-9 * t);
}

TEST(Texturedness, ClosedFormMatchesEigenSolverOnRandomTensors) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    Eigen::Matrix2d a;
    a << n(rng), n(rng), n(rng), n(rng);
    // Every tenth tensor is made nearly rank one.
    if (i % 10 == 0) a.col(1) = a.col(0) * n(rng) + 1e-6 * a.col(1);
    const Eigen::Matrix2d g = a * a.transpose();
    const double oracle = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(g).eigenvalues()(0);
    const double t = min_eigenvalue_2x2(g(0, 0), g(0, 1), g(1, 1));
    EXPECT_GE(t, 0.0);
    EXPECT_NEAR(t, std::max(oracle, 0.0), 1e-9 * std::max(1.0, g.trace()));
  }
  for (int i = 0; i < 200; ++i) {
    FeatureVolume v(3, 3, 1);
    for (float& x : v.channel(0)) x = static_cast<float>(n(rng));
    const double t = texturedness_score(v);
    EXPECT_NEAR(t, tensor_oracle(v), 1e-9 * std::max(1.0, t));
  }
}

TEST(Texturedness, RejectsMultiChannel) { EXPECT_THROW(texturedness_score(FeatureVolume(4, 4, 2)), Error); }

TEST(Stability, StaticAndConstantOffset) {
  const auto a = testing::random_volume(4, 20, 20, 1, 0.0, 10.0);
  std::vector<StabilityFrame<TranslationWarp>> frames{{a, {}}, {a, {}}};
  EXPECT_EQ(stability_score(frames), 0.0);
  FeatureVolume b = a;
  for (float& x : b.channel(0)) x += 1.5f;
  frames[1].activation = b;
  EXPECT_NEAR(stability_score(frames), 1.5 * 1.5, 1e-5);
  frames.push_back({a, {}});
  EXPECT_NEAR(stability_score(frames), 0.5 * 1.5 * 1.5, 1e-5);
}

TEST(Stability, RotatedSyntheticSequenceIsNearZero) {
  testing::SphereTexture tex(5, 1);
  const std::uint32_t n = 96;
  std::vector<StabilityFrame<RotationWarp>> frames;
  const Mat3 r1 = Mat3::Identity();
  for (int i = 0; i < 3; ++i) {
    const Mat3 ri = so3_exp(Vec3(0.01 * i, 0.02 * i, 0.0));
    // Frame i pixels map into frame 1: warp with template frame i, reference frame 1.
    frames.push_back({testing::render(tex, ri, n, n), testing::relative_warp(ri, r1, n, n)});
  }
  const auto& f = frames[0].activation.channel(0);
  const double mean = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
  double var = 0.0;
  for (float x : f) var += (x - mean) * (x - mean);
  var /= static_cast<double>(f.size());
  EXPECT_LT(stability_score(frames), 1e-3 * var);
}

TEST(Stability, Errors) {
  const auto a = testing::random_volume(6, 16, 16, 1, 0.0, 1.0);
  std::vector<StabilityFrame<TranslationWarp>> one{{a, {}}};
  EXPECT_THROW(stability_score(one), Error);
  std::vector<StabilityFrame<TranslationWarp>> far{{a, {}}, {a, TranslationWarp{Vec2(15.0, 0.0)}}};
  try {
    stability_score(far);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientOverlap);
  }
}

TEST(RankAndSelect, Examples) {
  std::vector<FeatureScore> s{{0, 0, 1.0, 0.5}, {0, 1, 2.0, 0.1}, {0, 2, 0.5, 0.3}};
  EXPECT_EQ(rank_and_select(s, 1.0).levels[0], (std::vector<std::uint32_t>{0, 1, 2}));
  std::vector<FeatureScore> two{{0, 0, 0.0, 0.0}, {0, 1, 5.0, 0.0}};
  EXPECT_EQ(rank_and_select(two, 0.5).levels[0], (std::vector<std::uint32_t>{1}));
  EXPECT_THROW(rank_and_select({}, 0.5), Error);
  EXPECT_THROW(rank_and_select(s, 0.0), Error);
}

TEST(RankAndSelect, TiesGoToLowerChannel) {
  std::vector<FeatureScore> s{{0, 3, 1.0, 1.0}, {0, 1, 1.0, 1.0}, {0, 2, 1.0, 1.0}, {0, 0, 1.0, 1.0}};
  EXPECT_EQ(rank_and_select(s, 0.5).levels[0], (std::vector<std::uint32_t>{0, 1}));
}

// Enumerates every subset of the quota size and keeps the one whose rank
// vector (sorted by (rank, channel)) is lexicographically best.
std::vector<std::uint32_t> exhaustive_best(const std::vector<FeatureScore>& s, std::size_t k) {
  const std::size_t n = s.size();
  std::vector<double> rank(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      // Competition ranking: only strictly better scores push a channel down.
      rank[i] += (s[j].texturedness > s[i].texturedness ? 1 : 0) + (s[j].instability < s[i].instability ? 1 : 0);
    }
  auto key = [&](std::size_t i) { return std::make_pair(rank[i], s[i].channel); };
  std::vector<std::uint32_t> best;
  std::vector<std::pair<double, std::uint32_t>> best_key;
  for (std::uint32_t m = 0; m < (1u << n); ++m) {
    if (static_cast<std::size_t>(std::popcount(m)) != k) continue;
    std::vector<std::pair<double, std::uint32_t>> keys;
    std::vector<std::uint32_t> chosen;
    for (std::size_t i = 0; i < n; ++i)
      if (m & (1u << i)) {
        keys.push_back(key(i));
        chosen.push_back(s[i].channel);
      }
    std::sort(keys.begin(), keys.end());
    if (best.empty() || keys < best_key) {
      best_key = keys;
      std::sort(chosen.begin(), chosen.end());
      best = chosen;
    }
  }
  return best;
}

TEST(RankAndSelect, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 6 + trial % 9;
    std::vector<FeatureScore> s;
    for (std::uint32_t c = 0; c < n; ++c) s.push_back({0, c, double(coarse(rng)), double(coarse(rng))});
    std::shuffle(s.begin(), s.end(), rng);
    const std::size_t k = static_cast<std::size_t>(std::ceil(0.25 * static_cast<double>(n)));
    EXPECT_EQ(rank_and_select(s, 0.25).levels[0], exhaustive_best(s, k)) << trial;
  }
}

TEST(RankAndSelect, PerLevelQuota) {
  std::vector<FeatureScore> s;
  for (std::uint32_t c = 0; c < 10; ++c) s.push_back({0, c, double(c), 0.0});
  for (std::uint32_t c = 0; c < 3; ++c) s.push_back({1, c, double(c), 0.0});
  const auto m = rank_and_select(s, 0.2);
  EXPECT_EQ(m.levels[0], (std::vector<std::uint32_t>{8, 9}));
  EXPECT_EQ(m.levels[1], (std::vector<std::uint32_t>{2}));
  const auto ranked = rank_scores(s, 0.2);
  EXPECT_EQ(ranked.size(), s.size());
}

TEST(RankAndSelect, AverageScores) {
  std::vector<FeatureScore> a{{0, 0, 1.0, 2.0}}, b{{0, 0, 3.0, 4.0}};
  const auto m = average_scores({a, b});
  EXPECT_EQ(m[0].texturedness, 2.0);
  EXPECT_EQ(m[0].instability, 3.0);
}

TEST(RandomMask, Rules) {
  EXPECT_EQ(random_mask({64}, 0.05, 1).levels[0].size(), 4u);
  const auto all = random_mask({5, 3}, 1.0, 2);
  EXPECT_EQ(all.levels[0], (std::vector<std::uint32_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(all.levels[1], (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_EQ(random_mask({64, 128}, 0.3, 9), random_mask({64, 128}, 0.3, 9));
  EXPECT_NE(random_mask({64, 128}, 0.3, 9), random_mask({64, 128}, 0.3, 10));
  const auto m = random_mask({64}, 0.5, 4);
  EXPECT_EQ(std::set<std::uint32_t>(m.levels[0].begin(), m.levels[0].end()).size(), 32u);
  EXPECT_LT(m.levels[0].back(), 64u);
}

TEST(RandomMask, RoughlyUniform) {
  std::vector<int> hits(16, 0);
  for (std::uint64_t seed = 0; seed < 4000; ++seed) {
    const auto m = random_mask({16}, 0.25, seed);
    for (auto c : m.levels[0]) ++hits[c];
  }
  // Each channel expected 1000 times; 5 sigma is about 137.
  for (int h : hits) EXPECT_NEAR(h, 1000, 140);
}

}  // namespace
}  // namespace semtex
