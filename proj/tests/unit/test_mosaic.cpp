#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "semtex/mosaic.hpp"
#include "semtex/pyramid.hpp"
#include "support/synthetic.hpp"

namespace semtex {
namespace {

constexpr std::uint32_t kSize = 64;

Extractor rgb_extractor(std::uint32_t levels = 4) {
  return [levels](const FeatureVolume& img) { return build_rgb_pyramid(img, levels); };
}

Mat3 pan(double angle) { return so3_exp(Vec3(0.0, angle, 0.0)); }

TEST(Tracker, BootstrapAndSelfFrame) {
  testing::SphereTexture tex(51);
  const auto img = testing::render(tex, Mat3::Identity(), kSize, kSize);
  Tracker t(rgb_extractor(), {});
  const auto first = t.process(img);
  EXPECT_EQ(first.termination, "bootstrap");
  ASSERT_EQ(t.keyframes().size(), 1u);
  EXPECT_TRUE(t.keyframes()[0].R_wk.isIdentity(0.0));
  const auto second = t.process(img);
  EXPECT_EQ(second.status, TrackStatus::kTracking);
  EXPECT_LT(angular_distance(t.rotation(), Mat3::Identity()), 1e-6);
  EXPECT_EQ(t.keyframes().size(), 1u);
  EXPECT_GT(t.keyframes()[0].noise_floor, 0.0);
}

TEST(Tracker, FollowsSlowPan) {
  testing::SphereTexture tex(52);
  Tracker t(rgb_extractor(), {});
  for (int i = 0; i <= 20; ++i) {
    const Mat3 truth = pan(0.01 * i);
    const auto r = t.process(testing::render(tex, truth, kSize, kSize));
    ASSERT_EQ(r.status, TrackStatus::kTracking) << i;
    EXPECT_LT(angular_distance(r.R_wc, truth), 2e-3) << i;
  }
}

TEST(Tracker, AbruptJumpIsLost) {
  testing::SphereTexture tex(53);
  Tracker t(rgb_extractor(), {});
  t.process(testing::render(tex, Mat3::Identity(), kSize, kSize));
  t.process(testing::render(tex, pan(0.01), kSize, kSize));
  const Mat3 before = t.rotation();
  const auto r = t.process(testing::render(tex, pan(1.51), kSize, kSize));
  EXPECT_EQ(r.status, TrackStatus::kLost);
  EXPECT_TRUE(t.rotation() == before);
  // Stays lost until reset, even when the view returns.
  EXPECT_EQ(t.process(testing::render(tex, pan(0.01), kSize, kSize)).status, TrackStatus::kLost);
  EXPECT_EQ(t.keyframes().size(), 1u);
  t.reset();
  EXPECT_TRUE(t.keyframes().empty());
  EXPECT_EQ(t.status(), TrackStatus::kTracking);
}

TEST(Tracker, StaticCameraKeepsOneKeyframe) {
  testing::SphereTexture tex(54);
  const auto img = testing::render(tex, pan(0.2), kSize, kSize);
  Tracker t(rgb_extractor(), {});
  for (int i = 0; i < 5; ++i) t.process(img);
  EXPECT_EQ(t.keyframes().size(), 1u);
}

TEST(Tracker, SpawnPolicyOnLongPan) {
  testing::SphereTexture tex(55);
  Tracker t(rgb_extractor(), {});
  TrackerConfig never;
  never.spawn_threshold = std::numeric_limits<double>::infinity();
  Tracker u(rgb_extractor(), never);
  std::size_t spawned = 0;
  for (int i = 0; i <= 120; ++i) {
    const auto img = testing::render(tex, pan(0.01 * i), kSize, kSize);
    const auto r = t.process(img);
    ASSERT_EQ(r.status, TrackStatus::kTracking) << i;
    spawned += r.spawned ? 1 : 0;
    if (i <= 30) u.process(img);
  }
  EXPECT_EQ(t.keyframes().size(), 4u);
  EXPECT_EQ(spawned, 3u);
  EXPECT_EQ(u.keyframes().size(), 1u);
  const auto& kfs = t.keyframes();
  for (std::size_t a = 0; a < kfs.size(); ++a)
    for (std::size_t b = a + 1; b < kfs.size(); ++b) EXPECT_GT(angular_distance(kfs[a].R_wk, kfs[b].R_wk), 0.175);
  EXPECT_EQ(t.reference_keyframe(), t.nearest_keyframe(t.rotation()));
}

Keyframe plane_keyframe(const Mat3& R_wk, std::uint32_t w, std::uint32_t h) {
  Keyframe kf;
  kf.R_wk = R_wk;
  kf.image = FeatureVolume(w, h, 1);
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) kf.image.at(0, y, x) = static_cast<float>(x + 2.0 * y + 1.0);
  kf.K_image = Intrinsics::default_for(w, h);
  return kf;
}

TEST(Panorama, RayConvention) {
  // Pixel centres next to the middle of the map straddle the forward axis.
  const Vec3 r = panorama_ray(512, 256, 1024, 512);
  EXPECT_GT(r.z(), 0.9999);
  const double half = M_PI / 1024;
  EXPECT_NEAR(r.x(), std::cos(half) * std::sin(half), 1e-12);
  EXPECT_NEAR(r.y(), std::sin(half), 1e-12);
  EXPECT_NEAR(panorama_ray(0, 0, 8, 4).norm(), 1.0, 1e-15);
}

TEST(Panorama, SingleKeyframeProjectionOracle) {
  const auto kf = plane_keyframe(Mat3::Identity(), 40, 30);
  const std::uint32_t W = 256, H = 128;
  const auto pano = render_panorama({kf}, W);
  ASSERT_EQ(pano.image.width(), W);
  ASSERT_EQ(pano.image.height(), H);
  std::size_t observed = 0;
  for (std::uint32_t v = 0; v < H; ++v)
    for (std::uint32_t u = 0; u < W; ++u) {
      const double lon = (u + 0.5) / W * 2 * M_PI - M_PI, lat = M_PI / 2 - (v + 0.5) / H * M_PI;
      const double X = std::cos(lat) * std::sin(lon), Y = -std::sin(lat), Z = std::cos(lat) * std::cos(lon);
      const double x = 40.0 * X / Z + 19.5, y = 40.0 * Y / Z + 14.5;
      const bool inside = Z > 0 && x >= 0 && y >= 0 && x <= 39 && y <= 29;
      const auto src = pano.source[std::size_t{v} * W + u];
      if (inside) {
        ++observed;
        ASSERT_EQ(src, 0);
        EXPECT_NEAR(pano.image.at(0, v, u), x + 2 * y + 1, 1e-3);
      } else {
        ASSERT_EQ(src, -1);
        EXPECT_EQ(pano.image.at(0, v, u), 0.0f);
      }
    }
  EXPECT_GT(observed, 100u);
}

TEST(Panorama, SizeAndPurity) {
  const std::vector<Keyframe> kfs{plane_keyframe(Mat3::Identity(), 32, 24), plane_keyframe(pan(0.6), 32, 24)};
  const auto a = render_panorama(kfs, 1024);
  EXPECT_EQ(a.image.width(), 1024u);
  EXPECT_EQ(a.image.height(), 512u);
  ThreadPool pool(4);
  const auto b = render_panorama(kfs, 1024, &pool);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.source, b.source);
  bool saw[2] = {false, false};
  for (auto s : a.source)
    if (s >= 0) saw[s] = true;
  EXPECT_TRUE(saw[0] && saw[1]);
  EXPECT_THROW(render_panorama({}, 64), Error);
}

TEST(Panorama, TrackedKeyframesAgreeOnOverlap) {
  testing::SphereTexture tex(56);
  Tracker t(rgb_extractor(), {});
  for (int i = 0; i <= 40; ++i) t.process(testing::render(tex, pan(0.01 * i), kSize, kSize));
  ASSERT_EQ(t.keyframes().size(), 2u);
  const auto p0 = render_panorama({t.keyframes()[0]}, 512);
  const auto p1 = render_panorama({t.keyframes()[1]}, 512);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p0.source.size(); ++i) {
    if (p0.source[i] < 0 || p1.source[i] < 0) continue;
    for (std::uint32_t c = 0; c < 3; ++c) {
      sum += std::abs(p0.image.channel(c)[i] - p1.image.channel(c)[i]);
      ++n;
    }
  }
  ASSERT_GT(n, 300u);
  EXPECT_LT(sum / static_cast<double>(n), 2.0);
}

}  // namespace
}  // namespace semtex
