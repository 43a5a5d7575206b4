#pragma once

// Procedural scenes for tests: a band-limited texture defined on the unit
// sphere, rendered through a pinhole camera at any rotation, so image pairs
// with exactly known relative rotation can be produced without resampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "semtex/image_ops.hpp"
#include "semtex/so3.hpp"
#include "semtex/tensor.hpp"
#include "semtex/warp.hpp"

namespace semtex::testing {

struct Wave {
  Vec3 k;
  double phase;
  double amplitude;
};

class SphereTexture {
 public:
  /// waves per channel; frequencies in rad^-1 drawn from [fmin, fmax].
  SphereTexture(std::uint64_t seed, std::uint32_t channels = 3, int waves = 12, double fmin = 3.0, double fmax = 25.0)
      : channels_(channels) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::uint32_t c = 0; c < channels; ++c) {
      std::vector<Wave> ws;
      for (int i = 0; i < waves; ++i) {
        Vec3 dir(u(rng) * 2 - 1, u(rng) * 2 - 1, u(rng) * 2 - 1);
        dir.normalize();
        const double f = fmin + (fmax - fmin) * u(rng);
        ws.push_back({dir * f, 2 * M_PI * u(rng), 1.0 / std::sqrt(static_cast<double>(waves))});
      }
      waves_.push_back(std::move(ws));
    }
  }

  double value(std::uint32_t c, const Vec3& d) const {
    double v = 0.0;
    for (const auto& w : waves_[c]) v += w.amplitude * std::sin(w.k.dot(d) + w.phase);
    return std::clamp(128.0 + 60.0 * v, 0.0, 255.0);
  }

  std::uint32_t channels() const { return channels_; }

 private:
  std::uint32_t channels_;
  std::vector<std::vector<Wave>> waves_;
};

/// Camera with world-from-camera rotation R_wc.
inline FeatureVolume render(const SphereTexture& tex, const Mat3& R_wc, std::uint32_t width, std::uint32_t height) {
  const Intrinsics K = Intrinsics::default_for(width, height);
  const Mat3 kinv = K.inverse();
  FeatureVolume img(width, height, tex.channels());
  for (std::uint32_t y = 0; y < height; ++y) {
    for (std::uint32_t x = 0; x < width; ++x) {
      const Vec3 d = (R_wc * (kinv * Vec3(x, y, 1.0))).normalized();
      for (std::uint32_t c = 0; c < tex.channels(); ++c) img.at(c, y, x) = static_cast<float>(tex.value(c, d));
    }
  }
  return img;
}

/// Warp taking template pixels (camera R_t) to reference pixels (camera R_r).
inline RotationWarp relative_warp(const Mat3& R_t, const Mat3& R_r, std::uint32_t width, std::uint32_t height) {
  return {R_r.transpose() * R_t, Intrinsics::default_for(width, height)};
}

/// v -> gain * 255 (v/255)^gamma + bias, clamped to [0,255].
inline FeatureVolume illumination(const FeatureVolume& img, double gamma, double gain, double bias) {
  FeatureVolume out = img;
  for (float& v : out.data()) {
    const double t = std::clamp(static_cast<double>(v), 0.0, 255.0) / 255.0;
    v = static_cast<float>(std::clamp(gain * 255.0 * std::pow(t, gamma) + bias, 0.0, 255.0));
  }
  return out;
}

/// Separable Gaussian blur, reflect-101 borders, radius ceil(3 sigma).
inline FeatureVolume gaussian_blur(const FeatureVolume& img, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  const std::uint32_t w = img.width();
  const std::uint32_t h = img.height();
  FeatureVolume tmp(w, h, img.channels());
  FeatureVolume out(w, h, img.channels());
  for (std::uint32_t c = 0; c < img.channels(); ++c) {
    for (std::uint32_t y = 0; y < h; ++y) {
      for (std::uint32_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img.at(c, y, static_cast<std::uint32_t>(reflect101(x + i, w)));
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    }
    for (std::uint32_t y = 0; y < h; ++y) {
      for (std::uint32_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp.at(c, static_cast<std::uint32_t>(reflect101(y + i, h)), x);
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

/// Random field with reproducible values in [lo, hi].
inline FeatureVolume random_volume(std::uint64_t seed, std::uint32_t w, std::uint32_t h, std::uint32_t c, double lo = -1.0,
                                   double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  FeatureVolume v(w, h, c);
  for (float& x : v.data()) x = static_cast<float>(u(rng));
  return v;
}

/// Smooth planar field: sum of low-frequency sinusoids (periods >= min_period px).
inline FeatureVolume smooth_volume(std::uint64_t seed, std::uint32_t w, std::uint32_t h, std::uint32_t c,
                                   double min_period = 24.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FeatureVolume v(w, h, c);
  for (std::uint32_t ch = 0; ch < c; ++ch) {
    std::vector<std::array<double, 4>> waves;
    for (int i = 0; i < 6; ++i) {
      const double angle = 2 * M_PI * u(rng);
      const double freq = 2 * M_PI / (min_period * (1.0 + 3.0 * u(rng)));
      waves.push_back({freq * std::cos(angle), freq * std::sin(angle), 2 * M_PI * u(rng), 0.5 + u(rng)});
    }
    for (std::uint32_t y = 0; y < h; ++y) {
      for (std::uint32_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (const auto& wv : waves) acc += wv[3] * std::sin(wv[0] * x + wv[1] * y + wv[2]);
        v.at(ch, y, x) = static_cast<float>(50.0 * acc);
      }
    }
  }
  return v;
}

}  // namespace semtex::testing
