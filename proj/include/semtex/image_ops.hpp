#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>

#include "semtex/tensor.hpp"

namespace semtex {

struct SampleResult {
  double value = 0.0;
  bool valid = false;
};

/// Precomputed bilinear footprint: top-left index into a plane plus the two
/// fractional weights. Shared across channels of one volume.
struct BilinearTap {
  std::size_t offset = 0;
  float ax = 0.0f;
  float ay = 0.0f;
  bool valid = false;
};

/// Footprint is valid only when the point lies in [0,w-1]x[0,h-1].
inline BilinearTap bilinear_tap(std::uint32_t width, std::uint32_t height, double x, double y) {
  BilinearTap tap;
  if (!(x >= 0.0 && y >= 0.0 && x <= width - 1.0 && y <= height - 1.0)) return tap;
  auto x0 = static_cast<std::int64_t>(std::floor(x));
  auto y0 = static_cast<std::int64_t>(std::floor(y));
  // Points on the last row/column use the previous cell with weight 1.
  if (width > 1) x0 = std::min<std::int64_t>(x0, width - 2);
  if (height > 1) y0 = std::min<std::int64_t>(y0, height - 2);
  tap.offset = static_cast<std::size_t>(y0) * width + static_cast<std::size_t>(x0);
  tap.ax = static_cast<float>(x - static_cast<double>(x0));
  tap.ay = static_cast<float>(y - static_cast<double>(y0));
  tap.valid = true;
  return tap;
}

inline double sample_plane(std::span<const float> plane, std::uint32_t width, std::uint32_t height,
                           double x, double y) {
  auto x0 = static_cast<std::int64_t>(std::floor(x));
  auto y0 = static_cast<std::int64_t>(std::floor(y));
  if (width > 1) x0 = std::min<std::int64_t>(x0, width - 2);
  if (height > 1) y0 = std::min<std::int64_t>(y0, height - 2);
  const double ax = x - static_cast<double>(x0);
  const double ay = y - static_cast<double>(y0);
  const std::size_t base = static_cast<std::size_t>(y0) * width + static_cast<std::size_t>(x0);
  const std::size_t dx = width > 1 ? 1 : 0;
  const std::size_t dy = height > 1 ? width : 0;
  const double top = (1.0 - ax) * plane[base] + ax * plane[base + dx];
  const double bottom = (1.0 - ax) * plane[base + dy] + ax * plane[base + dy + dx];
  return (1.0 - ay) * top + ay * bottom;
}

/// Bilinear interpolation of one channel at a continuous pixel coordinate.
/// Out-of-domain points come back with valid == false.
inline SampleResult sample_bilinear(const FeatureVolume& v, double x, double y, std::uint32_t channel) {
  if (channel >= v.channels()) throw Error(ErrorCode::kChannelMismatch, "channel index out of range");
  if (!(x >= 0.0 && y >= 0.0 && x <= v.width() - 1.0 && y <= v.height() - 1.0)) return {};
  return {sample_plane(v.channel(channel), v.width(), v.height(), x, y), true};
}

/// Central differences in the interior, one-sided on the 1-pixel border.
inline std::pair<FeatureVolume, FeatureVolume> gradient_central(const FeatureVolume& v) {
  const std::uint32_t w = v.width();
  const std::uint32_t h = v.height();
  if (w < 3 || h < 3) {
    throw Error(ErrorCode::kDimensionTooSmall, "gradient needs at least 3x3 pixels");
  }
  FeatureVolume gx(w, h, v.channels());
  FeatureVolume gy(w, h, v.channels());
  for (std::uint32_t c = 0; c < v.channels(); ++c) {
    auto src = v.channel(c);
    auto dx = gx.channel(c);
    auto dy = gy.channel(c);
    for (std::uint32_t y = 0; y < h; ++y) {
      const float* row = src.data() + std::size_t{y} * w;
      float* out = dx.data() + std::size_t{y} * w;
      out[0] = row[1] - row[0];
      for (std::uint32_t x = 1; x + 1 < w; ++x) out[x] = 0.5f * (row[x + 1] - row[x - 1]);
      out[w - 1] = row[w - 1] - row[w - 2];
    }
    for (std::uint32_t y = 0; y < h; ++y) {
      float* out = dy.data() + std::size_t{y} * w;
      const float* up = src.data() + std::size_t{y == 0 ? 0 : y - 1} * w;
      const float* down = src.data() + std::size_t{y + 1 == h ? y : y + 1} * w;
      const float scale = (y == 0 || y + 1 == h) ? 1.0f : 0.5f;
      for (std::uint32_t x = 0; x < w; ++x) out[x] = scale * (down[x] - up[x]);
    }
  }
  return {std::move(gx), std::move(gy)};
}

/// Reflect-101 index mapping (…, 2, 1 | 0, 1, 2, …, n-1 | n-2, …).
inline std::int64_t reflect101(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

inline constexpr std::array<float, 5> kBinomial5 = {1.0f / 16, 4.0f / 16, 6.0f / 16, 4.0f / 16, 1.0f / 16};

/// 5x5 binomial blur (reflect-101) followed by keeping every second pixel
/// from (0,0). Output dims are ceil(dim/2).
inline FeatureVolume downsample_gaussian(const FeatureVolume& img) {
  const std::uint32_t w = img.width();
  const std::uint32_t h = img.height();
  if (w < 2 || h < 2) throw Error(ErrorCode::kDimensionTooSmall, "downsample needs at least 2x2 pixels");
  const std::uint32_t ow = (w + 1) / 2;
  const std::uint32_t oh = (h + 1) / 2;
  FeatureVolume out(ow, oh, img.channels());
  std::vector<float> rows(std::size_t{ow} * h);
  for (std::uint32_t c = 0; c < img.channels(); ++c) {
    auto src = img.channel(c);
    for (std::uint32_t y = 0; y < h; ++y) {
      const float* row = src.data() + std::size_t{y} * w;
      for (std::uint32_t ox = 0; ox < ow; ++ox) {
        const std::int64_t x = 2 * std::int64_t{ox};
        float acc = 0.0f;
        for (int k = -2; k <= 2; ++k) acc += kBinomial5[k + 2] * row[reflect101(x + k, w)];
        rows[std::size_t{y} * ow + ox] = acc;
      }
    }
    auto dst = out.channel(c);
    for (std::uint32_t oy = 0; oy < oh; ++oy) {
      const std::int64_t y = 2 * std::int64_t{oy};
      for (std::uint32_t ox = 0; ox < ow; ++ox) {
        float acc = 0.0f;
        for (int k = -2; k <= 2; ++k) {
          acc += kBinomial5[k + 2] * rows[static_cast<std::size_t>(reflect101(y + k, h)) * ow + ox];
        }
        dst[std::size_t{oy} * ow + ox] = acc;
      }
    }
  }
  return out;
}

inline FeatureVolume upsample_nearest(const FeatureVolume& img, std::uint32_t width, std::uint32_t height) {
  FeatureVolume out(width, height, img.channels());
  for (std::uint32_t c = 0; c < img.channels(); ++c) {
    for (std::uint32_t y = 0; y < height; ++y) {
      const std::uint32_t sy = std::min(y / 2, img.height() - 1);
      for (std::uint32_t x = 0; x < width; ++x) {
        out.at(c, y, x) = img.at(c, sy, std::min(x / 2, img.width() - 1));
      }
    }
  }
  return out;
}

/// Aspect-preserving center crop followed by bilinear resize to size x size.
inline FeatureVolume crop_resize_square(const FeatureVolume& img, std::uint32_t size) {
  if (img.width() == size && img.height() == size) return img;
  const std::uint32_t side = std::min(img.width(), img.height());
  const double x_off = (img.width() - side) / 2.0;
  const double y_off = (img.height() - side) / 2.0;
  const double step = size > 1 ? (side - 1.0) / (size - 1.0) : 0.0;
  FeatureVolume out(size, size, img.channels());
  for (std::uint32_t c = 0; c < img.channels(); ++c) {
    auto plane = img.channel(c);
    for (std::uint32_t y = 0; y < size; ++y) {
      for (std::uint32_t x = 0; x < size; ++x) {
        out.at(c, y, x) = static_cast<float>(
            sample_plane(plane, img.width(), img.height(), std::floor(x_off) + x * step,
                         std::floor(y_off) + y * step));
      }
    }
  }
  return out;
}

}  // namespace semtex
