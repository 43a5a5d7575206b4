#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "semtex/conv.hpp"
#include "semtex/image_ops.hpp"
#include "semtex/tensor.hpp"

namespace semtex {

enum class PyramidKind { kRgbGaussian, kConv };

inline std::string to_string(PyramidKind kind) { return kind == PyramidKind::kConv ? "conv" : "rgb"; }

inline constexpr std::uint32_t kDefaultRgbLevels = 5;
inline constexpr std::uint32_t kConvWorkingSize = 224;
/// Per-channel RGB means subtracted before the conv stack (inputs in [0,255]).
inline constexpr std::array<float, 3> kVggChannelMeans = {123.68f, 116.779f, 103.939f};

/// Level 0 is the input; each further level is downsample_gaussian of the
/// previous one.
inline FeaturePyramid build_rgb_pyramid(const FeatureVolume& img, std::uint32_t levels = kDefaultRgbLevels) {
  if (levels < 1) throw Error(ErrorCode::kInvalidArgument, "pyramid needs at least one level");
  const std::uint64_t min_side = std::uint64_t{1} << (levels - 1);
  if (img.width() < min_side || img.height() < min_side) {
    throw Error(ErrorCode::kImageTooSmall, std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                                               " image is too small for " + std::to_string(levels) + " levels");
  }
  FeaturePyramid pyr;
  pyr.base_width = img.width();
  pyr.base_height = img.height();
  pyr.levels.push_back(img);
  pyr.level_scale.push_back(1);
  for (std::uint32_t l = 1; l < levels; ++l) {
    pyr.levels.push_back(downsample_gaussian(pyr.levels.back()));
    pyr.level_scale.push_back(pyr.level_scale.back() * 2);
  }
  return pyr;
}

/// Runs the conv stack on an already preprocessed input; level l is the
/// activation after layer l (post-ReLU, post-pool where the layer pools).
inline FeaturePyramid forward_levels(const FeatureVolume& input, const NetworkWeights& net, ThreadPool* pool = nullptr) {
  net.validate();
  FeaturePyramid pyr;
  FeatureVolume x = input;
  std::uint32_t scale = 1;
  for (const auto& layer : net.layers) {
    x = conv_forward(x, layer, pool);
    if (layer.pool_after) {
      x = max_pool_2x2(x);
      scale *= 2;
    }
    pyr.levels.push_back(x);
    pyr.level_scale.push_back(scale);
  }
  pyr.base_width = input.width();
  pyr.base_height = input.height();
  return pyr;
}

/// Mean-subtracted working image for the conv stack: center crop and
/// bilinear resize to working_size (0 keeps the input size).
inline FeatureVolume preprocess_for_conv(const FeatureVolume& rgb, std::uint32_t working_size = kConvWorkingSize) {
  if (rgb.channels() != 3) throw Error(ErrorCode::kChannelMismatch, "conv pyramid needs an RGB image");
  FeatureVolume x = working_size == 0 ? rgb : crop_resize_square(rgb, working_size);
  for (std::uint32_t c = 0; c < 3; ++c) {
    for (float& v : x.channel(c)) v -= kVggChannelMeans[c];
  }
  return x;
}

inline FeaturePyramid build_conv_pyramid(const FeatureVolume& rgb, const NetworkWeights& net,
                                         std::uint32_t working_size = kConvWorkingSize, ThreadPool* pool = nullptr) {
  return forward_levels(preprocess_for_conv(rgb, working_size), net, pool);
}

/// Resolution band of every level: 0 for the finest resolution present,
/// increasing as resolution drops. Levels sharing a resolution share a band.
inline std::vector<std::uint32_t> resolution_bands(const FeaturePyramid& pyr) {
  std::vector<std::uint32_t> bands;
  std::uint32_t band = 0;
  for (std::size_t l = 0; l < pyr.size(); ++l) {
    if (l > 0 && pyr.level_scale[l] != pyr.level_scale[l - 1]) ++band;
    bands.push_back(band);
  }
  return bands;
}

}  // namespace semtex
