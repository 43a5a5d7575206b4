#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "semtex/binary_io.hpp"
#include "semtex/image_ops.hpp"
#include "semtex/parallel.hpp"
#include "semtex/tensor.hpp"

namespace semtex {

/// One 3x3/stride-1/pad-1 convolution followed by ReLU and, optionally, a
/// 2x2 stride-2 max-pool. Weights are out-major, then in, then ky, then kx.
struct ConvLayer {
  std::uint32_t out_channels = 0;
  std::uint32_t in_channels = 0;
  std::uint32_t kernel_h = 3;
  std::uint32_t kernel_w = 3;
  bool pool_after = false;
  std::vector<float> weights;
  std::vector<float> biases;

  float weight(std::uint32_t o, std::uint32_t i, std::uint32_t ky, std::uint32_t kx) const {
    return weights[((std::size_t{o} * in_channels + i) * kernel_h + ky) * kernel_w + kx];
  }

  bool operator==(const ConvLayer&) const = default;
};

struct NetworkWeights {
  std::vector<ConvLayer> layers;

  /// Shape-chain rule: 3x3 kernels, RGB input, each layer consuming the
  /// previous layer's output channels.
  void validate() const {
    if (layers.empty()) throw Error(ErrorCode::kShapeChain, "network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      const std::string where = "layer " + std::to_string(l + 1);
      if (layer.kernel_h != 3 || layer.kernel_w != 3) throw Error(ErrorCode::kShapeChain, where + " kernel is not 3x3");
      if (layer.out_channels == 0 || layer.in_channels == 0) throw Error(ErrorCode::kShapeChain, where + " has no channels");
      const std::uint32_t expected_in = l == 0 ? 3u : layers[l - 1].out_channels;
      if (layer.in_channels != expected_in) {
        throw Error(ErrorCode::kShapeChain, where + " expects " + std::to_string(layer.in_channels) +
                                                " input channels but receives " + std::to_string(expected_in));
      }
      if (layer.weights.size() != std::size_t{layer.out_channels} * layer.in_channels * 9 ||
          layer.biases.size() != layer.out_channels) {
        throw Error(ErrorCode::kShapeChain, where + " tensor sizes disagree with its header");
      }
    }
  }

  /// True for the 13-layer VGG-16 convolutional plan.
  bool is_vgg16() const {
    static constexpr std::array<std::uint32_t, 13> kPlan = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
    static constexpr std::array<bool, 13> kPools = {false, true, false, true, false, false, true,
                                                    false, false, true, false, false, true};
    if (layers.size() != kPlan.size()) return false;
    for (std::size_t i = 0; i < kPlan.size(); ++i) {
      if (layers[i].out_channels != kPlan[i] || layers[i].pool_after != kPools[i]) return false;
    }
    return true;
  }

  bool operator==(const NetworkWeights&) const = default;
};

/// 3x3 convolution, zero padding 1, bias, ReLU. Output channels are computed
/// independently, so the pool only changes who computes each plane.
inline FeatureVolume conv_forward(const FeatureVolume& input, const ConvLayer& layer, ThreadPool* pool = nullptr) {
  if (input.channels() != layer.in_channels) {
    throw Error(ErrorCode::kChannelMismatch, "conv input has " + std::to_string(input.channels()) +
                                                 " channels, layer expects " + std::to_string(layer.in_channels));
  }
  const std::uint32_t w = input.width();
  const std::uint32_t h = input.height();
  FeatureVolume out(w, h, layer.out_channels);
  for_each_index(pool, layer.out_channels, [&](std::size_t o) {
    auto dst = out.channel(static_cast<std::uint32_t>(o));
    std::fill(dst.begin(), dst.end(), layer.biases[o]);
    for (std::uint32_t i = 0; i < layer.in_channels; ++i) {
      auto src = input.channel(i);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const float wv = layer.weight(static_cast<std::uint32_t>(o), i, ky, kx);
          if (wv == 0.0f) continue;
          const int dy = ky - 1;
          const int dx = kx - 1;
          const std::uint32_t x_begin = dx < 0 ? 1 : 0;
          const std::uint32_t x_end = dx > 0 ? w - 1 : w;
          for (std::uint32_t y = 0; y < h; ++y) {
            const std::int64_t sy = std::int64_t{y} + dy;
            if (sy < 0 || sy >= h) continue;
            const float* s = src.data() + static_cast<std::size_t>(sy) * w;
            float* d = dst.data() + std::size_t{y} * w;
            for (std::uint32_t x = x_begin; x < x_end; ++x) d[x] += wv * s[static_cast<std::int64_t>(x) + dx];
          }
        }
      }
    }
    for (float& v : dst) v = std::max(v, 0.0f);
  });
  return out;
}

/// 2x2 max, stride 2; an odd trailing row/column is dropped.
inline FeatureVolume max_pool_2x2(const FeatureVolume& input) {
  const std::uint32_t ow = std::max(input.width() / 2, 1u);
  const std::uint32_t oh = std::max(input.height() / 2, 1u);
  if (input.width() < 2 || input.height() < 2) throw Error(ErrorCode::kDimensionTooSmall, "max-pool needs 2x2 input");
  FeatureVolume out(ow, oh, input.channels());
  for (std::uint32_t c = 0; c < input.channels(); ++c) {
    for (std::uint32_t y = 0; y < oh; ++y) {
      for (std::uint32_t x = 0; x < ow; ++x) {
        out.at(c, y, x) = std::max({input.at(c, 2 * y, 2 * x), input.at(c, 2 * y, 2 * x + 1),
                                    input.at(c, 2 * y + 1, 2 * x), input.at(c, 2 * y + 1, 2 * x + 1)});
      }
    }
  }
  return out;
}

// CWTS layout (little-endian): "CWTS", u32 version = 1, u32 layer_count, then
// per layer u32 out, u32 in, u32 kh, u32 kw, u8 pool_after, weights, biases.
inline constexpr std::uint32_t kWeightsVersion = 1;

inline std::vector<unsigned char> encode_weights(const NetworkWeights& net) {
  std::vector<unsigned char> out;
  for (char ch : {'C', 'W', 'T', 'S'}) out.push_back(static_cast<unsigned char>(ch));
  detail::put_u32(out, kWeightsVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& layer : net.layers) {
    detail::put_u32(out, layer.out_channels);
    detail::put_u32(out, layer.in_channels);
    detail::put_u32(out, layer.kernel_h);
    detail::put_u32(out, layer.kernel_w);
    out.push_back(layer.pool_after ? 1 : 0);
    for (float v : layer.weights) detail::put_f32(out, v);
    for (float v : layer.biases) detail::put_f32(out, v);
  }
  return out;
}

inline NetworkWeights decode_weights(const std::vector<unsigned char>& bytes) {
  detail::ByteReader in(bytes, "weights file");
  if (in.magic() != std::array<char, 4>{'C', 'W', 'T', 'S'}) throw Error(ErrorCode::kMagicMismatch, "not a CWTS file");
  const auto version = in.u32();
  if (version != kWeightsVersion) {
    throw Error(ErrorCode::kVersionMismatch, "unsupported CWTS version " + std::to_string(version));
  }
  const auto count = in.u32();
  NetworkWeights net;
  for (std::uint32_t l = 0; l < count; ++l) {
    ConvLayer layer;
    layer.out_channels = in.u32();
    layer.in_channels = in.u32();
    layer.kernel_h = in.u32();
    layer.kernel_w = in.u32();
    layer.pool_after = in.u8() != 0;
    const std::uint64_t n = std::uint64_t{layer.out_channels} * layer.in_channels * layer.kernel_h * layer.kernel_w;
    if (n > (std::uint64_t{1} << 30)) throw Error(ErrorCode::kDimensionOverflow, "layer tensor too large");
    if (in.remaining() / 4 < n + layer.out_channels) throw Error(ErrorCode::kTruncated, "weights file ends early");
    layer.weights.resize(static_cast<std::size_t>(n));
    in.f32_array(layer.weights.data(), layer.weights.size());
    layer.biases.resize(layer.out_channels);
    in.f32_array(layer.biases.data(), layer.biases.size());
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

inline NetworkWeights load_weights(const std::string& path) { return decode_weights(detail::read_file(path)); }

inline void save_weights(const NetworkWeights& net, const std::string& path) {
  detail::write_file(path, encode_weights(net));
}

}  // namespace semtex
