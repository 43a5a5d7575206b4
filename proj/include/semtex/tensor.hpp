#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "semtex/error.hpp"

namespace semtex {

/// Multi-channel 2-D field of 32-bit floats stored channel-major:
/// all of channel 0 (row-major), then channel 1, and so on.
/// A single-channel volume doubles as a plain image.
class FeatureVolume {
 public:
  FeatureVolume() = default;

  FeatureVolume(std::uint32_t width, std::uint32_t height, std::uint32_t channels,
                float fill = 0.0f)
      : width_(width), height_(height), channels_(channels) {
    check_shape();
    data_.assign(checked_size(), fill);
  }

  FeatureVolume(std::uint32_t width, std::uint32_t height, std::uint32_t channels,
                std::vector<float> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_shape();
    if (data_.size() != checked_size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "data length " + std::to_string(data_.size()) + " does not match " +
                      std::to_string(width) + "x" + std::to_string(height) + "x" +
                      std::to_string(channels));
    }
    for (float v : data_) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite value in volume");
    }
  }

  std::uint32_t width() const noexcept { return width_; }
  std::uint32_t height() const noexcept { return height_; }
  std::uint32_t channels() const noexcept { return channels_; }
  std::size_t plane_size() const noexcept { return std::size_t{width_} * height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  std::span<const float> channel(std::uint32_t c) const {
    return std::span<const float>(data_).subspan(c * plane_size(), plane_size());
  }
  std::span<float> channel(std::uint32_t c) {
    return std::span<float>(data_).subspan(c * plane_size(), plane_size());
  }

  float at(std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
    return data_[c * plane_size() + std::size_t{y} * width_ + x];
  }
  float& at(std::uint32_t c, std::uint32_t y, std::uint32_t x) {
    return data_[c * plane_size() + std::size_t{y} * width_ + x];
  }

  /// Copy of a subset of channels, in the order given.
  FeatureVolume select_channels(std::span<const std::uint32_t> indices) const {
    FeatureVolume out(width_, height_, static_cast<std::uint32_t>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= channels_) throw Error(ErrorCode::kChannelMismatch, "channel index out of range");
      auto src = channel(indices[i]);
      auto dst = out.channel(static_cast<std::uint32_t>(i));
      std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
  }

  bool operator==(const FeatureVolume&) const = default;

 private:
  void check_shape() const {
    if (width_ == 0 || height_ == 0 || channels_ == 0) {
      throw Error(ErrorCode::kInvalidArgument, "volume dimensions must be positive");
    }
  }

  std::size_t checked_size() const {
    const std::uint64_t n = std::uint64_t{width_} * height_ * channels_;
    if (n > (std::uint64_t{1} << 32)) throw Error(ErrorCode::kDimensionOverflow, "volume too large");
    return static_cast<std::size_t>(n);
  }

  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::uint32_t channels_ = 0;
  std::vector<float> data_;
};

using Image = FeatureVolume;

/// Ordered stack of volumes, index 0 finest. level_scale[i] is the resolution
/// divisor of level i relative to the input image of base_width x base_height.
/// A conv stack whose first layer pools starts at scale 2.
struct FeaturePyramid {
  std::vector<FeatureVolume> levels;
  std::vector<std::uint32_t> level_scale;
  std::uint32_t base_width = 0;
  std::uint32_t base_height = 0;

  std::size_t size() const noexcept { return levels.size(); }

  void validate() const {
    if (levels.empty() || levels.size() != level_scale.size()) {
      throw Error(ErrorCode::kInvalidArgument, "pyramid levels and scales disagree");
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const auto s = level_scale[i];
      if (s == 0 || (s & (s - 1)) != 0 || (i > 0 && s < level_scale[i - 1])) {
        throw Error(ErrorCode::kInvalidArgument, "level scales must be non-decreasing powers of two");
      }
      if (i > 0 && (levels[i].width() > levels[i - 1].width() || levels[i].height() > levels[i - 1].height())) {
        throw Error(ErrorCode::kInvalidArgument, "pyramid resolutions must be non-increasing");
      }
    }
  }
};

}  // namespace semtex
