#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "semtex/binary_io.hpp"
#include "semtex/tensor.hpp"

namespace semtex {

// FTNS layout (little-endian): "FTNS", u32 version = 1, u32 ndim,
// ndim x u32 dims ordered (channels, height, width), then f32 payload in
// channel-major row-major order. No padding.
inline constexpr std::uint32_t kTensorVersion = 1;

inline std::vector<unsigned char> encode_tensor(const FeatureVolume& v) {
  std::vector<unsigned char> out;
  out.reserve(24 + 4 * v.size());
  for (char ch : {'F', 'T', 'N', 'S'}) out.push_back(static_cast<unsigned char>(ch));
  detail::put_u32(out, kTensorVersion);
  detail::put_u32(out, 3);
  detail::put_u32(out, v.channels());
  detail::put_u32(out, v.height());
  detail::put_u32(out, v.width());
  for (float x : v.data()) detail::put_f32(out, x);
  return out;
}

inline FeatureVolume decode_tensor(const std::vector<unsigned char>& bytes) {
  detail::ByteReader in(bytes, "tensor file");
  const auto magic = in.magic();
  if (magic != std::array<char, 4>{'F', 'T', 'N', 'S'}) throw Error(ErrorCode::kMagicMismatch, "not an FTNS file");
  const auto version = in.u32();
  if (version != kTensorVersion) {
    throw Error(ErrorCode::kVersionMismatch, "unsupported FTNS version " + std::to_string(version));
  }
  const auto ndim = in.u32();
  if (ndim < 2 || ndim > 3) throw Error(ErrorCode::kDimensionOverflow, "FTNS ndim must be 2 or 3");
  std::vector<std::uint32_t> dims(ndim);
  for (auto& d : dims) d = in.u32();
  const std::uint32_t channels = ndim == 3 ? dims[0] : 1;
  const std::uint32_t height = dims[ndim - 2];
  const std::uint32_t width = dims[ndim - 1];
  const std::uint64_t count = std::uint64_t{channels} * height * width;
  if (count == 0 || count > (std::uint64_t{1} << 32) ||
      count > std::numeric_limits<std::size_t>::max() / 4) {
    throw Error(ErrorCode::kDimensionOverflow, "FTNS dimensions out of range");
  }
  if (in.remaining() / 4 < count) throw Error(ErrorCode::kTruncated, "FTNS payload shorter than header declares");
  std::vector<float> data(static_cast<std::size_t>(count));
  in.f32_array(data.data(), data.size());
  return FeatureVolume(width, height, channels, std::move(data));
}

inline void write_tensor(const FeatureVolume& v, const std::string& path) {
  detail::write_file(path, encode_tensor(v));
}

inline FeatureVolume read_tensor(const std::string& path) { return decode_tensor(detail::read_file(path)); }

}  // namespace semtex
