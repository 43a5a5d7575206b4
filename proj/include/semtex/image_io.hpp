#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <vector>

#include "semtex/binary_io.hpp"
#include "semtex/tensor.hpp"

namespace semtex {

namespace detail {

inline unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::clamp(std::lround(v), 0l, 255l));
}

inline FeatureVolume read_pnm(const std::vector<unsigned char>& bytes, const std::string& path) {
  std::size_t pos = 2;
  auto next_token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    if (tok.empty()) throw Error(ErrorCode::kTruncated, path + ": PNM header ends early");
    return std::stoul(tok);
  };
  const std::uint32_t channels = bytes[1] == '6' ? 3 : 1;
  const auto width = static_cast<std::uint32_t>(next_token());
  const auto height = static_cast<std::uint32_t>(next_token());
  const auto maxval = next_token();
  if (maxval != 255) throw Error(ErrorCode::kInvalidArgument, path + ": only 8-bit PNM is supported");
  ++pos;  // single whitespace before the raster
  const std::size_t n = std::size_t{width} * height * channels;
  if (bytes.size() < pos || bytes.size() - pos < n) throw Error(ErrorCode::kTruncated, path + ": PNM raster ends early");
  FeatureVolume img(width, height, channels);
  for (std::uint32_t y = 0; y < height; ++y) {
    for (std::uint32_t x = 0; x < width; ++x) {
      for (std::uint32_t c = 0; c < channels; ++c) {
        img.at(c, y, x) = bytes[pos + (std::size_t{y} * width + x) * channels + c];
      }
    }
  }
  return img;
}

inline FeatureVolume read_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::kIo, path + ": " + image.message);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const std::uint32_t channels = gray ? 1 : 3;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::kIo, path + ": " + image.message);
  }
  FeatureVolume img(image.width, image.height, channels);
  for (std::uint32_t y = 0; y < image.height; ++y) {
    for (std::uint32_t x = 0; x < image.width; ++x) {
      for (std::uint32_t c = 0; c < channels; ++c) {
        img.at(c, y, x) = buffer[(std::size_t{y} * image.width + x) * channels + c];
      }
    }
  }
  return img;
}

inline std::vector<unsigned char> interleave(const FeatureVolume& img) {
  std::vector<unsigned char> out(img.size());
  const std::uint32_t ch = img.channels();
  for (std::uint32_t y = 0; y < img.height(); ++y) {
    for (std::uint32_t x = 0; x < img.width(); ++x) {
      for (std::uint32_t c = 0; c < ch; ++c) out[(std::size_t{y} * img.width() + x) * ch + c] = to_byte(img.at(c, y, x));
    }
  }
  return out;
}

}  // namespace detail

/// Reads an 8-bit PNG or binary PGM/PPM into a float volume in [0,255]
/// (1 channel for grayscale, 3 for colour).
inline FeatureVolume read_image(const std::string& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return detail::read_pnm(bytes, path);
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G') return detail::read_png(path);
  throw Error(ErrorCode::kIo, path + ": not a PNG or binary PGM/PPM image");
}

/// Values are rounded and clamped to [0,255]. Only 1- and 3-channel volumes.
inline void write_png(const FeatureVolume& img, const std::string& path) {
  if (img.channels() != 1 && img.channels() != 3) throw Error(ErrorCode::kChannelMismatch, "PNG needs 1 or 3 channels");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = img.width();
  image.height = img.height();
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto buffer = detail::interleave(img);
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, path + ": " + image.message);
  }
}

inline void write_pnm(const FeatureVolume& img, const std::string& path) {
  if (img.channels() != 1 && img.channels() != 3) throw Error(ErrorCode::kChannelMismatch, "PNM needs 1 or 3 channels");
  const std::string header = std::string(img.channels() == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width()) + " " +
                             std::to_string(img.height()) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  const auto raster = detail::interleave(img);
  bytes.insert(bytes.end(), raster.begin(), raster.end());
  detail::write_file(path, bytes);
}

/// Writes PNG or PNM depending on the extension.
inline void write_image(const FeatureVolume& img, const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "ppm" || ext == "pgm" || ext == "pnm") {
    write_pnm(img, path);
  } else {
    write_png(img, path);
  }
}

/// Gray inputs are replicated to three channels.
inline FeatureVolume to_rgb(const FeatureVolume& img) {
  if (img.channels() == 3) return img;
  if (img.channels() != 1) throw Error(ErrorCode::kChannelMismatch, "expected a gray or RGB image");
  FeatureVolume out(img.width(), img.height(), 3);
  for (std::uint32_t c = 0; c < 3; ++c) std::copy(img.channel(0).begin(), img.channel(0).end(), out.channel(c).begin());
  return out;
}

}  // namespace semtex
