// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vqff {

/// 8-bit interleaved RGB, row-major.
struct RgbImage {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint8_t> rgb;

  RgbImage() = default;
  RgbImage(std::uint32_t h, std::uint32_t w) : height(h), width(w), rgb(std::size_t{h} * w * 3) {}

  std::size_t pixels() const { return std::size_t{height} * width; }
  bool operator==(const RgbImage&) const = default;
};

/// 8-bit single channel, row-major.
struct GrayImage {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint8_t> values;

  bool operator==(const GrayImage&) const = default;
};

// Binary netpbm, maxval 255.
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

}  // namespace vqff
