// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vqff/image.hpp"

namespace vqff {

/// Per-pixel superpixel labels in [0, num_segments), each label used and
/// 4-connected.
struct Segmentation {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint32_t> labels;
  std::uint32_t num_segments = 0;
  double compactness = 0.0;
  std::uint32_t requested = 0;

  std::size_t pixels() const { return std::size_t{height} * width; }
};

struct SlicParams {
  std::uint32_t n_superpixels = 1024;
  double compactness = 10.0;
  std::uint32_t max_iters = 10;
};

/// Classic SLIC in CIELAB: grid seeding with spacing sqrt(HW/n), low-gradient
/// perturbation, windowed assignment under d_lab + (compactness/g) * d_xy, and
/// a final pass that merges orphan components into their largest neighbour.
/// Deterministic.
Segmentation slic_segment(const RgbImage& image, const SlicParams& params);

struct SegmentStats {
  std::vector<std::uint64_t> sizes;
  /// Pixels with a 4-neighbour carrying a different label.
  std::uint64_t boundary_pixels = 0;
};

SegmentStats segment_stats(const Segmentation& seg);

/// Checks label range, label usage and 4-connectivity; throws InvalidArgument.
void validate_segmentation(const Segmentation& seg);

/// Converts 8-bit sRGB (D65) to CIELAB, three doubles per pixel.
std::vector<double> rgb_to_lab(const RgbImage& image);

// "VQFS" label files.
void save_segmentation(const std::filesystem::path& path, const Segmentation& seg);
Segmentation load_segmentation(const std::filesystem::path& path);

}  // namespace vqff
