// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vqff/feature_io.hpp"
#include "vqff/superpixel.hpp"

namespace vqff {

/// H x W codebook indices.
struct IndexMap {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint32_t> indices;

  std::size_t pixels() const { return std::size_t{height} * width; }
  bool operator==(const IndexMap&) const = default;
};

/// Per-(image, scale) codebook; entry k is the spherical mean of cell k.
struct LocalCodebook {
  std::uint32_t dim = 0;
  std::vector<float> entries;  // size() x dim
  std::string image_id;
  std::uint32_t scale_id = 0;
  std::vector<std::uint64_t> cell_sizes;

  std::size_t size() const { return dim ? entries.size() / dim : 0; }
  std::span<const float> entry(std::size_t k) const { return {entries.data() + k * dim, dim}; }
};

struct LocalQuantization {
  LocalCodebook codebook;
  IndexMap index_map;
};

struct SphericalMean {
  std::vector<float> mean;
  /// The members cancelled (||sum|| < 1e-8); mean is the first member.
  bool degenerate = false;
};

/// sum(v) / ||sum(v)|| over count = vectors.size() / dim rows. A single row is
/// returned unchanged.
SphericalMean spherical_mean(std::span<const float> vectors, std::uint32_t dim);

/// One codebook entry per superpixel.
LocalQuantization quantize_superpixel(const FeatureMap& map, const Segmentation& seg,
                                      std::string image_id = {}, std::uint32_t scale_id = 0);

/// Axis-aligned p x p tiles (smaller at the right/bottom edges), in raster
/// order of tiles.
LocalQuantization quantize_patch(const FeatureMap& map, std::int64_t patch_size,
                                 std::string image_id = {}, std::uint32_t scale_id = 0);

/// All scales of one image in one codebook.
struct ImageCodebook {
  std::string image_id;
  std::uint32_t dim = 0;
  std::vector<float> entries;
  std::vector<std::uint32_t> scale_ids;
  std::vector<std::uint32_t> offsets;   // first entry of each scale
  std::vector<IndexMap> index_maps;     // shifted by the scale's offset

  std::size_t size() const { return dim ? entries.size() / dim : 0; }
};

ImageCodebook concat_image_codebook(std::span<const LocalQuantization> per_scale);

/// Per-pixel entry lookup.
FeatureMap reconstruct_from_codebook(std::span<const float> entries, std::uint32_t dim,
                                     const IndexMap& map);

}  // namespace vqff
