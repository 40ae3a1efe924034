// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vqff/feature_io.hpp"
#include "vqff/quantizer_local.hpp"

namespace vqff {

/// Global codebook of one scale.
struct ScaleCodebook {
  std::uint32_t scale_id = 0;
  std::uint32_t size = 0;     // K_s
  std::vector<float> rows;    // K_s x D, unit rows

  std::span<const float> row(std::size_t k, std::uint32_t dim) const {
    return {rows.data() + k * dim, dim};
  }
};

/// Vector-quantized feature field: per-scale codebooks plus one index map per
/// (image, scale). Immutable once built or loaded.
struct VqffStore {
  std::uint32_t num_images = 0;
  std::uint32_t num_scales = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t dim = 0;
  std::vector<std::string> image_ids;
  std::vector<ScaleCodebook> scales;
  std::vector<std::vector<IndexMap>> index_maps;  // [image][scale position]
  std::uint64_t seed = 0;
  std::string params_json = "{}";                 // build parameters echo

  std::size_t image_index(const std::string& image_id) const;   // NotFound
  std::size_t scale_position(std::uint32_t scale_id) const;     // NotFound

  /// Persisted index width in bits for a scale: 16 when K_s <= 65535.
  std::uint8_t index_width(std::size_t scale_pos) const {
    return scales[scale_pos].size <= 65535 ? 16 : 32;
  }

  /// Throws FormatError when an invariant does not hold.
  void validate() const;
};

/// Writes VQFC codebooks, VQFI index maps and store.json; returns the
/// manifest path. Every binary file ends in a CRC32 of its preceding bytes.
std::filesystem::path save_store(const VqffStore& store, const std::filesystem::path& dir);

/// Loads and re-validates a store written by save_store.
VqffStore load_store(const std::filesystem::path& dir);

struct StoreStats {
  std::uint64_t codebook_bytes = 0;
  std::uint64_t index_bytes = 0;
  std::uint64_t total_bytes = 0;
  std::uint64_t raw_bytes = 0;       // N*M*H*W*D f32
  double bits_per_dim = 0.0;
  double compression_ratio = 0.0;
  double per_frame_codebook_mb = 0.0;  // MB = 1e6 bytes
  double per_frame_index_mb = 0.0;
  double per_frame_total_mb = 0.0;
};

/// Payload accounting only (headers and checksums excluded).
StoreStats store_stats(const VqffStore& store);

FeatureMap reconstruct_feature_map(const VqffStore& store, const std::string& image_id,
                                   std::uint32_t scale_id);

/// Mean over pixels of dot(original, reconstructed).
double cosine_fidelity(const FeatureMap& original, const FeatureMap& reconstructed);

/// Every pixel replaced by the spherical mean of the whole map; the
/// scale reference for fidelity reports.
FeatureMap global_mean_map(const FeatureMap& map);

}  // namespace vqff
