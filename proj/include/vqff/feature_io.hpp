// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqff/image.hpp"

namespace vqff {

/// H x W grid of D-dimensional float vectors, pixel-major then component.
struct FeatureMap {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(std::uint32_t h, std::uint32_t w, std::uint32_t d)
      : height(h), width(w), dim(d), data(std::size_t{h} * w * d, 0.0f) {}

  std::size_t pixels() const { return std::size_t{height} * width; }
  std::span<const float> pixel(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<float> pixel(std::size_t i) { return {data.data() + i * dim, dim}; }
};

/// Bitwise comparison of shape and payload.
bool bitwise_equal(const FeatureMap& a, const FeatureMap& b);

inline constexpr float kUnitNormTolerance = 1e-4f;

// "VQFT" tensor files. read/write_tensor accept any D >= 1 and do not look at
// the values; load_feature_map additionally requires D >= 2 and unit rows.
FeatureMap read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const FeatureMap& map);
FeatureMap decode_tensor(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_tensor(const FeatureMap& map);

FeatureMap load_feature_map(const std::filesystem::path& path);
void save_feature_map(const std::filesystem::path& path, const FeatureMap& map);

/// Scales v to unit L2 norm. Returns false (and writes e_0) when ||v|| < eps.
/// Vectors already within float rounding of unit norm are left untouched, so
/// normalization is idempotent bitwise.
bool normalize_vector(std::span<float> v, float eps);

struct NormalizeResult {
  FeatureMap map;
  std::size_t fallback_count = 0;
};

NormalizeResult normalize_features(FeatureMap map, float eps = 1e-8f);

// ---------------------------------------------------------------------------
// Scene manifest

struct ImageRecord {
  std::string image_id;
  std::optional<std::string> rgb_path;
  std::map<std::uint32_t, std::string> feature_paths;  // scale_id -> path
  std::optional<std::array<float, 16>> pose;            // row-major 4x4
};

/// Optional pointers to synthetic ground truth stored next to the scene.
struct GroundTruthRecord {
  std::string embeddings_path;                     // VQFT, H = num_regions, W = 1
  std::string canonicals_path;                     // VQFQ with the canonical probes
  std::string annotations_path;                    // per-region boxes, detection_pr format
  std::map<std::string, std::string> label_paths;  // image_id -> VQFS
};

struct SceneManifest {
  std::uint32_t num_images = 0;
  std::uint32_t num_scales = 0;
  std::vector<std::uint32_t> scale_ids;
  std::vector<ImageRecord> images;
  std::optional<GroundTruthRecord> ground_truth;

  /// Directory relative paths are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& p) const;

  /// Throws InvalidArgument on broken invariants (counts, unique ids, one
  /// feature path per scale).
  void validate() const;
};

SceneManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const SceneManifest& manifest);

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SyntheticSceneSpec {
  std::uint32_t num_images = 4;
  std::uint32_t num_scales = 2;
  std::uint32_t height = 64;
  std::uint32_t width = 64;
  std::uint32_t dim = 16;
  std::uint32_t num_regions = 4;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// In-memory synthetic scene plus the ground truth it was generated from.
/// Region r has clean embedding clean_embeddings[r] in every image and scale.
struct SyntheticScene {
  SyntheticSceneSpec spec;
  SceneManifest manifest;                              // relative paths, no base_dir
  std::vector<std::vector<FeatureMap>> features;       // [image][scale]
  std::vector<RgbImage> rgb;                           // [image]
  std::vector<std::vector<std::uint32_t>> labels;      // [image] H*W region ids
  FeatureMap clean_embeddings;                         // num_regions x 1 x D
  std::vector<std::vector<float>> canonicals;          // 4 background probes
};

inline const std::array<const char*, 4> kCanonicalPhrases = {"object", "things", "stuff",
                                                             "texture"};

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec);

/// Writes features, RGB, ground truth and per-region query files under dir
/// and returns the path of the written manifest.
std::filesystem::path write_synthetic_scene(const SyntheticScene& scene,
                                            const std::filesystem::path& dir);

/// Top-3 principal component false-color rendering, min-max scaled per channel.
RgbImage pca_visualize(const FeatureMap& map);

}  // namespace vqff
