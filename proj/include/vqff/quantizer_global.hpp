// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqff/feature_io.hpp"
#include "vqff/quantizer_local.hpp"
#include "vqff/store.hpp"
#include "vqff/superpixel.hpp"

namespace vqff {

/// Cap on the total codebook size over all scales.
struct CodebookBudget {
  enum class Mode { kDefault, kUnlimited, kFixed };
  Mode mode = Mode::kDefault;  // kDefault resolves to N*M*H*W / D
  std::uint64_t value = 0;     // used by kFixed

  static CodebookBudget unlimited() { return {Mode::kUnlimited, 0}; }
  static CodebookBudget fixed(std::uint64_t k) { return {Mode::kFixed, k}; }
};

struct GlobalBuildParams {
  double alpha = 0.05;
  CodebookBudget budget;
  std::uint32_t num_batches = 1;
  std::uint32_t kmeans_max_iters = 25;
  std::uint64_t seed = 0;
  /// Weight pooled rows by their superpixel pixel counts.
  bool weighted = false;
  /// Re-cluster the concatenated batch codebooks of a scale.
  bool merge_batches = false;

  void validate(std::uint32_t num_images) const;
};

/// Local codebooks of one scale stacked row-wise.
struct PooledCodebook {
  std::uint32_t dim = 0;
  std::uint32_t scale_id = 0;
  std::vector<float> rows;
  std::vector<double> weights;          // cell sizes, one per row
  std::vector<std::uint32_t> offsets;   // first row of each input codebook
  struct Source {
    std::uint32_t codebook;
    std::uint32_t local_index;
  };
  std::vector<Source> provenance;       // one per row

  std::size_t size() const { return provenance.size(); }
  std::uint32_t row_of(std::uint32_t codebook, std::uint32_t local_index) const {
    return offsets[codebook] + local_index;
  }
};

PooledCodebook pool_codebooks(std::span<const LocalCodebook> codebooks);

struct KMeansResult {
  std::uint32_t k = 0;
  std::vector<float> centroids;            // k x D
  std::vector<std::uint32_t> assignment;   // one per point
  std::uint32_t iterations = 0;
  bool converged = false;
  /// Sum of w * (1 - dot(x, c)) after every assignment step.
  std::vector<double> distortion_history;
};

/// Lloyd iterations under cosine similarity with k-means++ seeding. Centroids
/// are (weighted) spherical means; empty clusters are re-seeded with the
/// points farthest from their centroid. Points must be unit vectors.
KMeansResult spherical_kmeans(std::span<const float> points, std::uint32_t dim, std::uint32_t k,
                              std::uint64_t seed, std::uint32_t max_iters,
                              std::span<const double> weights = {});

/// min(ceil(alpha * R), ceil(budget)) clamped to [1, R]; no budget means alpha
/// alone decides.
std::uint32_t choose_k(std::uint64_t pooled_size, double alpha, std::optional<double> budget);

/// Resolves the configured budget for a scene (nullopt when unlimited).
std::optional<std::uint64_t> resolve_budget(const CodebookBudget& budget, std::uint64_t num_images,
                                            std::uint64_t num_scales, std::uint64_t height,
                                            std::uint64_t width, std::uint64_t dim);

/// Pointwise table lookup; InternalError if an index has no entry.
IndexMap remap_indices(const IndexMap& local, std::span<const std::uint32_t> table);

struct BatchReport {
  std::uint32_t first_image = 0;
  std::uint32_t num_images = 0;
  std::uint64_t pooled_rows = 0;
  std::uint32_t k = 0;
  std::uint32_t iterations = 0;
  bool converged = false;
};

struct ScaleReport {
  std::uint32_t scale_id = 0;
  std::uint64_t pooled_rows = 0;
  std::uint32_t k = 0;
  std::vector<BatchReport> batches;
  /// sum_b K_b * R_b * D versus K * R * D for one unbatched run.
  double batched_cost = 0.0;
  double unbatched_cost = 0.0;
};

struct BuildReport {
  std::vector<ScaleReport> scales;
  double local_seconds = 0.0;
  double global_seconds = 0.0;
};

struct BuildResult {
  VqffStore store;
  BuildReport report;
};

/// Local quantization of every (image, scale) map, then per scale: contiguous
/// batches, pooled spherical k-means per batch, concatenated batch centroids,
/// and local indices remapped to global ones.
BuildResult build_vqff(const SceneManifest& manifest, const SlicParams& slic,
                       const GlobalBuildParams& params);

/// Same pipeline over maps already in memory. features[i][s] and optional
/// rgb[i] (empty vector for feature-only scenes).
BuildResult build_vqff(const std::vector<std::string>& image_ids,
                       const std::vector<std::uint32_t>& scale_ids,
                       const std::vector<std::vector<FeatureMap>>& features,
                       const std::vector<RgbImage>& rgb, const SlicParams& slic,
                       const GlobalBuildParams& params);

}  // namespace vqff
