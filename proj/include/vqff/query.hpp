// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqff/feature_io.hpp"
#include "vqff/image.hpp"
#include "vqff/store.hpp"

namespace vqff {

struct Canonical {
  std::string phrase;
  std::vector<float> embedding;
};

struct QueryContext {
  std::string query_label;
  std::vector<float> query;
  std::vector<Canonical> canonicals;
  float threshold = 0.5f;

  std::uint32_t dim() const { return static_cast<std::uint32_t>(query.size()); }
  /// At least one canonical, matching dims, unit vectors, threshold in (0, 1).
  void validate() const;
};

// "VQFQ" files: query plus labelled canonicals. The threshold is not stored.
void save_query(const std::filesystem::path& path, const QueryContext& ctx);
QueryContext load_query(const std::filesystem::path& path);

/// min_i exp(f.q) / (exp(f.c_i) + exp(f.q)), evaluated as
/// 1 / (1 + exp(max_i f.c_i - f.q)).
float relevancy_score(std::span<const float> feature, const QueryContext& ctx);

/// relevancy_score of every row of a K x D codebook.
std::vector<float> codebook_relevancy(std::span<const float> codebook, std::uint32_t dim,
                                      const QueryContext& ctx);

struct RelevancyMap {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> values;
  std::string image_id;
  std::optional<std::uint32_t> scale_id;  // empty for multiscale maps

  std::size_t pixels() const { return std::size_t{height} * width; }
};

/// Per-pixel score of a dense feature map.
RelevancyMap brute_force_relevancy(const FeatureMap& map, const QueryContext& ctx);

RelevancyMap relevancy_map(const VqffStore& store, const std::string& image_id,
                           std::uint32_t scale_id, const QueryContext& ctx);

/// Per-pixel maximum over all scales.
RelevancyMap multiscale_relevancy(const VqffStore& store, const std::string& image_id,
                                  const QueryContext& ctx);

struct Mask {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1
  std::string image_id;
  std::uint64_t pixel_count = 0;

  std::size_t pixels() const { return std::size_t{height} * width; }
  bool operator==(const Mask&) const = default;

  static Mask filled(std::uint32_t h, std::uint32_t w, bool value, std::string image_id = {});
};

/// value > tau, strictly.
Mask mask_from_relevancy(const RelevancyMap& map, float tau);

void save_mask(const std::filesystem::path& path, const Mask& mask);
/// PGM with values 0 and 255 only.
Mask load_mask(const std::filesystem::path& path, std::string image_id = {});

/// Single-channel VQFT.
void save_relevancy_map(const std::filesystem::path& path, const RelevancyMap& map);
RelevancyMap load_relevancy_map(const std::filesystem::path& path);
/// Blue (0) to red (1) ramp.
RgbImage relevancy_to_rgb(const RelevancyMap& map);

/// Answers queries against one loaded store. Per-scale codebook scores are
/// kept in buffers that are reused across queries.
class QueryEngine {
 public:
  explicit QueryEngine(const VqffStore& store);

  /// Scores every codebook row of every scale.
  void set_query(const QueryContext& ctx);

  RelevancyMap relevancy_map(std::size_t image, std::size_t scale_pos) const;
  RelevancyMap multiscale_relevancy(std::size_t image) const;
  /// Multiscale masks of every image at the context's threshold.
  std::vector<Mask> masks() const;

  const std::vector<float>& codebook_scores(std::size_t scale_pos) const { return scores_[scale_pos]; }
  const VqffStore& store() const { return store_; }

 private:
  void fill_multiscale(std::size_t image, float* out, float* tmp) const;

  const VqffStore& store_;
  std::vector<std::vector<float>> scores_;
  float threshold_ = 0.5f;
  bool ready_ = false;
};

/// Multiscale masks for every image of the store.
std::vector<Mask> scene_query(const VqffStore& store, const QueryContext& ctx);

struct RelevancyPeak {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  float value = 0.0f;
};

/// Row-major first occurrence of the maximum.
RelevancyPeak max_relevancy_location(const RelevancyMap& map);

/// Inclusive pixel rectangle.
struct Box {
  std::uint32_t row0 = 0, col0 = 0, row1 = 0, col1 = 0;
  bool contains(std::uint32_t r, std::uint32_t c) const {
    return r >= row0 && r <= row1 && c >= col0 && c <= col1;
  }
};

struct Annotation {
  std::string image_id;
  std::string query_label;
  std::vector<Box> boxes;
};

std::vector<Annotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, std::span<const Annotation> annotations);

struct Detection {
  std::string image_id;
  RelevancyPeak peak;
};

struct PrPoint {
  double threshold = 0.0;
  std::uint64_t positives = 0;       // images with value >= threshold
  std::uint64_t true_positives = 0;  // ... whose peak lies inside a box
  std::uint64_t annotated = 0;       // images with at least one box
  double precision = 1.0;            // 1 when nothing is predicted
  double recall = 0.0;
  bool recall_undefined = false;     // no boxes anywhere
};

/// One point per threshold. `annotations` must cover exactly the images of
/// `detections` (one record per image, already filtered to a single query).
std::vector<PrPoint> detection_pr(std::span<const Detection> detections,
                                  std::span<const Annotation> annotations,
                                  std::span<const double> thresholds);

}  // namespace vqff
