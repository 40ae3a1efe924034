// SPDX-License-Identifier: Apache-2.0
#include "vqff/quantizer_local.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vqff/error.hpp"
#include "vqff/kernels.hpp"

namespace vqff {
namespace {

constexpr const char* kModule = "quantizer_local";
constexpr double kCancellation = 1e-8;

void finish_mean(std::span<const double> sum, std::span<const float> first, std::uint64_t count,
                 std::span<float> out, bool* degenerate) {
  if (count == 1) {
    std::copy(first.begin(), first.end(), out.begin());
    return;
  }
  double ss = 0.0;
  for (double x : sum) ss += x * x;
  const double norm = std::sqrt(ss);
  if (!(norm >= kCancellation)) {
    std::copy(first.begin(), first.end(), out.begin());
    if (degenerate) *degenerate = true;
    return;
  }
  for (std::size_t i = 0; i < sum.size(); ++i) out[i] = static_cast<float>(sum[i] / norm);
}

// Spherical mean of every cell; cell_of[p] in [0, num_cells), every cell used.
LocalQuantization quantize_cells(const FeatureMap& map, std::vector<std::uint32_t> cell_of,
                                 std::uint32_t num_cells, std::string image_id,
                                 std::uint32_t scale_id) {
  const auto& k = kernels::active();
  const std::uint32_t D = map.dim;
  std::vector<double> sums(std::size_t{num_cells} * D, 0.0);
  std::vector<std::uint64_t> counts(num_cells, 0);
  std::vector<std::size_t> first(num_cells, 0);
  for (std::size_t p = 0; p < map.pixels(); ++p) {
    const auto c = cell_of[p];
    if (counts[c]++ == 0) first[c] = p;
    k.accumulate(sums.data() + std::size_t{c} * D, map.data.data() + p * D, D);
  }

  LocalQuantization out;
  out.codebook.dim = D;
  out.codebook.image_id = std::move(image_id);
  out.codebook.scale_id = scale_id;
  out.codebook.entries.resize(std::size_t{num_cells} * D);
  out.codebook.cell_sizes = counts;
  for (std::uint32_t c = 0; c < num_cells; ++c) {
    if (counts[c] == 0) throw InternalError(kModule, "empty quantization cell");
    finish_mean({sums.data() + std::size_t{c} * D, D}, map.pixel(first[c]), counts[c],
                {out.codebook.entries.data() + std::size_t{c} * D, D}, nullptr);
  }
  out.index_map.height = map.height;
  out.index_map.width = map.width;
  out.index_map.indices = std::move(cell_of);
  return out;
}

}  // namespace

SphericalMean spherical_mean(std::span<const float> vectors, std::uint32_t dim) {
  if (dim == 0 || vectors.empty() || vectors.size() % dim != 0) {
    throw InvalidArgument(kModule, "spherical_mean needs a nonempty list of D-vectors");
  }
  const std::size_t count = vectors.size() / dim;
  const auto& k = kernels::active();
  std::vector<double> sum(dim, 0.0);
  for (std::size_t i = 0; i < count; ++i) k.accumulate(sum.data(), vectors.data() + i * dim, dim);
  SphericalMean out;
  out.mean.resize(dim);
  finish_mean(sum, vectors.subspan(0, dim), count, out.mean, &out.degenerate);
  return out;
}

LocalQuantization quantize_superpixel(const FeatureMap& map, const Segmentation& seg,
                                      std::string image_id, std::uint32_t scale_id) {
  if (seg.height != map.height || seg.width != map.width || seg.labels.size() != map.pixels()) {
    throw InvalidArgument(kModule, "segmentation and feature map dimensions differ");
  }
  // Codebook order is label order restricted to labels that occur.
  std::vector<std::uint32_t> remap(seg.num_segments, UINT32_MAX);
  for (auto l : seg.labels) {
    if (l >= seg.num_segments) throw InvalidArgument(kModule, "segment label out of range");
    remap[l] = 0;
  }
  std::uint32_t next = 0;
  for (auto& r : remap) {
    if (r == 0) r = next++;
  }
  std::vector<std::uint32_t> cell_of(seg.labels.size());
  for (std::size_t p = 0; p < cell_of.size(); ++p) cell_of[p] = remap[seg.labels[p]];
  return quantize_cells(map, std::move(cell_of), next, std::move(image_id), scale_id);
}

LocalQuantization quantize_patch(const FeatureMap& map, std::int64_t patch_size,
                                 std::string image_id, std::uint32_t scale_id) {
  if (patch_size <= 0 || patch_size > std::min(map.height, map.width)) {
    throw InvalidArgument(kModule, "patch size must lie in [1, min(H, W)]");
  }
  const auto p = static_cast<std::uint32_t>(patch_size);
  const std::uint32_t tiles_x = (map.width + p - 1) / p;
  const std::uint32_t tiles_y = (map.height + p - 1) / p;
  std::vector<std::uint32_t> cell_of(map.pixels());
  for (std::uint32_t y = 0; y < map.height; ++y) {
    for (std::uint32_t x = 0; x < map.width; ++x) {
      cell_of[std::size_t(y) * map.width + x] = (y / p) * tiles_x + x / p;
    }
  }
  return quantize_cells(map, std::move(cell_of), tiles_x * tiles_y, std::move(image_id), scale_id);
}

ImageCodebook concat_image_codebook(std::span<const LocalQuantization> per_scale) {
  ImageCodebook out;
  if (per_scale.empty()) return out;
  out.image_id = per_scale.front().codebook.image_id;
  out.dim = per_scale.front().codebook.dim;
  std::set<std::uint32_t> seen;
  for (const auto& q : per_scale) {
    if (q.codebook.image_id != out.image_id) throw InvalidArgument(kModule, "mixed image ids in concat");
    if (q.codebook.dim != out.dim) throw InvalidArgument(kModule, "mixed dimensions in concat");
    if (!seen.insert(q.codebook.scale_id).second) throw InvalidArgument(kModule, "duplicate scale in concat");
    const auto offset = static_cast<std::uint32_t>(out.size());
    out.offsets.push_back(offset);
    out.scale_ids.push_back(q.codebook.scale_id);
    out.entries.insert(out.entries.end(), q.codebook.entries.begin(), q.codebook.entries.end());
    IndexMap shifted = q.index_map;
    for (auto& i : shifted.indices) i += offset;
    out.index_maps.push_back(std::move(shifted));
  }
  return out;
}

FeatureMap reconstruct_from_codebook(std::span<const float> entries, std::uint32_t dim,
                                     const IndexMap& map) {
  FeatureMap out(map.height, map.width, dim);
  const std::size_t k = dim ? entries.size() / dim : 0;
  for (std::size_t p = 0; p < map.pixels(); ++p) {
    const auto idx = map.indices[p];
    if (idx >= k) throw InvalidArgument(kModule, "index outside codebook");
    std::copy_n(entries.data() + std::size_t{idx} * dim, dim, out.data.data() + p * dim);
  }
  return out;
}

}  // namespace vqff
