// SPDX-License-Identifier: Apache-2.0
#include "vqff/quantizer_global.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include <json.hpp>

#include "seed.hpp"
#include "vqff/error.hpp"
#include "vqff/kernels.hpp"
#include "vqff/parallel.hpp"

namespace vqff {
namespace {

constexpr const char* kModule = "quantizer_global";

// Sum of per-point values in fixed chunks, combined in chunk order.
double chunked_sum(std::size_t n, const std::function<double(std::size_t)>& value) {
  const std::size_t chunks = (n + kReductionChunk - 1) / kReductionChunk;
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      double s = 0.0;
      const std::size_t end = std::min(n, (c + 1) * kReductionChunk);
      for (std::size_t i = c * kReductionChunk; i < end; ++i) s += value(i);
      partial[c] = s;
    }
  });
  return std::accumulate(partial.begin(), partial.end(), 0.0);
}

void assign_points(std::span<const float> points, std::uint32_t dim, std::span<const float> centroids,
                   std::uint32_t k, std::vector<std::uint32_t>& assignment, std::vector<float>& best) {
  const auto& kern = kernels::active();
  const std::size_t n = assignment.size();
  parallel_for(n, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      assignment[i] = kern.argmax_dot(centroids.data(), k, dim, points.data() + i * dim, &best[i]);
    }
  });
}

using FeatureLoader = std::function<FeatureMap(std::size_t image, std::size_t scale)>;
using RgbLoader = std::function<std::optional<RgbImage>(std::size_t image)>;

BuildResult build_impl(const std::vector<std::string>& image_ids,
                       const std::vector<std::uint32_t>& scale_ids, const FeatureLoader& load_features,
                       const RgbLoader& load_rgb, const SlicParams& slic,
                       const GlobalBuildParams& params) {
  const auto N = static_cast<std::uint32_t>(image_ids.size());
  const auto M = static_cast<std::uint32_t>(scale_ids.size());
  if (N == 0 || M == 0) throw BuildError(kModule, "scene has no images or no scales");
  params.validate(N);

  const auto t0 = std::chrono::steady_clock::now();

  // Fix the scene shape from the first map; every other map must agree.
  const FeatureMap first = load_features(0, 0);
  const std::uint32_t H = first.height, W = first.width, D = first.dim;

  std::vector<std::vector<LocalQuantization>> local(N);
  parallel_for(N, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      std::optional<Segmentation> shared_seg;
      std::optional<RgbImage> rgb;
      try {
        rgb = load_rgb(i);
      } catch (const Error& e) {
        throw BuildError(kModule, "image " + image_ids[i] + ": " + e.what());
      }
      if (rgb) {
        if (rgb->height != H || rgb->width != W) {
          throw BuildError(kModule, "image " + image_ids[i] + ": RGB size differs from feature maps");
        }
        shared_seg = slic_segment(*rgb, slic);
      }
      for (std::size_t s = 0; s < M; ++s) {
        FeatureMap map;
        try {
          map = (i == 0 && s == 0) ? first : load_features(i, s);
        } catch (const Error& e) {
          throw BuildError(kModule, "image " + image_ids[i] + " scale " + std::to_string(scale_ids[s]) +
                                        ": " + e.what());
        }
        if (map.height != H || map.width != W || map.dim != D) {
          throw BuildError(kModule, "image " + image_ids[i] + " scale " + std::to_string(scale_ids[s]) +
                                        ": dimensions differ from the first feature map");
        }
        const Segmentation seg = shared_seg ? *shared_seg : slic_segment(pca_visualize(map), slic);
        local[i].push_back(quantize_superpixel(map, seg, image_ids[i], scale_ids[s]));
      }
    }
  });

  const auto t1 = std::chrono::steady_clock::now();

  BuildResult result;
  VqffStore& store = result.store;
  store.num_images = N;
  store.num_scales = M;
  store.height = H;
  store.width = W;
  store.dim = D;
  store.image_ids = image_ids;
  store.seed = params.seed;
  store.index_maps.assign(N, std::vector<IndexMap>(M));

  const auto budget = resolve_budget(params.budget, N, M, H, W, D);
  const double scale_share = 1.0 / M;

  for (std::uint32_t s = 0; s < M; ++s) {
    ScaleReport rep;
    rep.scale_id = scale_ids[s];
    for (std::uint32_t i = 0; i < N; ++i) rep.pooled_rows += local[i][s].codebook.size();

    ScaleCodebook scale;
    scale.scale_id = scale_ids[s];
    std::vector<std::vector<std::uint32_t>> tables(N);

    for (std::uint32_t b = 0; b < params.num_batches; ++b) {
      const std::uint32_t first_image = static_cast<std::uint32_t>(std::uint64_t{b} * N / params.num_batches);
      const std::uint32_t end_image = static_cast<std::uint32_t>(std::uint64_t{b + 1} * N / params.num_batches);
      std::vector<LocalCodebook> batch;
      for (std::uint32_t i = first_image; i < end_image; ++i) batch.push_back(local[i][s].codebook);
      const PooledCodebook pooled = pool_codebooks(batch);

      std::optional<double> batch_budget;
      if (budget) {
        batch_budget = scale_share * double(*budget) * double(pooled.size()) / double(rep.pooled_rows);
      }
      const std::uint32_t k = choose_k(pooled.size(), params.alpha, batch_budget);
      const auto km = spherical_kmeans(pooled.rows, D, k, detail::derive_seed(params.seed, s, b),
                                       params.kmeans_max_iters,
                                       params.weighted ? std::span<const double>(pooled.weights)
                                                       : std::span<const double>());

      const auto offset = scale.size;
      scale.rows.insert(scale.rows.end(), km.centroids.begin(), km.centroids.end());
      scale.size += k;
      for (std::uint32_t j = 0; j < batch.size(); ++j) {
        auto& table = tables[first_image + j];
        table.resize(batch[j].size());
        for (std::uint32_t l = 0; l < table.size(); ++l) {
          table[l] = offset + km.assignment[pooled.row_of(j, l)];
        }
      }
      rep.batches.push_back({first_image, end_image - first_image, pooled.size(), k, km.iterations,
                             km.converged});
      rep.batched_cost += double(k) * double(pooled.size()) * D;
    }

    if (params.merge_batches && params.num_batches > 1) {
      std::optional<double> scale_budget;
      if (budget) scale_budget = scale_share * double(*budget);
      const std::uint32_t k = choose_k(scale.size, 1.0, scale_budget);
      std::vector<double> merged_weights;
      const auto km = spherical_kmeans(scale.rows, D, k, detail::derive_seed(params.seed, s, 0xFFFFFFFFu),
                                       params.kmeans_max_iters);
      for (auto& table : tables) {
        for (auto& v : table) v = km.assignment[v];
      }
      scale.rows = km.centroids;
      scale.size = k;
    }

    const std::uint32_t unbatched_k =
        choose_k(rep.pooled_rows, params.alpha,
                 budget ? std::optional<double>(scale_share * double(*budget)) : std::nullopt);
    rep.unbatched_cost = double(unbatched_k) * double(rep.pooled_rows) * D;
    rep.k = scale.size;

    for (std::uint32_t i = 0; i < N; ++i) {
      store.index_maps[i][s] = remap_indices(local[i][s].index_map, tables[i]);
    }
    store.scales.push_back(std::move(scale));
    result.report.scales.push_back(std::move(rep));
  }

  nlohmann::json pj;
  pj["alpha"] = params.alpha;
  pj["budget_mode"] = params.budget.mode == CodebookBudget::Mode::kDefault    ? "default"
                      : params.budget.mode == CodebookBudget::Mode::kUnlimited ? "unlimited"
                                                                               : "fixed";
  pj["budget_k"] = budget ? nlohmann::json(*budget) : nlohmann::json(nullptr);
  pj["num_batches"] = params.num_batches;
  pj["kmeans_max_iters"] = params.kmeans_max_iters;
  pj["seed"] = params.seed;
  pj["weighted"] = params.weighted;
  pj["merge_batches"] = params.merge_batches;
  pj["per_scale"] = true;
  pj["superpixels"] = slic.n_superpixels;
  pj["compactness"] = slic.compactness;
  pj["slic_iters"] = slic.max_iters;
  store.params_json = pj.dump();

  const auto t2 = std::chrono::steady_clock::now();
  result.report.local_seconds = std::chrono::duration<double>(t1 - t0).count();
  result.report.global_seconds = std::chrono::duration<double>(t2 - t1).count();
  store.validate();
  return result;
}

}  // namespace

void GlobalBuildParams::validate(std::uint32_t num_images) const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument(kModule, "alpha must lie in (0, 1]");
  if (num_batches < 1 || num_batches > num_images) {
    throw InvalidArgument(kModule, "num_batches must lie in [1, N]");
  }
  if (kmeans_max_iters < 1) throw InvalidArgument(kModule, "kmeans_max_iters must be >= 1");
  if (budget.mode == CodebookBudget::Mode::kFixed && budget.value < 1) {
    throw InvalidArgument(kModule, "a fixed budget must be >= 1");
  }
}

PooledCodebook pool_codebooks(std::span<const LocalCodebook> codebooks) {
  PooledCodebook out;
  if (codebooks.empty()) return out;
  out.dim = codebooks.front().dim;
  out.scale_id = codebooks.front().scale_id;
  for (std::uint32_t c = 0; c < codebooks.size(); ++c) {
    const auto& cb = codebooks[c];
    if (cb.scale_id != out.scale_id) throw InvalidArgument(kModule, "pooling codebooks of different scales");
    if (cb.dim != out.dim) throw InvalidArgument(kModule, "pooling codebooks of different dimensions");
    out.offsets.push_back(static_cast<std::uint32_t>(out.size()));
    out.rows.insert(out.rows.end(), cb.entries.begin(), cb.entries.end());
    for (std::uint32_t l = 0; l < cb.size(); ++l) {
      out.provenance.push_back({c, l});
      out.weights.push_back(l < cb.cell_sizes.size() ? double(cb.cell_sizes[l]) : 1.0);
    }
  }
  return out;
}

KMeansResult spherical_kmeans(std::span<const float> points, std::uint32_t dim, std::uint32_t k,
                              std::uint64_t seed, std::uint32_t max_iters,
                              std::span<const double> weights) {
  if (dim == 0 || points.size() % dim != 0) throw InvalidArgument(kModule, "points are not D-vectors");
  const std::size_t R = points.size() / dim;
  if (k < 1 || k > R) throw InvalidArgument(kModule, "k must lie in [1, number of points]");
  if (max_iters < 1) throw InvalidArgument(kModule, "max_iters must be >= 1");
  if (!weights.empty() && weights.size() != R) throw InvalidArgument(kModule, "one weight per point");
  auto weight = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

  KMeansResult res;
  res.k = k;
  if (k == R) {
    res.centroids.assign(points.begin(), points.end());
    res.assignment.resize(R);
    std::iota(res.assignment.begin(), res.assignment.end(), 0u);
    res.converged = true;
    res.distortion_history.push_back(0.0);
    return res;
  }

  const auto& kern = kernels::active();
  std::mt19937_64 rng(seed);
  res.centroids.resize(std::size_t{k} * dim);

  // k-means++ seeding; 1 - cos is half the squared chord length.
  {
    std::vector<double> mindist(R);
    std::vector<std::uint8_t> chosen(R, 0);
    std::size_t pick = std::uniform_int_distribution<std::size_t>(0, R - 1)(rng);
    for (std::uint32_t c = 0; c < k; ++c) {
      if (c > 0) {
        const double total = chunked_sum(R, [&](std::size_t i) { return weight(i) * mindist[i]; });
        pick = R;
        if (total > 0.0) {
          const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
          double cum = 0.0;
          for (std::size_t i = 0; i < R; ++i) {
            const double m = weight(i) * mindist[i];
            if (m <= 0.0) continue;
            cum += m;
            pick = i;
            if (cum > u) break;
          }
        }
        if (pick == R || chosen[pick]) {
          pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
        }
      }
      chosen[pick] = 1;
      float* centroid = res.centroids.data() + std::size_t{c} * dim;
      std::copy_n(points.data() + pick * dim, dim, centroid);
      parallel_for(R, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
          const double d = std::max(0.0, 1.0 - double(kern.dot(points.data() + i * dim, centroid, dim)));
          mindist[i] = c == 0 ? d : std::min(mindist[i], d);
          if (chosen[i]) mindist[i] = 0.0;
        }
      });
    }
  }

  std::vector<std::uint32_t> assignment(R), previous;
  std::vector<float> best(R);
  auto assign_and_record = [&] {
    assign_points(points, dim, res.centroids, k, assignment, best);
    res.distortion_history.push_back(
        chunked_sum(R, [&](std::size_t i) { return weight(i) * (1.0 - double(best[i])); }));
  };

  for (std::uint32_t it = 0; it < max_iters; ++it) {
    assign_and_record();
    res.iterations = it + 1;
    if (assignment == previous) {
      res.converged = true;
      break;
    }
    previous = assignment;

    std::vector<double> sums(std::size_t{k} * dim, 0.0);
    std::vector<std::uint64_t> counts(k, 0);
    std::vector<std::size_t> first(k, 0);
    std::vector<double> scaled(dim);
    for (std::size_t i = 0; i < R; ++i) {
      const auto c = assignment[i];
      if (counts[c]++ == 0) first[c] = i;
      double* acc = sums.data() + std::size_t{c} * dim;
      if (weights.empty()) {
        kern.accumulate(acc, points.data() + i * dim, dim);
      } else {
        for (std::uint32_t d = 0; d < dim; ++d) acc[d] += weights[i] * double(points[i * dim + d]);
      }
    }
    std::vector<std::uint32_t> empty;
    for (std::uint32_t c = 0; c < k; ++c) {
      float* centroid = res.centroids.data() + std::size_t{c} * dim;
      if (counts[c] == 0) {
        empty.push_back(c);
        continue;
      }
      if (counts[c] == 1) {
        std::copy_n(points.data() + first[c] * dim, dim, centroid);
        continue;
      }
      const double* acc = sums.data() + std::size_t{c} * dim;
      double ss = 0.0;
      for (std::uint32_t d = 0; d < dim; ++d) ss += acc[d] * acc[d];
      const double norm = std::sqrt(ss);
      if (!(norm >= 1e-8)) {
        std::copy_n(points.data() + first[c] * dim, dim, centroid);
      } else {
        for (std::uint32_t d = 0; d < dim; ++d) centroid[d] = static_cast<float>(acc[d] / norm);
      }
    }
    if (!empty.empty()) {
      // Farthest points first: lowest dot product with their centroid.
      std::vector<std::size_t> order(R);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return best[a] < best[b]; });
      for (std::size_t e = 0; e < empty.size() && e < R; ++e) {
        std::copy_n(points.data() + order[e] * dim, dim,
                    res.centroids.data() + std::size_t{empty[e]} * dim);
      }
    }
    if (it + 1 == max_iters) assign_and_record();
  }
  res.assignment = std::move(assignment);
  return res;
}

std::uint32_t choose_k(std::uint64_t pooled_size, double alpha, std::optional<double> budget) {
  if (pooled_size < 1) throw InvalidArgument(kModule, "choose_k needs a nonempty pool");
  double k = std::ceil(alpha * double(pooled_size));
  if (budget) k = std::min(k, std::ceil(*budget));
  k = std::clamp(k, 1.0, double(pooled_size));
  return static_cast<std::uint32_t>(k);
}

std::optional<std::uint64_t> resolve_budget(const CodebookBudget& budget, std::uint64_t num_images,
                                            std::uint64_t num_scales, std::uint64_t height,
                                            std::uint64_t width, std::uint64_t dim) {
  switch (budget.mode) {
    case CodebookBudget::Mode::kUnlimited:
      return std::nullopt;
    case CodebookBudget::Mode::kFixed:
      return budget.value;
    case CodebookBudget::Mode::kDefault:
    default:
      return std::max<std::uint64_t>(1, num_images * num_scales * height * width / std::max<std::uint64_t>(1, dim));
  }
}

IndexMap remap_indices(const IndexMap& local, std::span<const std::uint32_t> table) {
  IndexMap out;
  out.height = local.height;
  out.width = local.width;
  out.indices.resize(local.indices.size());
  for (std::size_t p = 0; p < local.indices.size(); ++p) {
    const auto l = local.indices[p];
    if (l >= table.size()) {
      throw InternalError(kModule, "local index " + std::to_string(l) + " has no global table entry");
    }
    out.indices[p] = table[l];
  }
  return out;
}

BuildResult build_vqff(const SceneManifest& manifest, const SlicParams& slic,
                       const GlobalBuildParams& params) {
  manifest.validate();
  std::vector<std::string> ids;
  for (const auto& rec : manifest.images) ids.push_back(rec.image_id);
  auto load_features = [&](std::size_t i, std::size_t s) {
    const auto& path = manifest.images[i].feature_paths.at(manifest.scale_ids[s]);
    return normalize_features(read_tensor(manifest.resolve(path))).map;
  };
  auto load_rgb = [&](std::size_t i) -> std::optional<RgbImage> {
    const auto& rec = manifest.images[i];
    if (!rec.rgb_path) return std::nullopt;
    return read_ppm(manifest.resolve(*rec.rgb_path));
  };
  return build_impl(ids, manifest.scale_ids, load_features, load_rgb, slic, params);
}

BuildResult build_vqff(const std::vector<std::string>& image_ids,
                       const std::vector<std::uint32_t>& scale_ids,
                       const std::vector<std::vector<FeatureMap>>& features,
                       const std::vector<RgbImage>& rgb, const SlicParams& slic,
                       const GlobalBuildParams& params) {
  if (features.size() != image_ids.size()) throw BuildError(kModule, "one feature list per image");
  for (const auto& f : features) {
    if (f.size() != scale_ids.size()) throw BuildError(kModule, "one feature map per scale");
  }
  if (!rgb.empty() && rgb.size() != image_ids.size()) throw BuildError(kModule, "one RGB image per image");
  auto load_features = [&](std::size_t i, std::size_t s) { return features[i][s]; };
  auto load_rgb = [&](std::size_t i) -> std::optional<RgbImage> {
    if (rgb.empty()) return std::nullopt;
    return rgb[i];
  };
  return build_impl(image_ids, scale_ids, load_features, load_rgb, slic, params);
}

}  // namespace vqff
