// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "vqff/error.hpp"
#include "vqff/quantizer_local.hpp"
#include "vqff/store.hpp"

using namespace vqff;

namespace {

Segmentation from_labels(std::uint32_t h, std::uint32_t w, std::vector<std::uint32_t> labels) {
  Segmentation s;
  s.height = h;
  s.width = w;
  s.num_segments = *std::max_element(labels.begin(), labels.end()) + 1;
  s.labels = std::move(labels);
  return s;
}

double pixel_cos(const FeatureMap& a, const FeatureMap& b, std::size_t p) {
  return oracle::dot(a.pixel(p).data(), b.pixel(p).data(), a.dim);
}

double mean_cos(const FeatureMap& a, const FeatureMap& b) {
  double s = 0.0;
  for (std::size_t p = 0; p < a.pixels(); ++p) s += pixel_cos(a, b, p);
  return s / double(a.pixels());
}

FeatureMap clean_of(const SyntheticScene& s, std::size_t image) {
  FeatureMap m(s.spec.height, s.spec.width, s.spec.dim);
  for (std::size_t p = 0; p < m.pixels(); ++p) {
    const auto e = s.clean_embeddings.pixel(s.labels[image][p]);
    std::copy(e.begin(), e.end(), m.pixel(p).begin());
  }
  return m;
}

}  // namespace

TEST_CASE("spherical_mean basics") {
  SUBCASE("singleton is returned unchanged") {
    std::mt19937_64 rng(1);
    const auto v = oracle::random_unit(rng, 9);
    const auto m = spherical_mean(v, 9);
    CHECK(m.mean == v);
    CHECK_FALSE(m.degenerate);
  }
  SUBCASE("two orthogonal vectors") {
    const std::vector<float> v = {1, 0, 0, 1};
    const auto m = spherical_mean(v, 2);
    CHECK(m.mean[0] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-7));
    CHECK(m.mean[1] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-7));
  }
  SUBCASE("antipodal pair falls back to the first member") {
    const std::vector<float> v = {0, 1, 0, -1};
    const auto m = spherical_mean(v, 2);
    CHECK(m.degenerate);
    CHECK(m.mean == std::vector<float>{0, 1});
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(spherical_mean({}, 3), InvalidArgument);
  }
}

TEST_CASE("spherical_mean beats random candidates on mean cosine distance") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t d = 8;
    // A cap-concentrated cloud, so the mean is well defined.
    const auto center = oracle::random_unit(rng, d);
    std::normal_distribution<float> n(0, 0.4f);
    std::vector<float> pts;
    for (int i = 0; i < 100; ++i) {
      std::vector<float> v(center);
      double ss = 0;
      for (auto& x : v) {
        x += n(rng);
        ss += x * x;
      }
      for (auto& x : v) x = float(x / std::sqrt(ss));
      pts.insert(pts.end(), v.begin(), v.end());
    }
    const auto m = spherical_mean(pts, d);
    const double ours = oracle::mean_cosine_distance(pts, d, m.mean);
    CHECK(ours <= oracle::mean_cosine_distance(pts, d, oracle::spherical_mean(pts, d)) + 1e-7);
    for (int c = 0; c < 1000; ++c) {
      CHECK(ours <= oracle::mean_cosine_distance(pts, d, oracle::random_unit(rng, d)) + 1e-12);
    }
  }
}

TEST_CASE("quantize_superpixel") {
  SUBCASE("constant map reconstructs exactly") {
    std::mt19937_64 rng(2);
    const auto v = oracle::random_unit(rng, 6);
    FeatureMap m(8, 8, 6);
    for (std::size_t p = 0; p < m.pixels(); ++p) std::copy(v.begin(), v.end(), m.pixel(p).begin());
    std::vector<std::uint32_t> labels(64);
    for (std::size_t p = 0; p < 64; ++p) labels[p] = (p / 8) / 4 * 2 + (p % 8) / 4;
    const auto q = quantize_superpixel(m, from_labels(8, 8, labels));
    CHECK(q.codebook.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t c = 0; c < 6; ++c) CHECK(q.codebook.entry(k)[c] == doctest::Approx(v[c]).epsilon(1e-6));
    }
    const auto rec = reconstruct_from_codebook(q.codebook.entries, 6, q.index_map);
    CHECK(mean_cos(m, rec) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("noiseless scene with the ground-truth cells is exact") {
    SyntheticSceneSpec spec;
    spec.noise_sigma = 0.0;
    spec.num_regions = 5;
    const auto s = generate_synthetic_scene(spec);
    Segmentation seg = from_labels(spec.height, spec.width, s.labels[0]);
    const auto q = quantize_superpixel(s.features[0][0], seg);
    const auto rec = reconstruct_from_codebook(q.codebook.entries, spec.dim, q.index_map);
    const auto clean = clean_of(s, 0);
    for (std::size_t p = 0; p < rec.pixels(); ++p) CHECK(pixel_cos(rec, clean, p) >= 1.0 - 1e-5);
  }
  SUBCASE("a single segment gives the global spherical mean") {
    std::mt19937_64 rng(3);
    FeatureMap m(5, 6, 4);
    m.data = oracle::random_units(rng, 30, 4);
    const auto q = quantize_superpixel(m, from_labels(5, 6, std::vector<std::uint32_t>(30, 0)));
    REQUIRE(q.codebook.size() == 1);
    const auto ref = spherical_mean(m.data, 4);
    CHECK(q.codebook.entries == ref.mean);
    CHECK(q.codebook.cell_sizes == std::vector<std::uint64_t>{30});
  }
  SUBCASE("cells never do worse than the global mean on average; indices are valid") {
    SyntheticSceneSpec spec;
    spec.noise_sigma = 0.15;
    const auto s = generate_synthetic_scene(spec);
    const auto& m = s.features[1][0];
    const auto seg = slic_segment(s.rgb[1], {64, 10.0, 10});
    const auto q = quantize_superpixel(m, seg, "img", 3);
    CHECK(q.codebook.image_id == "img");
    CHECK(q.codebook.scale_id == 3);
    CHECK(q.codebook.size() <= seg.num_segments);
    std::set<std::uint32_t> used(q.index_map.indices.begin(), q.index_map.indices.end());
    CHECK(used.size() == q.codebook.size());
    CHECK(*used.rbegin() < q.codebook.size());
    const auto rec = reconstruct_from_codebook(q.codebook.entries, m.dim, q.index_map);
    CHECK(mean_cos(m, rec) >= mean_cos(m, global_mean_map(m)));
    for (std::size_t k = 0; k < q.codebook.size(); ++k) {
      CHECK(std::sqrt(oracle::dot(q.codebook.entry(k).data(), q.codebook.entry(k).data(), m.dim)) ==
            doctest::Approx(1.0).epsilon(1e-4));
    }
  }
  SUBCASE("mismatched sizes") {
    CHECK_THROWS_AS(quantize_superpixel(FeatureMap(4, 4, 3), from_labels(4, 5, std::vector<std::uint32_t>(20, 0))),
                    InvalidArgument);
  }
}

TEST_CASE("quantize_patch") {
  std::mt19937_64 rng(4);
  FeatureMap m(12, 10, 5);
  m.data = oracle::random_units(rng, 120, 5);

  SUBCASE("p=1 is lossless") {
    const auto q = quantize_patch(m, 1);
    CHECK(q.codebook.size() == 120);
    CHECK(bitwise_equal(reconstruct_from_codebook(q.codebook.entries, 5, q.index_map), m));
  }
  SUBCASE("p = H = W gives the global mean") {
    FeatureMap sq(8, 8, 5);
    sq.data = oracle::random_units(rng, 64, 5);
    const auto q = quantize_patch(sq, 8);
    REQUIRE(q.codebook.size() == 1);
    CHECK(q.codebook.entries == spherical_mean(sq.data, 5).mean);
  }
  SUBCASE("ragged tiling") {
    const auto q = quantize_patch(m, 4);
    CHECK(q.codebook.size() == 3 * 3);
    CHECK(q.index_map.indices[0] == 0);
    CHECK(q.index_map.indices[9] == 2);
    CHECK(q.index_map.indices[11 * 10 + 9] == 8);
    CHECK(q.codebook.cell_sizes.back() == 4 * 2);
  }
  SUBCASE("invalid patch sizes") {
    CHECK_THROWS_AS(quantize_patch(m, 0), InvalidArgument);
    CHECK_THROWS_AS(quantize_patch(m, -3), InvalidArgument);
    CHECK_THROWS_AS(quantize_patch(m, 11), InvalidArgument);
  }
}

TEST_CASE("patches straddling a boundary lose to superpixels on a noiseless two-region map") {
  SyntheticSceneSpec spec;
  spec.noise_sigma = 0.0;
  spec.num_regions = 2;
  spec.num_images = 1;
  spec.num_scales = 1;
  spec.seed = 5;
  const auto s = generate_synthetic_scene(spec);
  const auto& m = s.features[0][0];
  const auto clean = clean_of(s, 0);
  const auto patch = quantize_patch(m, 8);
  const auto seg = slic_segment(s.rgb[0], {64, 10.0, 10});
  const auto sp = quantize_superpixel(m, seg);
  const auto rec_patch = reconstruct_from_codebook(patch.codebook.entries, m.dim, patch.index_map);
  const auto rec_sp = reconstruct_from_codebook(sp.codebook.entries, m.dim, sp.index_map);
  CHECK(mean_cos(rec_sp, clean) > mean_cos(rec_patch, clean));
}

TEST_CASE("concat_image_codebook") {
  std::mt19937_64 rng(6);
  FeatureMap m(6, 6, 3);
  m.data = oracle::random_units(rng, 36, 3);
  std::vector<std::uint32_t> three(36), five(36);
  for (std::size_t p = 0; p < 36; ++p) {
    three[p] = std::uint32_t(p / 12);
    five[p] = std::uint32_t(std::min<std::size_t>(4, p / 8));
  }
  const auto a = quantize_superpixel(m, from_labels(6, 6, three), "x", 0);
  const auto b = quantize_superpixel(m, from_labels(6, 6, five), "x", 1);

  SUBCASE("one scale is the identity") {
    const auto c = concat_image_codebook(std::vector{a});
    CHECK(c.entries == a.codebook.entries);
    CHECK(c.index_maps[0] == a.index_map);
  }
  SUBCASE("sizes 3 and 5 give 8 with the second shifted by 3") {
    const auto c = concat_image_codebook(std::vector{a, b});
    CHECK(c.size() == 8);
    CHECK(c.offsets == std::vector<std::uint32_t>{0, 3});
    for (std::size_t p = 0; p < 36; ++p) CHECK(c.index_maps[1].indices[p] == b.index_map.indices[p] + 3);
    CHECK(c.size() <= 2 * 5);
  }
  SUBCASE("mixed image ids or repeated scales are rejected") {
    auto other = b;
    other.codebook.image_id = "y";
    CHECK_THROWS_AS(concat_image_codebook(std::vector{a, other}), InvalidArgument);
    CHECK_THROWS_AS(concat_image_codebook(std::vector{a, a}), InvalidArgument);
  }
}
