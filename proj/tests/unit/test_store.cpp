// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "oracles.hpp"
#include "vqff/error.hpp"
#include "vqff/quantizer_global.hpp"
#include "vqff/store.hpp"

using namespace vqff;

namespace {

VqffStore tiny_store() {
  // N=M=1, H=W=2, D=4, K=2.
  VqffStore s;
  s.num_images = 1;
  s.num_scales = 1;
  s.height = 2;
  s.width = 2;
  s.dim = 4;
  s.image_ids = {"a"};
  s.scales = {{0, 2, {1, 0, 0, 0, 0, 1, 0, 0}}};
  s.index_maps = {{{2, 2, {0, 1, 1, 0}}}};
  return s;
}

BuildResult small_build(std::uint32_t images, double noise, std::uint64_t seed = 0) {
  SyntheticSceneSpec spec;
  spec.num_images = images;
  spec.noise_sigma = noise;
  spec.seed = seed;
  const auto s = generate_synthetic_scene(spec);
  std::vector<std::string> ids;
  for (const auto& r : s.manifest.images) ids.push_back(r.image_id);
  GlobalBuildParams p;
  p.alpha = 0.5;
  return build_vqff(ids, {0, 1}, s.features, s.rgb, {64, 10.0, 10}, p);
}

}  // namespace

TEST_CASE("stats on the hand-computed tiny store") {
  const auto st = store_stats(tiny_store());
  CHECK(st.index_bytes == 8);
  CHECK(st.codebook_bytes == 32);
  CHECK(st.total_bytes == 40);
  CHECK(st.raw_bytes == 64);
  CHECK(st.bits_per_dim == doctest::Approx(20.0));
  CHECK(st.compression_ratio == doctest::Approx(64.0 / 40.0));
  CHECK(st.per_frame_total_mb == doctest::Approx(40e-6));

  const auto dir = testutil::temp_dir("store_tiny");
  save_store(tiny_store(), dir);
  CHECK(oracle::store_payload_bytes(dir) == 40);
}

TEST_CASE("round trip, width rule and byte stability") {
  const auto built = small_build(3, 0.1).store;
  const auto dir = testutil::temp_dir("store_rt");
  const auto manifest = save_store(built, dir);
  CHECK(manifest == dir / "store.json");
  const auto back = load_store(dir);
  CHECK(back.scales[0].rows == built.scales[0].rows);
  CHECK(back.scales[1].rows == built.scales[1].rows);
  CHECK(back.index_maps == built.index_maps);
  CHECK(back.image_ids == built.image_ids);
  CHECK(back.params_json == built.params_json);
  CHECK(built.index_width(0) == 16);
  const auto bytes = oracle::read_bytes(dir / "index" / (built.image_ids[0] + "_s0.vqfi"));
  CHECK(bytes[24] == 16);

  const auto dir2 = testutil::temp_dir("store_rt2");
  save_store(back, dir2);
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir);
    CHECK(oracle::read_bytes(e.path()) == oracle::read_bytes(dir2 / rel));
  }
  CHECK(oracle::store_payload_bytes(dir) == store_stats(built).total_bytes);
}

TEST_CASE("more than 65535 rows switches to 32-bit indices") {
  VqffStore s;
  s.num_images = 1;
  s.num_scales = 1;
  s.height = 1;
  s.width = 2;
  s.dim = 2;
  s.image_ids = {"big"};
  ScaleCodebook sc{0, 65536, {}};
  for (std::uint32_t k = 0; k < 65536; ++k) {
    const double a = 2.0 * 3.141592653589793 * k / 65536.0;
    sc.rows.push_back(float(std::cos(a)));
    sc.rows.push_back(float(std::sin(a)));
  }
  s.scales = {sc};
  s.index_maps = {{{1, 2, {65535, 3}}}};
  CHECK(s.index_width(0) == 32);
  const auto dir = testutil::temp_dir("store_wide");
  save_store(s, dir);
  CHECK(oracle::read_bytes(dir / "index" / "big_s0.vqfi")[24] == 32);
  CHECK(load_store(dir).index_maps == s.index_maps);
  CHECK(store_stats(s).index_bytes == 8);
}

TEST_CASE("corrupt or inconsistent stores are rejected") {
  const auto dir = testutil::temp_dir("store_bad");
  save_store(tiny_store(), dir);
  const auto cb = dir / "codebook_s0.vqfc";
  const auto ix = dir / "index" / "a_s0.vqfi";
  const auto cb_bytes = oracle::read_bytes(cb);
  const auto ix_bytes = oracle::read_bytes(ix);
  auto restore = [&] {
    oracle::write_bytes(cb, cb_bytes);
    oracle::write_bytes(ix, ix_bytes);
  };

  SUBCASE("flipped codebook byte fails the checksum") {
    auto b = cb_bytes;
    b[25] ^= 0x40;
    oracle::write_bytes(cb, b);
    CHECK_THROWS_AS(load_store(dir), FormatError);
  }
  SUBCASE("index out of range with a valid checksum") {
    auto b = ix_bytes;
    b[25] = 7;
    oracle::refresh_crc(b);
    oracle::write_bytes(ix, b);
    CHECK_THROWS_AS(load_store(dir), FormatError);
  }
  SUBCASE("non-unit codebook row with a valid checksum") {
    auto b = cb_bytes;
    const float two = 2.0f;
    std::memcpy(b.data() + 20, &two, 4);
    oracle::refresh_crc(b);
    oracle::write_bytes(cb, b);
    CHECK_THROWS_AS(load_store(dir), FormatError);
  }
  SUBCASE("header dimensions beyond the payload") {
    auto b = ix_bytes;
    oracle::put_u32(b, 16, 100000);
    oracle::refresh_crc(b);
    oracle::write_bytes(ix, b);
    CHECK_THROWS_AS(load_store(dir), FormatError);
  }
  SUBCASE("missing files") {
    std::filesystem::remove(ix);
    CHECK_THROWS_AS(load_store(dir), IoError);
    CHECK_THROWS_AS(load_store(dir / "nowhere"), IoError);
  }
  restore();
  CHECK_NOTHROW(load_store(dir));
}

TEST_CASE("save refuses an invalid store") {
  auto s = tiny_store();
  s.index_maps[0][0].indices[0] = 2;
  CHECK_THROWS_AS(save_store(s, testutil::temp_dir("store_invalid")), FormatError);
}

TEST_CASE("reconstruction and fidelity") {
  const auto s = tiny_store();
  const auto rec = reconstruct_feature_map(s, "a", 0);
  CHECK(rec.pixel(1)[1] == 1.0f);
  CHECK(rec.pixel(3)[0] == 1.0f);
  CHECK_THROWS_AS(reconstruct_feature_map(s, "b", 0), NotFound);
  CHECK_THROWS_AS(reconstruct_feature_map(s, "a", 9), NotFound);

  std::mt19937_64 rng(4);
  FeatureMap m(6, 5, 7);
  m.data = oracle::random_units(rng, 30, 7);
  CHECK(cosine_fidelity(m, m) == 1.0);
  FeatureMap neg = m;
  for (auto& x : neg.data) x = -x;
  CHECK(cosine_fidelity(m, neg) == -1.0);
  CHECK_THROWS_AS(cosine_fidelity(m, FeatureMap(6, 5, 6)), InvalidArgument);

  const auto g = global_mean_map(m);
  const auto mean = oracle::spherical_mean(m.data, 7);
  double direct = 0.0;
  for (std::size_t p = 0; p < 30; ++p) {
    for (std::size_t c = 0; c < 7; ++c) direct += double(m.pixel(p)[c]) * mean[c];
  }
  CHECK(cosine_fidelity(m, g) == doctest::Approx(direct / 30.0).epsilon(1e-6));
}

TEST_CASE("noiseless oracle scene reconstructs to the clean embeddings") {
  SyntheticSceneSpec spec;
  spec.num_images = 3;
  spec.noise_sigma = 0.0;
  const auto s = generate_synthetic_scene(spec);
  std::vector<std::string> ids;
  for (const auto& r : s.manifest.images) ids.push_back(r.image_id);
  const auto store = build_vqff(ids, {0, 1}, s.features, s.rgb, {64, 10.0, 10}, {}).store;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto rec = reconstruct_feature_map(store, ids[i], 1);
    for (std::size_t p = 0; p < rec.pixels(); p += 7) {
      CHECK(oracle::dot(rec.pixel(p).data(), s.clean_embeddings.pixel(s.labels[i][p]).data(), spec.dim) >= 0.999);
    }
    CHECK(bitwise_equal(rec, reconstruct_feature_map(store, ids[i], 1)));
  }
}

TEST_CASE("lossless limit: alpha 1, one batch, one superpixel per pixel") {
  SyntheticSceneSpec spec;
  spec.num_images = 2;
  spec.height = 16;
  spec.width = 16;
  spec.noise_sigma = 0.2;
  const auto s = generate_synthetic_scene(spec);
  std::vector<std::string> ids;
  for (const auto& r : s.manifest.images) ids.push_back(r.image_id);
  GlobalBuildParams p;
  p.alpha = 1.0;
  p.budget = CodebookBudget::unlimited();
  const auto store = build_vqff(ids, {0, 1}, s.features, s.rgb, {256, 10.0, 10}, p).store;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::uint32_t sid : {0u, 1u}) {
      const auto rec = reconstruct_feature_map(store, ids[i], sid);
      CHECK(bitwise_equal(rec, s.features[i][sid]));
      CHECK(cosine_fidelity(s.features[i][sid], rec) == 1.0);
    }
  }
}

TEST_CASE("index bytes scale with N, codebook bytes do not") {
  auto a = tiny_store();
  auto b = a;
  b.num_images = 2;
  b.image_ids.push_back("b");
  b.index_maps.push_back(b.index_maps[0]);
  CHECK(store_stats(b).index_bytes == 2 * store_stats(a).index_bytes);
  CHECK(store_stats(b).codebook_bytes == store_stats(a).codebook_bytes);
  CHECK(store_stats(b).per_frame_index_mb == doctest::Approx(store_stats(a).per_frame_index_mb));
}
