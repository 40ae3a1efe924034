// SPDX-License-Identifier: Apache-2.0
#include "vqff/store.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "vqff/error.hpp"
#include "vqff/kernels.hpp"

namespace vqff {
namespace {

constexpr const char* kModule = "vqff_store";
constexpr std::uint32_t kVersion = 1;
constexpr const char* kManifestName = "store.json";

std::string codebook_file(std::uint32_t scale_id) {
  return "codebook_s" + std::to_string(scale_id) + ".vqfc";
}

std::string index_file(const std::string& image_id, std::uint32_t scale_id) {
  return "index/" + image_id + "_s" + std::to_string(scale_id) + ".vqfi";
}

void append_crc(detail::ByteWriter& w) {
  const std::uint32_t crc = detail::crc32(w.bytes());
  w.put<std::uint32_t>(crc);
}

// Verifies and strips the CRC trailer; returns the covered prefix.
std::span<const std::uint8_t> checked_body(const std::vector<std::uint8_t>& bytes,
                                           const std::filesystem::path& path) {
  if (bytes.size() < 4) throw FormatError(kModule, path.string() + ": file too short", 0);
  const auto body = std::span(bytes).first(bytes.size() - 4);
  detail::ByteReader tail(std::span<const std::uint8_t>(bytes).last(4), kModule);
  const auto stored = tail.get<std::uint32_t>("crc32");
  if (stored != detail::crc32(body)) {
    throw FormatError(kModule, path.string() + ": checksum mismatch",
                      static_cast<std::int64_t>(body.size()));
  }
  return body;
}

std::vector<std::uint8_t> encode_codebook(const ScaleCodebook& cb, std::uint32_t dim) {
  detail::ByteWriter w;
  w.magic("VQFC");
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(cb.scale_id);
  w.put<std::uint32_t>(cb.size);
  w.put<std::uint32_t>(dim);
  w.put_array<float>(cb.rows);
  append_crc(w);
  return std::move(w.bytes());
}

std::vector<std::uint8_t> encode_index(const IndexMap& map, std::uint32_t image_index,
                                       std::uint32_t scale_id, std::uint8_t width) {
  detail::ByteWriter w;
  w.magic("VQFI");
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(image_index);
  w.put<std::uint32_t>(scale_id);
  w.put<std::uint32_t>(map.height);
  w.put<std::uint32_t>(map.width);
  w.put<std::uint8_t>(width);
  if (width == 16) {
    std::vector<std::uint16_t> narrow(map.indices.begin(), map.indices.end());
    w.put_array<std::uint16_t>(narrow);
  } else {
    w.put_array<std::uint32_t>(map.indices);
  }
  append_crc(w);
  return std::move(w.bytes());
}

}  // namespace

std::size_t VqffStore::image_index(const std::string& image_id) const {
  for (std::size_t i = 0; i < image_ids.size(); ++i) {
    if (image_ids[i] == image_id) return i;
  }
  throw NotFound(kModule, "unknown image id " + image_id);
}

std::size_t VqffStore::scale_position(std::uint32_t scale_id) const {
  for (std::size_t s = 0; s < scales.size(); ++s) {
    if (scales[s].scale_id == scale_id) return s;
  }
  throw NotFound(kModule, "unknown scale id " + std::to_string(scale_id));
}

void VqffStore::validate() const {
  if (num_images == 0 || num_scales == 0 || height == 0 || width == 0 || dim == 0) {
    throw FormatError(kModule, "store has an empty dimension");
  }
  if (image_ids.size() != num_images || index_maps.size() != num_images) {
    throw FormatError(kModule, "image count mismatch");
  }
  if (scales.size() != num_scales) throw FormatError(kModule, "scale count mismatch");
  std::set<std::uint32_t> ids;
  for (const auto& sc : scales) {
    if (!ids.insert(sc.scale_id).second) throw FormatError(kModule, "duplicate scale id");
    if (sc.size == 0 || sc.rows.size() != std::size_t{sc.size} * dim) {
      throw FormatError(kModule, "codebook of scale " + std::to_string(sc.scale_id) + " has a bad shape");
    }
    for (std::size_t k = 0; k < sc.size; ++k) {
      double ss = 0.0;
      for (float x : sc.row(k, dim)) ss += double(x) * x;
      if (!(std::abs(std::sqrt(ss) - 1.0) <= kUnitNormTolerance)) {
        throw FormatError(kModule, "non-unit codebook row " + std::to_string(k) + " in scale " +
                                       std::to_string(sc.scale_id));
      }
    }
  }
  for (std::size_t i = 0; i < num_images; ++i) {
    if (index_maps[i].size() != num_scales) throw FormatError(kModule, "missing index map");
    for (std::size_t s = 0; s < num_scales; ++s) {
      const auto& m = index_maps[i][s];
      if (m.height != height || m.width != width || m.indices.size() != m.pixels()) {
        throw FormatError(kModule, "index map dimensions differ for image " + image_ids[i]);
      }
      for (auto v : m.indices) {
        if (v >= scales[s].size) {
          throw FormatError(kModule, "index out of range for image " + image_ids[i] + " scale " +
                                         std::to_string(scales[s].scale_id));
        }
      }
    }
  }
}

std::filesystem::path save_store(const VqffStore& store, const std::filesystem::path& dir) {
  store.validate();
  nlohmann::json j;
  j["format"] = "vqff-store";
  j["version"] = kVersion;
  j["num_images"] = store.num_images;
  j["num_scales"] = store.num_scales;
  j["height"] = store.height;
  j["width"] = store.width;
  j["dim"] = store.dim;
  j["seed"] = store.seed;
  j["params"] = nlohmann::json::parse(store.params_json);
  j["scales"] = nlohmann::json::array();
  for (std::size_t s = 0; s < store.scales.size(); ++s) {
    const auto& sc = store.scales[s];
    const auto bytes = encode_codebook(sc, store.dim);
    detail::write_file(dir / codebook_file(sc.scale_id), bytes, kModule);
    j["scales"].push_back({{"scale_id", sc.scale_id},
                           {"K", sc.size},
                           {"file", codebook_file(sc.scale_id)},
                           {"index_width", store.index_width(s)}});
  }
  j["images"] = nlohmann::json::array();
  for (std::size_t i = 0; i < store.num_images; ++i) {
    nlohmann::json maps = nlohmann::json::object();
    for (std::size_t s = 0; s < store.scales.size(); ++s) {
      const auto sid = store.scales[s].scale_id;
      const auto name = index_file(store.image_ids[i], sid);
      detail::write_file(dir / name,
                         encode_index(store.index_maps[i][s], static_cast<std::uint32_t>(i), sid,
                                      store.index_width(s)),
                         kModule);
      maps[std::to_string(sid)] = name;
    }
    j["images"].push_back({{"id", store.image_ids[i]}, {"index_maps", maps}});
  }
  const auto st = store_stats(store);
  j["stats"] = {{"codebook_bytes", st.codebook_bytes}, {"index_bytes", st.index_bytes},
                {"total_bytes", st.total_bytes},       {"raw_bytes", st.raw_bytes},
                {"bits_per_dim", st.bits_per_dim},     {"compression_ratio", st.compression_ratio}};
  const std::string text = j.dump(2) + "\n";
  const auto path = dir / kManifestName;
  detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()),
                     kModule);
  return path;
}

VqffStore load_store(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestName;
  if (!std::filesystem::exists(manifest_path)) {
    throw IoError(kModule, "missing store manifest " + manifest_path.string());
  }
  const auto text = detail::read_file(manifest_path, kModule);
  VqffStore store;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
    if (j.at("format").get<std::string>() != "vqff-store" || j.at("version").get<std::uint32_t>() != kVersion) {
      throw FormatError(kModule, manifest_path.string() + ": not a version 1 store manifest");
    }
    store.num_images = j.at("num_images").get<std::uint32_t>();
    store.num_scales = j.at("num_scales").get<std::uint32_t>();
    store.height = j.at("height").get<std::uint32_t>();
    store.width = j.at("width").get<std::uint32_t>();
    store.dim = j.at("dim").get<std::uint32_t>();
    store.seed = j.at("seed").get<std::uint64_t>();
    store.params_json = j.at("params").dump();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(kModule, manifest_path.string() + ": " + e.what());
  }

  try {
    for (const auto& js : j.at("scales")) {
      const auto path = dir / js.at("file").get<std::string>();
      const auto bytes = detail::read_file(path, kModule);
      detail::ByteReader r(checked_body(bytes, path), kModule);
      r.expect_magic("VQFC");
      if (r.get<std::uint32_t>("version") != kVersion) throw FormatError(kModule, path.string() + ": bad version", 4);
      ScaleCodebook sc;
      sc.scale_id = r.get<std::uint32_t>("scale_id");
      sc.size = r.get<std::uint32_t>("K");
      const auto d = r.get<std::uint32_t>("D");
      if (d != store.dim || sc.scale_id != js.at("scale_id").get<std::uint32_t>() ||
          sc.size != js.at("K").get<std::uint32_t>()) {
        throw FormatError(kModule, path.string() + ": header disagrees with store manifest", 8);
      }
      const std::uint64_t n = std::uint64_t{sc.size} * d;
      r.need(n * 4, "codebook payload");
      sc.rows.resize(n);
      r.get_array<float>(sc.rows, "codebook payload");
      if (r.remaining() != 0) throw FormatError(kModule, path.string() + ": trailing bytes", r.offset());
      store.scales.push_back(std::move(sc));
    }
    if (store.scales.size() != store.num_scales) throw FormatError(kModule, "scale count mismatch");

    for (const auto& ji : j.at("images")) {
      store.image_ids.push_back(ji.at("id").get<std::string>());
      const auto image_index = static_cast<std::uint32_t>(store.image_ids.size() - 1);
      std::vector<IndexMap> maps;
      for (const auto& sc : store.scales) {
        const auto path = dir / ji.at("index_maps").at(std::to_string(sc.scale_id)).get<std::string>();
        const auto bytes = detail::read_file(path, kModule);
        detail::ByteReader r(checked_body(bytes, path), kModule);
        r.expect_magic("VQFI");
        if (r.get<std::uint32_t>("version") != kVersion) throw FormatError(kModule, path.string() + ": bad version", 4);
        const auto idx = r.get<std::uint32_t>("image index");
        const auto sid = r.get<std::uint32_t>("scale_id");
        IndexMap m;
        m.height = r.get<std::uint32_t>("H");
        m.width = r.get<std::uint32_t>("W");
        const auto width = r.get<std::uint8_t>("index_width");
        if (idx != image_index || sid != sc.scale_id) {
          throw FormatError(kModule, path.string() + ": header disagrees with store manifest", 8);
        }
        if (width != 16 && width != 32) {
          throw FormatError(kModule, path.string() + ": index width must be 16 or 32", 24);
        }
        r.need(std::uint64_t{m.height} * m.width * (width / 8), "index payload");
        m.indices.resize(m.pixels());
        if (width == 16) {
          std::vector<std::uint16_t> narrow(m.pixels());
          r.get_array<std::uint16_t>(narrow, "index payload");
          std::copy(narrow.begin(), narrow.end(), m.indices.begin());
        } else if (width == 32) {
          r.get_array<std::uint32_t>(m.indices, "index payload");
        } else {
          throw FormatError(kModule, path.string() + ": index width must be 16 or 32", 24);
        }
        if (r.remaining() != 0) throw FormatError(kModule, path.string() + ": trailing bytes", r.offset());
        maps.push_back(std::move(m));
      }
      store.index_maps.push_back(std::move(maps));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(kModule, manifest_path.string() + ": " + e.what());
  }
  store.validate();
  return store;
}

StoreStats store_stats(const VqffStore& store) {
  StoreStats st;
  const std::uint64_t pixels = std::uint64_t{store.height} * store.width;
  for (std::size_t s = 0; s < store.scales.size(); ++s) {
    st.codebook_bytes += std::uint64_t{store.scales[s].size} * store.dim * 4;
    st.index_bytes += std::uint64_t{store.num_images} * pixels * (store.index_width(s) / 8);
  }
  st.total_bytes = st.codebook_bytes + st.index_bytes;
  st.raw_bytes = std::uint64_t{store.num_images} * store.num_scales * pixels * store.dim * 4;
  const double cells = double(store.num_images) * store.num_scales * double(pixels) * store.dim;
  st.bits_per_dim = cells > 0 ? double(st.total_bytes) * 8.0 / cells : 0.0;
  st.compression_ratio = st.total_bytes ? double(st.raw_bytes) / double(st.total_bytes) : 0.0;
  const double n = store.num_images ? double(store.num_images) : 1.0;
  st.per_frame_codebook_mb = double(st.codebook_bytes) / n / 1e6;
  st.per_frame_index_mb = double(st.index_bytes) / n / 1e6;
  st.per_frame_total_mb = double(st.total_bytes) / n / 1e6;
  return st;
}

FeatureMap reconstruct_feature_map(const VqffStore& store, const std::string& image_id,
                                   std::uint32_t scale_id) {
  const auto i = store.image_index(image_id);
  const auto s = store.scale_position(scale_id);
  return reconstruct_from_codebook(store.scales[s].rows, store.dim, store.index_maps[i][s]);
}

double cosine_fidelity(const FeatureMap& original, const FeatureMap& reconstructed) {
  if (original.height != reconstructed.height || original.width != reconstructed.width ||
      original.dim != reconstructed.dim) {
    throw InvalidArgument(kModule, "cosine_fidelity: dimension mismatch");
  }
  const std::size_t n = original.pixels();
  if (n == 0) return 0.0;
  const auto& k = kernels::active();
  const std::size_t D = original.dim;
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const float* a = original.data.data() + p * D;
    const float* b = reconstructed.data.data() + p * D;
    // Parallel (or antiparallel) copies count as exactly +-1 rather than the
    // rounded self dot product.
    bool same = true, opposite = true;
    for (std::size_t i = 0; i < D && (same || opposite); ++i) {
      same = same && a[i] == b[i];
      opposite = opposite && a[i] == -b[i];
    }
    if (same) {
      total += 1.0;
    } else if (opposite) {
      total -= 1.0;
    } else {
      total += std::clamp(static_cast<double>(k.dot(a, b, D)), -1.0, 1.0);
    }
  }
  return total / double(n);
}

FeatureMap global_mean_map(const FeatureMap& map) {
  const auto mean = spherical_mean(map.data, map.dim).mean;
  FeatureMap out(map.height, map.width, map.dim);
  for (std::size_t p = 0; p < map.pixels(); ++p) std::copy(mean.begin(), mean.end(), out.pixel(p).begin());
  return out;
}

}  // namespace vqff
