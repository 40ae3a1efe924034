// SPDX-License-Identifier: Apache-2.0
#include "vqff/feature_io.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "seed.hpp"
#include "vqff/error.hpp"
#include "vqff/query.hpp"
#include "vqff/superpixel.hpp"

namespace vqff {
namespace {

constexpr const char* kModule = "feature_io";
constexpr std::uint32_t kTensorVersion = 1;
constexpr std::size_t kTensorHeaderBytes = 20;

std::vector<float> random_unit_vector(std::mt19937_64& rng, std::uint32_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> v(dim);
  do {
    for (auto& x : v) x = static_cast<float>(normal(rng));
  } while (!normalize_vector(v, 1e-6f));
  return v;
}

RgbImage region_colors_to_image(const std::vector<std::uint32_t>& labels, std::uint32_t h,
                                std::uint32_t w, std::uint32_t num_regions) {
  // Hues spread by the golden ratio, alternating value so neighbours in hue
  // still differ in lightness.
  std::vector<std::array<std::uint8_t, 3>> palette(num_regions);
  for (std::uint32_t r = 0; r < num_regions; ++r) {
    const double hue = std::fmod(r * 0.618033988749895, 1.0) * 6.0;
    const double sat = 0.8;
    const double val = (r % 2 == 0) ? 0.95 : 0.55;
    const int sector = static_cast<int>(hue);
    const double f = hue - sector;
    const double p = val * (1 - sat), q = val * (1 - sat * f), t = val * (1 - sat * (1 - f));
    double rgb[3];
    switch (sector % 6) {
      case 0: rgb[0] = val, rgb[1] = t, rgb[2] = p; break;
      case 1: rgb[0] = q, rgb[1] = val, rgb[2] = p; break;
      case 2: rgb[0] = p, rgb[1] = val, rgb[2] = t; break;
      case 3: rgb[0] = p, rgb[1] = q, rgb[2] = val; break;
      case 4: rgb[0] = t, rgb[1] = p, rgb[2] = val; break;
      default: rgb[0] = val, rgb[1] = p, rgb[2] = q; break;
    }
    for (int c = 0; c < 3; ++c) palette[r][c] = static_cast<std::uint8_t>(std::lround(rgb[c] * 255));
  }
  RgbImage img(h, w);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::copy(palette[labels[i]].begin(), palette[labels[i]].end(), img.rgb.begin() + i * 3);
  }
  return img;
}

std::string image_name(std::uint32_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%04u", i);
  return buf;
}

}  // namespace

bool bitwise_equal(const FeatureMap& a, const FeatureMap& b) {
  return a.height == b.height && a.width == b.width && a.dim == b.dim &&
         a.data.size() == b.data.size() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------------------
// VQFT

std::vector<std::uint8_t> encode_tensor(const FeatureMap& map) {
  detail::ByteWriter w;
  w.magic("VQFT");
  w.put<std::uint32_t>(kTensorVersion);
  w.put<std::uint32_t>(map.height);
  w.put<std::uint32_t>(map.width);
  w.put<std::uint32_t>(map.dim);
  w.put_array<float>(map.data);
  return std::move(w.bytes());
}

FeatureMap decode_tensor(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, kModule);
  r.expect_magic("VQFT");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kTensorVersion) {
    throw FormatError(kModule, "unsupported VQFT version " + std::to_string(version), 4);
  }
  const auto h = r.get<std::uint32_t>("height");
  const auto w = r.get<std::uint32_t>("width");
  const auto d = r.get<std::uint32_t>("dim");
  if (h == 0 || w == 0 || d == 0) throw FormatError(kModule, "zero dimension in header", 8);
  const unsigned __int128 count = static_cast<unsigned __int128>(h) * w * d;
  if (count * sizeof(float) > std::numeric_limits<std::size_t>::max() / 2) {
    throw FormatError(kModule, "dimension overflow", 8);
  }
  const auto n = static_cast<std::size_t>(count);
  r.need(n * sizeof(float), "payload");
  FeatureMap map;
  map.height = h;
  map.width = w;
  map.dim = d;
  map.data.resize(n);
  r.get_array<float>(map.data, "payload");
  if (r.remaining() != 0) {
    throw FormatError(kModule, "trailing bytes after payload", static_cast<std::int64_t>(r.offset()));
  }
  return map;
}

FeatureMap read_tensor(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path, kModule);
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(kModule, path.string() + ": " + e.detail(), e.offset());
  }
}

void write_tensor(const std::filesystem::path& path, const FeatureMap& map) {
  if (map.data.size() != map.pixels() * map.dim) {
    throw InvalidArgument(kModule, "feature map payload does not match its shape");
  }
  detail::write_file(path, encode_tensor(map), kModule);
}

FeatureMap load_feature_map(const std::filesystem::path& path) {
  FeatureMap map = read_tensor(path);
  if (map.dim < 2) throw FormatError(kModule, path.string() + ": feature dimension must be >= 2");
  for (std::size_t i = 0; i < map.pixels(); ++i) {
    double ss = 0.0;
    for (float x : map.pixel(i)) ss += double(x) * x;
    if (!(std::abs(std::sqrt(ss) - 1.0) <= kUnitNormTolerance)) {
      throw FormatError(kModule, path.string() + ": non-unit vector at pixel " + std::to_string(i),
                        static_cast<std::int64_t>(kTensorHeaderBytes + i * map.dim * 4));
    }
  }
  return map;
}

void save_feature_map(const std::filesystem::path& path, const FeatureMap& map) {
  write_tensor(path, map);
}

// ---------------------------------------------------------------------------
// Normalization

bool normalize_vector(std::span<float> v, float eps) {
  double ss = 0.0;
  for (float x : v) ss += double(x) * x;
  const double norm = std::sqrt(ss);
  if (!(norm >= eps)) {
    std::fill(v.begin(), v.end(), 0.0f);
    if (!v.empty()) v[0] = 1.0f;
    return false;
  }
  if (std::abs(ss - 1.0) <= 4.0 * FLT_EPSILON) return true;
  for (float& x : v) x = static_cast<float>(x / norm);
  return true;
}

NormalizeResult normalize_features(FeatureMap map, float eps) {
  if (!(eps > 0.0f)) throw InvalidArgument(kModule, "eps must be positive");
  NormalizeResult out;
  for (std::size_t i = 0; i < map.pixels(); ++i) {
    if (!normalize_vector(map.pixel(i), eps)) ++out.fallback_count;
  }
  out.map = std::move(map);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

std::filesystem::path SceneManifest::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

void SceneManifest::validate() const {
  if (num_images == 0 || num_scales == 0) {
    throw InvalidArgument(kModule, "manifest needs at least one image and one scale");
  }
  if (images.size() != num_images) {
    throw InvalidArgument(kModule, "num_images does not match the image list");
  }
  if (scale_ids.size() != num_scales) {
    throw InvalidArgument(kModule, "num_scales does not match scale_ids");
  }
  if (std::set<std::uint32_t>(scale_ids.begin(), scale_ids.end()).size() != scale_ids.size()) {
    throw InvalidArgument(kModule, "duplicate scale id");
  }
  std::set<std::string> ids;
  for (const auto& rec : images) {
    if (!ids.insert(rec.image_id).second) {
      throw InvalidArgument(kModule, "duplicate image id " + rec.image_id);
    }
    if (rec.feature_paths.size() != num_scales) {
      throw InvalidArgument(kModule, "image " + rec.image_id + " does not list one feature path per scale");
    }
    for (auto s : scale_ids) {
      if (!rec.feature_paths.count(s)) {
        throw InvalidArgument(kModule, "image " + rec.image_id + " lacks scale " + std::to_string(s));
      }
    }
  }
}

SceneManifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path, kModule);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
    SceneManifest m;
    m.num_images = j.at("num_images").get<std::uint32_t>();
    m.num_scales = j.at("num_scales").get<std::uint32_t>();
    m.scale_ids = j.at("scale_ids").get<std::vector<std::uint32_t>>();
    for (const auto& ji : j.at("images")) {
      ImageRecord rec;
      rec.image_id = ji.at("id").get<std::string>();
      if (ji.contains("rgb") && !ji["rgb"].is_null()) rec.rgb_path = ji["rgb"].get<std::string>();
      for (const auto& [k, v] : ji.at("features").items()) {
        rec.feature_paths[static_cast<std::uint32_t>(std::stoul(k))] = v.get<std::string>();
      }
      if (ji.contains("pose") && !ji["pose"].is_null()) {
        const auto p = ji["pose"].get<std::vector<float>>();
        if (p.size() != 16) throw InvalidArgument(kModule, "pose must have 16 entries");
        std::array<float, 16> pose{};
        std::copy(p.begin(), p.end(), pose.begin());
        rec.pose = pose;
      }
      m.images.push_back(std::move(rec));
    }
    if (j.contains("ground_truth") && !j["ground_truth"].is_null()) {
      const auto& g = j["ground_truth"];
      GroundTruthRecord gt;
      gt.embeddings_path = g.at("embeddings").get<std::string>();
      gt.canonicals_path = g.value("canonicals", "");
      gt.annotations_path = g.value("annotations", "");
      gt.label_paths = g.at("labels").get<std::map<std::string, std::string>>();
      m.ground_truth = std::move(gt);
    }
    m.base_dir = path.parent_path();
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(kModule, path.string() + ": " + e.what());
  } catch (const std::invalid_argument&) {
    throw FormatError(kModule, path.string() + ": non-numeric scale id");
  }
}

void save_manifest(const std::filesystem::path& path, const SceneManifest& m) {
  m.validate();
  nlohmann::json j;
  j["num_images"] = m.num_images;
  j["num_scales"] = m.num_scales;
  j["scale_ids"] = m.scale_ids;
  j["images"] = nlohmann::json::array();
  for (const auto& rec : m.images) {
    nlohmann::json ji;
    ji["id"] = rec.image_id;
    ji["rgb"] = rec.rgb_path ? nlohmann::json(*rec.rgb_path) : nlohmann::json(nullptr);
    nlohmann::json feats = nlohmann::json::object();
    for (const auto& [s, p] : rec.feature_paths) feats[std::to_string(s)] = p;
    ji["features"] = feats;
    ji["pose"] = rec.pose ? nlohmann::json(*rec.pose) : nlohmann::json(nullptr);
    j["images"].push_back(ji);
  }
  if (m.ground_truth) {
    j["ground_truth"] = {{"embeddings", m.ground_truth->embeddings_path},
                         {"canonicals", m.ground_truth->canonicals_path},
                         {"annotations", m.ground_truth->annotations_path},
                         {"labels", m.ground_truth->label_paths}};
  }
  const std::string text = j.dump(2) + "\n";
  detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()),
                     kModule);
}

// ---------------------------------------------------------------------------
// Synthetic scenes

void SyntheticSceneSpec::validate() const {
  if (num_images < 1 || num_scales < 1) throw InvalidArgument(kModule, "need at least one image and scale");
  if (height < 1 || width < 1) throw InvalidArgument(kModule, "image dimensions must be positive");
  if (dim < 2) throw InvalidArgument(kModule, "embedding dimension must be >= 2");
  if (num_regions < 1) throw InvalidArgument(kModule, "num_regions must be >= 1");
  if (std::uint64_t{num_regions} > std::uint64_t{height} * width) {
    throw InvalidArgument(kModule, "num_regions exceeds the pixel count");
  }
  if (!(noise_sigma >= 0.0)) throw InvalidArgument(kModule, "noise_sigma must be >= 0");
}

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec) {
  spec.validate();
  const std::uint32_t H = spec.height, W = spec.width, D = spec.dim, R = spec.num_regions;
  std::mt19937_64 rng(spec.seed);

  SyntheticScene scene;
  scene.spec = spec;
  scene.clean_embeddings = FeatureMap(R, 1, D);
  for (std::uint32_t r = 0; r < R; ++r) {
    const auto v = random_unit_vector(rng, D);
    std::copy(v.begin(), v.end(), scene.clean_embeddings.pixel(r).begin());
  }
  for (std::size_t c = 0; c < kCanonicalPhrases.size(); ++c) {
    scene.canonicals.push_back(random_unit_vector(rng, D));
  }

  // Voronoi sites drift linearly through the sequence so consecutive frames
  // look alike.
  std::uniform_int_distribution<std::uint64_t> pick(0, std::uint64_t{H} * W - 1);
  std::uniform_real_distribution<double> vel(-1.0, 1.0);
  std::vector<std::array<double, 2>> base(R), velocity(R);
  {
    std::set<std::uint64_t> used;
    for (std::uint32_t r = 0; r < R; ++r) {
      std::uint64_t p;
      do p = pick(rng);
      while (!used.insert(p).second);
      base[r] = {double(p / W), double(p % W)};
      velocity[r] = {vel(rng), vel(rng)};
    }
  }

  const std::size_t npix = std::size_t{H} * W;
  for (std::uint32_t i = 0; i < spec.num_images; ++i) {
    std::vector<std::array<std::int64_t, 2>> sites(R);
    std::vector<std::uint8_t> taken(npix, 0);
    for (std::uint32_t r = 0; r < R; ++r) {
      auto y = std::clamp<std::int64_t>(std::llround(base[r][0] + i * velocity[r][0]), 0, H - 1);
      auto x = std::clamp<std::int64_t>(std::llround(base[r][1] + i * velocity[r][1]), 0, W - 1);
      std::size_t p = std::size_t(y) * W + std::size_t(x);
      while (taken[p]) p = (p + 1) % npix;
      taken[p] = 1;
      sites[r] = {std::int64_t(p / W), std::int64_t(p % W)};
    }
    std::vector<std::uint32_t> labels(npix);
    for (std::uint32_t y = 0; y < H; ++y) {
      for (std::uint32_t x = 0; x < W; ++x) {
        std::int64_t best = std::numeric_limits<std::int64_t>::max();
        std::uint32_t arg = 0;
        for (std::uint32_t r = 0; r < R; ++r) {
          const std::int64_t dy = sites[r][0] - y, dx = sites[r][1] - x;
          const std::int64_t d2 = dy * dy + dx * dx;
          if (d2 < best) best = d2, arg = r;
        }
        labels[std::size_t(y) * W + x] = arg;
      }
    }
    scene.rgb.push_back(region_colors_to_image(labels, H, W, R));

    std::vector<FeatureMap> per_scale;
    for (std::uint32_t s = 0; s < spec.num_scales; ++s) {
      std::mt19937_64 noise_rng(detail::derive_seed(spec.seed, i, s));
      std::normal_distribution<double> normal(0.0, 1.0);
      FeatureMap map(H, W, D);
      for (std::size_t p = 0; p < npix; ++p) {
        auto dst = map.pixel(p);
        const auto src = scene.clean_embeddings.pixel(labels[p]);
        std::copy(src.begin(), src.end(), dst.begin());
        if (spec.noise_sigma > 0.0) {
          for (auto& x : dst) x = static_cast<float>(x + spec.noise_sigma * normal(noise_rng));
          normalize_vector(dst, 1e-8f);
        }
      }
      per_scale.push_back(std::move(map));
    }
    scene.features.push_back(std::move(per_scale));
    scene.labels.push_back(std::move(labels));
  }

  auto& m = scene.manifest;
  m.num_images = spec.num_images;
  m.num_scales = spec.num_scales;
  for (std::uint32_t s = 0; s < spec.num_scales; ++s) m.scale_ids.push_back(s);
  GroundTruthRecord gt;
  gt.embeddings_path = "gt/embeddings.vqft";
  gt.canonicals_path = "gt/canonicals.vqfq";
  gt.annotations_path = "gt/annotations.json";
  for (std::uint32_t i = 0; i < spec.num_images; ++i) {
    ImageRecord rec;
    rec.image_id = image_name(i);
    rec.rgb_path = "rgb/" + rec.image_id + ".ppm";
    for (std::uint32_t s = 0; s < spec.num_scales; ++s) {
      rec.feature_paths[s] = "features/" + rec.image_id + "_s" + std::to_string(s) + ".vqft";
    }
    std::array<float, 16> pose{1, 0, 0, 0.1f * i, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    rec.pose = pose;
    gt.label_paths[rec.image_id] = "gt/labels_" + rec.image_id + ".vqfs";
    m.images.push_back(std::move(rec));
  }
  m.ground_truth = std::move(gt);
  return scene;
}

std::filesystem::path write_synthetic_scene(const SyntheticScene& scene,
                                            const std::filesystem::path& dir) {
  const auto& m = scene.manifest;
  const auto& spec = scene.spec;
  for (std::size_t i = 0; i < m.images.size(); ++i) {
    const auto& rec = m.images[i];
    write_ppm(dir / *rec.rgb_path, scene.rgb[i]);
    for (std::uint32_t s = 0; s < spec.num_scales; ++s) {
      save_feature_map(dir / rec.feature_paths.at(s), scene.features[i][s]);
    }
    Segmentation gt_seg;
    gt_seg.height = spec.height;
    gt_seg.width = spec.width;
    gt_seg.labels = scene.labels[i];
    gt_seg.num_segments = spec.num_regions;
    gt_seg.requested = spec.num_regions;
    save_segmentation(dir / m.ground_truth->label_paths.at(rec.image_id), gt_seg);
  }
  save_feature_map(dir / m.ground_truth->embeddings_path, scene.clean_embeddings);

  QueryContext canon;
  canon.query_label = kCanonicalPhrases[0];
  canon.query = scene.canonicals[0];
  for (std::size_t c = 0; c < scene.canonicals.size(); ++c) {
    canon.canonicals.push_back({kCanonicalPhrases[c], scene.canonicals[c]});
  }
  save_query(dir / m.ground_truth->canonicals_path, canon);

  // One query per region plus bounding-box annotations for detection_pr.
  nlohmann::json ann = nlohmann::json::array();
  for (std::uint32_t r = 0; r < spec.num_regions; ++r) {
    char name[32];
    std::snprintf(name, sizeof name, "region_%02u", r);
    QueryContext q = canon;
    q.query_label = name;
    const auto e = scene.clean_embeddings.pixel(r);
    q.query.assign(e.begin(), e.end());
    save_query(dir / "queries" / (std::string(name) + ".vqfq"), q);

    for (std::size_t i = 0; i < m.images.size(); ++i) {
      std::uint32_t r0 = spec.height, c0 = spec.width, r1 = 0, c1 = 0;
      bool any = false;
      for (std::uint32_t y = 0; y < spec.height; ++y) {
        for (std::uint32_t x = 0; x < spec.width; ++x) {
          if (scene.labels[i][std::size_t(y) * spec.width + x] != r) continue;
          any = true;
          r0 = std::min(r0, y), c0 = std::min(c0, x), r1 = std::max(r1, y), c1 = std::max(c1, x);
        }
      }
      nlohmann::json boxes = nlohmann::json::array();
      if (any) boxes.push_back({r0, c0, r1, c1});
      ann.push_back({{"image_id", m.images[i].image_id}, {"query_label", name}, {"boxes", boxes}});
    }
  }
  const std::string text = ann.dump(2) + "\n";
  detail::write_file(dir / m.ground_truth->annotations_path,
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), kModule);

  const auto manifest_path = dir / "manifest.json";
  save_manifest(manifest_path, m);
  return manifest_path;
}

// ---------------------------------------------------------------------------
// PCA visualization

RgbImage pca_visualize(const FeatureMap& map) {
  if (map.dim < 3) throw InvalidArgument(kModule, "pca_visualize needs D >= 3");
  const std::size_t n = map.pixels();
  const std::size_t D = map.dim;
  RgbImage img(map.height, map.width);

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(D);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = map.pixel(i);
    for (std::size_t k = 0; k < D; ++k) mean[k] += p[k];
  }
  mean /= static_cast<double>(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(D, D);
  Eigen::VectorXd centered(D);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = map.pixel(i);
    for (std::size_t k = 0; k < D; ++k) centered[k] = p[k] - mean[k];
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n);
  const double total_var = cov.trace();

  if (!(total_var > 1e-12)) {
    std::fill(img.rgb.begin(), img.rgb.end(), std::uint8_t{128});
    return img;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigen sorts eigenvalues ascending.
  std::vector<double> proj(n);
  for (int c = 0; c < 3; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(D) - 1 - c;
    const double lambda = eig.eigenvalues()[col];
    Eigen::VectorXd axis = eig.eigenvectors().col(col);
    Eigen::Index big = 0;
    for (Eigen::Index k = 1; k < axis.size(); ++k) {
      if (std::abs(axis[k]) > std::abs(axis[big])) big = k;
    }
    if (axis[big] < 0) axis = -axis;

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = map.pixel(i);
      double s = 0.0;
      for (std::size_t k = 0; k < D; ++k) s += (p[k] - mean[k]) * axis[static_cast<Eigen::Index>(k)];
      proj[i] = s;
      lo = std::min(lo, s), hi = std::max(hi, s);
    }
    const bool flat = !(lambda > 1e-10 * total_var) || !(hi - lo > 1e-9);
    for (std::size_t i = 0; i < n; ++i) {
      img.rgb[i * 3 + c] =
          flat ? std::uint8_t{128}
               : static_cast<std::uint8_t>(std::lround(255.0 * (proj[i] - lo) / (hi - lo)));
    }
  }
  return img;
}

}  // namespace vqff
