// SPDX-License-Identifier: Apache-2.0
#include "vqff/query.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "vqff/error.hpp"
#include "vqff/kernels.hpp"
#include "vqff/parallel.hpp"

namespace vqff {
namespace {

constexpr const char* kModule = "query_engine";
constexpr std::uint32_t kVersion = 1;

void check_unit(std::span<const float> v, const std::string& what) {
  double ss = 0.0;
  for (float x : v) ss += double(x) * double(x);
  if (!(std::abs(std::sqrt(ss) - 1.0) <= kUnitNormTolerance)) {
    throw InvalidArgument(kModule, what + " is not unit norm");
  }
}

// Same arithmetic for a single feature and for a codebook row, so both paths
// agree bitwise.
float score_with(const kernels::KernelTable& kern, const float* f, const QueryContext& ctx) {
  const std::size_t d = ctx.query.size();
  const float fq = kern.dot(f, ctx.query.data(), d);
  float top = kern.dot(f, ctx.canonicals[0].embedding.data(), d);
  for (std::size_t i = 1; i < ctx.canonicals.size(); ++i) {
    top = std::max(top, kern.dot(f, ctx.canonicals[i].embedding.data(), d));
  }
  return static_cast<float>(1.0 / (1.0 + std::exp(double(top) - double(fq))));
}

void broadcast(const std::vector<float>& scores, const IndexMap& map, float* out) {
  kernels::active().gather(scores.data(), map.indices.data(), map.indices.size(), out);
}

}  // namespace

void QueryContext::validate() const {
  if (query.empty()) throw InvalidArgument(kModule, "empty query vector");
  if (canonicals.empty()) throw InvalidArgument(kModule, "at least one canonical is required");
  if (!(threshold > 0.0f && threshold < 1.0f)) throw InvalidArgument(kModule, "threshold must lie in (0, 1)");
  check_unit(query, "query");
  for (const auto& c : canonicals) {
    if (c.embedding.size() != query.size()) {
      throw InvalidArgument(kModule, "canonical \"" + c.phrase + "\" has the wrong dimension");
    }
    check_unit(c.embedding, "canonical \"" + c.phrase + "\"");
  }
}

void save_query(const std::filesystem::path& path, const QueryContext& ctx) {
  ctx.validate();
  detail::ByteWriter w;
  w.magic("VQFQ");
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(ctx.dim());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ctx.canonicals.size()));
  w.put_string(ctx.query_label);
  w.put_array<float>(ctx.query);
  for (const auto& c : ctx.canonicals) {
    w.put_string(c.phrase);
    w.put_array<float>(c.embedding);
  }
  detail::write_file(path, w.bytes(), kModule);
}

QueryContext load_query(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path, kModule);
  detail::ByteReader r(bytes, kModule);
  r.expect_magic("VQFQ");
  if (r.get<std::uint32_t>("version") != kVersion) throw FormatError(kModule, "unsupported VQFQ version", 4);
  const auto dim = r.get<std::uint32_t>("dimension");
  const auto count = r.get<std::uint32_t>("canonical count");
  if (dim == 0) throw FormatError(kModule, "zero dimension", 8);
  r.need(std::uint64_t{count + 1} * (4 + std::uint64_t{dim} * 4), "query records");
  QueryContext ctx;
  ctx.query_label = r.get_string("query label");
  ctx.query.resize(dim);
  r.get_array<float>(ctx.query, "query vector");
  for (std::uint32_t c = 0; c < count; ++c) {
    Canonical can;
    can.phrase = r.get_string("canonical label");
    can.embedding.resize(dim);
    r.get_array<float>(can.embedding, "canonical vector");
    ctx.canonicals.push_back(std::move(can));
  }
  if (r.remaining() != 0) throw FormatError(kModule, "trailing bytes", static_cast<std::int64_t>(r.offset()));
  try {
    ctx.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(kModule, path.string() + ": " + e.what());
  }
  return ctx;
}

float relevancy_score(std::span<const float> feature, const QueryContext& ctx) {
  if (ctx.canonicals.empty()) throw InvalidArgument(kModule, "at least one canonical is required");
  if (feature.size() != ctx.query.size()) throw InvalidArgument(kModule, "feature and query dimensions differ");
  for (const auto& c : ctx.canonicals) {
    if (c.embedding.size() != ctx.query.size()) throw InvalidArgument(kModule, "canonical dimension differs");
  }
  return score_with(kernels::active(), feature.data(), ctx);
}

std::vector<float> codebook_relevancy(std::span<const float> codebook, std::uint32_t dim,
                                      const QueryContext& ctx) {
  if (dim != ctx.dim() || codebook.size() % dim != 0) {
    throw InvalidArgument(kModule, "codebook and query dimensions differ");
  }
  if (ctx.canonicals.empty()) throw InvalidArgument(kModule, "at least one canonical is required");
  const std::size_t k = codebook.size() / dim;
  std::vector<float> out(k);
  const auto& kern = kernels::active();
  for (std::size_t r = 0; r < k; ++r) out[r] = score_with(kern, codebook.data() + r * dim, ctx);
  return out;
}

RelevancyMap brute_force_relevancy(const FeatureMap& map, const QueryContext& ctx) {
  if (map.dim != ctx.dim()) throw InvalidArgument(kModule, "feature and query dimensions differ");
  RelevancyMap out;
  out.height = map.height;
  out.width = map.width;
  out.values.resize(map.pixels());
  const auto& kern = kernels::active();
  parallel_for(map.pixels(), [&](std::size_t p0, std::size_t p1) {
    for (std::size_t p = p0; p < p1; ++p) out.values[p] = score_with(kern, map.pixel(p).data(), ctx);
  });
  return out;
}

RelevancyMap relevancy_map(const VqffStore& store, const std::string& image_id, std::uint32_t scale_id,
                           const QueryContext& ctx) {
  const auto i = store.image_index(image_id);
  const auto s = store.scale_position(scale_id);
  const auto& sc = store.scales[s];
  const auto scores = codebook_relevancy(sc.rows, store.dim, ctx);
  RelevancyMap out;
  out.height = store.height;
  out.width = store.width;
  out.image_id = image_id;
  out.scale_id = scale_id;
  out.values.resize(out.pixels());
  broadcast(scores, store.index_maps[i][s], out.values.data());
  return out;
}

RelevancyMap multiscale_relevancy(const VqffStore& store, const std::string& image_id,
                                  const QueryContext& ctx) {
  QueryEngine engine(store);
  engine.set_query(ctx);
  return engine.multiscale_relevancy(store.image_index(image_id));
}

Mask Mask::filled(std::uint32_t h, std::uint32_t w, bool value, std::string image_id) {
  Mask m;
  m.height = h;
  m.width = w;
  m.bits.assign(std::size_t{h} * w, value ? 1 : 0);
  m.image_id = std::move(image_id);
  m.pixel_count = value ? m.bits.size() : 0;
  return m;
}

Mask mask_from_relevancy(const RelevancyMap& map, float tau) {
  if (!(tau > 0.0f && tau < 1.0f)) throw InvalidArgument(kModule, "threshold must lie in (0, 1)");
  Mask m;
  m.height = map.height;
  m.width = map.width;
  m.image_id = map.image_id;
  m.bits.resize(map.values.size());
  m.pixel_count = kernels::active().threshold(map.values.data(), map.values.size(), tau, m.bits.data());
  return m;
}

void save_mask(const std::filesystem::path& path, const Mask& mask) {
  GrayImage g;
  g.height = mask.height;
  g.width = mask.width;
  g.values.resize(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), g.values.begin(),
                 [](std::uint8_t b) -> std::uint8_t { return b ? 255 : 0; });
  write_pgm(path, g);
}

Mask load_mask(const std::filesystem::path& path, std::string image_id) {
  const GrayImage g = read_pgm(path);
  Mask m;
  m.height = g.height;
  m.width = g.width;
  m.image_id = std::move(image_id);
  m.bits.resize(g.values.size());
  for (std::size_t p = 0; p < g.values.size(); ++p) {
    if (g.values[p] != 0 && g.values[p] != 255) {
      throw FormatError(kModule, path.string() + ": mask values must be 0 or 255");
    }
    m.bits[p] = g.values[p] ? 1 : 0;
    m.pixel_count += m.bits[p];
  }
  return m;
}

void save_relevancy_map(const std::filesystem::path& path, const RelevancyMap& map) {
  FeatureMap t(map.height, map.width, 1);
  t.data = map.values;
  write_tensor(path, t);
}

RelevancyMap load_relevancy_map(const std::filesystem::path& path) {
  FeatureMap t = read_tensor(path);
  if (t.dim != 1) throw FormatError(kModule, path.string() + ": relevancy maps have one channel");
  RelevancyMap out;
  out.height = t.height;
  out.width = t.width;
  out.values = std::move(t.data);
  return out;
}

RgbImage relevancy_to_rgb(const RelevancyMap& map) {
  RgbImage img(map.height, map.width);
  for (std::size_t p = 0; p < map.values.size(); ++p) {
    const float v = std::clamp(map.values[p], 0.0f, 1.0f);
    img.rgb[3 * p + 0] = static_cast<std::uint8_t>(std::lround(255.0f * v));
    img.rgb[3 * p + 1] = static_cast<std::uint8_t>(std::lround(255.0f * (1.0f - std::abs(2.0f * v - 1.0f)) * 0.5f));
    img.rgb[3 * p + 2] = static_cast<std::uint8_t>(std::lround(255.0f * (1.0f - v)));
  }
  return img;
}

QueryEngine::QueryEngine(const VqffStore& store) : store_(store), scores_(store.num_scales) {
  for (std::size_t s = 0; s < store.num_scales; ++s) scores_[s].reserve(store.scales[s].size);
}

void QueryEngine::set_query(const QueryContext& ctx) {
  ctx.validate();
  if (ctx.dim() != store_.dim) throw InvalidArgument(kModule, "query and store dimensions differ");
  const auto& kern = kernels::active();
  for (std::size_t s = 0; s < scores_.size(); ++s) {
    const auto& sc = store_.scales[s];
    scores_[s].resize(sc.size);
    parallel_for(sc.size, [&](std::size_t k0, std::size_t k1) {
      for (std::size_t k = k0; k < k1; ++k) {
        scores_[s][k] = score_with(kern, sc.rows.data() + k * store_.dim, ctx);
      }
    });
  }
  threshold_ = ctx.threshold;
  ready_ = true;
}

RelevancyMap QueryEngine::relevancy_map(std::size_t image, std::size_t scale_pos) const {
  if (!ready_) throw InvalidArgument(kModule, "no query set");
  RelevancyMap out;
  out.height = store_.height;
  out.width = store_.width;
  out.image_id = store_.image_ids.at(image);
  out.scale_id = store_.scales.at(scale_pos).scale_id;
  out.values.resize(out.pixels());
  broadcast(scores_[scale_pos], store_.index_maps[image][scale_pos], out.values.data());
  return out;
}

void QueryEngine::fill_multiscale(std::size_t image, float* out, float* tmp) const {
  const auto& kern = kernels::active();
  const std::size_t n = std::size_t{store_.height} * store_.width;
  broadcast(scores_[0], store_.index_maps[image][0], out);
  for (std::size_t s = 1; s < scores_.size(); ++s) {
    broadcast(scores_[s], store_.index_maps[image][s], tmp);
    kern.max_inplace(out, tmp, n);
  }
}

RelevancyMap QueryEngine::multiscale_relevancy(std::size_t image) const {
  if (!ready_) throw InvalidArgument(kModule, "no query set");
  RelevancyMap out;
  out.height = store_.height;
  out.width = store_.width;
  out.image_id = store_.image_ids.at(image);
  out.values.resize(out.pixels());
  std::vector<float> tmp(scores_.size() > 1 ? out.pixels() : 0);
  fill_multiscale(image, out.values.data(), tmp.data());
  return out;
}

std::vector<Mask> QueryEngine::masks() const {
  if (!ready_) throw InvalidArgument(kModule, "no query set");
  if (!(threshold_ > 0.0f && threshold_ < 1.0f)) throw InvalidArgument(kModule, "threshold must lie in (0, 1)");
  std::vector<Mask> out(store_.num_images);
  const std::size_t n = std::size_t{store_.height} * store_.width;
  parallel_for(out.size(), [&](std::size_t i0, std::size_t i1) {
    // Scratch maps are reused across the images of a chunk.
    std::vector<float> values(n), tmp(scores_.size() > 1 ? n : 0);
    const auto& kern = kernels::active();
    for (std::size_t i = i0; i < i1; ++i) {
      fill_multiscale(i, values.data(), tmp.data());
      Mask& m = out[i];
      m.height = store_.height;
      m.width = store_.width;
      m.image_id = store_.image_ids[i];
      m.bits.resize(n);
      m.pixel_count = kern.threshold(values.data(), n, threshold_, m.bits.data());
    }
  });
  return out;
}

std::vector<Mask> scene_query(const VqffStore& store, const QueryContext& ctx) {
  QueryEngine engine(store);
  engine.set_query(ctx);
  return engine.masks();
}

RelevancyPeak max_relevancy_location(const RelevancyMap& map) {
  if (map.values.empty()) throw InvalidArgument(kModule, "empty relevancy map");
  const auto it = std::max_element(map.values.begin(), map.values.end());
  const auto p = static_cast<std::size_t>(it - map.values.begin());
  return {static_cast<std::uint32_t>(p / map.width), static_cast<std::uint32_t>(p % map.width), *it};
}

std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path, kModule);
  std::vector<Annotation> out;
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    if (!j.is_array()) throw FormatError(kModule, path.string() + ": expected a JSON list");
    for (const auto& rec : j) {
      Annotation a;
      a.image_id = rec.at("image_id").get<std::string>();
      a.query_label = rec.at("query_label").get<std::string>();
      for (const auto& b : rec.at("boxes")) {
        if (b.size() != 4) throw FormatError(kModule, "boxes have four coordinates");
        Box box{b[0].get<std::uint32_t>(), b[1].get<std::uint32_t>(), b[2].get<std::uint32_t>(),
                b[3].get<std::uint32_t>()};
        if (box.row1 < box.row0 || box.col1 < box.col0) throw FormatError(kModule, "inverted box");
        a.boxes.push_back(box);
      }
      out.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(kModule, path.string() + ": " + e.what());
  }
  return out;
}

void save_annotations(const std::filesystem::path& path, std::span<const Annotation> annotations) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& a : annotations) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : a.boxes) boxes.push_back({b.row0, b.col0, b.row1, b.col1});
    j.push_back({{"image_id", a.image_id}, {"query_label", a.query_label}, {"boxes", boxes}});
  }
  const std::string text = j.dump(2) + "\n";
  detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), kModule);
}

std::vector<PrPoint> detection_pr(std::span<const Detection> detections,
                                  std::span<const Annotation> annotations,
                                  std::span<const double> thresholds) {
  std::map<std::string, const Annotation*> by_image;
  for (const auto& a : annotations) {
    if (!by_image.emplace(a.image_id, &a).second) {
      throw InvalidArgument(kModule, "duplicate annotation for image " + a.image_id);
    }
  }
  std::set<std::string> seen;
  for (const auto& d : detections) {
    if (!by_image.count(d.image_id) || !seen.insert(d.image_id).second) {
      throw InvalidArgument(kModule, "predictions and annotations cover different images");
    }
  }
  if (seen.size() != by_image.size()) {
    throw InvalidArgument(kModule, "predictions and annotations cover different images");
  }

  std::uint64_t annotated = 0;
  for (const auto& a : annotations) annotated += a.boxes.empty() ? 0 : 1;

  std::vector<PrPoint> out;
  for (double t : thresholds) {
    PrPoint pt;
    pt.threshold = t;
    pt.annotated = annotated;
    for (const auto& d : detections) {
      if (double(d.peak.value) < t) continue;
      ++pt.positives;
      const auto& boxes = by_image[d.image_id]->boxes;
      if (std::any_of(boxes.begin(), boxes.end(),
                      [&](const Box& b) { return b.contains(d.peak.row, d.peak.col); })) {
        ++pt.true_positives;
      }
    }
    if (pt.positives > 0) pt.precision = double(pt.true_positives) / double(pt.positives);
    if (annotated == 0) {
      pt.recall_undefined = true;
    } else {
      pt.recall = double(pt.true_positives) / double(annotated);
    }
    out.push_back(pt);
  }
  return out;
}

}  // namespace vqff
