// SPDX-License-Identifier: Apache-2.0
// vqff: command-line front end for building and querying feature fields.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vqff/error.hpp"
#include "vqff/feature_io.hpp"
#include "vqff/kernels.hpp"
#include "vqff/parallel.hpp"
#include "vqff/quantizer_global.hpp"
#include "vqff/quantizer_local.hpp"
#include "vqff/query.hpp"
#include "vqff/semantic_lift.hpp"
#include "vqff/store.hpp"
#include "vqff/superpixel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flat or sectioned JSON config: {"alpha": 0.1, "build": {"budget": "unlimited"}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config: top level must be an object");
    std::vector<CLI::ConfigItem> out;
    collect(j, {}, out);
    return out;
  }

 private:
  static void collect(const json& j, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it->is_object()) {
        auto p = parents;
        p.push_back(it.key());
        collect(*it, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_string()) {
        item.inputs = {it->get<std::string>()};
      } else if (it->is_boolean()) {
        item.inputs = {it->get<bool>() ? "true" : "false"};
      } else if (it->is_array()) {
        for (const auto& v : *it) item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      } else {
        item.inputs = {it->dump()};
      }
      out.push_back(std::move(item));
    }
  }
};

struct Common {
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::uint32_t batches = 1;
  std::uint32_t superpixels = 1024;
  double compactness = 10.0;
  std::uint32_t slic_iters = 10;
  float tau = 0.5f;
  double threshold_frac = 0.10;
  std::string threads = "max";
  std::string out;
};

json common_json(const Common& c) {
  return {{"seed", c.seed},
          {"alpha", c.alpha},
          {"batches", c.batches},
          {"superpixels", c.superpixels},
          {"compactness", c.compactness},
          {"slic_iters", c.slic_iters},
          {"tau", c.tau},
          {"threshold_frac", c.threshold_frac}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw vqff::IoError("cli", "cannot write " + path.string());
  f << text;
  if (!f) throw vqff::IoError("cli", "cannot write " + path.string());
}

// Thread count is left out so outputs do not depend on it.
void echo_config(const fs::path& dir, const std::string& command, const Common& c, json extra) {
  json j = common_json(c);
  j["command"] = command;
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = *it;
  write_text(dir / "config.json", j.dump(2) + "\n");
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw vqff::InvalidArgument("cli", "--out is required");
  return c.out;
}

vqff::SlicParams slic_params(const Common& c) {
  return {c.superpixels, c.compactness, c.slic_iters};
}

// Noise-free map of one image from stored labels and region embeddings.
vqff::FeatureMap clean_map(const vqff::SceneManifest& m, std::size_t image, const vqff::FeatureMap& emb) {
  const auto& gt = *m.ground_truth;
  const auto seg = vqff::load_segmentation(m.resolve(gt.label_paths.at(m.images[image].image_id)));
  vqff::FeatureMap out(seg.height, seg.width, emb.dim);
  for (std::size_t p = 0; p < seg.pixels(); ++p) {
    const auto e = emb.pixel(seg.labels[p]);
    std::copy(e.begin(), e.end(), out.pixel(p).begin());
  }
  return out;
}

std::size_t parse_threads(const std::string& s) {
  if (s == "max") return 0;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw vqff::InvalidArgument("cli", "--threads must be a count or max");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  vqff::SyntheticSceneSpec spec;
};

void cmd_synth(const Common& c, SynthArgs a) {
  const auto out = require_out(c);
  a.spec.seed = c.seed;
  const auto scene = vqff::generate_synthetic_scene(a.spec);
  const auto manifest = vqff::write_synthetic_scene(scene, out);
  echo_config(out, "synth", c,
              {{"images", a.spec.num_images},
               {"scales", a.spec.num_scales},
               {"height", a.spec.height},
               {"width", a.spec.width},
               {"dim", a.spec.dim},
               {"regions", a.spec.num_regions},
               {"noise", a.spec.noise_sigma}});
  std::cerr << "wrote " << manifest.string() << "\n";
}

struct SegmentArgs {
  std::string image;
};

void cmd_segment(const Common& c, const SegmentArgs& a) {
  const auto out = require_out(c);
  const auto img = vqff::read_ppm(a.image);
  const auto seg = vqff::slic_segment(img, slic_params(c));
  vqff::save_segmentation(out / "segmentation.vqfs", seg);
  vqff::RgbImage overlay = img;
  for (std::uint32_t y = 0; y < seg.height; ++y) {
    for (std::uint32_t x = 0; x < seg.width; ++x) {
      const std::size_t p = std::size_t(y) * seg.width + x;
      const bool edge = (x + 1 < seg.width && seg.labels[p + 1] != seg.labels[p]) ||
                        (y + 1 < seg.height && seg.labels[p + seg.width] != seg.labels[p]);
      if (edge) std::fill_n(overlay.rgb.begin() + 3 * p, 3, std::uint8_t{255});
    }
  }
  vqff::write_ppm(out / "boundaries.ppm", overlay);
  const auto st = vqff::segment_stats(seg);
  json rep = {{"num_segments", seg.num_segments},
              {"requested", seg.requested},
              {"boundary_pixels", st.boundary_pixels}};
  write_text(out / "segment.json", rep.dump(2) + "\n");
  echo_config(out, "segment", c, {});
  std::cout << rep.dump() << "\n";
}

struct BuildArgs {
  std::string manifest;
  std::string budget = "default";
  std::uint32_t kmeans_iters = 25;
  bool weighted = false;
  bool merge = false;
};

vqff::CodebookBudget parse_budget(const std::string& s) {
  if (s == "default") return {};
  if (s == "unlimited") return vqff::CodebookBudget::unlimited();
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size() && v > 0) return vqff::CodebookBudget::fixed(v);
  } catch (const std::exception&) {
  }
  throw vqff::InvalidArgument("cli", "--budget must be default, unlimited or a positive count");
}

void cmd_build(const Common& c, const BuildArgs& a) {
  const auto out = require_out(c);
  const auto manifest = vqff::load_manifest(a.manifest);
  vqff::GlobalBuildParams p;
  p.alpha = c.alpha;
  p.budget = parse_budget(a.budget);
  p.num_batches = c.batches;
  p.kmeans_max_iters = a.kmeans_iters;
  p.seed = c.seed;
  p.weighted = a.weighted;
  p.merge_batches = a.merge;
  const auto result = vqff::build_vqff(manifest, slic_params(c), p);
  vqff::save_store(result.store, out);

  json scales = json::array();
  for (const auto& s : result.report.scales) {
    json batches = json::array();
    for (const auto& b : s.batches) {
      batches.push_back({{"first_image", b.first_image},
                         {"num_images", b.num_images},
                         {"pooled_rows", b.pooled_rows},
                         {"k", b.k},
                         {"iterations", b.iterations},
                         {"converged", b.converged}});
    }
    scales.push_back({{"scale_id", s.scale_id},
                      {"pooled_rows", s.pooled_rows},
                      {"k", s.k},
                      {"batches", batches},
                      {"batched_cost", s.batched_cost},
                      {"unbatched_cost", s.unbatched_cost}});
  }
  write_text(out / "build_report.json", json{{"scales", scales}}.dump(2) + "\n");
  echo_config(out, "build", c,
              {{"budget", a.budget}, {"kmeans_iters", a.kmeans_iters}, {"weighted", a.weighted}, {"merge", a.merge}});
  std::cerr << "local quantization " << fmt(result.report.local_seconds) << " s, global "
            << fmt(result.report.global_seconds) << " s\n";
}

struct StoreArgs {
  std::string store;
};

void cmd_stats(const Common& c, const StoreArgs& a) {
  const auto store = vqff::load_store(a.store);
  const auto s = vqff::store_stats(store);
  json j = {{"codebook_bytes", s.codebook_bytes},
            {"index_bytes", s.index_bytes},
            {"total_bytes", s.total_bytes},
            {"raw_bytes", s.raw_bytes},
            {"bits_per_dim", s.bits_per_dim},
            {"compression_ratio", s.compression_ratio},
            {"per_frame_codebook_mb", s.per_frame_codebook_mb},
            {"per_frame_index_mb", s.per_frame_index_mb},
            {"per_frame_total_mb", s.per_frame_total_mb}};
  std::cout << j.dump(2) << "\n";
  if (!c.out.empty()) {
    write_text(fs::path(c.out) / "stats.json", j.dump(2) + "\n");
    echo_config(c.out, "stats", c, {});
  }
}

struct QueryArgs {
  std::string store;
  std::string query;
};

void cmd_query(const Common& c, const QueryArgs& a) {
  const auto out = require_out(c);
  const auto store = vqff::load_store(a.store);
  auto ctx = vqff::load_query(a.query);
  ctx.threshold = c.tau;
  vqff::QueryEngine engine(store);
  engine.set_query(ctx);
  std::vector<vqff::RelevancyMap> maps(store.num_images);
  vqff::parallel_for(maps.size(), [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) maps[i] = engine.multiscale_relevancy(i);
  });
  json masks = json::array();
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto& id = store.image_ids[i];
    const auto mask = vqff::mask_from_relevancy(maps[i], ctx.threshold);
    vqff::save_mask(out / "masks" / (id + ".pgm"), mask);
    vqff::save_relevancy_map(out / "relevancy" / (id + ".vqft"), maps[i]);
    vqff::write_ppm(out / "relevancy" / (id + ".ppm"), vqff::relevancy_to_rgb(maps[i]));
    const auto peak = vqff::max_relevancy_location(maps[i]);
    masks.push_back({{"image_id", id},
                     {"mask", "masks/" + id + ".pgm"},
                     {"pixel_count", mask.pixel_count},
                     {"peak", {peak.row, peak.col, peak.value}}});
  }
  write_text(out / "query.json",
             json{{"query_label", ctx.query_label}, {"tau", ctx.threshold}, {"masks", masks}}.dump(2) + "\n");
  echo_config(out, "query", c, {{"query_label", ctx.query_label}});
}

struct ReconstructArgs {
  std::string store;
  std::string image_id;
  std::uint32_t scale = 0;
};

void cmd_reconstruct(const Common& c, const ReconstructArgs& a) {
  const auto out = require_out(c);
  const auto store = vqff::load_store(a.store);
  const auto map = vqff::reconstruct_feature_map(store, a.image_id, a.scale);
  vqff::save_feature_map(out / (a.image_id + "_s" + std::to_string(a.scale) + ".vqft"), map);
  vqff::write_ppm(out / (a.image_id + "_s" + std::to_string(a.scale) + ".ppm"), vqff::pca_visualize(map));
  echo_config(out, "reconstruct", c, {{"image_id", a.image_id}, {"scale", a.scale}});
}

struct FidelityArgs {
  std::string store;
  std::string manifest;
};

void cmd_fidelity(const Common& c, const FidelityArgs& a) {
  const auto store = vqff::load_store(a.store);
  const auto m = vqff::load_manifest(a.manifest);
  m.validate();
  std::optional<vqff::FeatureMap> emb;
  if (m.ground_truth) emb = vqff::read_tensor(m.resolve(m.ground_truth->embeddings_path));
  json scales = json::array();
  for (std::uint32_t sid : m.scale_ids) {
    double vq = 0.0, ref = 0.0, clean = 0.0;
    for (std::size_t i = 0; i < m.images.size(); ++i) {
      const auto& rec = m.images[i];
      const auto orig = vqff::normalize_features(vqff::read_tensor(m.resolve(rec.feature_paths.at(sid)))).map;
      const auto rec_map = vqff::reconstruct_feature_map(store, rec.image_id, sid);
      vq += vqff::cosine_fidelity(orig, rec_map);
      ref += vqff::cosine_fidelity(orig, vqff::global_mean_map(orig));
      if (emb) clean += vqff::cosine_fidelity(clean_map(m, i, *emb), rec_map);
    }
    const double n = double(m.images.size());
    json s = {{"scale_id", sid}, {"vqff", vq / n}, {"global_mean", ref / n}};
    if (emb) s["clean"] = clean / n;
    scales.push_back(s);
  }
  const json j = {{"scales", scales}};
  std::cout << j.dump(2) << "\n";
  if (!c.out.empty()) {
    write_text(fs::path(c.out) / "fidelity.json", j.dump(2) + "\n");
    echo_config(c.out, "fidelity", c, {});
  }
}

struct ComposeArgs {
  std::string original;
  std::string edited;
  std::string mask;
};

void cmd_compose_edit(const Common& c, const ComposeArgs& a) {
  const auto out = require_out(c);
  const auto result =
      vqff::compose_edit(vqff::read_ppm(a.original), vqff::read_ppm(a.edited), vqff::load_mask(a.mask));
  vqff::write_ppm(out / "composed.ppm", result);
  echo_config(out, "compose-edit", c, {});
}

struct SelectArgs {
  std::string masks;
  std::uint32_t cap = 25;
  std::uint32_t total_cap = 50;
};

void cmd_select_frames(const Common& c, const SelectArgs& a) {
  const auto out = require_out(c);
  const fs::path dir = a.masks;
  std::vector<vqff::Mask> masks;
  if (fs::exists(dir / "query.json")) {
    const auto j = json::parse(std::ifstream(dir / "query.json"));
    for (const auto& rec : j.at("masks")) {
      masks.push_back(vqff::load_mask(dir / rec.at("mask").get<std::string>(), rec.at("image_id").get<std::string>()));
    }
  } else {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".pgm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) masks.push_back(vqff::load_mask(f, f.stem().string()));
  }
  const auto sel = vqff::select_frames(masks, {c.threshold_frac, a.cap, a.total_cap});
  write_text(out / "selection.json", vqff::selection_to_json(sel));
  echo_config(out, "select-frames", c, {{"cap", a.cap}, {"total_cap", a.total_cap}});
  std::cerr << "selected " << sel.selected.size() << " of " << masks.size() << " frames\n";
}

struct PrArgs {
  std::string store;
  std::string query;
  std::string annotations;
  std::uint32_t steps = 100;
};

void cmd_pr_eval(const Common& c, const PrArgs& a) {
  const auto out = require_out(c);
  const auto store = vqff::load_store(a.store);
  const auto ctx = vqff::load_query(a.query);
  std::vector<vqff::Annotation> ann;
  for (auto& rec : vqff::load_annotations(a.annotations)) {
    if (rec.query_label == ctx.query_label) ann.push_back(std::move(rec));
  }
  vqff::QueryEngine engine(store);
  engine.set_query(ctx);
  std::vector<vqff::Detection> det;
  for (std::size_t i = 0; i < store.num_images; ++i) {
    det.push_back({store.image_ids[i], vqff::max_relevancy_location(engine.multiscale_relevancy(i))});
  }
  if (a.steps < 1) throw vqff::InvalidArgument("cli", "--steps must be >= 1");
  std::vector<double> grid;
  for (std::uint32_t k = 0; k <= a.steps; ++k) grid.push_back(double(k) / a.steps);
  const auto curve = vqff::detection_pr(det, ann, grid);
  std::ostringstream csv;
  csv << "threshold,precision,recall,true_positives,positives,annotated,recall_undefined\n";
  for (const auto& p : curve) {
    csv << fmt(p.threshold) << "," << fmt(p.precision) << "," << fmt(p.recall) << "," << p.true_positives << ","
        << p.positives << "," << p.annotated << "," << (p.recall_undefined ? 1 : 0) << "\n";
  }
  write_text(out / "pr.csv", csv.str());
  echo_config(out, "pr-eval", c, {{"query_label", ctx.query_label}, {"steps", a.steps}});
}

struct VisualizeArgs {
  std::string features;
};

void cmd_visualize(const Common& c, const VisualizeArgs& a) {
  const auto out = require_out(c);
  const auto map = vqff::read_tensor(a.features);
  const fs::path stem = fs::path(a.features).stem();
  if (map.dim == 1) {
    vqff::RelevancyMap r;
    r.height = map.height;
    r.width = map.width;
    r.values = map.data;
    vqff::write_ppm(out / (stem.string() + ".ppm"), vqff::relevancy_to_rgb(r));
  } else {
    vqff::write_ppm(out / (stem.string() + ".ppm"), vqff::pca_visualize(map));
  }
  echo_config(out, "visualize", c, {});
}

struct CompareArgs {
  std::string manifest;
  std::vector<std::int64_t> patch_sizes{2, 4, 8, 12, 16, 20, 24, 32};
  std::vector<std::uint32_t> superpixel_grid{8192, 4096, 2048, 1024, 512, 256, 128, 64};
  std::uint32_t sample = 20;
};

void cmd_compare_local(const Common& c, const CompareArgs& a) {
  const auto out = require_out(c);
  if (a.patch_sizes.empty() && a.superpixel_grid.empty()) throw vqff::InvalidArgument("cli", "empty sweep grid");
  const auto m = vqff::load_manifest(a.manifest);
  m.validate();
  const std::size_t n = m.images.size();
  const std::size_t stride = std::max<std::size_t>(1, n / std::max<std::uint32_t>(1, a.sample));
  std::optional<vqff::FeatureMap> emb;
  if (m.ground_truth) emb = vqff::read_tensor(m.resolve(m.ground_truth->embeddings_path));

  struct Frame {
    std::vector<vqff::FeatureMap> maps;  // per scale
    std::optional<vqff::FeatureMap> clean;
    vqff::RgbImage rgb;
  };
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < n; i += stride) {
    Frame f;
    const auto& rec = m.images[i];
    for (auto sid : m.scale_ids) {
      f.maps.push_back(vqff::normalize_features(vqff::read_tensor(m.resolve(rec.feature_paths.at(sid)))).map);
    }
    if (emb) f.clean = clean_map(m, i, *emb);
    f.rgb = rec.rgb_path ? vqff::read_ppm(m.resolve(*rec.rgb_path)) : vqff::pca_visualize(f.maps[0]);
    frames.push_back(std::move(f));
  }

  struct Row {
    std::string method;
    std::int64_t param;
    double cells = 0, cos_orig = 0, cos_clean = 0;
  };
  std::vector<Row> rows;
  auto evaluate = [&](Row row, const auto& quantize) {
    std::size_t count = 0;
    for (const auto& f : frames) {
      for (const auto& map : f.maps) {
        const auto q = quantize(f, map);
        const auto rec = vqff::reconstruct_from_codebook(q.codebook.entries, map.dim, q.index_map);
        row.cells += double(q.codebook.size());
        row.cos_orig += vqff::cosine_fidelity(map, rec);
        if (f.clean) row.cos_clean += vqff::cosine_fidelity(*f.clean, rec);
        ++count;
      }
    }
    row.cells /= double(count);
    row.cos_orig /= double(count);
    row.cos_clean /= double(count);
    rows.push_back(row);
  };
  for (auto p : a.patch_sizes) {
    evaluate({"patch", p}, [&](const Frame&, const vqff::FeatureMap& map) { return vqff::quantize_patch(map, p); });
  }
  for (auto sp : a.superpixel_grid) {
    vqff::SlicParams sp_params = slic_params(c);
    std::vector<vqff::Segmentation> segs;
    for (const auto& f : frames) {
      // Grids written for large frames are clamped to one cell per pixel.
      sp_params.n_superpixels = std::min<std::uint32_t>(sp, std::uint32_t(f.rgb.pixels()));
      segs.push_back(vqff::slic_segment(f.rgb, sp_params));
    }
    evaluate({"superpixel", sp}, [&](const Frame& f, const vqff::FeatureMap& map) {
      const auto idx = static_cast<std::size_t>(&f - frames.data());
      return vqff::quantize_superpixel(map, segs[idx]);
    });
  }
  std::ostringstream csv;
  csv << "method,param,cells,cos_original" << (emb ? ",cos_clean" : "") << "\n";
  for (const auto& r : rows) {
    csv << r.method << "," << r.param << "," << fmt(r.cells) << "," << fmt(r.cos_orig);
    if (emb) csv << "," << fmt(r.cos_clean);
    csv << "\n";
  }
  write_text(out / "compare_local.csv", csv.str());
  echo_config(out, "compare-local", c,
              {{"patch_sizes", a.patch_sizes}, {"superpixel_grid", a.superpixel_grid}, {"sample", a.sample},
               {"stride", stride}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vector-quantized feature fields"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with option values; flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  Common c;
  app.add_option("--seed", c.seed, "Random seed");
  app.add_option("--alpha", c.alpha, "Global codebook ratio K / pooled rows");
  app.add_option("--batches", c.batches, "Number of image batches");
  app.add_option("--superpixels", c.superpixels, "Requested superpixels per image");
  app.add_option("--compactness", c.compactness, "SLIC compactness");
  app.add_option("--slic-iters", c.slic_iters, "SLIC iterations");
  app.add_option("--tau", c.tau, "Relevancy threshold");
  app.add_option("--threshold-frac", c.threshold_frac, "Minimum mask area fraction for frame selection");
  app.add_option("--threads", c.threads, "Worker threads: a count, or max (also 0) for hardware parallelism");
  app.add_option("--out", c.out, "Output directory");

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic scene");
  s_synth->add_option("--images", synth.spec.num_images);
  s_synth->add_option("--scales", synth.spec.num_scales);
  s_synth->add_option("--height", synth.spec.height);
  s_synth->add_option("--width", synth.spec.width);
  s_synth->add_option("--dim", synth.spec.dim);
  s_synth->add_option("--regions", synth.spec.num_regions);
  s_synth->add_option("--noise", synth.spec.noise_sigma);

  SegmentArgs seg;
  auto* s_seg = app.add_subcommand("segment", "SLIC superpixels of one image");
  s_seg->add_option("--image", seg.image)->required();

  BuildArgs build;
  auto* s_build = app.add_subcommand("build", "Build a feature field store from a scene manifest");
  s_build->add_option("--manifest", build.manifest)->required();
  s_build->add_option("--budget", build.budget, "default | unlimited | total codebook rows");
  s_build->add_option("--kmeans-iters", build.kmeans_iters);
  s_build->add_flag("--weighted", build.weighted, "Weight pooled rows by superpixel size");
  s_build->add_flag("--merge", build.merge, "Re-cluster the batch codebooks of each scale");

  StoreArgs stats;
  auto* s_stats = app.add_subcommand("stats", "Storage accounting of a store");
  s_stats->add_option("--store", stats.store)->required();

  QueryArgs query;
  auto* s_query = app.add_subcommand("query", "Relevancy maps and masks for every image");
  s_query->add_option("--store", query.store)->required();
  s_query->add_option("--query", query.query)->required();

  ReconstructArgs recon;
  auto* s_recon = app.add_subcommand("reconstruct", "Decode one feature map");
  s_recon->add_option("--store", recon.store)->required();
  s_recon->add_option("--image-id", recon.image_id)->required();
  s_recon->add_option("--scale", recon.scale);

  FidelityArgs fid;
  auto* s_fid = app.add_subcommand("fidelity", "Cosine fidelity of a store against its scene");
  s_fid->add_option("--store", fid.store)->required();
  s_fid->add_option("--manifest", fid.manifest)->required();

  ComposeArgs comp;
  auto* s_comp = app.add_subcommand("compose-edit", "Paste edited pixels inside a mask");
  s_comp->add_option("--original", comp.original)->required();
  s_comp->add_option("--edited", comp.edited)->required();
  s_comp->add_option("--mask", comp.mask)->required();

  SelectArgs sel;
  auto* s_sel = app.add_subcommand("select-frames", "Pick frames by mask area");
  s_sel->add_option("--masks", sel.masks, "Query output directory or a directory of PGM masks")->required();
  s_sel->add_option("--cap", sel.cap, "Frames per group");
  s_sel->add_option("--total-cap", sel.total_cap, "Frames in total");

  PrArgs pr;
  auto* s_pr = app.add_subcommand("pr-eval", "Precision/recall of max-relevancy locations");
  s_pr->add_option("--store", pr.store)->required();
  s_pr->add_option("--query", pr.query)->required();
  s_pr->add_option("--annotations", pr.annotations)->required();
  s_pr->add_option("--steps", pr.steps, "Threshold grid resolution");

  VisualizeArgs vis;
  auto* s_vis = app.add_subcommand("visualize", "Render a feature or relevancy tensor");
  s_vis->add_option("--features", vis.features)->required();

  CompareArgs cmp;
  auto* s_cmp = app.add_subcommand("compare-local", "Patch versus superpixel local quantization sweep");
  s_cmp->add_option("--manifest", cmp.manifest)->required();
  s_cmp->add_option("--patch-sizes", cmp.patch_sizes)->delimiter(',');
  s_cmp->add_option("--superpixel-grid", cmp.superpixel_grid)->delimiter(',');
  s_cmp->add_option("--sample", cmp.sample, "Target number of sampled images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: cli: " << msg << "\n";
    return 2;
  }

  try {
    vqff::set_thread_count(parse_threads(c.threads));
    if (*s_synth) cmd_synth(c, synth);
    if (*s_seg) cmd_segment(c, seg);
    if (*s_build) cmd_build(c, build);
    if (*s_stats) cmd_stats(c, stats);
    if (*s_query) cmd_query(c, query);
    if (*s_recon) cmd_reconstruct(c, recon);
    if (*s_fid) cmd_fidelity(c, fid);
    if (*s_comp) cmd_compose_edit(c, comp);
    if (*s_sel) cmd_select_frames(c, sel);
    if (*s_pr) cmd_pr_eval(c, pr);
    if (*s_vis) cmd_visualize(c, vis);
    if (*s_cmp) cmd_compare_local(c, cmp);
  } catch (const vqff::Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << e.module() << ": " << msg << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: cli: " << msg << "\n";
    return 1;
  }
  return 0;
}
