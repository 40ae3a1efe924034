// SPDX-License-Identifier: Apache-2.0
#include "vqff/semantic_lift.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "binary_io.hpp"
#include "vqff/error.hpp"
#include "vqff/parallel.hpp"

namespace vqff {
namespace {

constexpr const char* kModule = "semantic_lift";

void check_shape(std::uint32_t h, std::uint32_t w, const Mask& mask) {
  if (mask.height != h || mask.width != w || mask.bits.size() != std::size_t{h} * w) {
    throw InvalidArgument(kModule, "mask and payload sizes differ");
  }
}

std::vector<std::size_t> stride_sample(const std::vector<std::size_t>& group, std::uint32_t cap) {
  std::vector<std::size_t> out;
  if (group.empty() || cap == 0) return out;
  const std::size_t stride = (group.size() + cap - 1) / cap;
  for (std::size_t i = 0; i < group.size() && out.size() < cap; i += stride) out.push_back(group[i]);
  return out;
}

const char* group_name(FrameGroup g) {
  switch (g) {
    case FrameGroup::kTop:
      return "top";
    case FrameGroup::kBottom:
      return "bottom";
    default:
      return "dropped";
  }
}

}  // namespace

RgbImage apply_bitmask(const RgbImage& image, const Mask& mask) {
  check_shape(image.height, image.width, mask);
  RgbImage out = image;
  for (std::size_t p = 0; p < mask.bits.size(); ++p) {
    if (!mask.bits[p]) std::fill_n(out.rgb.begin() + 3 * p, 3, std::uint8_t{0});
  }
  return out;
}

FeatureMap apply_bitmask(const FeatureMap& map, const Mask& mask) {
  check_shape(map.height, map.width, mask);
  FeatureMap out = map;
  for (std::size_t p = 0; p < mask.bits.size(); ++p) {
    if (!mask.bits[p]) std::fill_n(out.pixel(p).begin(), out.dim, 0.0f);
  }
  return out;
}

RgbImage compose_edit(const RgbImage& original, const RgbImage& edited, const Mask& mask) {
  if (original.height != edited.height || original.width != edited.width) {
    throw InvalidArgument(kModule, "original and edited sizes differ");
  }
  check_shape(original.height, original.width, mask);
  RgbImage out = original;
  for (std::size_t p = 0; p < mask.bits.size(); ++p) {
    if (mask.bits[p]) std::copy_n(edited.rgb.begin() + 3 * p, 3, out.rgb.begin() + 3 * p);
  }
  return out;
}

std::vector<bool> frame_relevance_filter(std::span<const Mask> masks, std::uint64_t min_pixels,
                                         std::optional<double> fraction) {
  if (fraction && !(*fraction >= 0.0 && *fraction <= 1.0)) {
    throw InvalidArgument(kModule, "area fraction must lie in [0, 1]");
  }
  std::vector<bool> out;
  out.reserve(masks.size());
  for (const auto& m : masks) {
    if (fraction) {
      out.push_back(double(m.pixel_count) > *fraction * double(m.pixels()));
    } else {
      out.push_back(m.pixel_count > min_pixels);
    }
  }
  return out;
}

FrameSelection select_frames(std::span<const Mask> masks, const SelectionParams& params) {
  if (!(params.rel_threshold >= 0.0 && params.rel_threshold <= 1.0)) {
    throw InvalidArgument(kModule, "relevance threshold must lie in [0, 1]");
  }
  FrameSelection sel;
  sel.params = params;
  sel.groups.assign(masks.size(), FrameGroup::kDropped);
  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const double px = double(masks[i].pixels());
    sel.areas.push_back(px > 0 ? double(masks[i].pixel_count) / px : 0.0);
    if (sel.areas[i] >= params.rel_threshold) survivors.push_back(i);
  }

  std::vector<std::size_t> by_area = survivors;
  std::stable_sort(by_area.begin(), by_area.end(),
                   [&](std::size_t a, std::size_t b) { return sel.areas[a] > sel.areas[b]; });
  const std::size_t top_size = (by_area.size() + 1) / 2;
  std::vector<std::size_t> top(by_area.begin(), by_area.begin() + top_size);
  std::vector<std::size_t> bottom(by_area.begin() + top_size, by_area.end());
  std::sort(top.begin(), top.end());
  std::sort(bottom.begin(), bottom.end());
  for (auto i : top) sel.groups[i] = FrameGroup::kTop;
  for (auto i : bottom) sel.groups[i] = FrameGroup::kBottom;

  auto picked = stride_sample(top, params.cap_per_group);
  if (picked.size() > params.total_cap) picked.resize(params.total_cap);
  auto rest = stride_sample(bottom, params.cap_per_group);
  const std::size_t room = params.total_cap - picked.size();
  if (rest.size() > room) rest.resize(room);
  picked.insert(picked.end(), rest.begin(), rest.end());
  std::sort(picked.begin(), picked.end());

  sel.selected = std::move(picked);
  for (auto i : sel.selected) sel.selected_ids.push_back(masks[i].image_id);
  return sel;
}

std::string selection_to_json(const FrameSelection& selection) {
  nlohmann::json j;
  j["selected"] = selection.selected_ids;
  j["selected_positions"] = selection.selected;
  j["areas"] = selection.areas;
  nlohmann::json groups = nlohmann::json::array();
  for (auto g : selection.groups) groups.push_back(group_name(g));
  j["groups"] = groups;
  j["params"] = {{"rel_threshold", selection.params.rel_threshold},
                 {"cap_per_group", selection.params.cap_per_group},
                 {"total_cap", selection.params.total_cap}};
  return j.dump(2) + "\n";
}

std::filesystem::path lift_passthrough(std::span<const LiftView> views, const std::filesystem::path& dir) {
  std::vector<nlohmann::json> records(views.size());
  parallel_for(views.size(), [&](std::size_t v0, std::size_t v1) {
    for (std::size_t v = v0; v < v1; ++v) {
      const auto& view = views[v];
      const std::string mask_path = "masks/" + view.image_id + ".pgm";
      std::string payload_path;
      if (const auto* rgb = std::get_if<RgbImage>(&view.payload)) {
        payload_path = "payload/" + view.image_id + ".ppm";
        write_ppm(dir / payload_path, apply_bitmask(*rgb, view.mask));
      } else {
        payload_path = "payload/" + view.image_id + ".vqft";
        write_tensor(dir / payload_path, apply_bitmask(std::get<FeatureMap>(view.payload), view.mask));
      }
      save_mask(dir / mask_path, view.mask);
      records[v] = {{"image_id", view.image_id},
                    {"pose", view.pose},
                    {"mask_path", mask_path},
                    {"payload_path", payload_path},
                    {"mask_pixels", view.mask.pixel_count}};
    }
  });
  nlohmann::json j;
  j["format"] = "vqff-lift";
  j["version"] = 1;
  j["views"] = records;
  const std::string text = j.dump(2) + "\n";
  const auto path = dir / "lift.json";
  detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), kModule);
  return path;
}

std::vector<LiftView> load_lift_archive(const std::filesystem::path& dir) {
  const auto path = dir / "lift.json";
  const auto bytes = detail::read_file(path, kModule);
  std::vector<LiftView> out;
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    if (j.at("format") != "vqff-lift") throw FormatError(kModule, path.string() + ": not a lift archive");
    for (const auto& rec : j.at("views")) {
      LiftView v;
      v.image_id = rec.at("image_id").get<std::string>();
      v.pose = rec.at("pose").get<std::array<float, 16>>();
      v.mask = load_mask(dir / rec.at("mask_path").get<std::string>(), v.image_id);
      const auto payload = dir / rec.at("payload_path").get<std::string>();
      if (payload.extension() == ".ppm") {
        v.payload = read_ppm(payload);
      } else {
        v.payload = read_tensor(payload);
      }
      out.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(kModule, path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace vqff
