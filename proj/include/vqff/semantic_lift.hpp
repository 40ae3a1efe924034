// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vqff/feature_io.hpp"
#include "vqff/image.hpp"
#include "vqff/query.hpp"

namespace vqff {

/// Zeroes every pixel outside the mask.
RgbImage apply_bitmask(const RgbImage& image, const Mask& mask);
FeatureMap apply_bitmask(const FeatureMap& map, const Mask& mask);

/// Edited pixels where the mask is set, original pixels elsewhere.
RgbImage compose_edit(const RgbImage& original, const RgbImage& edited, const Mask& mask);

/// |m_i| > P per mask. When `fraction` is set it wins and P becomes
/// fraction * H * W for each mask.
std::vector<bool> frame_relevance_filter(std::span<const Mask> masks, std::uint64_t min_pixels,
                                         std::optional<double> fraction = std::nullopt);

struct SelectionParams {
  double rel_threshold = 0.10;
  std::uint32_t cap_per_group = 25;
  std::uint32_t total_cap = 50;
};

enum class FrameGroup { kDropped, kTop, kBottom };

struct FrameSelection {
  std::vector<std::size_t> selected;       // frame positions, ascending
  std::vector<std::string> selected_ids;
  std::vector<double> areas;               // mask area fraction of every frame
  std::vector<FrameGroup> groups;          // every frame
  SelectionParams params;
};

/// Drops frames below the area threshold, splits the survivors into the
/// larger-area and smaller-area halves (the top half takes the odd frame; equal
/// areas keep sequence order), and samples each half in sequence order with
/// stride ceil(size / cap) from its first frame. If both halves together
/// exceed total_cap, the top half is kept first.
FrameSelection select_frames(std::span<const Mask> masks, const SelectionParams& params = {});

std::string selection_to_json(const FrameSelection& selection);

/// One lifting input: payload, camera pose and mask.
struct LiftView {
  std::string image_id;
  std::variant<RgbImage, FeatureMap> payload;
  std::array<float, 16> pose{};
  Mask mask;
};

/// Writes masked payloads (PPM or VQFT), the masks (PGM) and lift.json with
/// {image_id, pose, mask_path, payload_path} per view. Returns lift.json.
std::filesystem::path lift_passthrough(std::span<const LiftView> views, const std::filesystem::path& dir);

/// Reads an archive written by lift_passthrough.
std::vector<LiftView> load_lift_archive(const std::filesystem::path& dir);

}  // namespace vqff
