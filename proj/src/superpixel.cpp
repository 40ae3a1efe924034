// SPDX-License-Identifier: Apache-2.0
#include "vqff/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "vqff/error.hpp"

namespace vqff {
namespace {

constexpr const char* kModule = "superpixel";
constexpr std::uint32_t kSegVersion = 1;

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3 * delta * delta) + 4.0 / 29.0;
}

struct Center {
  double l, a, b, y, x;
};

/// 4-connected components; ids assigned in raster order of first pixel.
struct Components {
  std::vector<std::uint32_t> id;
  std::vector<std::uint32_t> label;
  std::vector<std::uint64_t> size;
};

Components label_components(const std::vector<std::uint32_t>& labels, std::uint32_t H,
                            std::uint32_t W) {
  constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
  Components c;
  c.id.assign(labels.size(), kUnset);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < labels.size(); ++start) {
    if (c.id[start] != kUnset) continue;
    const auto cid = static_cast<std::uint32_t>(c.size.size());
    const auto lab = labels[start];
    std::uint64_t count = 0;
    c.id[start] = cid;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++count;
      const std::size_t y = p / W, x = p % W;
      auto visit = [&](std::size_t q) {
        if (c.id[q] == kUnset && labels[q] == lab) {
          c.id[q] = cid;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < W) visit(p + 1);
      if (y > 0) visit(p - W);
      if (y + 1 < H) visit(p + W);
    }
    c.label.push_back(lab);
    c.size.push_back(count);
  }
  return c;
}

// Every label keeps its largest component; the others merge into the adjacent
// label with the most pixels. Repeats until each label is connected.
void enforce_connectivity(std::vector<std::uint32_t>& labels, std::uint32_t H, std::uint32_t W,
                          std::uint32_t num_labels) {
  for (;;) {
    const Components comps = label_components(labels, H, W);
    std::vector<std::int64_t> keeper(num_labels, -1);
    for (std::uint32_t c = 0; c < comps.size.size(); ++c) {
      auto& k = keeper[comps.label[c]];
      if (k < 0 || comps.size[c] > comps.size[static_cast<std::size_t>(k)]) k = c;
    }
    std::vector<std::vector<std::size_t>> orphan_pixels(comps.size.size());
    bool any = false;
    for (std::size_t p = 0; p < labels.size(); ++p) {
      const auto c = comps.id[p];
      if (keeper[comps.label[c]] != static_cast<std::int64_t>(c)) {
        orphan_pixels[c].push_back(p);
        any = true;
      }
    }
    if (!any) return;

    std::vector<std::uint64_t> label_size(num_labels, 0);
    for (auto l : labels) ++label_size[l];
    for (std::uint32_t c = 0; c < orphan_pixels.size(); ++c) {
      const auto& pix = orphan_pixels[c];
      if (pix.empty()) continue;
      const auto own = labels[pix.front()];
      std::int64_t target = -1;
      auto consider = [&](std::size_t q) {
        const auto l = labels[q];
        if (l == own) return;
        if (target < 0 || label_size[l] > label_size[static_cast<std::size_t>(target)] ||
            (label_size[l] == label_size[static_cast<std::size_t>(target)] && l < target)) {
          target = l;
        }
      };
      for (const std::size_t p : pix) {
        const std::size_t y = p / W, x = p % W;
        if (x > 0) consider(p - 1);
        if (x + 1 < W) consider(p + 1);
        if (y > 0) consider(p - W);
        if (y + 1 < H) consider(p + W);
      }
      if (target < 0) continue;
      for (const std::size_t p : pix) labels[p] = static_cast<std::uint32_t>(target);
      label_size[own] -= pix.size();
      label_size[static_cast<std::size_t>(target)] += pix.size();
    }
  }
}

}  // namespace

std::vector<double> rgb_to_lab(const RgbImage& image) {
  // sRGB D65 -> XYZ -> CIELAB
  std::vector<double> lab(image.pixels() * 3);
  constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
  for (std::size_t i = 0; i < image.pixels(); ++i) {
    const double r = srgb_to_linear(image.rgb[i * 3] / 255.0);
    const double g = srgb_to_linear(image.rgb[i * 3 + 1] / 255.0);
    const double b = srgb_to_linear(image.rgb[i * 3 + 2] / 255.0);
    const double X = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const double Y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double Z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    const double fx = lab_f(X / xn), fy = lab_f(Y / yn), fz = lab_f(Z / zn);
    lab[i * 3] = 116.0 * fy - 16.0;
    lab[i * 3 + 1] = 500.0 * (fx - fy);
    lab[i * 3 + 2] = 200.0 * (fy - fz);
  }
  return lab;
}

Segmentation slic_segment(const RgbImage& image, const SlicParams& params) {
  const std::uint32_t H = image.height, W = image.width;
  const std::size_t N = image.pixels();
  if (N == 0 || image.rgb.size() != N * 3) throw InvalidArgument(kModule, "empty or malformed image");
  if (params.n_superpixels < 1 || params.n_superpixels > N) {
    throw InvalidArgument(kModule, "n_superpixels must lie in [1, H*W]");
  }
  if (params.max_iters < 1) throw InvalidArgument(kModule, "max_iters must be >= 1");
  if (!(params.compactness >= 0.0)) throw InvalidArgument(kModule, "compactness must be >= 0");

  const auto lab = rgb_to_lab(image);
  const double g = std::sqrt(static_cast<double>(N) / params.n_superpixels);
  const auto ny = std::clamp<std::uint32_t>(static_cast<std::uint32_t>(std::lround(H / g)), 1, H);
  const auto nx = std::clamp<std::uint32_t>(static_cast<std::uint32_t>(std::lround(W / g)), 1, W);
  const double step_y = static_cast<double>(H) / ny, step_x = static_cast<double>(W) / nx;

  auto gradient = [&](std::int64_t y, std::int64_t x) {
    auto at = [&](std::int64_t yy, std::int64_t xx) {
      yy = std::clamp<std::int64_t>(yy, 0, H - 1);
      xx = std::clamp<std::int64_t>(xx, 0, W - 1);
      return &lab[(std::size_t(yy) * W + std::size_t(xx)) * 3];
    };
    double s = 0.0;
    const double *l = at(y, x - 1), *r = at(y, x + 1), *u = at(y - 1, x), *d = at(y + 1, x);
    for (int c = 0; c < 3; ++c) s += (r[c] - l[c]) * (r[c] - l[c]) + (d[c] - u[c]) * (d[c] - u[c]);
    return s;
  };

  std::vector<Center> centers;
  centers.reserve(std::size_t{nx} * ny);
  for (std::uint32_t j = 0; j < ny; ++j) {
    for (std::uint32_t i = 0; i < nx; ++i) {
      std::int64_t cy = static_cast<std::int64_t>((j + 0.5) * step_y);
      std::int64_t cx = static_cast<std::int64_t>((i + 0.5) * step_x);
      // Perturbing on a grid finer than 3 px could stack two seeds on one pixel.
      if (step_x >= 3.0 && step_y >= 3.0) {
        double best = gradient(cy, cx);
        std::int64_t by = cy, bx = cx;
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          for (std::int64_t dx = -1; dx <= 1; ++dx) {
            const std::int64_t yy = cy + dy, xx = cx + dx;
            if (yy < 0 || xx < 0 || yy >= H || xx >= W) continue;
            const double gr = gradient(yy, xx);
            if (gr < best) best = gr, by = yy, bx = xx;
          }
        }
        cy = by, cx = bx;
      }
      const double* p = &lab[(std::size_t(cy) * W + std::size_t(cx)) * 3];
      centers.push_back({p[0], p[1], p[2], double(cy), double(cx)});
    }
  }

  const auto K = static_cast<std::uint32_t>(centers.size());
  const double spatial_weight = params.compactness / g;
  const auto reach = static_cast<std::int64_t>(std::ceil(std::max(step_x, step_y)));
  constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> labels(N, kNone), previous;
  std::vector<double> dist(N);

  for (std::uint32_t iter = 0; iter < params.max_iters; ++iter) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(labels.begin(), labels.end(), kNone);
    for (std::uint32_t k = 0; k < K; ++k) {
      const Center& c = centers[k];
      const auto cy = static_cast<std::int64_t>(std::lround(c.y));
      const auto cx = static_cast<std::int64_t>(std::lround(c.x));
      const std::int64_t y0 = std::max<std::int64_t>(0, cy - reach);
      const std::int64_t y1 = std::min<std::int64_t>(H - 1, cy + reach);
      const std::int64_t x0 = std::max<std::int64_t>(0, cx - reach);
      const std::int64_t x1 = std::min<std::int64_t>(W - 1, cx + reach);
      for (std::int64_t y = y0; y <= y1; ++y) {
        for (std::int64_t x = x0; x <= x1; ++x) {
          const std::size_t p = std::size_t(y) * W + std::size_t(x);
          const double* v = &lab[p * 3];
          const double dl = v[0] - c.l, da = v[1] - c.a, db = v[2] - c.b;
          const double dy = y - c.y, dx = x - c.x;
          const double d = std::sqrt(dl * dl + da * da + db * db) +
                           spatial_weight * std::sqrt(dy * dy + dx * dx);
          if (d < dist[p]) dist[p] = d, labels[p] = k;
        }
      }
    }
    // Pixels outside every window (only possible with drifting centers) take
    // the spatially nearest center.
    for (std::size_t p = 0; p < N; ++p) {
      if (labels[p] != kNone) continue;
      const double y = double(p / W), x = double(p % W);
      double best = std::numeric_limits<double>::infinity();
      for (std::uint32_t k = 0; k < K; ++k) {
        const double d = (centers[k].y - y) * (centers[k].y - y) + (centers[k].x - x) * (centers[k].x - x);
        if (d < best) best = d, labels[p] = k;
      }
    }

    if (labels == previous) break;
    previous = labels;

    std::vector<Center> sums(K, Center{0, 0, 0, 0, 0});
    std::vector<std::uint64_t> counts(K, 0);
    for (std::size_t p = 0; p < N; ++p) {
      Center& s = sums[labels[p]];
      s.l += lab[p * 3], s.a += lab[p * 3 + 1], s.b += lab[p * 3 + 2];
      s.y += double(p / W), s.x += double(p % W);
      ++counts[labels[p]];
    }
    for (std::uint32_t k = 0; k < K; ++k) {
      if (counts[k] == 0) continue;
      const double n = double(counts[k]);
      centers[k] = {sums[k].l / n, sums[k].a / n, sums[k].b / n, sums[k].y / n, sums[k].x / n};
    }
  }

  enforce_connectivity(labels, H, W, K);

  // Compact relabel in raster order of first appearance.
  std::vector<std::uint32_t> remap(K, kNone);
  std::uint32_t next = 0;
  for (auto& l : labels) {
    if (remap[l] == kNone) remap[l] = next++;
    l = remap[l];
  }

  Segmentation seg;
  seg.height = H;
  seg.width = W;
  seg.labels = std::move(labels);
  seg.num_segments = next;
  seg.compactness = params.compactness;
  seg.requested = params.n_superpixels;
  return seg;
}

SegmentStats segment_stats(const Segmentation& seg) {
  SegmentStats st;
  st.sizes.assign(seg.num_segments, 0);
  const std::uint32_t H = seg.height, W = seg.width;
  for (std::size_t p = 0; p < seg.labels.size(); ++p) {
    ++st.sizes.at(seg.labels[p]);
    const std::size_t y = p / W, x = p % W;
    const auto l = seg.labels[p];
    if ((x > 0 && seg.labels[p - 1] != l) || (x + 1 < W && seg.labels[p + 1] != l) ||
        (y > 0 && seg.labels[p - W] != l) || (y + 1 < H && seg.labels[p + W] != l)) {
      ++st.boundary_pixels;
    }
  }
  return st;
}

void validate_segmentation(const Segmentation& seg) {
  if (seg.labels.size() != seg.pixels()) throw InvalidArgument(kModule, "label count does not match H*W");
  std::vector<std::uint8_t> used(seg.num_segments, 0);
  for (auto l : seg.labels) {
    if (l >= seg.num_segments) throw InvalidArgument(kModule, "label out of range");
    used[l] = 1;
  }
  if (std::find(used.begin(), used.end(), 0) != used.end()) {
    throw InvalidArgument(kModule, "unused label in [0, num_segments)");
  }
  const auto comps = label_components(seg.labels, seg.height, seg.width);
  if (comps.size.size() != seg.num_segments) throw InvalidArgument(kModule, "a segment is not 4-connected");
}

void save_segmentation(const std::filesystem::path& path, const Segmentation& seg) {
  detail::ByteWriter w;
  w.magic("VQFS");
  w.put<std::uint32_t>(kSegVersion);
  w.put<std::uint32_t>(seg.height);
  w.put<std::uint32_t>(seg.width);
  w.put<std::uint32_t>(seg.num_segments);
  w.put_array<std::uint32_t>(seg.labels);
  detail::write_file(path, w.bytes(), kModule);
}

Segmentation load_segmentation(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path, kModule);
  detail::ByteReader r(bytes, kModule);
  r.expect_magic("VQFS");
  if (r.get<std::uint32_t>("version") != kSegVersion) throw FormatError(kModule, "unsupported VQFS version", 4);
  Segmentation seg;
  seg.height = r.get<std::uint32_t>("height");
  seg.width = r.get<std::uint32_t>("width");
  seg.num_segments = r.get<std::uint32_t>("num_segments");
  const std::uint64_t n = std::uint64_t{seg.height} * seg.width;
  r.need(n * 4, "labels");
  seg.labels.resize(n);
  r.get_array<std::uint32_t>(seg.labels, "labels");
  for (std::size_t i = 0; i < seg.labels.size(); ++i) {
    if (seg.labels[i] >= seg.num_segments) {
      throw FormatError(kModule, path.string() + ": label out of range", static_cast<std::int64_t>(20 + i * 4));
    }
  }
  seg.requested = seg.num_segments;
  return seg;
}

}  // namespace vqff
