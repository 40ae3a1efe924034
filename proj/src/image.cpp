// SPDX-License-Identifier: Apache-2.0
#include "vqff/image.hpp"

#include <cctype>
#include <string>

#include "binary_io.hpp"

namespace vqff {
namespace {

constexpr const char* kModule = "image_io";

struct NetpbmHeader {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::size_t payload_offset = 0;
};

// Parses "P5"/"P6" headers including '#' comments.
NetpbmHeader parse_header(const std::vector<std::uint8_t>& bytes, const char* magic) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
    throw FormatError(kModule, std::string("expected netpbm magic ") + magic, 0);
  }
  std::size_t pos = 2;
  auto next_number = [&]() -> std::uint64_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      throw FormatError(kModule, "malformed netpbm header", static_cast<std::int64_t>(pos));
    }
    std::uint64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 0xFFFFFFFFull) throw FormatError(kModule, "header value overflow", pos);
      ++pos;
    }
    return v;
  };
  NetpbmHeader h;
  h.width = static_cast<std::uint32_t>(next_number());
  h.height = static_cast<std::uint32_t>(next_number());
  const auto maxval = next_number();
  if (maxval != 255) throw FormatError(kModule, "only maxval 255 is supported", pos);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError(kModule, "missing header terminator", static_cast<std::int64_t>(pos));
  }
  h.payload_offset = pos + 1;
  return h;
}

void write_netpbm(const std::filesystem::path& path, const char* magic, std::uint32_t w,
                  std::uint32_t h, const std::vector<std::uint8_t>& payload) {
  const std::string header =
      std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  detail::write_file(path, bytes, kModule);
}

}  // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path, kModule);
  const auto h = parse_header(bytes, "P6");
  RgbImage img(h.height, h.width);
  if (bytes.size() - h.payload_offset < img.rgb.size()) {
    throw FormatError(kModule, "truncated PPM payload in " + path.string(),
                      static_cast<std::int64_t>(h.payload_offset));
  }
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), img.rgb.size(),
              img.rgb.begin());
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  write_netpbm(path, "P6", image.width, image.height, image.rgb);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path, kModule);
  const auto h = parse_header(bytes, "P5");
  GrayImage img{h.height, h.width, std::vector<std::uint8_t>(std::size_t{h.height} * h.width)};
  if (bytes.size() - h.payload_offset < img.values.size()) {
    throw FormatError(kModule, "truncated PGM payload in " + path.string(),
                      static_cast<std::int64_t>(h.payload_offset));
  }
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), img.values.size(),
              img.values.begin());
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  write_netpbm(path, "P5", image.width, image.height, image.values);
}

}  // namespace vqff
