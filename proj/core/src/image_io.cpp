#include "hseg/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "hseg/error.hpp"

namespace hseg::io {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::string& header,
          const std::uint8_t* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw InputError("short write to " + path.string());
}

// Netpbm header: magic, width, height, maxval, then exactly one whitespace byte.
struct PnmHeader {
  std::size_t width = 0, height = 0, maxval = 0, data_offset = 0;
};

PnmHeader parse_header(const std::vector<std::uint8_t>& buf, const char* magic) {
  if (buf.size() < 2 || buf[0] != magic[0] || buf[1] != magic[1]) {
    throw FormatError(std::string("expected netpbm magic ") + magic, 0);
  }
  std::size_t pos = 2;
  auto next_number = [&]() -> std::size_t {
    for (;;) {
      while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
      if (pos < buf.size() && buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= buf.size() || !std::isdigit(buf[pos])) {
      throw FormatError("expected decimal header field", pos);
    }
    std::size_t v = 0;
    while (pos < buf.size() && std::isdigit(buf[pos])) {
      v = v * 10 + static_cast<std::size_t>(buf[pos] - '0');
      if (v > (1u << 24)) throw FormatError("header field too large", pos);
      ++pos;
    }
    return v;
  };
  PnmHeader h;
  h.width = next_number();
  h.height = next_number();
  h.maxval = next_number();
  if (pos >= buf.size() || !std::isspace(buf[pos])) {
    throw FormatError("missing whitespace after header", pos);
  }
  h.data_offset = pos + 1;
  if (h.width == 0 || h.height == 0) throw FormatError("zero image extent", h.data_offset);
  if (h.maxval == 0 || h.maxval > 255) {
    throw FormatError("only 8-bit netpbm files are supported", h.data_offset);
  }
  return h;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  const PnmHeader h = parse_header(buf, "P5");
  const std::size_t n = h.width * h.height;
  if (buf.size() < h.data_offset + n) throw FormatError("truncated PGM raster", buf.size());
  GrayImage img;
  img.width = h.width;
  img.height = h.height;
  img.maxval = static_cast<std::uint16_t>(h.maxval);
  img.pixels.assign(buf.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                    buf.begin() + static_cast<std::ptrdiff_t>(h.data_offset + n));
  for (std::size_t i = 0; i < n; ++i) {
    if (img.pixels[i] > img.maxval) {
      throw FormatError("pixel exceeds maxval", h.data_offset + i);
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  if (img.pixels.size() != img.width * img.height) {
    throw DimensionError("write_pgm: pixel count mismatch");
  }
  const std::string header = "P5\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n" + std::to_string(img.maxval) +
                             "\n";
  dump(path, header, img.pixels.data(), img.pixels.size());
}

Tensor read_ppm(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  const PnmHeader h = parse_header(buf, "P6");
  const std::size_t n = h.width * h.height;
  if (buf.size() < h.data_offset + 3 * n) throw FormatError("truncated PPM raster", buf.size());
  const float scale = 255.0f / static_cast<float>(h.maxval);
  Tensor rgb({3, h.height, h.width});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      rgb[c * n + i] = static_cast<float>(buf[h.data_offset + 3 * i + c]) * scale;
    }
  }
  return rgb;
}

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw DimensionError("write_ppm expects [3 x H x W]");
  const std::size_t hgt = rgb.dim(1), wid = rgb.dim(2), n = hgt * wid;
  std::vector<std::uint8_t> raster(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(std::round(rgb[c * n + i]), 0.0f, 255.0f);
      raster[3 * i + c] = static_cast<std::uint8_t>(v);
    }
  }
  const std::string header =
      "P6\n" + std::to_string(wid) + " " + std::to_string(hgt) + "\n255\n";
  dump(path, header, raster.data(), raster.size());
}

Tensor read_mask_pgm(const std::filesystem::path& path) {
  const GrayImage img = read_pgm(path);
  Tensor m({img.height, img.width});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) m[i] = img.pixels[i] ? 1.0f : 0.0f;
  return m;
}

void write_mask_pgm(const std::filesystem::path& path, const Tensor& mask) {
  if (mask.rank() != 2) throw DimensionError("write_mask_pgm expects [H x W]");
  GrayImage img{mask.dim(0), mask.dim(1), 255, std::vector<std::uint8_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask[i] > 0.5f ? 255 : 0;
  write_pgm(path, img);
}

void write_logits_pgm(const std::filesystem::path& path, const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("write_logits_pgm expects [H x W]");
  GrayImage img{logits.dim(0), logits.dim(1), 255, std::vector<std::uint8_t>(logits.size())};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const float p = 1.0f / (1.0f + std::exp(-logits[i]));
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(p * 255.0f));
  }
  write_pgm(path, img);
}

void write_f32_blob(const std::filesystem::path& path, const Tensor& t) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  dump(path, {}, reinterpret_cast<const std::uint8_t*>(t.data()), t.size() * sizeof(float));
}

std::vector<float> read_f32_blob(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  if (buf.size() % sizeof(float) != 0) {
    throw FormatError("blob length is not a multiple of 4", buf.size());
  }
  std::vector<float> out(buf.size() / sizeof(float));
  std::memcpy(out.data(), buf.data(), buf.size());
  return out;
}

}  // namespace hseg::io
