#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace hseg {

/// Decoder hyper-parameters. Defaults follow the reference architecture:
/// 256-d tokens, 32-d attention, 8-bit codes, two layers.
struct DecoderConfig {
  std::size_t height = 512;
  std::size_t width = 512;
  std::size_t dim = 256;
  std::size_t attn_dim = 32;
  std::size_t code_bits = 8;
  std::size_t experts = 4;
  std::size_t layers = 2;
  std::size_t heads = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  float canny_lo = 50.0f;
  float canny_hi = 150.0f;

  std::size_t grid_h() const noexcept { return height / 16; }
  std::size_t grid_w() const noexcept { return width / 16; }
  std::size_t tokens() const noexcept { return grid_h() * grid_w(); }

  // Throws InputError describing the first violated constraint.
  void validate() const;

  bool operator==(const DecoderConfig&) const = default;
};

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// skipped; unknown keys and malformed values raise FormatError with the
/// byte offset of the offending line.
DecoderConfig parse_config(std::string_view text);
DecoderConfig load_config(const std::filesystem::path& path);
std::string format_config(const DecoderConfig& cfg);

}  // namespace hseg
