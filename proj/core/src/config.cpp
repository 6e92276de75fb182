#include "hseg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "hseg/error.hpp"

namespace hseg {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, std::size_t offset) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw FormatError("config: bad value '" + std::string(value) + "' for key '" +
                          std::string(key) + "'",
                      offset);
  }
  return out;
}

}  // namespace

void DecoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InputError("config: " + msg); };
  if (height == 0 || width == 0 || height % 16 != 0 || width % 16 != 0)
    fail("height and width must be positive multiples of 16");
  if (dim == 0) fail("dim must be positive");
  if (code_bits == 0 || code_bits > 16) fail("code_bits must be in 1..16");
  if (heads == 0 || attn_dim % heads != 0) fail("attn_dim must be divisible by heads");
  if (attn_dim == 0 || (attn_dim / heads) % 4 != 0)
    fail("per-head attention width must be a positive multiple of 4");
  if (experts == 0) fail("experts must be at least 1");
  if (layers == 0) fail("layers must be at least 1");
  if (threads == 0) fail("threads must be at least 1");
  if (!(canny_lo > 0.0f) || !(canny_hi > canny_lo)) fail("need canny_hi > canny_lo > 0");
}

DecoderConfig parse_config(std::string_view text) {
  DecoderConfig cfg;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string_view line = trim(text.substr(pos, eol - pos));
    const std::size_t offset = pos;
    pos = eol + 1;
    if (line.empty() || line.front() == '#') continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError("config: expected key=value", offset);
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    using Sz = std::size_t;
    if (key == "height") cfg.height = parse_number<Sz>(key, value, offset);
    else if (key == "width") cfg.width = parse_number<Sz>(key, value, offset);
    else if (key == "dim") cfg.dim = parse_number<Sz>(key, value, offset);
    else if (key == "attn_dim") cfg.attn_dim = parse_number<Sz>(key, value, offset);
    else if (key == "code_bits") cfg.code_bits = parse_number<Sz>(key, value, offset);
    else if (key == "experts") cfg.experts = parse_number<Sz>(key, value, offset);
    else if (key == "layers") cfg.layers = parse_number<Sz>(key, value, offset);
    else if (key == "heads") cfg.heads = parse_number<Sz>(key, value, offset);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value, offset);
    else if (key == "threads") cfg.threads = parse_number<Sz>(key, value, offset);
    else if (key == "canny_lo") cfg.canny_lo = parse_number<float>(key, value, offset);
    else if (key == "canny_hi") cfg.canny_hi = parse_number<float>(key, value, offset);
    else throw FormatError("config: unknown key '" + std::string(key) + "'", offset);
  }
  cfg.validate();
  return cfg;
}

DecoderConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const DecoderConfig& c) {
  std::ostringstream os;
  os << "height = " << c.height << "\nwidth = " << c.width << "\ndim = " << c.dim
     << "\nattn_dim = " << c.attn_dim << "\ncode_bits = " << c.code_bits
     << "\nexperts = " << c.experts << "\nlayers = " << c.layers << "\nheads = " << c.heads
     << "\nseed = " << c.seed << "\nthreads = " << c.threads << "\ncanny_lo = " << c.canny_lo
     << "\ncanny_hi = " << c.canny_hi << "\n";
  return os.str();
}

}  // namespace hseg
