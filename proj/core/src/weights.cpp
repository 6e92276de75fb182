#include "hseg/weights.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "hseg/error.hpp"

namespace hseg {

static_assert(std::endian::native == std::endian::little,
              "weight files are read and written with native little-endian layout");

namespace {

constexpr char kMagic[4] = {'I', '2', 'F', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string layer_prefix(std::size_t l) { return "layer." + std::to_string(l) + "."; }

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    const std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("weights: truncated while reading ") + what, pos_);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

kernels::Layer layer(const WeightStore& ws, const std::string& base) {
  return {ws.get(base + ".weight"), ws.get(base + ".bias")};
}

moe::ExpertFfn expert(const WeightStore& ws, const std::string& base) {
  return {layer(ws, base + ".fc1"), layer(ws, base + ".fc2")};
}

std::size_t count_prefixed(const WeightStore& ws, const std::string& head, const std::string& tail) {
  std::size_t n = 0;
  while (ws.contains(head + std::to_string(n) + tail)) ++n;
  return n;
}

}  // namespace

std::vector<TensorSpec> weight_manifest(const DecoderConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.dim, c = cfg.attn_dim, s = cfg.code_bits;
  const std::size_t hd = c / cfg.heads, hidden = 4 * d;
  std::vector<TensorSpec> m;
  auto add = [&](std::string name, Shape shape) { m.push_back({std::move(name), std::move(shape)}); };
  auto conv = [&](const std::string& base, std::size_t co, std::size_t ci, std::size_t k) {
    add(base + ".weight", {co, ci, k, k});
    add(base + ".bias", {co});
  };
  auto dense = [&](const std::string& base, std::size_t in, std::size_t out) {
    add(base + ".weight", {in, out});
    add(base + ".bias", {out});
  };

  add("dpe.value_embed", {prompt::kMaskValues, prompt::kMaskValues});
  const std::size_t dpe_ch[5] = {prompt::kMaskValues, 32, 64, 128, d};
  for (std::size_t i = 0; i < 4; ++i)
    conv("dpe.conv" + std::to_string(i), dpe_ch[i + 1], dpe_ch[i], 3);
  add("dpe.bg_embed", {d});

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    add(p + "ln_attn.gamma", {d});
    add(p + "ln_attn.beta", {d});
    add(p + "attn.wq", {d, c});
    add(p + "attn.wk", {d, c});
    add(p + "attn.wv", {d, c});
    add(p + "attn.wo", {c, d});
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string b = p + "attn.bsq" + std::to_string(h);
      add(b + ".proj", {hd, s});
      add(b + ".base1", {s, hd});
      add(b + ".base0", {s, hd});
    }
    add(p + "ln_ffn.gamma", {d});
    add(p + "ln_ffn.beta", {d});
    add(p + "moe.centroids", {cfg.experts + 1, d});
    for (std::size_t i = 0; i <= cfg.experts; ++i) {
      const std::string b = p + (i < cfg.experts ? "moe.expert" + std::to_string(i) : "moe.shared");
      dense(b + ".fc1", d, hidden);
      dense(b + ".fc2", hidden, d);
    }
  }

  dense("dlu.mlp.fc1", d, 64);
  dense("dlu.mlp.fc2", 64, 1);
  const std::size_t up_ch[5] = {d, 64, 16, 4, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    conv("dlu.fuse" + std::to_string(i), up_ch[i], up_ch[i], 3);
    add("dlu.deconv" + std::to_string(i) + ".weight", {up_ch[i], up_ch[i + 1], 2, 2});
    add("dlu.deconv" + std::to_string(i) + ".bias", {up_ch[i + 1]});
  }

  const std::size_t cn_ch[5] = {1, 4, 16, 64, d};
  for (std::size_t st = 0; st < 4; ++st) {
    const std::string b = "cannynet.stage" + std::to_string(st);
    conv(b + ".down", cn_ch[st + 1], cn_ch[st], 3);
    for (std::size_t blk = 0; blk < 2; ++blk) {
      const std::string rb = b + ".block" + std::to_string(blk);
      conv(rb + ".conv1", cn_ch[st + 1], cn_ch[st + 1], 3);
      conv(rb + ".conv2", cn_ch[st + 1], cn_ch[st + 1], 3);
    }
  }

  std::sort(m.begin(), m.end(), [](const TensorSpec& a, const TensorSpec& b) { return a.name < b.name; });
  return m;
}

const Tensor& WeightStore::get(std::string_view name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw InputError("weights: missing tensor '" + std::string(name) + "'");
  return it->second;
}

void WeightStore::erase(std::string_view name) {
  const auto it = tensors_.find(name);
  if (it != tensors_.end()) tensors_.erase(it);
}

std::uint64_t tensor_seed(std::uint64_t seed, std::string_view name) {
  return splitmix64(seed ^ splitmix64(fnv1a(name)));
}

Tensor uniform_tensor(const Shape& shape, float bound, std::uint64_t stream_seed) {
  std::mt19937_64 gen(stream_seed);
  Tensor t(shape);
  constexpr float kScale = 1.0f / 16777216.0f;  // 2^-24
  for (float& v : t.values()) {
    const float u = static_cast<float>(gen() >> 40) * kScale;  // [0, 1)
    v = (2.0f * u - 1.0f) * bound;
  }
  return t;
}

WeightStore init_weights(const DecoderConfig& cfg, std::uint64_t seed) {
  WeightStore ws;
  for (const TensorSpec& spec : weight_manifest(cfg)) {
    const Shape& s = spec.shape;
    if (ends_with(spec.name, "bias") || ends_with(spec.name, "beta")) {
      ws.set(spec.name, Tensor(s, 0.0f));
      continue;
    }
    if (ends_with(spec.name, "gamma")) {
      ws.set(spec.name, Tensor(s, 1.0f));
      continue;
    }
    std::size_t fan_sum = 0;
    if (s.size() == 1) fan_sum = 1 + s[0];
    else if (s.size() == 2) fan_sum = s[0] + s[1];
    else fan_sum = (s[0] + s[1]) * s[2] * s[3];
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_sum));
    ws.set(spec.name, uniform_tensor(s, bound, tensor_seed(seed, spec.name)));
  }
  return ws;
}

std::string serialize_weights(const WeightStore& ws) {
  std::string out;
  out.append(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ws.size()));
  for (const auto& [name, t] : ws.tensors()) {
    if (name.size() > 0xffff) throw InputError("weights: tensor name too long: " + name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
    put<std::uint8_t>(out, kDtypeF32);
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  }
  return out;
}

WeightStore parse_weights(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4, "magic") != std::string_view(kMagic, 4)) throw FormatError("weights: bad magic", 0);
  const std::size_t version_at = r.pos();
  if (r.get<std::uint32_t>("version") != kVersion)
    throw FormatError("weights: unsupported version", version_at);
  const std::uint32_t count = r.get<std::uint32_t>("tensor count");

  WeightStore ws;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t entry_at = r.pos();
    const auto len = r.get<std::uint16_t>("name length");
    const std::string name(r.take(len, "name"));
    if (name.empty()) throw FormatError("weights: empty tensor name", entry_at);
    if (ws.contains(name)) throw FormatError("weights: duplicate tensor '" + name + "'", entry_at);
    const std::size_t rank_at = r.pos();
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank < 1 || rank > 4) throw FormatError("weights: rank must be 1..4 for '" + name + "'", rank_at);
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& e : shape) {
      const std::size_t at = r.pos();
      e = r.get<std::uint64_t>("extent");
      if (e != 0 && numel > (std::uint64_t{1} << 40) / e)
        throw FormatError("weights: implausible extent for '" + name + "'", at);
      numel *= e;
    }
    const std::size_t dtype_at = r.pos();
    if (r.get<std::uint8_t>("dtype") != kDtypeF32)
      throw FormatError("weights: unsupported dtype for '" + name + "'", dtype_at);
    const std::string_view raw = r.take(numel * sizeof(float), "tensor data");
    std::vector<float> values(numel);
    std::memcpy(values.data(), raw.data(), raw.size());
    ws.set(name, Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw FormatError("weights: trailing bytes after last tensor", r.pos());
  return ws;
}

void save_weights(const std::filesystem::path& path, const WeightStore& ws) {
  const std::string bytes = serialize_weights(ws);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write weights to " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing weights to " + path.string());
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open weights " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_weights(ss.str());
}

void check_manifest(const WeightStore& ws, const DecoderConfig& cfg) {
  std::vector<std::string> missing, mismatched;
  for (const TensorSpec& spec : weight_manifest(cfg)) {
    if (!ws.contains(spec.name)) {
      missing.push_back(spec.name);
    } else if (ws.get(spec.name).shape() != spec.shape) {
      mismatched.push_back(spec.name + " " + shape_string(ws.get(spec.name).shape()) +
                           " != " + shape_string(spec.shape));
    }
  }
  if (missing.empty() && mismatched.empty()) return;
  std::string msg = "weights do not match the decoder manifest;";
  if (!missing.empty()) {
    msg += " missing:";
    for (const auto& n : missing) msg += " " + n;
    msg += ";";
  }
  if (!mismatched.empty()) {
    msg += " wrong shape:";
    for (const auto& n : mismatched) msg += " " + n + ",";
  }
  throw InputError(msg);
}

DecoderConfig infer_config(const WeightStore& ws, const DecoderConfig& base) {
  DecoderConfig cfg = base;
  cfg.dim = ws.get("dpe.bg_embed").dim(0);
  cfg.layers = count_prefixed(ws, "layer.", ".ln_attn.gamma");
  if (cfg.layers == 0) throw InputError("weights: no decoder layers found");
  cfg.attn_dim = ws.get("layer.0.attn.wq").dim(1);
  cfg.heads = count_prefixed(ws, "layer.0.attn.bsq", ".proj");
  if (cfg.heads == 0) throw InputError("weights: no BSQ codebooks found");
  cfg.code_bits = ws.get("layer.0.attn.bsq0.proj").dim(1);
  cfg.experts = ws.get("layer.0.moe.centroids").dim(0) - 1;
  check_manifest(ws, cfg);
  return cfg;
}

DecoderWeights bind_weights(const WeightStore& ws, const DecoderConfig& cfg) {
  check_manifest(ws, cfg);
  DecoderWeights w;
  w.dpe.value_embed = ws.get("dpe.value_embed");
  for (std::size_t i = 0; i < 4; ++i) w.dpe.convs[i] = layer(ws, "dpe.conv" + std::to_string(i));
  w.dpe.bg_embed = ws.get("dpe.bg_embed");

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    LayerWeights lw;
    lw.ln_attn_gamma = ws.get(p + "ln_attn.gamma");
    lw.ln_attn_beta = ws.get(p + "ln_attn.beta");
    lw.attn = {ws.get(p + "attn.wq"), ws.get(p + "attn.wk"), ws.get(p + "attn.wv"),
               ws.get(p + "attn.wo"), cfg.heads};
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string b = p + "attn.bsq" + std::to_string(h);
      lw.codebooks.emplace_back(ws.get(b + ".proj"), ws.get(b + ".base1"), ws.get(b + ".base0"));
    }
    lw.ln_ffn_gamma = ws.get(p + "ln_ffn.gamma");
    lw.ln_ffn_beta = ws.get(p + "ln_ffn.beta");
    lw.moe.centroids = ws.get(p + "moe.centroids");
    for (std::size_t i = 0; i < cfg.experts; ++i)
      lw.moe.routed.push_back(expert(ws, p + "moe.expert" + std::to_string(i)));
    lw.moe.shared = expert(ws, p + "moe.shared");
    w.layers.push_back(std::move(lw));
  }

  w.dlu.mlp_fc1 = layer(ws, "dlu.mlp.fc1");
  w.dlu.mlp_fc2 = layer(ws, "dlu.mlp.fc2");
  for (std::size_t i = 0; i < 4; ++i) {
    w.dlu.fuse[i] = layer(ws, "dlu.fuse" + std::to_string(i));
    w.dlu.deconv[i] = layer(ws, "dlu.deconv" + std::to_string(i));
  }
  for (std::size_t st = 0; st < 4; ++st) {
    const std::string b = "cannynet.stage" + std::to_string(st);
    auto& stage = w.dlu.cannynet.stages[st];
    stage.down = layer(ws, b + ".down");
    for (std::size_t blk = 0; blk < 2; ++blk) {
      const std::string rb = b + ".block" + std::to_string(blk);
      stage.blocks[blk] = {layer(ws, rb + ".conv1"), layer(ws, rb + ".conv2")};
    }
  }
  return w;
}

}  // namespace hseg
