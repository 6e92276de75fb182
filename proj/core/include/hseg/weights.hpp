#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hseg/attention.hpp"
#include "hseg/config.hpp"
#include "hseg/moe.hpp"
#include "hseg/prompt.hpp"
#include "hseg/tensor.hpp"
#include "hseg/upsample.hpp"

namespace hseg {

struct TensorSpec {
  std::string name;
  Shape shape;
};

/// Every tensor the decoder needs for `cfg`, sorted by name.
std::vector<TensorSpec> weight_manifest(const DecoderConfig& cfg);

/// Named tensors, iterated in name order.
class WeightStore {
 public:
  using Map = std::map<std::string, Tensor, std::less<>>;

  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }
  void set(std::string name, Tensor t) { tensors_.insert_or_assign(std::move(name), std::move(t)); }
  void erase(std::string_view name);

  std::size_t size() const noexcept { return tensors_.size(); }
  const Map& tensors() const noexcept { return tensors_; }

  bool operator==(const WeightStore&) const = default;

 private:
  Map tensors_;
};

/// 64-bit stream seed for one tensor: splitmix of the store seed and the
/// FNV-1a hash of the tensor name.
std::uint64_t tensor_seed(std::uint64_t seed, std::string_view name);

/// Values uniform in [-bound, bound) drawn from mt19937_64(stream_seed).
Tensor uniform_tensor(const Shape& shape, float bound, std::uint64_t stream_seed);

/// Seeded initialization: Xavier-uniform weights, zero biases and betas,
/// unit gammas.
WeightStore init_weights(const DecoderConfig& cfg, std::uint64_t seed);

/// Binary format: "I2FW", u32 version, u32 count, then per tensor
/// u16 name length, name bytes, u8 rank, u64 extents, u8 dtype (0 = f32) and
/// raw little-endian data.
std::string serialize_weights(const WeightStore& ws);
WeightStore parse_weights(std::string_view bytes);
void save_weights(const std::filesystem::path& path, const WeightStore& ws);
WeightStore load_weights(const std::filesystem::path& path);

/// Throws InputError listing every missing or mis-shaped tensor.
void check_manifest(const WeightStore& ws, const DecoderConfig& cfg);

/// Recovers model sizes from tensor shapes. Image extents, seed and threads
/// come from `base`.
DecoderConfig infer_config(const WeightStore& ws, const DecoderConfig& base = {});

struct LayerWeights {
  Tensor ln_attn_gamma;
  Tensor ln_attn_beta;
  attention::AttnWeights attn;
  std::vector<attention::BsqCodebook> codebooks;  // one per head
  Tensor ln_ffn_gamma;
  Tensor ln_ffn_beta;
  moe::ExpertBank moe;
};

/// Typed view of a WeightStore.
struct DecoderWeights {
  prompt::DpeWeights dpe;
  std::vector<LayerWeights> layers;
  upsample::DluWeights dlu;
};

DecoderWeights bind_weights(const WeightStore& ws, const DecoderConfig& cfg);

}  // namespace hseg
