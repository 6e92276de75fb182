#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hseg/kernels.hpp"
#include "hseg/tensor.hpp"

/// Reference-mask bookkeeping and the cropped dense prompt embedding.
namespace hseg::prompt {

inline constexpr std::size_t kTokenStride = 16;
inline constexpr int kClickRadius = 5;
inline constexpr std::size_t kMaskValues = 5;

enum class ClickLabel : std::uint8_t { Negative = 0, Positive = 1 };

struct Click {
  std::size_t y = 0;
  std::size_t x = 0;
  ClickLabel label = ClickLabel::Positive;

  bool positive() const noexcept { return label == ClickLabel::Positive; }
  bool operator==(const Click&) const = default;
};

/// Per-pixel prompt state.
///   0 / 4  definite background / foreground (inside a click disk)
///   1 / 3  possible background / foreground (from the last prediction)
///   2      uncertain: the prediction flipped between consecutive steps
enum MaskValue : std::uint8_t {
  kDefiniteBackground = 0,
  kPossibleBackground = 1,
  kUncertain = 2,
  kPossibleForeground = 3,
  kDefiniteForeground = 4,
};

class ReferenceMask {
 public:
  /// Fresh state: every pixel possible background.
  ReferenceMask(std::size_t height, std::size_t width);

  /// Throws InputError if any value is outside 0..4.
  static ReferenceMask from_values(std::size_t height, std::size_t width,
                                   std::vector<std::uint8_t> values);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::uint8_t at(std::size_t y, std::size_t x) const noexcept { return values_[y * width_ + x]; }
  std::span<const std::uint8_t> values() const noexcept { return values_; }

  bool operator==(const ReferenceMask&) const = default;

 private:
  friend ReferenceMask update_reference_mask(const ReferenceMask&, std::span<const Click>,
                                             const Tensor&);
  std::size_t height_;
  std::size_t width_;
  std::vector<std::uint8_t> values_;
};

/// Half-open pixel (or token) rectangle [x1, x2) x [y1, y2).
struct PromptBBox {
  std::size_t x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  std::size_t width() const noexcept { return x2 - x1; }
  std::size_t height() const noexcept { return y2 - y1; }
  std::size_t area() const noexcept { return width() * height(); }
  bool operator==(const PromptBBox&) const = default;
};

struct DpeWeights {
  Tensor value_embed;                  // [5 x 5]: row = mask value
  std::array<kernels::Layer, 4> convs;  // 5->32->64->128->d, 3x3, stride 2, pad 1
  Tensor bg_embed;                     // [d]

  std::size_t dim() const { return bg_embed.size(); }
};

/// Applies one interaction step to the reference mask.
///
/// Prediction-derived pixels are re-labelled from `prev_pred` (H x W, 0/1):
/// a pixel whose previous label was 3 (or 1) and whose prediction flipped
/// becomes 2; otherwise it takes 3 or 1 from the prediction. Pixels at 0, 2
/// or 4 are never touched by predictions, so the update is idempotent. New
/// click disks (radius 5) are painted last, so clicks dominate.
ReferenceMask update_reference_mask(const ReferenceMask& prev, std::span<const Click> new_clicks,
                                    const Tensor& prev_pred);

/// Box around every pixel that carries prompt content (any value other than
/// 1), padded by `pad_px`, clamped, and rounded outward to the 16-pixel token
/// grid. Falls back to the full image when there is no content.
PromptBBox detect_prompt_bbox(const ReferenceMask& mask, std::size_t pad_px = 16);

PromptBBox full_bbox(const ReferenceMask& mask);

/// Dense prompt tokens [d x H/16 x W/16]: the token block covered by `bbox`
/// holds the conv-stack embedding of the cropped mask, all other tokens hold
/// the background embedding.
Tensor dpe_embed(const ReferenceMask& mask, const PromptBBox& bbox, const DpeWeights& w);

/// The same embedding computed over the whole image (no crop).
Tensor dpe_embed_full(const ReferenceMask& mask, const DpeWeights& w);

/// Reference-mask fixtures as binary PGM with maxval 4.
void save_reference_mask(const std::filesystem::path& path, const ReferenceMask& mask);
ReferenceMask load_reference_mask(const std::filesystem::path& path);

}  // namespace hseg::prompt
