#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hseg/config.hpp"
#include "hseg/prompt.hpp"
#include "hseg/routing.hpp"
#include "hseg/tensor.hpp"
#include "hseg/upsample.hpp"
#include "hseg/weights.hpp"

namespace hseg {

/// Deterministic encoder stand-in: 16x16 RGB patches (768 values, channel
/// major, scaled to 0..1) through a seeded 768 -> d projection, then each
/// token normalized to zero mean and unit variance. Returns [d x H/16 x W/16].
Tensor synth_encoder(const Tensor& image, std::size_t dim, std::uint64_t seed);

/// Per-image interaction state.
struct Session {
  Tensor image;                     // [3 x H x W], 0..255
  Tensor tokens;                    // [d x h x w] image features
  upsample::EdgeFeatures edges;     // cached CannyNet output
  prompt::ReferenceMask reference{0, 0};
  Tensor prev_mask;                 // [H x W] binary, all zero before the first step
  std::size_t step = 0;
  std::vector<prompt::Click> clicks;
};

/// Runs the encoder stand-in, Canny and CannyNet once for `image`.
Session start_session(const Tensor& image, const DecoderWeights& w, const DecoderConfig& cfg);

/// Session from precomputed image features (skips the encoder stand-in).
Session start_session(const Tensor& image, Tensor tokens, const DecoderWeights& w,
                      const DecoderConfig& cfg);

enum class RoutingMode { EdgeMap, AllEdge, AllNonEdge };

/// Ablation switches. The defaults are the full decoder.
struct StepOptions {
  RoutingMode routing = RoutingMode::EdgeMap;
  bool dynamic_prompt = true;    // false: embed the whole reference mask
  bool dynamic_upsample = true;  // false: upsample the whole token grid
};

/// Wall-clock per decoder phase, in milliseconds.
struct StepTiming {
  double reference_ms = 0.0;
  double dpe_ms = 0.0;
  double routing_ms = 0.0;
  double attention_ms = 0.0;
  double moe_ms = 0.0;
  double dlu_ms = 0.0;
  double total_ms = 0.0;

  double phase_sum() const noexcept {
    return reference_ms + dpe_ms + routing_ms + attention_ms + moe_ms + dlu_ms;
  }
};

struct StepResult {
  Tensor mask;    // [H x W] binary
  Tensor logits;  // [H x W]
  std::size_t edge_tokens = 0;
  std::size_t nonedge_tokens = 0;
  prompt::PromptBBox prompt_bbox;  // pixels
  prompt::PromptBBox refine_bbox;  // tokens
  StepTiming timing;
};

/// One decoder pass: reference-mask update, prompt embedding, routed layers
/// x += DHA(LN(x)); x += HMoE(LN(x)), local upsampling and thresholding at
/// logit > 0. The new mask becomes the session's previous mask.
StepResult decoder_step(Session& s, std::span<const prompt::Click> new_clicks,
                        const DecoderWeights& w, const DecoderConfig& cfg,
                        const StepOptions& opts = {});

/// Token features after the decoder layers, [L x d]. Exposed for ablations.
Tensor decoder_layers(const Tensor& x, const routing::EdgeMap& em, const DecoderWeights& w,
                      const DecoderConfig& cfg, StepTiming* timing = nullptr);

}  // namespace hseg
