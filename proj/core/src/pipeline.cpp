#include "hseg/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "hseg/attention.hpp"
#include "hseg/error.hpp"
#include "hseg/kernels.hpp"
#include "hseg/moe.hpp"

namespace hseg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr std::size_t kPatch = 16;
constexpr std::size_t kPatchValues = 3 * kPatch * kPatch;

void check_image(const Tensor& image, const DecoderConfig& cfg) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != cfg.height ||
      image.dim(2) != cfg.width) {
    throw DimensionError("image " + shape_string(image.shape()) + " does not match configured " +
                         std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
}

}  // namespace

Tensor synth_encoder(const Tensor& image, std::size_t dim, std::uint64_t seed) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) % kPatch != 0 ||
      image.dim(2) % kPatch != 0) {
    throw DimensionError("synth_encoder: expected [3 x H x W] with H, W multiples of 16, got " +
                         shape_string(image.shape()));
  }
  const std::size_t hh = image.dim(1), ww = image.dim(2);
  const std::size_t th = hh / kPatch, tw = ww / kPatch;

  Tensor patches({th * tw, kPatchValues});
  for (std::size_t ty = 0; ty < th; ++ty) {
    for (std::size_t tx = 0; tx < tw; ++tx) {
      float* dst = patches.data() + (ty * tw + tx) * kPatchValues;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t py = 0; py < kPatch; ++py)
          for (std::size_t px = 0; px < kPatch; ++px)
            *dst++ = image.at(c, ty * kPatch + py, tx * kPatch + px) / 255.0f;
    }
  }
  const float bound = std::sqrt(6.0f / static_cast<float>(kPatchValues + dim));
  const Tensor proj = uniform_tensor({kPatchValues, dim}, bound,
                                     tensor_seed(seed, "encoder.projection"));
  Tensor tok = kernels::matmul(patches, proj);
  for (std::size_t i = 0; i < tok.dim(0); ++i) {
    auto row = tok.row(i);
    float mean = 0.0f;
    for (float v : row) mean += v;
    mean /= static_cast<float>(dim);
    float var = 0.0f;
    for (float v : row) var += (v - mean) * (v - mean);
    var /= static_cast<float>(dim);
    const float inv = 1.0f / std::sqrt(var + 1e-6f);
    for (float& v : row) v = (v - mean) * inv;
  }
  return tokens_to_channels(tok, th, tw);
}

Session start_session(const Tensor& image, Tensor tokens, const DecoderWeights& w,
                      const DecoderConfig& cfg) {
  cfg.validate();
  check_image(image, cfg);
  if (tokens.shape() != Shape{cfg.dim, cfg.grid_h(), cfg.grid_w()}) {
    throw DimensionError("start_session: image features " + shape_string(tokens.shape()) +
                         " do not match the token grid");
  }
  Session s;
  s.image = image;
  s.tokens = std::move(tokens);
  s.edges = upsample::cannynet(upsample::canny(image, cfg.canny_lo, cfg.canny_hi), w.dlu.cannynet);
  s.reference = prompt::ReferenceMask(cfg.height, cfg.width);
  s.prev_mask = Tensor({cfg.height, cfg.width});
  return s;
}

Session start_session(const Tensor& image, const DecoderWeights& w, const DecoderConfig& cfg) {
  check_image(image, cfg);
  return start_session(image, synth_encoder(image, cfg.dim, cfg.seed), w, cfg);
}

Tensor decoder_layers(const Tensor& x_in, const routing::EdgeMap& em, const DecoderWeights& w,
                      const DecoderConfig& cfg, StepTiming* timing) {
  const attention::RopeTable rope(em.h, em.w, cfg.attn_dim / cfg.heads);
  Tensor x = x_in;
  for (const LayerWeights& lw : w.layers) {
    auto t0 = Clock::now();
    const Tensor a = attention::dha_forward(
        kernels::layer_norm_rows(x, lw.ln_attn_gamma.values(), lw.ln_attn_beta.values()), em,
        lw.attn, lw.codebooks, rope);
    kernels::add_inplace(x, a);
    if (timing) timing->attention_ms += ms_since(t0);

    t0 = Clock::now();
    const Tensor f = moe::hmoe_parallel(
        kernels::layer_norm_rows(x, lw.ln_ffn_gamma.values(), lw.ln_ffn_beta.values()), em,
        lw.moe, cfg.threads);
    kernels::add_inplace(x, f);
    if (timing) timing->moe_ms += ms_since(t0);
  }
  return x;
}

StepResult decoder_step(Session& s, std::span<const prompt::Click> new_clicks,
                        const DecoderWeights& w, const DecoderConfig& cfg,
                        const StepOptions& opts) {
  const auto start = Clock::now();
  if (s.tokens.rank() != 3 || s.prev_mask.rank() != 2) {
    throw InputError("decoder_step: session not initialized");
  }
  const std::size_t h = cfg.grid_h(), ww = cfg.grid_w();
  StepResult r;

  auto t0 = Clock::now();
  s.reference = prompt::update_reference_mask(s.reference, new_clicks, s.prev_mask);
  r.timing.reference_ms = ms_since(t0);

  t0 = Clock::now();
  r.prompt_bbox = opts.dynamic_prompt ? prompt::detect_prompt_bbox(s.reference)
                                      : prompt::full_bbox(s.reference);
  Tensor fp = prompt::dpe_embed(s.reference, r.prompt_bbox, w.dpe);
  kernels::add_inplace(fp, s.tokens);
  r.timing.dpe_ms = ms_since(t0);

  t0 = Clock::now();
  routing::EdgeMap em;
  switch (opts.routing) {
    case RoutingMode::EdgeMap: em = routing::route_tokens(s.prev_mask, h, ww); break;
    case RoutingMode::AllEdge: em = routing::EdgeMap::all_edge(h, ww); break;
    case RoutingMode::AllNonEdge: em = routing::EdgeMap::all_nonedge(h, ww); break;
  }
  r.edge_tokens = em.edge_idx.size();
  r.nonedge_tokens = em.nonedge_idx.size();
  const Tensor x = channels_to_tokens(fp);
  r.timing.routing_ms = ms_since(t0);

  const Tensor y = decoder_layers(x, em, w, cfg, &r.timing);

  t0 = Clock::now();
  const Tensor f = tokens_to_channels(y, h, ww);
  if (opts.dynamic_upsample) {
    r.refine_bbox = upsample::extract_refine_bbox(upsample::lowres_mask(f, w.dlu));
  } else {
    r.refine_bbox = {0, 0, ww, h};
  }
  r.logits = upsample::dlu_upsample(f, r.refine_bbox, s.edges, w.dlu);
  r.mask = Tensor(r.logits.shape());
  for (std::size_t i = 0; i < r.mask.size(); ++i) r.mask[i] = r.logits[i] > 0.0f ? 1.0f : 0.0f;
  r.timing.dlu_ms = ms_since(t0);

  s.prev_mask = r.mask;
  ++s.step;
  s.clicks.insert(s.clicks.end(), new_clicks.begin(), new_clicks.end());
  r.timing.total_ms = ms_since(start);
  return r;
}

}  // namespace hseg
