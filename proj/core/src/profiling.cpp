#include "hseg/profiling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hseg/attention.hpp"
#include "hseg/config.hpp"
#include "hseg/error.hpp"
#include "hseg/instrument.hpp"
#include "hseg/prompt.hpp"
#include "hseg/routing.hpp"
#include "hseg/upsample.hpp"
#include "hseg/weights.hpp"

namespace hseg::profiling {

namespace {

Tensor random_tensor(const Shape& shape, float bound, std::uint64_t seed, std::string_view name) {
  return uniform_tensor(shape, bound, tensor_seed(seed, name));
}

float xavier(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
}

moe::ExpertFfn random_expert(std::size_t d, std::uint64_t seed, const std::string& name) {
  const std::size_t hd = 4 * d;
  return {{random_tensor({d, hd}, xavier(d, hd), seed, name + ".fc1.weight"),
           random_tensor({hd}, 0.1f, seed, name + ".fc1.bias")},
          {random_tensor({hd, d}, xavier(hd, d), seed, name + ".fc2.weight"),
           random_tensor({d}, 0.1f, seed, name + ".fc2.bias")}};
}

// Weights for the DPE / DLU benchmarks at image extent `image`.
DecoderWeights bench_weights(std::size_t image, std::size_t dim, std::uint64_t seed) {
  DecoderConfig cfg;
  cfg.height = cfg.width = image;
  cfg.dim = dim;
  cfg.layers = 1;
  cfg.experts = 1;
  return bind_weights(init_weights(cfg, seed), cfg);
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) throw InputError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("fit_loglog: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw InputError("fit_loglog: values must be positive");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
  }
  const double vx = sxx - sx * sx / n, vy = syy - sy * sy / n, cxy = sxy - sx * sy / n;
  if (vx <= 0) throw InputError("fit_loglog: x values must not all be equal");
  LogLogFit fit;
  fit.slope = cxy / vx;
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.r2 = vy > 0 ? (cxy * cxy) / (vx * vy) : 1.0;
  return fit;
}

std::vector<std::size_t> doubling_range(std::size_t n_min, std::size_t n_max) {
  if (n_min == 0 || n_min > n_max) throw InputError("doubling_range: need 0 < n_min <= n_max");
  std::vector<std::size_t> out;
  for (std::size_t n = n_min; n <= n_max; n *= 2) out.push_back(n);
  return out;
}

std::vector<double> area_ratio_range(double lo, double hi) {
  if (!(lo > 0.0) || !(hi >= lo) || hi > 1.0) throw InputError("area ratios must satisfy 0 < lo <= hi <= 1");
  std::vector<double> out;
  for (int k = 1; k <= 10; ++k) {
    const double r = (k / 10.0) * (k / 10.0);
    if (r >= lo - 1e-12 && r <= hi + 1e-12) out.push_back(r);
  }
  return out;
}

std::vector<AttnSample> bench_attention(std::span<const std::size_t> ns, AttnMode mode,
                                        std::size_t repeats, std::uint64_t seed, std::size_t c,
                                        std::size_t s) {
  const attention::BsqCodebook cb(random_tensor({c, s}, xavier(c, s), seed, "bench.proj"),
                                  random_tensor({s, c}, xavier(s, c), seed, "bench.base1"),
                                  random_tensor({s, c}, xavier(s, c), seed, "bench.base0"));
  std::vector<AttnSample> out;
  for (std::size_t n : ns) {
    const Tensor q = random_tensor({n, c}, 1.0f, seed + n, "bench.q");
    const Tensor k = random_tensor({n, c}, 1.0f, seed + n, "bench.k");
    const Tensor v = random_tensor({n, c}, 1.0f, seed + n, "bench.v");
    auto run = [&] {
      return mode == AttnMode::Full ? attention::full_attention(q, k, v)
                                    : attention::bsqa_linear(q, k, v, cb);
    };
    AttnSample sample;
    sample.n = n;
    {
      instrument::Scope scope;
      run();
      for (const auto& [op, cnt] : scope.report()) sample.flops += cnt.flops;
    }
    const auto ms = time_repeats(run, repeats, 0);
    sample.median_ms = median(ms);
    sample.min_ms = *std::min_element(ms.begin(), ms.end());
    out.push_back(sample);
  }
  return out;
}

MoeSample bench_moe(std::size_t experts, std::size_t tokens, MoeImpl impl, std::size_t threads,
                    std::size_t repeats, std::uint64_t seed, std::size_t dim) {
  moe::ExpertBank bank;
  for (std::size_t i = 0; i < experts; ++i)
    bank.routed.push_back(random_expert(dim, seed, "bench.expert" + std::to_string(i)));
  bank.shared = random_expert(dim, seed, "bench.shared");
  bank.centroids = random_tensor({experts + 1, dim}, xavier(experts + 1, dim), seed, "bench.centroids");
  const Tensor x = random_tensor({tokens, dim}, 1.7f, seed, "bench.tokens");
  const routing::EdgeMap em = routing::EdgeMap::all_edge(1, tokens);

  MoeSample sample;
  sample.experts = experts;
  sample.tokens = tokens;
  sample.threads = impl == MoeImpl::Parallel ? threads : 1;
  const auto ms = time_repeats(
      [&] {
        if (impl == MoeImpl::Parallel) {
          moe::hmoe_parallel(x, em, bank, threads, &sample.profile);
        } else {
          moe::hmoe_sequential(x, em, bank);
        }
      },
      repeats, 1);
  sample.median_ms = median(ms);
  return sample;
}

std::vector<CropSample> bench_dpe(std::span<const double> ratios, std::size_t image,
                                  std::size_t repeats, std::uint64_t seed, std::size_t dim) {
  const DecoderWeights w = bench_weights(image, dim, seed);
  std::vector<CropSample> out;
  for (double r : ratios) {
    const auto side = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(std::sqrt(r) * static_cast<double>(image))));
    const std::size_t off = (image - std::min(side, image)) / 2;
    std::vector<std::uint8_t> vals(image * image, prompt::kPossibleBackground);
    for (std::size_t y = off; y < off + side && y < image; ++y)
      for (std::size_t x = off; x < off + side && x < image; ++x)
        vals[y * image + x] = prompt::kPossibleForeground;
    vals[(image / 2) * image + image / 2] = prompt::kDefiniteForeground;
    const prompt::ReferenceMask mask = prompt::ReferenceMask::from_values(image, image, vals);
    const prompt::PromptBBox bbox = prompt::detect_prompt_bbox(mask);

    CropSample s;
    s.area_ratio = r;
    s.crop_px = bbox.area();
    s.dynamic_ms = median(time_repeats([&] { prompt::dpe_embed(mask, bbox, w.dpe); }, repeats));
    s.full_ms = median(time_repeats([&] { prompt::dpe_embed_full(mask, w.dpe); }, repeats));
    out.push_back(s);
  }
  return out;
}

std::vector<CropSample> bench_dlu(std::span<const double> ratios, std::size_t image,
                                  std::size_t repeats, std::uint64_t seed, std::size_t dim) {
  if (image == 0 || image % 16 != 0) throw InputError("bench_dlu: image must be a multiple of 16");
  const DecoderWeights w = bench_weights(image, dim, seed);
  const std::size_t g = image / 16;
  const Tensor f = random_tensor({dim, g, g}, 1.0f, seed, "bench.features");
  upsample::EdgeFeatures ef;
  ef.f1 = random_tensor({4, 8 * g, 8 * g}, 1.0f, seed, "bench.f1");
  ef.f2 = random_tensor({16, 4 * g, 4 * g}, 1.0f, seed, "bench.f2");
  ef.f3 = random_tensor({64, 2 * g, 2 * g}, 1.0f, seed, "bench.f3");
  ef.f4 = random_tensor({dim, g, g}, 1.0f, seed, "bench.f4");

  std::vector<CropSample> out;
  for (double r : ratios) {
    const auto side = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(std::sqrt(r) * static_cast<double>(g))), 1, g);
    const std::size_t off = (g - side) / 2;
    Tensor region({1, g, g}, -1.0f);
    for (std::size_t y = off; y < off + side; ++y)
      for (std::size_t x = off; x < off + side; ++x) region[y * g + x] = 1.0f;
    const prompt::PromptBBox bbox = upsample::extract_refine_bbox(region);

    CropSample s;
    s.area_ratio = r;
    s.crop_px = bbox.area() * 256;
    s.dynamic_ms = median(time_repeats(
        [&] {
          upsample::lowres_mask(f, w.dlu);
          upsample::dlu_upsample(f, bbox, ef, w.dlu);
        },
        repeats));
    s.full_ms = median(time_repeats([&] { upsample::dlu_upsample_full(f, ef, w.dlu); }, repeats));
    out.push_back(s);
  }
  return out;
}

}  // namespace hseg::profiling
