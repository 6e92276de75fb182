#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hseg/moe.hpp"

/// Timing helpers and the scaling benchmarks behind the CLI bench commands.
namespace hseg::profiling {

double median(std::vector<double> v);

/// Least-squares line through (log x, log y).
struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y);

/// Wall time of each of `repeats` calls in milliseconds, after `warmup` calls.
template <typename F>
std::vector<double> time_repeats(F&& fn, std::size_t repeats, std::size_t warmup = 1) {
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> ms;
  ms.reserve(repeats);
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return ms;
}

/// Powers of two from n_min to n_max inclusive.
std::vector<std::size_t> doubling_range(std::size_t n_min, std::size_t n_max);

/// (k/10)^2 for every k with lo <= (k/10)^2 <= hi.
std::vector<double> area_ratio_range(double lo, double hi);

enum class AttnMode { Full, BsqaLinear };

struct AttnSample {
  std::size_t n = 0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  std::uint64_t flops = 0;  // instrumented count for one call
};

/// Self-attention with N queries over N keys, C-dim, S-bit codebook.
std::vector<AttnSample> bench_attention(std::span<const std::size_t> ns, AttnMode mode,
                                        std::size_t repeats, std::uint64_t seed = 0,
                                        std::size_t c = 32, std::size_t s = 8);

enum class MoeImpl { Sequential, Parallel };

struct MoeSample {
  std::size_t experts = 0;
  std::size_t tokens = 0;
  std::size_t threads = 1;
  double median_ms = 0.0;
  moe::MoeProfile profile;  // last parallel run
};

/// HMoE over `tokens` edge tokens with a random `experts`-expert bank.
MoeSample bench_moe(std::size_t experts, std::size_t tokens, MoeImpl impl, std::size_t threads,
                    std::size_t repeats, std::uint64_t seed = 0, std::size_t dim = 256);

struct CropSample {
  double area_ratio = 0.0;
  double dynamic_ms = 0.0;  // cropped path, median
  double full_ms = 0.0;     // whole-image path, median
  std::size_t crop_px = 0;  // cropped pixel area
};

/// Prompt embedding of a centred square object covering `area_ratio` of an
/// image x image frame, cropped vs whole-mask.
std::vector<CropSample> bench_dpe(std::span<const double> ratios, std::size_t image,
                                  std::size_t repeats, std::uint64_t seed = 0,
                                  std::size_t dim = 256);

/// Local upsampling (localization MLP + cropped deconvolution) vs whole-grid
/// upsampling, with the detected region a centred square of `area_ratio`.
std::vector<CropSample> bench_dlu(std::span<const double> ratios, std::size_t image,
                                  std::size_t repeats, std::uint64_t seed = 0,
                                  std::size_t dim = 256);

}  // namespace hseg::profiling
