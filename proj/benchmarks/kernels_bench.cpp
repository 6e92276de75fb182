#include <benchmark/benchmark.h>

#include "hseg/attention.hpp"
#include "hseg/kernels.hpp"
#include "hseg/weights.hpp"

using namespace hseg;

namespace {

Tensor rnd(const Shape& s, std::uint64_t seed) { return uniform_tensor(s, 1.0f, seed); }

void BM_Matmul(benchmark::State& st) {
  const std::size_t n = std::size_t(st.range(0));
  const Tensor a = rnd({n, n}, 1), b = rnd({n, n}, 2);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::matmul(a, b));
  st.counters["flops"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(64, 512)->Unit(benchmark::kMicrosecond);

void BM_Conv3x3Stride2(benchmark::State& st) {
  const std::size_t c = std::size_t(st.range(0));
  const Tensor x = rnd({c, 128, 128}, 3), w = rnd({2 * c, c, 3, 3}, 4);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::conv2d(x, w, {}, 2, 1));
}
BENCHMARK(BM_Conv3x3Stride2)->Arg(5)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Deconv2x2(benchmark::State& st) {
  const Tensor x = rnd({64, 64, 64}, 5), w = rnd({64, 32, 2, 2}, 6);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::deconv2d(x, w, {}));
}
BENCHMARK(BM_Deconv2x2)->Unit(benchmark::kMillisecond);

attention::BsqCodebook codebook(std::size_t c, std::size_t s) {
  return {rnd({c, s}, 7), rnd({s, c}, 8), rnd({s, c}, 9)};
}

void BM_FullAttention(benchmark::State& st) {
  const std::size_t n = std::size_t(st.range(0));
  const Tensor q = rnd({n, 32}, 10), k = rnd({n, 32}, 11), v = rnd({n, 32}, 12);
  for (auto _ : st) benchmark::DoNotOptimize(attention::full_attention(q, k, v));
  st.SetComplexityN(st.range(0));
}
BENCHMARK(BM_FullAttention)->RangeMultiplier(2)->Range(256, 4096)->Complexity(benchmark::oNSquared)->Unit(benchmark::kMillisecond);

void BM_BsqaLinear(benchmark::State& st) {
  const std::size_t n = std::size_t(st.range(0));
  const auto cb = codebook(32, 8);
  const Tensor q = rnd({n, 32}, 10), k = rnd({n, 32}, 11), v = rnd({n, 32}, 12);
  for (auto _ : st) benchmark::DoNotOptimize(attention::bsqa_linear(q, k, v, cb));
  st.SetComplexityN(st.range(0));
}
BENCHMARK(BM_BsqaLinear)->RangeMultiplier(2)->Range(256, 16384)->Complexity(benchmark::oN)->Unit(benchmark::kMillisecond);

void BM_BsqQuantize(benchmark::State& st) {
  const auto cb = codebook(32, 8);
  const Tensor k = rnd({4096, 32}, 13);
  for (auto _ : st) benchmark::DoNotOptimize(attention::bsq_quantize(k, cb));
}
BENCHMARK(BM_BsqQuantize)->Unit(benchmark::kMicrosecond);

}  // namespace
