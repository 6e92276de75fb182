#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hseg/error.hpp"
#include "hseg/moe.hpp"
#include "oracles.hpp"

using namespace hseg::moe;
using hseg::Tensor;
using hseg::routing::EdgeMap;

namespace {

ExpertFfn random_ffn(std::size_t d, std::mt19937_64& rng) {
  ExpertFfn f;
  f.fc1.weight = oracle::random_tensor({d, 4 * d}, rng, -0.3f, 0.3f);
  f.fc1.bias = oracle::random_tensor({4 * d}, rng, -0.1f, 0.1f);
  f.fc2.weight = oracle::random_tensor({4 * d, d}, rng, -0.3f, 0.3f);
  f.fc2.bias = oracle::random_tensor({d}, rng, -0.1f, 0.1f);
  return f;
}

ExpertBank random_bank(std::size_t m, std::size_t d, std::mt19937_64& rng) {
  ExpertBank b;
  for (std::size_t i = 0; i < m; ++i) b.routed.push_back(random_ffn(d, rng));
  b.shared = random_ffn(d, rng);
  b.centroids = oracle::random_tensor({m + 1, d}, rng);
  return b;
}

std::vector<double> ffn_oracle(std::span<const float> x, const ExpertFfn& f) {
  const std::size_t d = x.size(), hdim = f.hidden_dim();
  std::vector<double> h(hdim), out(d);
  for (std::size_t j = 0; j < hdim; ++j) {
    double s = f.fc1.bias[j];
    for (std::size_t t = 0; t < d; ++t) s += double(x[t]) * f.fc1.weight.at(t, j);
    h[j] = oracle::gelu(s);
  }
  for (std::size_t j = 0; j < d; ++j) {
    double s = f.fc2.bias[j];
    for (std::size_t t = 0; t < hdim; ++t) s += h[t] * f.fc2.weight.at(t, j);
    out[j] = s;
  }
  return out;
}

}  // namespace

TEST(Affinity, OrthogonalTokensScoreHalf) {
  Tensor x({1, 4});
  x[0] = 1.0f;
  Tensor e({3, 4});
  e.at(0, 1) = 1.0f;
  e.at(1, 2) = 1.0f;
  e.at(2, 3) = 1.0f;
  const Tensor s = affinity(x, e);
  for (float v : s.values()) EXPECT_EQ(v, 0.5f);
}

TEST(Affinity, SaturatesAlongCentroid) {
  std::mt19937_64 rng(60);
  const Tensor e = oracle::random_tensor({2, 8}, rng);
  Tensor x({1, 8});
  for (std::size_t t = 0; t < 8; ++t) x[t] = 50.0f * e.at(0, t);
  EXPECT_NEAR(affinity(x, e)[0], 1.0f, 1e-6);
}

TEST(Affinity, MatchesScalarLoop) {
  std::mt19937_64 rng(61);
  const Tensor x = oracle::random_tensor({10, 16}, rng), e = oracle::random_tensor({5, 16}, rng);
  const Tensor s = affinity(x, e);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double dot = 0.0;
      for (std::size_t t = 0; t < 16; ++t) dot += double(x.at(i, t)) * e.at(j, t);
      EXPECT_NEAR(s.at(i, j), 1.0 / (1.0 + std::exp(-dot)), 1e-6);
    }
}

TEST(Route, SingleExpertAlwaysWins) {
  std::mt19937_64 rng(62);
  const Tensor s = oracle::random_tensor({7, 2}, rng, 0.0f, 1.0f);
  for (auto a : route_top1(s)) EXPECT_EQ(a, 0u);
}

TEST(Route, TiesGoToLowestIndexAndSharedNeverWins) {
  Tensor s({1, 7}, 0.1f);
  s[2] = 0.8f;
  s[5] = 0.8f;
  s[6] = 0.99f;  // shared column
  EXPECT_EQ(route_top1(s), (std::vector<std::uint32_t>{2}));
}

TEST(Route, MatchesScanArgmax) {
  std::mt19937_64 rng(63);
  const Tensor s = oracle::random_tensor({100, 9}, rng, 0.0f, 1.0f);
  const auto a = route_top1(s);
  for (std::size_t i = 0; i < 100; ++i) {
    std::uint32_t best = 0;
    for (std::uint32_t j = 1; j < 8; ++j)
      if (s.at(i, j) > s.at(i, best)) best = j;
    EXPECT_EQ(a[i], best);
  }
}

TEST(Route, NonFiniteScoresThrow) {
  Tensor s({1, 3});
  s[1] = NAN;
  EXPECT_THROW(route_top1(s), hseg::NumericError);
}

TEST(Route, ArgmaxInvariantUnderPositiveScaling) {
  std::mt19937_64 rng(64);
  const Tensor x = oracle::random_tensor({50, 16}, rng, -0.2f, 0.2f);
  const Tensor e = oracle::random_tensor({9, 16}, rng, -0.2f, 0.2f);
  const auto base = route_top1(affinity(x, e));
  for (float c : {0.5f, 2.0f, 3.0f}) {
    Tensor xc = x;
    for (float& v : xc.values()) v *= c;
    EXPECT_EQ(route_top1(affinity(xc, e)), base) << "scale " << c;
  }
}

TEST(Dispatch, HandWorkedStableSort) {
  const std::vector<std::uint32_t> a{2, 0, 1, 0};
  const ExpertDispatch d = build_dispatch(a, 3);
  EXPECT_EQ(d.perm, (std::vector<std::size_t>{1, 3, 2, 0}));
  EXPECT_EQ(d.group_size(0), 2u);
  EXPECT_EQ(d.group_size(1), 1u);
  EXPECT_EQ(d.group_size(2), 1u);
}

TEST(Dispatch, SameExpertAndEmpty) {
  const std::vector<std::uint32_t> a(5, 1);
  const ExpertDispatch d = build_dispatch(a, 2);
  EXPECT_EQ(d.perm, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(d.group_size(0), 0u);
  EXPECT_EQ(d.group_size(1), 5u);
  const ExpertDispatch e = build_dispatch({}, 4);
  EXPECT_TRUE(e.perm.empty());
  EXPECT_EQ(e.experts(), 4u);
  const std::vector<std::uint32_t> bad{4};
  EXPECT_THROW(build_dispatch(bad, 4), hseg::InputError);
}

TEST(Dispatch, RandomRoundTripAndGrouping) {
  std::mt19937_64 rng(65);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 1 + rng() % 16, n = rng() % 200;
    std::vector<std::uint32_t> a(n);
    for (auto& v : a) v = std::uint32_t(rng() % m);
    const ExpertDispatch d = build_dispatch(a, m);
    ASSERT_EQ(d.group_offsets.back(), n);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_EQ(d.inverse_perm[d.perm[i]], i);
      ASSERT_EQ(d.perm[d.inverse_perm[i]], i);
    }
    for (std::size_t g = 0; g < m; ++g)
      for (std::size_t p = d.group_offsets[g]; p < d.group_offsets[g + 1]; ++p) {
        ASSERT_EQ(a[d.perm[p]], g);
        if (p > d.group_offsets[g]) ASSERT_LT(d.perm[p - 1], d.perm[p]);
      }
  }
}

TEST(Hmoe, EqualScoresAverageBothExperts) {
  std::mt19937_64 rng(66);
  const ExpertBank bank = random_bank(2, 8, rng);
  const Tensor x = oracle::random_tensor({1, 8}, rng);
  const auto shared = ffn_token(x.values(), bank.shared);
  const auto routed = ffn_token(x.values(), bank.routed[1]);
  const auto out = hmoe_token(x.values(), bank, TokenRoute{1, 0.7f, 0.7f});
  for (std::size_t t = 0; t < 8; ++t) EXPECT_NEAR(out[t], 0.5 * (shared[t] + routed[t]), 1e-6);
  EXPECT_EQ(hmoe_token(x.values(), bank, std::nullopt), shared);
}

TEST(Hmoe, WeightRatioFollowsScoreGap) {
  std::mt19937_64 rng(67);
  const ExpertBank bank = random_bank(1, 8, rng);
  const Tensor x = oracle::random_tensor({1, 8}, rng);
  const auto shared = ffn_token(x.values(), bank.shared);
  const auto routed = ffn_token(x.values(), bank.routed[0]);
  // Sigmoid scores lie in (0, 1); at the extremes the routed weight is 1/(1+e).
  const auto out = hmoe_token(x.values(), bank, TokenRoute{0, 0.0f, 1.0f});
  const double wr = 1.0 / (1.0 + std::exp(1.0));
  for (std::size_t t = 0; t < 8; ++t) EXPECT_NEAR(out[t], wr * routed[t] + (1 - wr) * shared[t], 1e-5);
}

TEST(Hmoe, TokenMatchesDoubleOracle) {
  std::mt19937_64 rng(68);
  const ExpertBank bank = random_bank(4, 16, rng);
  const Tensor x = oracle::random_tensor({1, 16}, rng);
  const Tensor s = affinity(x, bank.centroids);
  const std::uint32_t a = route_top1(s)[0];
  const auto fs = ffn_oracle(x.values(), bank.shared), fa = ffn_oracle(x.values(), bank.routed[a]);
  const double es = std::exp(double(s[4])), ea = std::exp(double(s[a]));
  const auto out = hmoe_token(x.values(), bank, TokenRoute{a, s[a], s[4]});
  for (std::size_t t = 0; t < 16; ++t) EXPECT_NEAR(out[t], (es * fs[t] + ea * fa[t]) / (es + ea), 1e-5);
}

TEST(Hmoe, FfnRowsMatchesPerToken) {
  std::mt19937_64 rng(69);
  const ExpertFfn f = random_ffn(12, rng);
  const Tensor x = oracle::random_tensor({70, 12}, rng);
  const Tensor y = ffn_rows(x, f);
  for (std::size_t i = 0; i < 70; ++i) {
    const auto want = ffn_oracle(x.row(i), f);
    for (std::size_t t = 0; t < 12; ++t) ASSERT_NEAR(y.at(i, t), want[t], 1e-5);
  }
}

TEST(Hmoe, ParallelMatchesSequential) {
  std::mt19937_64 rng(70);
  for (std::size_t m : {1u, 4u, 16u, 64u}) {
    const ExpertBank bank = random_bank(m, 16, rng);
    const Tensor x = oracle::random_tensor({200, 16}, rng);
    std::vector<std::uint8_t> flags(200);
    for (auto& f : flags) f = rng() % 3 != 0;
    const EdgeMap em = EdgeMap::from_flags(10, 20, flags);
    EXPECT_LE(hseg::max_abs_diff(hmoe_parallel(x, em, bank), hmoe_sequential(x, em, bank)), 1e-5f)
        << "M=" << m;
  }
}

TEST(Hmoe, EmptyEdgeSetIsSharedExpertOnly) {
  std::mt19937_64 rng(71);
  const ExpertBank bank = random_bank(4, 8, rng);
  const Tensor x = oracle::random_tensor({12, 8}, rng);
  const Tensor y = hmoe_parallel(x, EdgeMap::all_nonedge(3, 4), bank);
  EXPECT_EQ(y, ffn_rows(x, bank.shared));
}

TEST(Hmoe, AllEdgeSingleExpertAppliesCombination) {
  std::mt19937_64 rng(72);
  const ExpertBank bank = random_bank(1, 8, rng);
  const Tensor x = oracle::random_tensor({6, 8}, rng);
  const Tensor y = hmoe_parallel(x, EdgeMap::all_edge(2, 3), bank);
  const Tensor s = affinity(x, bank.centroids);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto fs = ffn_oracle(x.row(i), bank.shared), fa = ffn_oracle(x.row(i), bank.routed[0]);
    const double es = std::exp(double(s.at(i, 1))), ea = std::exp(double(s.at(i, 0)));
    for (std::size_t t = 0; t < 8; ++t) EXPECT_NEAR(y.at(i, t), (es * fs[t] + ea * fa[t]) / (es + ea), 1e-5);
  }
}

TEST(Hmoe, ThreadCountDoesNotChangeBits) {
  std::mt19937_64 rng(73);
  const ExpertBank bank = random_bank(8, 16, rng);
  const Tensor x = oracle::random_tensor({300, 16}, rng);
  const EdgeMap em = EdgeMap::all_edge(15, 20);
  MoeProfile prof;
  const Tensor one = hmoe_parallel(x, em, bank, 1);
  const Tensor four = hmoe_parallel(x, em, bank, 4, &prof);
  EXPECT_EQ(one, four);
  EXPECT_EQ(prof.threads, 4u);
  std::size_t total = 0;
  for (auto g : prof.group_sizes) total += g;
  EXPECT_EQ(total, 300u);
}

TEST(Hmoe, BankValidation) {
  std::mt19937_64 rng(74);
  ExpertBank bank = random_bank(3, 8, rng);
  EXPECT_NO_THROW(bank.validate());
  bank.centroids = oracle::random_tensor({3, 8}, rng);
  EXPECT_THROW(bank.validate(), hseg::DimensionError);
}
