#include <gtest/gtest.h>

#include <random>

#include "hseg/error.hpp"
#include "hseg/routing.hpp"
#include "oracles.hpp"

using namespace hseg::routing;
using hseg::Tensor;

namespace {

// Window sums by brute force, flags by 0 < s < 49.
std::vector<std::uint8_t> window_sum_flags(const Tensor& m) {
  const long h = long(m.dim(0)), w = long(m.dim(1));
  std::vector<std::uint8_t> out(std::size_t(h * w));
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      int s = 0;
      for (long dy = -3; dy <= 3; ++dy)
        for (long dx = -3; dx <= 3; ++dx) {
          const long a = y + dy, b = x + dx;
          if (a >= 0 && b >= 0 && a < h && b < w) s += m[std::size_t(a * w + b)] != 0.0f;
        }
      out[std::size_t(y * w + x)] = (s > 0 && s < 49) ? 1 : 0;
    }
  return out;
}

Tensor centred_square(std::size_t n, std::size_t side) {
  Tensor m({n, n});
  const std::size_t o = (n - side) / 2;
  for (std::size_t y = o; y < o + side; ++y)
    for (std::size_t x = o; x < o + side; ++x) m.at(y, x) = 1.0f;
  return m;
}

void expect_consistent(const EdgeMap& em) {
  std::vector<int> seen(em.tokens(), 0);
  for (std::size_t i : em.edge_idx) {
    ++seen[i];
    EXPECT_EQ(em.flags[i], 1);
  }
  for (std::size_t i : em.nonedge_idx) {
    ++seen[i];
    EXPECT_EQ(em.flags[i], 0);
  }
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_TRUE(std::is_sorted(em.edge_idx.begin(), em.edge_idx.end()));
  EXPECT_TRUE(std::is_sorted(em.nonedge_idx.begin(), em.nonedge_idx.end()));
}

}  // namespace

TEST(EdgeMap, AllZeroMaskHasNoEdges) {
  const EdgeMap em = compute_edge_map(Tensor({64, 64}), 4, 4);
  EXPECT_TRUE(em.edge_idx.empty());
  EXPECT_EQ(em.nonedge_idx.size(), 16u);
  expect_consistent(em);
}

TEST(EdgeMap, AllOneMaskFlagsOnlyTheBorder) {
  const auto px = pixel_edge_flags(Tensor({20, 20}, 1.0f));
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 0; x < 20; ++x) {
      const bool border = y < 3 || x < 3 || y >= 17 || x >= 17;
      EXPECT_EQ(px[y * 20 + x], border ? 1 : 0);
    }
  const EdgeMap em = compute_edge_map(Tensor({64, 64}, 1.0f), 4, 4);
  EXPECT_EQ(em.edge_idx.size(), 12u);  // the ring of border tokens
  EXPECT_EQ(em.nonedge_idx, (std::vector<std::size_t>{5, 6, 9, 10}));
}

TEST(EdgeMap, CentredSquareGivesThinRing) {
  const Tensor m = centred_square(256, 32);
  const EdgeMap em = compute_edge_map(m, 16, 16);
  expect_consistent(em);
  const auto px = window_sum_flags(m);
  std::vector<std::uint8_t> want(256, 0);
  for (std::size_t y = 0; y < 256; ++y)
    for (std::size_t x = 0; x < 256; ++x)
      if (px[y * 256 + x]) want[(y / 16) * 16 + x / 16] = 1;
  EXPECT_EQ(em.flags, want);
  // Square spans pixels 112..143; boundary bands reach tokens 6..9.
  for (std::size_t i : em.edge_idx) {
    const std::size_t ty = i / 16, tx = i % 16;
    EXPECT_GE(ty, 6u);
    EXPECT_LE(ty, 9u);
    EXPECT_GE(tx, 6u);
    EXPECT_LE(tx, 9u);
  }
  EXPECT_FALSE(em.edge_idx.empty());
}

TEST(EdgeMap, PixelFlagsMatchWindowSumAndFloatFormulation) {
  std::mt19937_64 rng(30);
  for (int t = 0; t < 20; ++t) {
    const Tensor m = oracle::random_binary({33, 47}, rng, t % 2 ? 0.05 : 0.5);
    const auto px = pixel_edge_flags(m);
    EXPECT_EQ(px, window_sum_flags(m));
    EXPECT_EQ(px, oracle::float_variance_flags(m));
  }
}

TEST(EdgeMap, NonBinaryMaskThrows) {
  Tensor m({32, 32});
  m[7] = 0.5f;
  EXPECT_THROW(compute_edge_map(m, 2, 2), hseg::InputError);
  EXPECT_THROW(compute_edge_map(Tensor({30, 32}), 4, 4), hseg::DimensionError);
}

TEST(EdgeMap, RouteTokensFallsBackToAllEdge) {
  const EdgeMap first = route_tokens(Tensor({64, 64}), 4, 4);
  EXPECT_EQ(first.edge_idx.size(), 16u);
  const Tensor m = centred_square(64, 16);
  const EdgeMap later = route_tokens(m, 4, 4);
  EXPECT_EQ(later.flags, compute_edge_map(m, 4, 4).flags);
}

// Steps of 32 keep the square edges at the same phase of the 16-pixel token
// grid; across phases the ring thickness alternates between one and two tokens.
TEST(EdgeMap, EdgeCountMonotoneAndLinearInSide) {
  std::size_t prev = 0;
  for (std::size_t side = 32; side <= 480; side += 32) {
    const std::size_t n = compute_edge_map(centred_square(512, side), 32, 32).edge_idx.size();
    EXPECT_GE(n, prev) << "side " << side;
    EXPECT_LE(n, side) << "side " << side;  // 4 sides x (side/16 + 2) tokens x 2 thick
    prev = n;
  }
}

TEST(Partition, EmptyAndFullEdgeSets) {
  std::mt19937_64 rng(31);
  const Tensor x = oracle::random_tensor({12, 5}, rng);
  const Partition none = partition(x, EdgeMap::all_nonedge(3, 4));
  EXPECT_EQ(none.edge.dim(0), 0u);
  EXPECT_EQ(none.nonedge, x);
  const Partition all = partition(x, EdgeMap::all_edge(3, 4));
  EXPECT_EQ(all.edge, x);
  EXPECT_EQ(scatter(none.edge, none.nonedge, EdgeMap::all_nonedge(3, 4)), x);
}

TEST(Partition, RandomRoundTripIsExact) {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 50; ++t) {
    const Tensor x = oracle::random_tensor({30, 7}, rng);
    std::vector<std::uint8_t> flags(30);
    for (auto& f : flags) f = rng() & 1;
    const EdgeMap em = EdgeMap::from_flags(5, 6, flags);
    expect_consistent(em);
    const Partition p = partition(x, em);
    ASSERT_EQ(p.edge.dim(0) + p.nonedge.dim(0), 30u);
    for (std::size_t i = 0; i < em.edge_idx.size(); ++i)
      EXPECT_EQ(p.edge.at(i, 3), x.at(em.edge_idx[i], 3));
    EXPECT_EQ(scatter(p.edge, p.nonedge, em), x);
  }
}

TEST(Partition, SizeMismatchThrows) {
  EXPECT_THROW(partition(Tensor({5, 2}), EdgeMap::all_edge(2, 2)), hseg::DimensionError);
  EXPECT_THROW(scatter(Tensor({1, 2}), Tensor({1, 2}), EdgeMap::all_edge(2, 2)),
               hseg::DimensionError);
}
