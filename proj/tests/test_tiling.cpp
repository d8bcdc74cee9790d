#include <gtest/gtest.h>

#include <random>

#include "c1lab/tiling.hpp"

using namespace c1lab;

namespace {

OpenSet random_union(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> count(1, 5);
  OpenSet s;
  const int k = count(rng);
  for (int r = 0; r < k; ++r) {
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    s.rects.push_back({std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)});
  }
  return s;
}

bool brute_open_box_inside(const OpenSet& U, const Tile& t) {
  // Dense sampling oracle, valid because rectangle edges are generic.
  const int n = 40;
  for (int a = 1; a < n; ++a)
    for (int b = 1; b < n; ++b)
      if (!U.contains({t.x0() + t.side() * a / n, t.y0() + t.side() * b / n})) return false;
  return true;
}

}  // namespace

TEST(Tiling, EmptySet) {
  const auto d = tile_open_set({}, 2, 6);
  EXPECT_TRUE(d.tiles.empty());
  EXPECT_THROW(tile_open_set({}, 3, 2), ContractError);
}

TEST(Tiling, UnitSquareLevelTwoHasFourCentralTiles) {
  const auto d = tile_open_set(OpenSet{{{0, 0, 1, 1}}}, 2, 2);
  const std::vector<Tile> expected{{2, 1, 1}, {2, 1, 2}, {2, 2, 1}, {2, 2, 2}};
  EXPECT_EQ(d.tiles, expected);
  const auto d5 = tile_open_set(OpenSet{{{0, 0, 1, 1}}}, 2, 5);
  for (const auto& t : expected) EXPECT_TRUE(d5.contains_tile(t));
  for (const auto& t : d5.tiles) EXPECT_FALSE(t.level == 2 && (t.i == 0 || t.i == 3 || t.j == 0 || t.j == 3));
}

TEST(Tiling, OpenBoxContainmentIsExact) {
  OpenSet U{{{0, 0, 0.5, 1}, {0.5, 0, 1, 1}}};
  // The seam x = 0.5 is not covered by either open rectangle.
  EXPECT_FALSE(U.contains_open_box(0.25, 0.25, 0.75, 0.75));
  OpenSet V{{{0, 0, 0.6, 1}, {0.4, 0, 1, 1}}};
  EXPECT_TRUE(V.contains_open_box(0.25, 0.25, 0.75, 0.75));
  EXPECT_TRUE(V.contains_open_box(0, 0, 1, 1));
}

TEST(Tiling, RandomUnionsSatisfyInvariants) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    const OpenSet U = random_union(rng);
    const auto d = tile_open_set(U, 2, 7);
    for (std::size_t a = 0; a < d.tiles.size(); ++a) {
      EXPECT_TRUE(brute_open_box_inside(U, d.tiles[a]));
      for (std::size_t b = a + 1; b < d.tiles.size(); ++b) {
        const Tile &s = d.tiles[a], &t = d.tiles[b];
        // Disjoint interiors: neither is an ancestor of the other.
        const Tile &lo = s.level <= t.level ? s : t, &hi = s.level <= t.level ? t : s;
        const int k = hi.level - lo.level;
        EXPECT_FALSE((hi.i >> k) == lo.i && (hi.j >> k) == lo.j);
        if (closed_intersect(enlarged(s, 1.2), enlarged(t, 1.2))) EXPECT_TRUE(tiles_adjacent_or_equal(s, t));
      }
      const auto adj = adjacency(d, d.tiles[a]);
      EXPECT_LE(adj.size(), 12u);
      std::vector<Tile> brute;
      for (const auto& t : d.tiles)
        if (!(t == d.tiles[a]) && tiles_adjacent_or_equal(t, d.tiles[a])) brute.push_back(t);
      EXPECT_EQ(adj, brute);
    }
  }
}

TEST(Tiling, MonotoneInResolutionAndDeterministic) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const OpenSet U = random_union(rng);
    const auto a = tile_open_set(U, 2, 5), b = tile_open_set(U, 2, 6), c = tile_open_set(U, 2, 6);
    for (const auto& t : a.tiles) EXPECT_TRUE(b.contains_tile(t));
    EXPECT_EQ(b.tiles, c.tiles);
  }
}

TEST(Tiling, DeepInteriorIsCovered) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const OpenSet U = random_union(rng);
    const auto d = tile_open_set(U, 2, 6);
    const double collar = d.collar_width();
    for (int k = 0; k < 2000; ++k) {
      const Vec2 p{u(rng), u(rng)};
      // Distance to the complement: the ball of radius `collar` around p lies in U if
      // the enclosing open box does.
      if (!U.contains_open_box(p.x - collar, p.y - collar, p.x + collar, p.y + collar)) continue;
      EXPECT_TRUE(tile_containing(d, p).has_value());
    }
  }
}

TEST(Tiling, TileContainingAgreesWithLinearScan) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.1, 1.1);
  const OpenSet U = random_union(rng);
  const auto d = tile_open_set(U, 2, 7);
  for (int k = 0; k < 10000; ++k) {
    const Vec2 p{u(rng), u(rng)};
    std::optional<Tile> brute;
    for (const auto& t : d.tiles)
      if (t.x0() <= p.x && p.x < t.x0() + t.side() && t.y0() <= p.y && p.y < t.y0() + t.side()) brute = t;
    EXPECT_EQ(tile_containing(d, p), brute);
  }
  for (const auto& t : d.tiles) EXPECT_EQ(tile_containing(d, t.center()), t);
}

TEST(Tiling, SameEnlargedTileAgreesWithScan) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0, 1), v(-0.05, 0.05);
  const OpenSet U{{{0.1, 0.1, 0.9, 0.7}, {0.3, 0.5, 0.6, 0.95}}};
  const auto d = tile_open_set(U, 2, 7);
  for (auto kind : {Enlargement::jump, Enlargement::t2, Enlargement::support}) {
    for (int k = 0; k < 3000; ++k) {
      const Vec2 p{u(rng), u(rng)}, q = p + Vec2{v(rng), v(rng)};
      bool brute = false;
      for (const auto& t : d.tiles) {
        const Rect e = enlarged(t, enlargement_ratio(kind));
        if (closed_contains(e, p) && closed_contains(e, q)) brute = true;
      }
      EXPECT_EQ(same_enlarged_tile(d, p, q, kind), brute);
      if (tile_containing(d, p)) EXPECT_TRUE(same_enlarged_tile(d, p, p, kind));
    }
  }
}

TEST(Tiling, AdjacencyCounts) {
  TiledDomain single;
  single.n_min = 0;
  single.n_max = 4;
  single.tiles = {{2, 1, 1}};
  single.rebuild_index();
  EXPECT_TRUE(adjacency(single, {2, 1, 1}).empty());

  TiledDomain uniform;
  uniform.n_min = 3;
  uniform.n_max = 3;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) uniform.tiles.push_back({3, i, j});
  uniform.rebuild_index();
  EXPECT_EQ(adjacency(uniform, {3, 2, 2}).size(), 8u);

  // Level-2 tile [1/4,1/2]^2 ringed by level-3 tiles.
  TiledDomain ring;
  ring.n_min = 2;
  ring.n_max = 3;
  ring.tiles.push_back({2, 1, 1});
  for (int i = 1; i <= 4; ++i)
    for (int j = 1; j <= 4; ++j)
      if (i == 1 || i == 4 || j == 1 || j == 4) ring.tiles.push_back({3, i, j});
  ring.rebuild_index();
  EXPECT_EQ(adjacency(ring, {2, 1, 1}).size(), 12u);
}
