#include <gtest/gtest.h>

#include <random>

#include "c1lab/closing.hpp"

using namespace c1lab;

namespace {

ReturnCloud cloud_from(const std::vector<Vec2>& pts, double radius = 1.0) {
  ReturnCloud c{{{0, 0}, radius}, {0, 0}, {}};
  for (std::size_t k = 0; k < pts.size(); ++k) c.returns.push_back({(long long)k, wrap(pts[k]), pts[k]});
  return c;
}

std::vector<Vec2> random_cloud(std::mt19937_64& rng, int n, double radius) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec2> pts;
  while (int(pts.size()) < n) {
    const Vec2 p{u(rng), u(rng)};
    if (norm(p) < 1) pts.push_back(radius * p);
  }
  return pts;
}

// Brute-force claim oracle by dense sampling of the candidate ball boundary and the other points.
bool brute_claim(const ReturnCloud& c, std::size_t i0, std::size_t j0, double eta) {
  const Vec2 a = c.returns[i0].local, b = c.returns[j0].local, mid = 0.5 * (a + b);
  const double R = (1 + eta) / 2 * norm(b - a);
  for (int s = 0; s < 3600; ++s) {
    const double t = 2 * std::numbers::pi * s / 3600;
    if (norm(mid + R * Vec2{std::cos(t), std::sin(t)}) > c.ball.radius) return false;
  }
  for (std::size_t k = 0; k < c.returns.size(); ++k)
    if (k != i0 && k != j0 && norm(c.returns[k].local - mid) < R) return false;
  return true;
}

}  // namespace

TEST(HyperbolicRatio, ClosedFormCases) {
  EXPECT_EQ(hyperbolic_ratio(1.0, {0.3, 0.1}, {0.3, 0.1}), 0.0);
  EXPECT_NEAR(hyperbolic_ratio(1.0, {0.1, 0}, {-0.1, 0}), 0.2, 1e-15);
  EXPECT_NEAR(hyperbolic_ratio(1.0, {0.8, 0}, {0.9, 0}), 0.1 / 0.15, 1e-12);
  EXPECT_THROW(hyperbolic_ratio(1.0, {1.0, 0}, {0.9, 0}), ContractError);
}

TEST(SelectPair, MatchesExhaustiveMinimum) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 29;
    const auto c = cloud_from(random_cloud(rng, n, 0.99));
    const auto p = select_pair(c);
    double best = 1e300;
    for (int j = 1; j < n; ++j)
      for (int i = 0; i < j; ++i) best = std::min(best, hyperbolic_ratio(c, i, j));
    EXPECT_EQ(p.ratio, best);
    EXPECT_LT(p.i, p.j);
  }
  EXPECT_THROW(select_pair(cloud_from({{0, 0}})), ContractError);
  const auto coincident = cloud_from({{0.1, 0.1}, {0.5, 0.2}, {0.1, 0.1}});
  const auto pc = select_pair(coincident);
  EXPECT_EQ(pc.i, 0u);
  EXPECT_EQ(pc.j, 2u);
  EXPECT_EQ(pc.ratio, 0.0);
}

TEST(VerifyClaim, AgreesWithBruteForce) {
  std::mt19937_64 rng(2);
  EXPECT_TRUE(verify_claim(cloud_from({{0.01, 0}, {-0.01, 0}}), 0, 1, 0.5));
  // Containment fails once D exceeds 2 / (1 + eta).
  EXPECT_TRUE(verify_claim(cloud_from({{0.8, 0}, {0.9, 0}}), 0, 1, 0.5));
  EXPECT_FALSE(verify_claim(cloud_from({{0.9, 0}, {0.99, 0}}), 0, 1, 0.5));
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = cloud_from(random_cloud(rng, 2 + trial % 10, 0.99));
    const auto p = select_pair(c);
    EXPECT_EQ(verify_claim(c, p.i, p.j, 0.5), brute_claim(c, p.i, p.j, 0.5));
  }
}

TEST(CloseOrbit, FixedPointGivesIdentityBump) {
  const auto f = standard_map({0.8});
  const auto r = close_orbit(f, {0, 0}, {{0, 0}, 0.05}, 0.5);
  EXPECT_EQ(r.bump.radius, 0.0);
  EXPECT_EQ(r.period, 1);
  EXPECT_EQ(r.periodic_residual, 0.0);
}

TEST(CloseOrbit, StandardMapExample) {
  const auto f = standard_map({0.8});
  const TorusPoint p{0.3, 0.41};
  const auto r = close_orbit(f, p, {p, 0.05}, 0.5);
  const auto& q = r.cloud.returns[r.pair.i].point;
  EXPECT_LE(periodic_residual(r.map, q, r.period), 1e-6);
  EXPECT_LE(r.period, r.scanned);
  // Selected pair is the exhaustive minimum over the scanned cloud.
  EXPECT_EQ(select_pair(r.cloud).ratio, r.pair.ratio);
  EXPECT_TRUE(verify_claim(r.cloud, r.pair.i, r.pair.j, 0.5));
  // Outside the ball g is bit-identical to f.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 2000; ++k) {
    const TorusPoint z{u(rng), u(rng)};
    if (torus_distance(f.apply(z), p) < 0.05) continue;
    EXPECT_EQ(r.map.apply(z), f.apply(z));
  }
  EXPECT_LE(r.map.c0_distance(40), c0_size(r.bump, 40) + 1e-15);
}

TEST(CloseOrbit, ConjugationMovesPeriodicPointOntoSource) {
  const auto f = standard_map({0.8});
  const TorusPoint p{0.3, 0.41};
  ClosingOptions opt;
  opt.conjugate = true;
  const auto r = close_orbit(f, p, {p, 0.05}, 0.5, opt);
  ASSERT_TRUE(r.conjugator.has_value());
  const auto h = conjugated_map(r);
  EXPECT_LE(torus_distance(h.iterate(p, r.period), p), 1e-6);
}

TEST(CloseOrbit, NoReturnIsAStageError) {
  // Shear with irrational rotation number on this circle: returns are rare.
  const auto f = standard_map({0.0});
  try {
    close_orbit(f, {0.1, std::sqrt(2.0) - 1}, {{0.1, std::sqrt(2.0) - 1}, 1e-4}, 0.5, {5, false});
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "closing");
    EXPECT_NE(std::string(e.what()).find("best ratio"), std::string::npos);
  }
  EXPECT_THROW(close_orbit(f, {0.1, 0.1}, {{0.1, 0.1}, 0.01}, 0.75), ContractError);
}

TEST(AdaptedFrame, OrthonormalUnitDeterminant) {
  const auto a = adapted_frame(standard_map({0.9}), {0.2, 0.3}, 20);
  for (const auto& s : a.frames) {
    EXPECT_LT(max_abs(s.u.transpose() * s.u - Mat2::identity()), 1e-10);
    EXPECT_LT(max_abs(s.v.transpose() * s.v - Mat2::identity()), 1e-10);
    EXPECT_NEAR(s.s1 * s.s2, 1.0, 1e-8);
  }
}

TEST(PughSpread, RigidRotation) {
  const auto f = translation_map({{0.1234567, 0.3456789}});
  const TorusPoint z{0.5, 0.5};
  SpreadOptions opt;
  opt.delta = 0.01;
  const TorusPoint x{0.5 - 0.006, 0.5 + 0.002}, y{0.5 + 0.005, 0.5 - 0.004};
  const auto r = pugh_spread(f, z, x, y, 2.0, opt);
  EXPECT_TRUE(r.conformal_mode);
  EXPECT_EQ(r.N, 12);
  EXPECT_EQ(r.map.bumps().size(), 12u);
  EXPECT_LE(r.residual, 1e-9);
  EXPECT_FALSE(find_overlap(r.map.bumps()).has_value());
  const auto same = pugh_spread(f, z, x, x, 2.0, opt);
  EXPECT_TRUE(same.map.bumps().empty());
}

TEST(PughSpread, CatMapUsesHeuristic) {
  const auto f = linear_automorphism({{{{2, 1}, {1, 1}}}});
  const TorusPoint z{0.3141592, 0.2718281};
  SpreadOptions opt;
  opt.delta = 1e-5;
  // Displacement along the stable direction of M.
  const Vec2 es = Vec2{1, -(1 + std::sqrt(5.0)) / 2} / std::sqrt(1 + std::pow((1 + std::sqrt(5.0)) / 2, 2));
  const TorusPoint x = wrap(z.vec() + 0.8 * opt.delta * es), y = wrap(z.vec() - 0.8 * opt.delta * es);
  const auto r = pugh_spread(f, z, x, y, 1.0, opt);
  EXPECT_FALSE(r.conformal_mode);
  EXPECT_LE(r.residual, 1e-6);
  EXPECT_FALSE(find_overlap(r.map.bumps()).has_value());
}
