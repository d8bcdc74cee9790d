#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "c1lab/analysis.hpp"

using namespace c1lab;

namespace {
const LinearMapParams kCat{{{{2, 1}, {1, 1}}}};
}

TEST(Periodic, StandardMapFixedPoints) {
  const auto f = standard_map({0.1});
  const auto res = find_periodic(f, 1);
  ASSERT_EQ(res.orbits.size(), 2u);
  EXPECT_FALSE(res.non_isolated);
  for (const auto& o : res.orbits) {
    const auto c = classify(o);
    const auto& p = o.points[0];
    // Oracle: trace of [[1,1],[c,1+c]] is 2 + 2 pi a cos(2 pi x) at y = 0.
    const double expected = 2 + 2 * std::numbers::pi * 0.1 * std::cos(2 * std::numbers::pi * p.x);
    EXPECT_NEAR(c.trace, expected, 1e-9);
  }
}

TEST(Periodic, CatMapOrbitCountsMatchLefschetz) {
  const auto f = linear_automorphism(kCat);
  // Number of points with M^t x = x is |det(M^t - I)| = |tr(M^t) - 2|.
  for (int tau : {1, 2, 3}) {
    Mat2 M = to_mat2(kCat), P = Mat2::identity();
    for (int k = 0; k < tau; ++k) P = M * P;
    const int expected = int(std::lround(std::abs(P.trace() - 2)));
    PeriodicSearchOptions opt;
    opt.seeds_per_axis = 40;
    const auto res = find_periodic(f, tau, opt);
    std::size_t pts = 0;
    for (const auto& o : res.orbits) pts += o.points.size();
    EXPECT_EQ(int(pts), expected) << "tau=" << tau;
  }
}

TEST(Periodic, TauOrbitsReappearAtTwoTau) {
  const auto f = standard_map({0.6});
  PeriodicSearchOptions opt;
  opt.seeds_per_axis = 24;
  const auto r1 = find_periodic(f, 2, opt);
  const auto r2 = find_periodic(f, 4, opt);
  for (const auto& o : r1.orbits) {
    bool found = false;
    for (const auto& o2 : r2.orbits)
      for (const auto& p : o2.points)
        if (torus_distance(p, o.points[0]) < 1e-6) found = true;
    EXPECT_TRUE(found);
  }
}

TEST(Periodic, IdentityIsFlaggedNonIsolated) {
  PeriodicSearchOptions opt;
  opt.seeds_per_axis = 4;
  const auto res = find_periodic(identity_map(), 1, opt);
  EXPECT_TRUE(res.non_isolated);
  EXPECT_EQ(res.orbits.size(), 16u);
  EXPECT_THROW(find_periodic(identity_map(), 0), ContractError);
}

TEST(Classify, TraceThresholds) {
  EXPECT_EQ(classify_monodromy(Mat2{2, 1, 1, 1}).tag, OrbitType::saddle);
  EXPECT_EQ(classify_monodromy(Mat2{0, -1, 1, 0}).tag, OrbitType::elliptic);
  EXPECT_EQ(classify_monodromy(Mat2{1, 1, 0, 1}).tag, OrbitType::degenerate);
  EXPECT_EQ(classify_monodromy(Mat2{-1, 1, 0, -1}).tag, OrbitType::degenerate);
  EXPECT_THROW(classify_monodromy(Mat2{2, 0, 0, 1}), ContractError);
}

TEST(Lyapunov, SaddleMatchesSpectralRadius) {
  const auto f = linear_automorphism(kCat);
  const double expected = std::log((3 + std::sqrt(5.0)) / 2);
  EXPECT_NEAR(lyapunov_upper(f, {0.1, 0.2}, 2'000'000), expected, 1e-6);
}

TEST(Lyapunov, ShearGrowsSubexponentially) {
  const auto f = standard_map({0.0});
  const long long n = 100000;
  // ||[[1,n],[0,1]]|| ~ n, so the estimate is about log(n)/n.
  const double l = lyapunov_upper(f, {0.3, 0.4}, n);
  EXPECT_GT(l, 0);
  EXPECT_LT(l, 2 * std::log(double(n)) / n);
}

TEST(Lyapunov, IdentityIsZero) { EXPECT_LE(std::abs(lyapunov_upper(identity_map(), {0.3, 0.1}, 1000)), 1e-12); }

TEST(Manifolds, CatUnstableIsEigenline) {
  const auto f = linear_automorphism(kCat);
  const auto res = find_periodic(f, 1);
  ASSERT_EQ(res.orbits.size(), 1u);
  const auto arc = grow_manifold(f, res.orbits[0], false, 3.0, 1e-3);
  EXPECT_NEAR(arc.arclength, 3.0, 1e-12);
  const double slope = (std::sqrt(5.0) - 1) / 2;
  for (const auto& p : arc.points) EXPECT_NEAR(p.y, slope * p.x, 1e-9);
  for (std::size_t i = 0; i + 1 < arc.points.size(); ++i) EXPECT_LE(norm(arc.points[i + 1] - arc.points[i]), 1e-3 + 1e-12);
  EXPECT_EQ(self_intersections(arc), 0u);
  const auto point = grow_manifold(f, res.orbits[0], false, 0.0, 1e-3);
  EXPECT_EQ(point.points.size(), 1u);
}

TEST(Manifolds, HomoclinicAngleOfCatMap) {
  const auto f = linear_automorphism(kCat);
  const auto orbit = find_periodic(f, 1).orbits.at(0);
  const auto wu = grow_manifold(f, orbit, false, 3.0, 1e-3);
  const auto ws = grow_manifold(f, orbit, true, 3.0, 1e-3);
  const auto hs = homoclinic_points(f, orbit, ws, wu);
  ASSERT_FALSE(hs.empty());
  // M is symmetric, so its eigenvectors are orthogonal.
  for (const auto& h : hs) EXPECT_NEAR(h.angle, std::numbers::pi / 2, 1e-6);
}

TEST(Manifolds, StandardMapSaddleBranches) {
  const auto f = standard_map({0.8});
  const auto res = find_periodic(f, 1);
  const PeriodicOrbit* saddle = nullptr;
  for (const auto& o : res.orbits)
    if (classify(o).tag == OrbitType::saddle && classify(o).trace > 0) saddle = &o;
  ASSERT_NE(saddle, nullptr);
  const auto wu = grow_manifold(f, *saddle, false, 0.5, 1e-3);
  EXPECT_EQ(self_intersections(wu), 0u);
  // Forward invariance: f maps arc points (away from the tip) back onto the arc, up to the
  // chord sagitta of the polyline.
  const auto fine = grow_manifold(f, *saddle, false, 0.5, 1e-4);
  auto dist_to_arc = [&](const Vec2& z) {
    double best = 1e9;
    for (std::size_t k = 0; k + 1 < fine.points.size(); ++k) {
      const Vec2 a = fine.points[k], d = fine.points[k + 1] - a;
      const double t = std::clamp(dot(z - a, d) / dot(d, d), 0.0, 1.0);
      best = std::min(best, norm(z - (a + t * d)));
    }
    return best;
  };
  double run = 0;
  for (std::size_t i = 1; i < fine.points.size(); ++i) {
    run += norm(fine.points[i] - fine.points[i - 1]);
    if (run > 0.05) break;  // images of later points leave the arc
    if (i % 13 == 0) EXPECT_LT(dist_to_arc(f.lift(fine.points[i])), 1e-6);
  }
  const auto ws = grow_manifold(f, *saddle, true, 4.0, 2e-3);
  const auto wu4 = grow_manifold(f, *saddle, false, 4.0, 2e-3);
  EXPECT_FALSE(homoclinic_points(f, *saddle, ws, wu4).empty());
}
