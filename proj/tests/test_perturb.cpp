#include <gtest/gtest.h>

#include <random>

#include "c1lab/perturb.hpp"

using namespace c1lab;

namespace {

// Independent oracle for det: long-double central differences of the local map.
long double fd_det(const BumpPerturbation& b, Vec2 w) {
  using LV = BasicVec2<long double>;
  const long double h = 1e-7L * b.radius;
  const LV p{w.x, w.y};
  auto F = [&](LV q) { return b.apply_local<long double>(q); };
  const LV dx = (F(p + LV{h, 0}) - F(p - LV{h, 0})) / (2 * h);
  const LV dy = (F(p + LV{0, h}) - F(p - LV{0, h})) / (2 * h);
  return dx.x * dy.y - dx.y * dy.x;
}

}  // namespace

TEST(Cutoff, QuinticIsC2AtEndpoints) {
  QuinticCutoff c{0.5};
  double r, d1, d2;
  c.eval(0.5, r, d1, d2);
  EXPECT_DOUBLE_EQ(r, 1.0);
  EXPECT_DOUBLE_EQ(d1, 0.0);
  EXPECT_DOUBLE_EQ(d2, 0.0);
  c.eval(1.0, r, d1, d2);
  EXPECT_NEAR(r, 0.0, 1e-15);
  EXPECT_NEAR(d1, 0.0, 1e-12);
  EXPECT_NEAR(d2, 0.0, 1e-9);
  // Derivative bounds dominate sampled values.
  for (int i = 0; i <= 1000; ++i) {
    c.eval(0.5 + 0.5 * i / 1000.0, r, d1, d2);
    EXPECT_LE(std::abs(d1), c.max_d1() + 1e-12);
    EXPECT_LE(std::abs(d2), c.max_d2() + 1e-9);
  }
}

TEST(Elementary, SendsXToY) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (double eta : {0.5, 1.0, 2.0}) {
    for (int k = 0; k < 10; ++k) {
      const Vec2 x{u(rng), u(rng)}, y{u(rng), u(rng)};
      const auto b = elementary_perturbation(x, y, eta);
      const Vec2 img = b.center + b.apply_local(x - b.center);
      EXPECT_LT(norm(img - y), 1e-10);
      EXPECT_NEAR(b.radius, (1 + eta) / 2 * norm(y - x), 1e-15);
    }
  }
}

TEST(Elementary, DegenerateAndInvalid) {
  const auto b = elementary_perturbation({0.1, 0.1}, {0.1, 0.1}, 1.0);
  EXPECT_EQ(b.radius, 0.0);
  EXPECT_TRUE(b.is_identity());
  EXPECT_THROW(elementary_perturbation({0, 0}, {0.1, 0}, 0.0), ContractError);
  EXPECT_THROW(elementary_perturbation({0, 0}, {0.1, 0}, -1.0), ContractError);
}

TEST(Elementary, DeterminantAndTangentAgreeWithOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double eta : {0.5, 2.0}) {
    const auto b = elementary_perturbation({-0.01, 0.003}, {0.012, -0.004}, eta);
    for (int k = 0; k < 200; ++k) {
      Vec2 w{u(rng), u(rng)};
      if (norm(w) >= 1) continue;
      w = b.radius * w;
      Mat2 t;
      b.apply_local(w, &t);
      EXPECT_NEAR(t.det(), 1.0, 1e-8);
      EXPECT_NEAR(double(fd_det(b, w)), 1.0, 1e-4);
    }
  }
}

TEST(Elementary, InverseUndoes) {
  const auto b = elementary_perturbation({0, 0}, {0.02, 0.01}, 0.5);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 100; ++k) {
    const Vec2 w = b.radius * Vec2{u(rng), u(rng)} / std::sqrt(2.0);
    const Vec2 back = b.apply_local<double>(b.apply_local(w), nullptr, -1);
    EXPECT_LT(norm(back - w), 1e-12);
  }
}

TEST(Elementary, SizesScaleAsExpected) {
  const auto b = elementary_perturbation({0, 0}, {0.01, 0}, 1.0);
  // The plateau translates by the full displacement; the annulus may move points further.
  EXPECT_GE(c0_size(b, 60), 0.01 - 1e-12);
  const auto b2 = elementary_perturbation({0, 0}, {0.02, 0}, 1.0);
  EXPECT_NEAR(c0_size(b2, 60) / c0_size(b, 60), 2.0, 1e-9);
  // The C1 size is scale invariant: same eta, same shape.
  EXPECT_NEAR(derivative_size(b, 80), derivative_size(b2, 80), 1e-6);
}

TEST(Apply, UsesNearestTranslateOnTorus) {
  const auto b = elementary_perturbation({0.99, 0.5}, {1.01, 0.5}, 1.0);
  const Vec2 p{0.0, 0.5};  // same as 1.0 on the torus
  const Vec2 img = apply_bump(b, p, Surface::torus);
  EXPECT_GT(img.x, p.x);
  const Vec2 far{0.5, 0.5};
  EXPECT_EQ(apply_bump(b, far, Surface::torus), far);
}

TEST(Composition, DisjointBumpsCommuteAndOverlapIsRejected) {
  const auto f = standard_map({0.5});
  const Bump a = elementary_perturbation({0.2, 0.2}, {0.21, 0.2}, 1.0);
  const Bump b = elementary_perturbation({0.6, 0.6}, {0.6, 0.61}, 1.0);
  const auto g1 = compose_disjoint(f, {{0, a}, {0, b}});
  const auto g2 = compose_disjoint(f, {{0, b}, {0, a}});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 2000; ++k) {
    const TorusPoint p{u(rng), u(rng)};
    const auto q1 = g1.apply(p), q2 = g2.apply(p);
    EXPECT_EQ(q1.x, q2.x);
    EXPECT_EQ(q1.y, q2.y);
  }
  const Bump c = elementary_perturbation({0.205, 0.2}, {0.215, 0.2}, 1.0);
  try {
    compose_disjoint(f, {{0, a}, {0, b}, {0, c}});
    FAIL() << "expected overlap";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("0 and 2"), std::string::npos);
  }
}

TEST(Composition, InverseMap) {
  const auto f = standard_map({0.5});
  const Bump a = elementary_perturbation({0.2, 0.2}, {0.21, 0.2}, 1.0);
  const auto g = compose_disjoint(f, {{0, a}}).as_map();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 500; ++k) {
    const TorusPoint p{u(rng), u(rng)};
    EXPECT_LT(g.distance(g.inverse(g.apply(p)), p), 1e-11);
  }
}

TEST(Franks, PrescribesTangentAndKeepsOrbit) {
  // Fixed point (0,0) of the standard map; rotate its tangent slightly.
  const auto f = standard_map({0.1});
  const Mat2 Df = f.tangent({0, 0});
  const Mat2 target = exp_sl2(Mat2{0.05, 0.02, -0.01, -0.05}) * Df;
  const auto g = franks_edit(f, {{0, 0}}, {target}, 0.05);
  const auto q = g.apply({0, 0});
  EXPECT_LT(torus_distance(q, {0, 0}), 1e-14);
  EXPECT_LT(max_abs(g.tangent({0, 0}) - target), 1e-9);
  EXPECT_THROW(franks_edit(f, {{0, 0}}, {Mat2{2, 0, 0, 1}}, 0.05), ContractError);
}
