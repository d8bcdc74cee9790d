#pragma once

// Closing lemma: returns to a ball, selection by hyperbolic distance, the disjointness claim,
// one-bump closing, and Pugh spreading of a displacement along an orbit segment.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include "c1lab/geometry.hpp"
#include "c1lab/maps.hpp"
#include "c1lab/perturb.hpp"

namespace c1lab {

/// Open ball in chart coordinates around a surface point.
struct Ball {
  TorusPoint center;
  double radius{0};
};

struct Return {
  long long iterate{0};
  TorusPoint point;
  ChartPoint local;  // chart coordinates relative to the ball center
};

struct ReturnCloud {
  Ball ball;
  TorusPoint source;
  std::vector<Return> returns;
};

/// D = d(p_i, p_j) / d((p_i + p_j) / 2, boundary of B), chart coordinates centered at B.
inline double hyperbolic_ratio(double radius, const ChartPoint& pi, const ChartPoint& pj) {
  if (!(norm(pi) < radius) || !(norm(pj) < radius)) throw ContractError("hyperbolic_ratio: points must lie inside the ball");
  const double d = norm(pj - pi);
  if (d == 0) return 0;
  return d / (radius - norm(0.5 * (pi + pj)));
}

inline double hyperbolic_ratio(const ReturnCloud& c, std::size_t i, std::size_t j) {
  return hyperbolic_ratio(c.ball.radius, c.returns.at(i).local, c.returns.at(j).local);
}

struct PairChoice {
  std::size_t i{0}, j{0};
  double ratio{std::numeric_limits<double>::infinity()};
};

namespace detail {
inline bool better_pair(double r, std::size_t i, std::size_t j, const PairChoice& best) {
  if (r != best.ratio) return r < best.ratio;
  if (j - i != best.j - best.i) return j - i < best.j - best.i;
  return i < best.i;
}
}  // namespace detail

/// Minimizer of D_{i,j} over i < j; ties broken by (j - i, i).
inline PairChoice select_pair(const ReturnCloud& c) {
  if (c.returns.size() < 2) throw ContractError("select_pair: need at least two returns");
  PairChoice best;
  for (std::size_t j = 1; j < c.returns.size(); ++j)
    for (std::size_t i = 0; i < j; ++i) {
      const double r = hyperbolic_ratio(c, i, j);
      if (detail::better_pair(r, i, j, best)) best = {i, j, r};
    }
  return best;
}

/// The ball B(mid, (1 + eta)/2 d) lies in B and contains no return other than the pair.
inline bool verify_claim(const ReturnCloud& c, std::size_t i0, std::size_t j0, double eta) {
  const ChartPoint a = c.returns.at(i0).local, b = c.returns.at(j0).local;
  const ChartPoint mid = 0.5 * (a + b);
  const double R = (1 + eta) / 2 * norm(b - a);
  if (!(norm(mid) + R <= c.ball.radius)) return false;
  for (std::size_t k = 0; k < c.returns.size(); ++k) {
    if (k == i0 || k == j0) continue;
    if (norm(c.returns[k].local - mid) < R) return false;
  }
  return true;
}

struct ClosingResult {
  ReturnCloud cloud;
  PairChoice pair;
  BumpPerturbation bump;           // sends p_{j0} onto p_{i0}; zero radius when they coincide
  CompositePerturbation map;       // g = phi o f
  long long period{0};             // m = n_{j0} - n_{i0}
  long long scanned{0};            // n_s: last iterate examined
  double periodic_residual{0};
  std::optional<BumpPerturbation> conjugator;  // moves p_{i0} onto the source point
};

struct ClosingOptions {
  long long max_iter{100000};
  bool conjugate{false};
  int min_flow_steps{32};
};

/// Periodicity residual d(g^m(q), q) for the perturbed map.
inline double periodic_residual(const CompositePerturbation& g, const TorusPoint& q, long long m) {
  return torus_distance(g.iterate(q, m), q, g.base().surface());
}

/// Close the orbit of p inside the ball with one elementary perturbation (eta <= 1/2).
/// Returns are scanned in order; the running minimizing pair is accepted as soon as the
/// claim holds for it.
inline ClosingResult close_orbit(const SurfaceMap& f, const TorusPoint& p, const Ball& ball, double eta,
                                 const ClosingOptions& opt = {}) {
  if (!(eta > 0) || eta > 0.5) throw ContractError("close_orbit: eta must lie in (0, 1/2]");
  const Chart chart(ball.center, ball.radius, f.surface());
  if (!chart.in_domain(p)) throw ContractError("close_orbit: source point outside the ball");
  ReturnCloud cloud{ball, p, {}};
  PairChoice best;
  TorusPoint z = p;
  bool found = false;
  long long n = 0;
  for (; n <= opt.max_iter; ++n) {
    if (n > 0) z = f.apply(z);
    const ChartPoint w = chart.to_chart_unchecked(z);
    if (!(norm(w) < ball.radius)) continue;
    cloud.returns.push_back({n, z, w});
    const std::size_t j = cloud.returns.size() - 1;
    for (std::size_t i = 0; i < j; ++i) {
      const double r = hyperbolic_ratio(ball.radius, cloud.returns[i].local, w);
      if (detail::better_pair(r, i, j, best)) best = {i, j, r};
    }
    if (j >= 1 && verify_claim(cloud, best.i, best.j, eta)) {
      found = true;
      break;
    }
  }
  if (!found) {
    std::ostringstream m;
    m << "no qualifying pair within " << opt.max_iter << " iterates (" << cloud.returns.size() << " returns, best ratio "
      << best.ratio << ")";
    throw StageError("closing", m.str());
  }
  const Return& ri = cloud.returns[best.i];
  const Return& rj = cloud.returns[best.j];
  const Vec2 base = chart.base().vec();
  BumpPerturbation b = elementary_perturbation(base + rj.local, base + ri.local, eta, opt.min_flow_steps);
  ClosingResult res{cloud, best, b, CompositePerturbation(f, {{0, b}}), rj.iterate - ri.iterate, n, 0, std::nullopt};
  res.periodic_residual = periodic_residual(res.map, ri.point, res.period);
  if (opt.conjugate) {
    // A second bump moves the periodic point onto p; the conjugated map psi g psi^-1 then has p periodic.
    res.conjugator = elementary_perturbation(base + ri.local, base + chart.to_chart_unchecked(p), eta, opt.min_flow_steps);
  }
  return res;
}

/// psi o g o psi^-1 for the optional conjugating bump.
inline SurfaceMap conjugated_map(const ClosingResult& r) {
  if (!r.conjugator) return r.map.as_map();
  const auto g = r.map.as_map();
  const Bump psi = *r.conjugator;
  const Surface s = g.surface();
  auto lift = [g, psi, s](const Vec2& q) { return apply_bump(psi, g.lift(apply_bump(psi, q, s, nullptr, -1)), s); };
  auto tangent = [g, psi, s](const Vec2& q) {
    Mat2 a, c;
    const Vec2 u = apply_bump(psi, q, s, &a, -1);
    const Mat2 b = g.tangent_lift(u);
    apply_bump(psi, g.lift(u), s, &c);
    return c * b * a;
  };
  std::optional<SurfaceMap::LiftFn> inv;
  if (g.has_inverse())
    inv = [g, psi, s](const Vec2& q) { return apply_bump(psi, g.inverse_lift(apply_bump(psi, q, s, nullptr, -1)), s); };
  return SurfaceMap(g.name() + "+conjugated", s, lift, tangent, inv);
}

/// Orthonormal frames and singular values of D_z f^k, k = 0..N-1.
struct AdaptedFrame {
  TorusPoint base;
  int horizon{0};
  std::vector<Svd2> frames;
};

inline AdaptedFrame adapted_frame(const SurfaceMap& f, const TorusPoint& z, int N) {
  AdaptedFrame a{z, N, {}};
  Mat2 D = Mat2::identity();
  double det = 1;
  TorusPoint p = z;
  for (int k = 0; k < N; ++k) {
    a.frames.push_back(svd(D, det));
    const Mat2 step = f.tangent(p);
    det *= step.det();
    D = step * D;
    p = f.apply(p);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Pugh spreading.

struct SpreadOptions {
  double delta{0.01};             // radius of S = B(z, delta); S-hat has radius 3/2 delta
  double conformal_bound{1.25};   // max singular-value ratio of D f^k for conformal mode
  double cone_degrees{30.0};      // heuristic: alignment with the minor axis
  double capacity{0.25};          // bump radius as a fraction of the minor half-axis of f^k(S-hat)
  int max_times{200};
  int min_flow_steps{32};
  int boundary_samples{64};
};

struct SpreadResult {
  CompositePerturbation map;
  int N{0};                        // g^N(x) = f^N(y)
  bool conformal_mode{true};
  std::vector<int> times;          // iterate at which each bump acts (phi o f convention)
  std::vector<Vec2> waypoints;     // zeta_0 = x, ..., last = y (lifted, near z)
  double residual{0};
};

inline int pugh_horizon(double eta) { return int(std::ceil(4 * (1 + eta) - 1e-12)); }

namespace detail {

/// Sufficient test that S-hat and its iterates 1..N are pairwise disjoint: linearized ellipse
/// images are covered by balls of radius 3/2 delta sigma_max, with a 10% nonlinearity margin.
inline std::optional<std::pair<int, int>> iterates_overlap(const SurfaceMap& f, const TorusPoint& z, double delta, int N) {
  std::vector<TorusPoint> pts{z};
  std::vector<double> reach{1.5 * delta};
  Mat2 D = Mat2::identity();
  TorusPoint p = z;
  for (int k = 1; k <= N; ++k) {
    D = f.tangent(p) * D;
    p = f.apply(p);
    pts.push_back(p);
    reach.push_back(1.1 * 1.5 * delta * op_norm(D));
  }
  for (int i = 0; i <= N; ++i)
    for (int j = i + 1; j <= N; ++j)
      if (f.distance(pts[i], pts[j]) <= reach[i] + reach[j]) return std::pair{i, j};
  return std::nullopt;
}

/// The support of a bump acting at iterate k pulls back inside S-hat (boundary circle test;
/// the pull-back is a disc bounded by the pulled-back circle).
inline bool pulls_back_inside(const SurfaceMap& f, const BumpPerturbation& b, int k, const Vec2& z, double radius, int samples) {
  if (b.is_identity()) return true;
  for (int s = 0; s < samples; ++s) {
    const double t = 2 * std::numbers::pi * s / samples;
    Vec2 w = b.center + b.radius * Vec2{std::cos(t), std::sin(t)};
    for (int i = 0; i < k; ++i) w = f.inverse_lift(w);
    if (!(norm(torus_delta(z, w, f.surface())) < radius)) return false;
  }
  return true;
}

}  // namespace detail

/// Spread the displacement x -> y over bumps acting at iterates of S-hat so that g^N(x) = f^N(y).
inline SpreadResult pugh_spread(const SurfaceMap& f, const TorusPoint& z, const TorusPoint& x, const TorusPoint& y,
                                double eta, const SpreadOptions& opt = {}) {
  if (!(eta > 0)) throw ContractError("pugh_spread: eta must be > 0");
  if (!f.has_inverse()) throw ContractError("pugh_spread: needs an invertible map");
  const double delta = opt.delta;
  const Vec2 zl = z.vec();
  const Vec2 xl = zl + torus_delta(zl, x.vec(), f.surface()), yl = zl + torus_delta(zl, y.vec(), f.surface());
  if (!(norm(xl - zl) < delta) || !(norm(yl - zl) < delta)) throw ContractError("pugh_spread: x and y must lie in S");
  const int N0 = pugh_horizon(eta);
  if (xl == yl) return {CompositePerturbation(f, {}), N0, true, {}, {xl, yl}, 0};

  // Conformal mode when the singular-value ratio stays small along the horizon.
  bool conformal = true;
  {
    Mat2 D = Mat2::identity();
    double det = 1;
    TorusPoint p = z;
    for (int k = 1; k <= N0 && conformal; ++k) {
      const Mat2 step = f.tangent(p);
      det *= step.det();
      D = step * D;
      p = f.apply(p);
      const auto s = svd(D, det);
      if (s.s1 > opt.conformal_bound * s.s2) conformal = false;
    }
  }

  SpreadResult res{CompositePerturbation(f, {}), 0, conformal, {}, {xl}, 0};
  std::vector<PlacedBump> bumps;
  auto add_bump = [&](int k, const Vec2& from, const Vec2& to) {
    const Vec2 a = f.iterate_lift(from, k), b = f.iterate_lift(to, k);
    const BumpPerturbation bp = elementary_perturbation(a, b, eta, opt.min_flow_steps);
    if (!detail::pulls_back_inside(f, bp, k, zl, 1.5 * delta, opt.boundary_samples)) {
      std::ostringstream m;
      m << "bump at iterate " << k << " leaves the iterate of S-hat";
      throw StageError("closing", m.str());
    }
    bumps.push_back({k, bp});
    res.times.push_back(k);
    res.waypoints.push_back(to);
  };

  if (conformal) {
    res.N = N0;
    for (int i = 0; i < N0; ++i) {
      const Vec2 zi = xl + (double(i) / N0) * (yl - xl);
      const Vec2 zn = i + 1 == N0 ? yl : xl + (double(i + 1) / N0) * (yl - xl);
      add_bump(i + 1, zi, zn);
    }
  } else {
    // Adapted-frame heuristic: act only when D f^k pushes the remaining segment within the cone
    // around the minor axis of f^k(S-hat), moving as far along it as the capacity allows.
    const double cos_cone = std::cos(opt.cone_degrees * std::numbers::pi / 180);
    Vec2 zeta = xl;
    Mat2 D = Mat2::identity();
    double det = 1;
    TorusPoint p = z;
    for (int k = 1; k <= opt.max_times; ++k) {
      const Mat2 step = f.tangent(p);
      det *= step.det();
      D = step * D;
      p = f.apply(p);
      const Vec2 r = yl - zeta;
      const Vec2 Dr = D * r;
      const auto s = svd(D, det);
      const Vec2 minor = s.u.col(1);
      if (std::abs(dot(Dr, minor)) < cos_cone * norm(Dr)) continue;
      const double cap = 2 * opt.capacity * 1.5 * delta * s.s2 / (1 + eta);
      const double t = std::min(1.0, cap / norm(Dr));
      const Vec2 next = t >= 1 ? yl : zeta + t * r;
      add_bump(k, zeta, next);
      zeta = next;
      if (t >= 1) {
        res.N = k;
        break;
      }
    }
    if (res.N == 0) throw StageError("closing", "spread heuristic: displacement never aligned with the contracting axes");
  }

  if (auto o = detail::iterates_overlap(f, z, delta, res.N)) {
    std::ostringstream m;
    m << "S-hat iterates " << o->first << " and " << o->second << " may intersect";
    throw StageError("closing", m.str());
  }
  res.map = compose_disjoint(f, std::move(bumps));
  res.residual = torus_distance(res.map.iterate(x, res.N), f.iterate(y, res.N), f.surface());
  if (!(res.residual <= 1e-6)) throw StageError("closing", "spread residual above 1e-6");
  return res;
}

}  // namespace c1lab
