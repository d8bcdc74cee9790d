#pragma once

// Periodic orbits, elliptic/saddle classification, Lyapunov exponents, invariant
// manifolds and homoclinic intersections.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "c1lab/geometry.hpp"
#include "c1lab/maps.hpp"

namespace c1lab {

struct PeriodicOrbit {
  int period{1};
  std::vector<TorusPoint> points;
  Mat2 monodromy;
  double residual{0};
  /// det(D f^tau - I) vanished at the root: the orbit is not isolated.
  bool degenerate{false};
};

struct PeriodicSearchOptions {
  int seeds_per_axis{16};
  int max_newton{60};
  double residual_tol{1e-9};
  double dedup_radius{1e-6};
  double cylinder_v_range{1.0};  // seeds in v for cylinder maps: [-range, range)
};

struct PeriodicSearchResult {
  std::vector<PeriodicOrbit> orbits;
  /// Some root had a singular Newton matrix (continuum of periodic points).
  bool non_isolated{false};
};

namespace detail {

/// Lattice offset nearest to G, respecting the surface.
inline Vec2 nearest_lattice(const Vec2& g, Surface s) {
  return {std::nearbyint(g.x), s == Surface::torus ? std::nearbyint(g.y) : 0.0};
}

inline bool same_orbit(const PeriodicOrbit& o, const TorusPoint& q, double radius, Surface s) {
  for (const auto& p : o.points)
    if (torus_distance(p, q, s) <= radius) return true;
  return false;
}

}  // namespace detail

/// Periodic points with f^tau(q) = q, found by Newton iteration on lift(f^tau)(z) - z - k.
/// Orbits of any period dividing tau are reported, once each.
inline PeriodicSearchResult find_periodic(const SurfaceMap& f, int tau, const PeriodicSearchOptions& opt = {}) {
  if (tau < 1) throw ContractError("find_periodic: tau must be >= 1");
  const Surface surf = f.surface();
  PeriodicSearchResult out;
  const int n = opt.seeds_per_axis;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Vec2 z{(i + 0.5) / n, (j + 0.5) / n};
      if (surf == Surface::cylinder) z.y = opt.cylinder_v_range * (2.0 * (j + 0.5) / n - 1.0);
      bool converged = false;
      bool singular = false;
      for (int it = 0; it < opt.max_newton; ++it) {
        Vec2 w = z;
        Mat2 D = Mat2::identity();
        for (int k = 0; k < tau; ++k) {
          D = f.tangent_lift(w) * D;
          w = f.lift(w);
        }
        Vec2 G = w - z;
        G -= detail::nearest_lattice(G, surf);
        if (norm(G) <= opt.residual_tol * 1e-3) {
          converged = true;
          singular = std::abs((D - Mat2::identity()).det()) < 1e-10;
          break;
        }
        const Mat2 A = D - Mat2::identity();
        if (std::abs(A.det()) < 1e-14) {
          singular = true;
          break;
        }
        Vec2 step = A.inverse() * G;
        const double sn = norm(step);
        if (sn > 0.1) step = (0.1 / sn) * step;
        z -= step;
        if (!std::isfinite(z.x) || !std::isfinite(z.y) || std::abs(z.y) > 1e6) break;
      }
      if (!converged && !singular) continue;  // divergence drops the seed
      const TorusPoint q = wrap(z, surf);
      // A singular matrix away from a root is a Newton failure, not a root.
      const double res = torus_distance(f.iterate(q, tau), q, surf);
      if (res > opt.residual_tol) continue;
      if (singular) out.non_isolated = true;

      bool dup = false;
      for (const auto& o : out.orbits)
        if (detail::same_orbit(o, q, opt.dedup_radius, surf)) {
          dup = true;
          break;
        }
      if (dup) continue;

      PeriodicOrbit orb;
      orb.degenerate = singular;
      int period = tau;
      for (int d = 1; d < tau; ++d) {
        if (tau % d == 0 && torus_distance(f.iterate(q, d), q, surf) <= opt.residual_tol) {
          period = d;
          break;
        }
      }
      orb.period = period;
      TorusPoint p = q;
      for (int k = 0; k < period; ++k) {
        orb.points.push_back(p);
        p = f.apply(p);
      }
      orb.residual = torus_distance(p, q, surf);
      orb.monodromy = f.tangent_iterate(q, period);
      out.orbits.push_back(std::move(orb));
    }
  }
  return out;
}

enum class OrbitType { elliptic, saddle, degenerate };

inline const char* to_string(OrbitType t) {
  switch (t) {
    case OrbitType::elliptic: return "elliptic";
    case OrbitType::saddle: return "saddle";
    default: return "degenerate";
  }
}

struct OrbitClass {
  OrbitType tag{OrbitType::degenerate};
  double trace{0};
  std::array<std::complex<double>, 2> eigenvalues{};
};

inline OrbitClass classify_monodromy(const Mat2& m) {
  if (std::abs(m.det() - 1) > 1e-6) throw ContractError("classify: monodromy determinant differs from 1 by more than 1e-6");
  OrbitClass c;
  c.trace = m.trace();
  c.eigenvalues = eigenvalues(m);
  if (std::abs(c.trace - 2) <= 1e-8 || std::abs(c.trace + 2) <= 1e-8) c.tag = OrbitType::degenerate;
  else if (std::abs(c.trace) < 2) c.tag = OrbitType::elliptic;
  else c.tag = OrbitType::saddle;
  return c;
}

inline OrbitClass classify(const PeriodicOrbit& orbit) { return classify_monodromy(orbit.monodromy); }

/// Upper Lyapunov exponent (1/n) log ||D_x f^n|| with periodic renormalization.
inline double lyapunov_upper(const SurfaceMap& f, TorusPoint x, long long n) {
  if (n < 1) throw ContractError("lyapunov_upper: n must be >= 1");
  Mat2 m = Mat2::identity();
  double log_scale = 0;
  for (long long k = 0; k < n; ++k) {
    m = f.tangent(x) * m;
    x = f.apply(x);
    if ((k & 15) == 15) {
      const double s = max_abs(m);
      m = (1 / s) * m;
      log_scale += std::log(s);
    }
  }
  return (log_scale + std::log(op_norm(m))) / double(n);
}

// ---------------------------------------------------------------------------
// Invariant manifolds.

struct ManifoldArc {
  TorusPoint saddle;
  bool stable{false};
  /// Lifted polyline starting at the saddle.
  std::vector<Vec2> points;
  double arclength{0};
};

struct ManifoldOptions {
  double initial_offset{1e-7};
  int fundamental_points{32};
  std::size_t max_points{2'000'000};
};

/// Grow one branch of W^u (or W^s, via the inverse) of a saddle periodic orbit, iterating a
/// fundamental segment along the eigenvector and bisecting wherever consecutive image points
/// are farther apart than `tol`.
inline ManifoldArc grow_manifold(const SurfaceMap& f, const PeriodicOrbit& saddle, bool stable, double arclength,
                                 double tol, const ManifoldOptions& opt = {}) {
  const OrbitClass cls = classify(saddle);
  if (cls.tag != OrbitType::saddle) throw ContractError("grow_manifold: orbit is not a saddle");
  if (stable && !f.has_inverse()) throw ContractError("grow_manifold: stable branch needs the inverse map");
  ManifoldArc arc;
  arc.saddle = saddle.points.front();
  arc.stable = stable;
  const Vec2 q = arc.saddle.vec();
  arc.points.push_back(q);
  if (arclength <= 0) return arc;

  // Eigenvalue of modulus > 1 for f^tau (unstable) or f^-tau (stable).
  const double l0 = cls.eigenvalues[0].real(), l1 = cls.eigenvalues[1].real();
  double lambda = std::abs(l0) > std::abs(l1) ? l0 : l1;
  const Mat2& M = saddle.monodromy;
  if (stable) lambda = 1 / (std::abs(l0) > std::abs(l1) ? l1 : l0);
  const double mu = stable ? 1 / lambda : lambda;  // eigenvalue of M for the branch
  Vec2 v = std::abs(M.b) > std::abs(M.c) ? Vec2{M.b, mu - M.a} : Vec2{mu - M.d, M.c};
  if (norm(v) == 0) v = std::abs(M.a - mu) < 1e-300 ? Vec2{1, 0} : Vec2{0, 1};
  v = v / norm(v);
  if (v.x < 0 || (v.x == 0 && v.y < 0)) v = -v;

  int reps = saddle.period;
  if (lambda < 0) {
    reps *= 2;
    lambda *= lambda;
  }
  auto F = [&](Vec2 w) {
    for (int k = 0; k < reps; ++k) w = stable ? f.inverse_lift(w) : f.lift(w);
    return w;
  };

  std::vector<Vec2> seg;
  for (int i = 0; i <= opt.fundamental_points; ++i)
    seg.push_back(q + opt.initial_offset * std::pow(lambda, double(i) / opt.fundamental_points) * v);

  auto append = [&](const std::vector<Vec2>& s) -> bool {
    for (std::size_t i = (arc.points.size() > 1 ? 1 : 0); i < s.size(); ++i) {
      const Vec2 prev = arc.points.back();
      const double d = norm(s[i] - prev);
      if (arc.arclength + d >= arclength) {
        const double t = (arclength - arc.arclength) / d;
        arc.points.push_back(prev + t * (s[i] - prev));
        arc.arclength = arclength;
        return true;
      }
      arc.points.push_back(s[i]);
      arc.arclength += d;
    }
    return false;
  };

  if (append(seg)) return arc;
  std::vector<Vec2> pre = seg;
  while (true) {
    std::vector<Vec2> img;
    img.reserve(pre.size() * 2);
    std::vector<Vec2> newpre;
    newpre.reserve(pre.size() * 2);
    Vec2 prev_img = F(pre[0]);
    img.push_back(prev_img);
    newpre.push_back(pre[0]);
    for (std::size_t i = 1; i < pre.size(); ++i) {
      // Bisect the preimage interval until image spacing is below tol.
      std::vector<std::pair<Vec2, Vec2>> stack{{pre[i], F(pre[i])}};
      Vec2 left = pre[i - 1];
      while (!stack.empty()) {
        auto [right, fright] = stack.back();
        if (norm(fright - prev_img) > tol && norm(right - left) > 1e-15) {
          const Vec2 mid = 0.5 * (left + right);
          stack.push_back({mid, F(mid)});
          continue;
        }
        stack.pop_back();
        img.push_back(fright);
        newpre.push_back(right);
        prev_img = fright;
        left = right;
      }
      if (arc.points.size() + img.size() > opt.max_points)
        throw StageError("manifolds", "refinement budget exceeded");
    }
    if (append(img)) return arc;
    pre = std::move(img);
  }
}

/// Number of pairs of non-adjacent polyline segments that cross (in the lift).
inline std::size_t self_intersections(const ManifoldArc& arc) {
  const auto& p = arc.points;
  std::size_t count = 0;
  if (p.size() < 4) return 0;
  // Grid hash over segment bounding boxes.
  double cell = 0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) cell = std::max(cell, norm(p[i + 1] - p[i]));
  if (cell == 0) return 0;
  auto key = [cell](const Vec2& v) {
    return (static_cast<long long>(std::floor(v.x / cell)) << 32) ^ static_cast<long long>(std::floor(v.y / cell) + (1LL << 31));
  };
  std::unordered_map<long long, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) grid[key(p[i])].push_back(i);
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const long long cx = static_cast<long long>(std::floor(p[i].x / cell));
    const long long cy = static_cast<long long>(std::floor(p[i].y / cell));
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy) {
        const long long k = ((cx + dx) << 32) ^ (cy + dy + (1LL << 31));
        auto it = grid.find(k);
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          if (j <= i + 1) continue;
          if (segments_intersect(p[i], p[i + 1], p[j], p[j + 1])) ++count;
        }
      }
  }
  return count;
}

struct HomoclinicPoint {
  TorusPoint point;
  double angle{0};  // acute crossing angle in radians
};

/// Transverse crossings of a stable and an unstable arc on the torus, excluding a
/// neighbourhood of the saddle orbit itself.
inline std::vector<HomoclinicPoint> homoclinic_points(const SurfaceMap& f, const PeriodicOrbit& saddle,
                                                      const ManifoldArc& ws, const ManifoldArc& wu,
                                                      double min_angle = 1e-3, double exclusion = 1e-4) {
  if (!(ws.saddle == wu.saddle)) throw ContractError("homoclinic_points: arcs belong to different saddles");
  const Surface surf = f.surface();
  std::vector<HomoclinicPoint> out;
  if (ws.points.size() < 2 || wu.points.size() < 2) return out;
  double cell = 1e-9;
  for (const auto* a : {&ws, &wu})
    for (std::size_t i = 0; i + 1 < a->points.size(); ++i) cell = std::max(cell, norm(a->points[i + 1] - a->points[i]));
  const long long G = std::max(1LL, static_cast<long long>(std::floor(1.0 / cell)));
  auto cell_of = [G](const TorusPoint& t) { return std::pair<long long, long long>{static_cast<long long>(t.x * G) % G, static_cast<long long>(t.y * G) % G}; };
  std::unordered_map<long long, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i + 1 < ws.points.size(); ++i) {
    auto [cx, cy] = cell_of(wrap(ws.points[i], surf));
    grid[cx * G + cy].push_back(i);
  }
  for (std::size_t j = 0; j + 1 < wu.points.size(); ++j) {
    const Vec2 u0 = wu.points[j], u1 = wu.points[j + 1];
    auto [cx, cy] = cell_of(wrap(u0, surf));
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy) {
        const long long kx = ((cx + dx) % G + G) % G, ky = ((cy + dy) % G + G) % G;
        auto it = grid.find(kx * G + ky);
        if (it == grid.end()) continue;
        for (std::size_t i : it->second) {
          Vec2 s0 = ws.points[i], s1 = ws.points[i + 1];
          const Vec2 shift = u0 - s0 - torus_delta(s0, u0, surf);
          s0 += shift;
          s1 += shift;
          double t = 0;
          if (!segments_intersect(u0, u1, s0, s1, &t)) continue;
          const Vec2 x = u0 + t * (u1 - u0);
          const TorusPoint tp = wrap(x, surf);
          bool near_orbit = false;
          for (const auto& q : saddle.points)
            if (torus_distance(tp, q, surf) < exclusion) near_orbit = true;
          if (near_orbit) continue;
          const Vec2 du = u1 - u0, ds = s1 - s0;
          double ang = std::atan2(std::abs(cross(du, ds)), std::abs(dot(du, ds)));
          if (ang <= min_angle) continue;
          bool dup = false;
          for (const auto& h : out)
            if (torus_distance(h.point, tp, surf) < 1e-12) dup = true;
          if (!dup) out.push_back({tp, ang});
        }
      }
  }
  return out;
}

}  // namespace c1lab
