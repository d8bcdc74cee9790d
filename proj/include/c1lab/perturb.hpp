#pragma once

// Compactly supported area-preserving perturbations realized as time-1 Hamiltonian flows.
//
// Every bump is the flow of a Hamiltonian H(w) = core(w) * rho(|w| / r) in local
// coordinates w = z - center. The flow is integrated with the implicit midpoint rule,
// which is symplectic, so the computed map preserves area up to the Newton tolerance.
// Outside the support the field vanishes and the map returns its input unchanged.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "c1lab/geometry.hpp"
#include "c1lab/maps.hpp"

namespace c1lab {

/// C^2 radial cutoff: 1 on [0, plateau], 0 on [1, inf), 1 - q(t) in between where
/// q(t) = t^3 (10 - 15 t + 6 t^2) and t = (s - plateau) / (1 - plateau).
struct QuinticCutoff {
  double plateau{0.5};

  static constexpr const char* id = "quintic";
  /// Bounds on |rho'| and |rho''| in the variable s.
  double max_d1() const { return 1.875 / (1 - plateau); }
  double max_d2() const { return (10.0 / std::sqrt(3.0)) / ((1 - plateau) * (1 - plateau)); }

  template <typename Real>
  void eval(Real s, Real& rho, Real& d1, Real& d2) const {
    const Real sp = Real(plateau);
    if (s <= sp) {
      rho = 1, d1 = 0, d2 = 0;
      return;
    }
    if (s >= 1) {
      rho = 0, d1 = 0, d2 = 0;
      return;
    }
    const Real w = 1 - sp;
    const Real t = (s - sp) / w;
    const Real q = t * t * t * (10 - 15 * t + 6 * t * t);
    const Real dq = 30 * t * t * (1 - t) * (1 - t);
    const Real d2q = 60 * t * (1 - t) * (1 - 2 * t);
    rho = 1 - q;
    d1 = -dq / w;
    d2 = -d2q / (w * w);
  }
};

namespace detail {

template <typename Real>
struct FieldJet {
  BasicVec2<Real> value;
  BasicMat2<Real> jacobian;
};

/// Hamiltonian field X = J grad H and its Jacobian J Hess H for H = core * rho(|w|/r).
/// core is either linear (-<J u, w>) or quadratic (w^T S w / 2).
template <typename Real>
FieldJet<Real> hamiltonian_field(const BasicVec2<Real>& w, double radius, const QuinticCutoff& cutoff,
                                 const Vec2& disp, const Mat2& sym, bool quadratic) {
  using V = BasicVec2<Real>;
  using M = BasicMat2<Real>;
  const Real r = Real(radius);
  const Real n = std::sqrt(w.x * w.x + w.y * w.y);
  Real rho, d1, d2;
  cutoff.eval<Real>(n / r, rho, d1, d2);

  Real L;
  V gL;
  M hL;
  if (quadratic) {
    const M S{Real(sym.a), Real(sym.b), Real(sym.c), Real(sym.d)};
    gL = S * w;
    L = Real(0.5) * (w.x * gL.x + w.y * gL.y);
    hL = S;
  } else {
    const V Ju{-Real(disp.y), Real(disp.x)};
    L = -(Ju.x * w.x + Ju.y * w.y);
    gL = -Ju;
    hL = M::zero();
  }

  V gH = rho * gL;
  M hH = rho * hL;
  if (d1 != 0 || d2 != 0) {
    const V e = w / n;
    const V gP = (d1 / r) * e;
    const M eeT{e.x * e.x, e.x * e.y, e.y * e.x, e.y * e.y};
    const M hP = (d2 / (r * r)) * eeT + (d1 / (r * n)) * (M::identity() - eeT);
    gH += L * gP;
    const M cross_terms{gL.x * gP.x + gP.x * gL.x, gL.x * gP.y + gP.x * gL.y, gL.y * gP.x + gP.y * gL.x,
                        gL.y * gP.y + gP.y * gL.y};
    hH = hH + cross_terms + L * hP;
  }
  // Symmetrize exactly so that J * Hess is trace-free in floating point.
  hH.b = hH.c = (hH.b + hH.c) / 2;
  const M J = M::symplectic();
  return {V{-gH.y, gH.x}, J * hH};
}

/// Implicit midpoint integration of the bump field for time `direction` (+1 or -1).
template <typename Real>
BasicVec2<Real> midpoint_flow(BasicVec2<Real> w, double radius, const QuinticCutoff& cutoff, const Vec2& disp,
                              const Mat2& sym, bool quadratic, int steps, int direction, BasicMat2<Real>* tangent) {
  using V = BasicVec2<Real>;
  using M = BasicMat2<Real>;
  const Real h = Real(direction) / Real(steps);
  const Real tol = Real(8) * std::numeric_limits<Real>::epsilon() * Real(radius);
  M D = M::identity();
  for (int k = 0; k < steps; ++k) {
    FieldJet<Real> jet = hamiltonian_field<Real>(w, radius, cutoff, disp, sym, quadratic);
    if (jet.value.x == 0 && jet.value.y == 0 && jet.jacobian == M::zero()) continue;  // outside support: w fixed
    V z = w + h * jet.value;
    bool converged = false;
    for (int it = 0; it < 60; ++it) {
      const V mid = Real(0.5) * (w + z);
      jet = hamiltonian_field<Real>(mid, radius, cutoff, disp, sym, quadratic);
      const V F = z - w - h * jet.value;
      const M JF = M::identity() - (h / 2) * jet.jacobian;
      const V dz = JF.inverse() * F;
      z -= dz;
      if (std::abs(dz.x) + std::abs(dz.y) <= tol) {
        converged = true;
        break;
      }
    }
    if (!converged) throw StageError("perturb", "implicit midpoint step did not converge");
    if (tangent) {
      jet = hamiltonian_field<Real>(Real(0.5) * (w + z), radius, cutoff, disp, sym, quadratic);
      const M half = (h / 2) * jet.jacobian;
      D = (M::identity() - half).inverse() * ((M::identity() + half) * D);
    }
    w = z;
  }
  if (tangent) *tangent = D;
  return w;
}

}  // namespace detail

/// Elementary perturbation: translation by `displacement` on the plateau, identity
/// outside B(center, radius). With center = (x + y) / 2 it sends x onto y exactly.
struct BumpPerturbation {
  Vec2 center{};
  double radius{0};
  Vec2 displacement{};
  double plateau_radius{0};
  int flow_steps{32};
  /// Design endpoints in canonical coordinates. When set, evaluation at exactly `pin_source`
  /// returns exactly `pin_target` (the correctly rounded value of the exact map there).
  std::optional<TorusPoint> pin_source, pin_target;

  QuinticCutoff cutoff() const { return {radius > 0 ? plateau_radius / radius : 0.5}; }
  bool is_identity() const { return radius == 0 || (displacement.x == 0 && displacement.y == 0); }

  /// Image of a local offset w = z - center.
  template <typename Real = double>
  BasicVec2<Real> apply_local(const BasicVec2<Real>& w, BasicMat2<Real>* tangent = nullptr, int direction = 1) const {
    if (tangent) *tangent = BasicMat2<Real>::identity();
    if (is_identity()) return w;
    const Real r = Real(radius);
    if (std::sqrt(w.x * w.x + w.y * w.y) >= r) return w;
    const BasicVec2<Real> u{Real(direction) * Real(displacement.x), Real(direction) * Real(displacement.y)};
    const BasicVec2<Real> end = w + u;
    const Real rp = Real(plateau_radius);
    if (std::sqrt(w.x * w.x + w.y * w.y) <= rp && std::sqrt(end.x * end.x + end.y * end.y) <= rp) return end;
    return detail::midpoint_flow<Real>(w, radius, cutoff(), displacement, Mat2::zero(), false, flow_steps, direction,
                                       tangent);
  }
};

/// Franks-lemma bump: time-1 flow of (w^T S w / 2) rho(|w| / r). Fixes the center and has
/// tangent exp(J S) there.
struct QuadraticBump {
  Vec2 center{};
  double radius{0};
  Mat2 generator = Mat2::zero();  // symmetric S
  double plateau_radius{0};
  int flow_steps{32};

  QuinticCutoff cutoff() const { return {radius > 0 ? plateau_radius / radius : 0.5}; }
  bool is_identity() const { return radius == 0 || generator == Mat2::zero(); }

  template <typename Real = double>
  BasicVec2<Real> apply_local(const BasicVec2<Real>& w, BasicMat2<Real>* tangent = nullptr, int direction = 1) const {
    if (tangent) *tangent = BasicMat2<Real>::identity();
    if (is_identity()) return w;
    if (std::sqrt(w.x * w.x + w.y * w.y) >= Real(radius)) return w;
    return detail::midpoint_flow<Real>(w, radius, cutoff(), Vec2{}, generator, true, flow_steps, direction, tangent);
  }
};

using Bump = std::variant<BumpPerturbation, QuadraticBump>;

inline const Vec2& bump_center(const Bump& b) {
  return std::visit([](const auto& x) -> const Vec2& { return x.center; }, b);
}
inline double bump_radius(const Bump& b) {
  return std::visit([](const auto& x) { return x.is_identity() ? 0.0 : x.radius; }, b);
}

/// Apply a bump to a lifted surface point; the bump acts on the lattice translate of
/// its support nearest to p. Points outside the support are returned unchanged.
inline Vec2 apply_bump(const Bump& b, const Vec2& p, Surface surface, Mat2* tangent = nullptr, int direction = 1) {
  if (tangent) *tangent = Mat2::identity();
  const double r = bump_radius(b);
  if (r == 0) return p;
  const Vec2 d = torus_delta(bump_center(b), p, surface);
  if (!(norm(d) < r)) return p;
  const Vec2 img = std::visit([&](const auto& x) { return x.apply_local(d, tangent, direction); }, b);
  if (const auto* e = std::get_if<BumpPerturbation>(&b); e && e->pin_source && !tangent) {
    const TorusPoint& from = direction > 0 ? *e->pin_source : *e->pin_target;
    const TorusPoint& to = direction > 0 ? *e->pin_target : *e->pin_source;
    if (p == from.vec()) return to.vec();
  }
  return p + (img - d);
}

/// Pin an elementary bump to its design endpoints (canonical coordinates).
inline BumpPerturbation pinned(BumpPerturbation b, const TorusPoint& source, const TorusPoint& target) {
  b.pin_source = source;
  b.pin_target = target;
  return b;
}

/// Lipschitz bound of the elementary bump field, in units of 1/time.
inline double field_lipschitz_bound(double disp_norm, double radius, const QuinticCutoff& c) {
  if (radius == 0) return 0;
  const double d1 = c.max_d1(), d2 = c.max_d2();
  return disp_norm / radius * (2 * d1 + d2 + d1 / std::max(c.plateau, 1e-12));
}

/// Elementary perturbation lemma: a bump sending x onto y with support
/// B((x + y) / 2, (1 + eta) / 2 * |y - x|).
inline BumpPerturbation elementary_perturbation(const ChartPoint& x, const ChartPoint& y, double eta, int min_steps = 32) {
  if (!(eta > 0)) throw ContractError("elementary_perturbation: eta must be > 0");
  BumpPerturbation b;
  b.center = 0.5 * (x + y);
  b.displacement = y - x;
  const double d = norm(b.displacement);
  if (d == 0) {
    b.radius = 0;
    b.plateau_radius = 0;
    b.flow_steps = 0;
    return b;
  }
  b.radius = (1 + eta) / 2 * d;
  // Plateau ratio (1 + eta/2) / (1 + eta): the segment [x, y] sits strictly inside.
  b.plateau_radius = (1 + eta / 2) / 2 * d;
  const double lip = field_lipschitz_bound(d, b.radius, b.cutoff());
  b.flow_steps = std::max(min_steps, int(std::ceil(0.5 * lip)));
  return b;
}

/// Sample grid of points inside the disc of radius `r` around the origin, step r / divisions.
inline std::vector<Vec2> disc_grid(double r, int divisions) {
  std::vector<Vec2> pts;
  const double h = r / divisions;
  for (int i = -divisions; i <= divisions; ++i)
    for (int j = -divisions; j <= divisions; ++j) {
      const Vec2 w{i * h, j * h};
      if (norm(w) < r) pts.push_back(w);
    }
  return pts;
}

/// Maximum displacement |phi(z) - z| over a grid of the support.
inline double c0_size(const Bump& b, int divisions = 100) {
  const double r = bump_radius(b);
  if (r == 0) return 0;
  double best = 0;
  for (const Vec2& w : disc_grid(r, divisions)) {
    const Vec2 img = std::visit([&](const auto& x) { return x.apply_local(w); }, b);
    best = std::max(best, norm(img - w));
  }
  return best;
}

/// Finite-difference estimate of max ||D phi - id|| on a grid of step r / divisions.
inline double derivative_size(const Bump& b, int divisions = 200) {
  const double r = bump_radius(b);
  if (r == 0) return 0;
  const double h = r / divisions;
  const int n = 2 * divisions + 3;
  const int off = divisions + 1;
  std::vector<Vec2> img(std::size_t(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec2 w{(i - off) * h, (j - off) * h};
      img[std::size_t(i) * n + j] = std::visit([&](const auto& x) { return x.apply_local(w); }, b);
    }
  double best = 0;
  for (int i = 1; i < n - 1; ++i)
    for (int j = 1; j < n - 1; ++j) {
      // Include one ring of grid points outside the support.
      if (norm(Vec2{(i - off) * h, (j - off) * h}) >= r + 2 * h) continue;
      const Vec2 dx = (img[std::size_t(i + 1) * n + j] - img[std::size_t(i - 1) * n + j]) / (2 * h);
      const Vec2 dy = (img[std::size_t(i) * n + j + 1] - img[std::size_t(i) * n + j - 1]) / (2 * h);
      const Mat2 D = Mat2::from_cols(dx, dy) - Mat2::identity();
      best = std::max(best, op_norm(D));
    }
  return best;
}

/// C^1 size of a perturbation: max over a dense sample of max(||D phi - id||, |phi(z) - z|).
inline double c1_size(const Bump& b, int divisions = 200) {
  if (bump_radius(b) == 0) return 0;
  return std::max(derivative_size(b, divisions), c0_size(b, divisions / 2));
}

/// A bump placed along an orbit; `iterate` records which iterate of the perturbation
/// domain the support belongs to.
struct PlacedBump {
  int iterate{0};
  Bump bump;
  int group{-1};  // bumps sharing a group >= 0 form one relay and may overlap; applied in list order
};

/// g = (product of bumps) o f, with pairwise disjoint supports.
class CompositePerturbation {
 public:
  CompositePerturbation(SurfaceMap base, std::vector<PlacedBump> bumps) : base_(std::move(base)), bumps_(std::move(bumps)) {}

  const SurfaceMap& base() const { return base_; }
  const std::vector<PlacedBump>& bumps() const { return bumps_; }

  /// The bump product phi alone, applied to a lifted point.
  Vec2 apply_bumps(Vec2 w, Mat2* tangent = nullptr, int direction = 1) const {
    if (tangent) *tangent = Mat2::identity();
    auto one = [&](const PlacedBump& pb) {
      Mat2 t;
      w = apply_bump(pb.bump, w, base_.surface(), tangent ? &t : nullptr, direction);
      if (tangent) *tangent = t * *tangent;
    };
    // relay legs do not commute, so the inverse runs the list backwards
    if (direction > 0)
      for (const auto& pb : bumps_) one(pb);
    else
      for (auto it = bumps_.rbegin(); it != bumps_.rend(); ++it) one(*it);
    return w;
  }

  Vec2 lift(const Vec2& p) const { return apply_bumps(base_.lift(p)); }
  /// Bumps act on the canonical image f(p), so pinned endpoints are hit bit-exactly.
  TorusPoint apply(const TorusPoint& p) const { return wrap(apply_bumps(base_.apply(p).vec()), base_.surface()); }
  TorusPoint iterate(TorusPoint p, long long n) const {
    for (long long k = 0; k < n; ++k) p = apply(p);
    return p;
  }
  Mat2 tangent(const TorusPoint& p) const {
    Mat2 t;
    apply_bumps(base_.lift(p.vec()), &t);
    return t * base_.tangent(p);
  }

  /// Worst-case displacement of the bump product over support samples (C^0 distance to f).
  double c0_distance(int divisions = 100) const {
    double best = 0;
    for (const auto& pb : bumps_) {
      const double r = bump_radius(pb.bump);
      if (r == 0) continue;
      for (const Vec2& w : disc_grid(r, divisions)) {
        const Vec2 z = bump_center(pb.bump) + w;
        best = std::max(best, norm(apply_bumps(z) - z));
      }
    }
    return best;
  }

  /// True when f(z) lies in some bump support, i.e. g may differ from f at z.
  bool in_support_image(const Vec2& fz) const {
    for (const auto& pb : bumps_) {
      const double r = bump_radius(pb.bump);
      if (r > 0 && norm(torus_delta(bump_center(pb.bump), fz, base_.surface())) < r) return true;
    }
    return false;
  }

  SurfaceMap as_map() const {
    auto self = std::make_shared<CompositePerturbation>(*this);
    std::optional<SurfaceMap::LiftFn> inv;
    if (base_.has_inverse()) inv = [self](const Vec2& q) { return self->base_.inverse_lift(self->apply_bumps(q, nullptr, -1)); };
    return SurfaceMap(
        base_.name() + "+bumps", base_.surface(), [self](const Vec2& p) { return self->lift(p); },
        [self](const Vec2& p) {
          Mat2 t;
          self->apply_bumps(self->base_.lift(p), &t);
          return t * self->base_.tangent_lift(p);
        },
        inv);
  }

 private:
  SurfaceMap base_;
  std::vector<PlacedBump> bumps_;
};

/// Indices of the first pair of bumps whose supports intersect, if any. Legs of one relay are exempt.
inline std::optional<std::pair<std::size_t, std::size_t>> find_overlap(const std::vector<PlacedBump>& bumps,
                                                                       Surface surface = Surface::torus) {
  for (std::size_t i = 0; i < bumps.size(); ++i) {
    const double ri = bump_radius(bumps[i].bump);
    if (ri == 0) continue;
    for (std::size_t j = i + 1; j < bumps.size(); ++j) {
      const double rj = bump_radius(bumps[j].bump);
      if (rj == 0 || (bumps[i].group >= 0 && bumps[i].group == bumps[j].group)) continue;
      const double d = norm(torus_delta(bump_center(bumps[i].bump), bump_center(bumps[j].bump), surface));
      if (d < ri + rj) return std::pair{i, j};
    }
  }
  return std::nullopt;
}

/// Composition of perturbations with pairwise disjoint supports.
inline CompositePerturbation compose_disjoint(const SurfaceMap& base, std::vector<PlacedBump> bumps) {
  if (auto o = find_overlap(bumps, base.surface())) {
    std::ostringstream msg;
    msg << "compose_disjoint: supports of bumps " << o->first << " and " << o->second << " overlap";
    throw ContractError(msg.str());
  }
  return CompositePerturbation(base, std::move(bumps));
}

/// Franks-lemma edit along an orbit: bumps centered at f(q_i) so that the tangent of
/// g = phi o f at q_i equals targets[i] while the orbit is preserved pointwise.
inline CompositePerturbation franks_edit(const SurfaceMap& f, const std::vector<TorusPoint>& orbit_points,
                                         const std::vector<Mat2>& targets, double radius,
                                         double max_log_norm = 0.5, double plateau_ratio = 0.5) {
  if (orbit_points.size() != targets.size()) throw ContractError("franks_edit: one target per orbit point");
  if (!(radius > 0)) throw ContractError("franks_edit: radius must be > 0");
  std::vector<PlacedBump> bumps;
  for (std::size_t i = 0; i < orbit_points.size(); ++i) {
    if (std::abs(targets[i].det() - 1) > 1e-9) throw ContractError("franks_edit: target must have unit determinant");
    const Mat2 Df = f.tangent(orbit_points[i]);
    const Mat2 correction = targets[i] * Df.inverse();
    Mat2 A;
    try {
      A = log_sl2(correction);
    } catch (const ContractError&) {
      throw ContractError("franks_edit: correction outside the exp-neighborhood at point " + std::to_string(i));
    }
    if (max_abs(A) > max_log_norm)
      throw ContractError("franks_edit: correction outside the exp-neighborhood at point " + std::to_string(i));
    QuadraticBump q;
    q.center = f.apply(orbit_points[i]).vec();
    q.radius = radius;
    q.plateau_radius = plateau_ratio * radius;
    const double lip = max_abs(A) * (1 + 2 * q.cutoff().max_d1() + q.cutoff().max_d2());
    q.flow_steps = std::max(32, int(std::ceil(4 * lip)));
    // On the plateau the midpoint flow is the n-th power of the Cayley transform of B / n;
    // pick B so that this power is exactly the correction.
    const int n = q.flow_steps;
    const Mat2 root = exp_sl2((1.0 / n) * A);
    const Mat2 B = (2.0 * n) * ((root - Mat2::identity()) * (root + Mat2::identity()).inverse());
    const Mat2 S = Mat2::symplectic().inverse() * B;  // B = J S
    q.generator = Mat2{S.a, (S.b + S.c) / 2, (S.b + S.c) / 2, S.d};
    bumps.push_back({int(i), q});
  }
  // Balls must be disjoint from each other and from the rest of the orbit.
  for (std::size_t i = 0; i < bumps.size(); ++i) {
    for (std::size_t j = 0; j < orbit_points.size(); ++j) {
      if (bump_radius(bumps[i].bump) == 0) continue;
      const Vec2 c = bump_center(bumps[i].bump);
      const double d = norm(torus_delta(c, orbit_points[j].vec(), f.surface()));
      if (d > 0 && d < radius) throw ContractError("franks_edit: ball around orbit point contains another orbit point");
    }
  }
  if (auto o = find_overlap(bumps, f.surface()))
    throw ContractError("franks_edit: balls " + std::to_string(o->first) + " and " + std::to_string(o->second) +
                        " overlap");
  return CompositePerturbation(f, std::move(bumps));
}

}  // namespace c1lab
