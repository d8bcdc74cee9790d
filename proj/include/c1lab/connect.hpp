#pragma once

// Property (P) inside tiled perturbation domains and the global connecting pipeline.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "c1lab/analysis.hpp"
#include "c1lab/chains.hpp"
#include "c1lab/geometry.hpp"
#include "c1lab/maps.hpp"
#include "c1lab/perturb.hpp"
#include "c1lab/tiling.hpp"

namespace c1lab {

/// One chart piece of a perturbation domain. Chart coordinates are torus_delta(base, p).
struct DomainPiece {
  TorusPoint base;
  TiledDomain tiling;
};

struct TileRef {
  int piece{-1};
  Tile tile;
  friend bool operator==(const TileRef&, const TileRef&) = default;
  friend auto operator<=>(const TileRef&, const TileRef&) = default;
};

/// A tiled open set B (possibly several disjoint chart pieces) with horizon N.
/// B, f(B), ..., f^{N-1}(B) are pairwise disjoint across all pieces.
struct PerturbationDomain {
  std::vector<DomainPiece> pieces;
  int N{12};

  Vec2 local(int piece, const TorusPoint& p) const { return torus_delta(pieces[piece].base.vec(), p.vec()); }

  bool in_region(const TorusPoint& p) const {
    for (std::size_t a = 0; a < pieces.size(); ++a)
      if (pieces[a].tiling.region.contains(local(int(a), p))) return true;
    return false;
  }

  std::optional<TileRef> locate(const TorusPoint& p) const {
    for (std::size_t a = 0; a < pieces.size(); ++a) {
      const Vec2 w = local(int(a), p);
      if (!pieces[a].tiling.region.contains(w)) continue;
      if (auto t = tile_containing(pieces[a].tiling, w)) return TileRef{int(a), *t};
    }
    return std::nullopt;
  }

  std::optional<TileRef> common_enlarged(const TorusPoint& p, const TorusPoint& q, Enlargement kind) const {
    for (std::size_t a = 0; a < pieces.size(); ++a) {
      const Vec2 w = local(int(a), p), v = w + torus_delta(p.vec(), q.vec());
      if (auto t = common_enlarged_tile(pieces[a].tiling, w, v, kind)) return TileRef{int(a), *t};
    }
    return std::nullopt;
  }

  Rect enlarged_rect(const TileRef& t, Enlargement kind) const { return enlarged(t.tile, enlargement_ratio(kind)); }
};

namespace detail {

inline bool boxes_meet(const Rect& a, const Rect& b) { return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1; }

/// Piece of the domain cover: the parallelogram origin + V * [a0, a1] x [b0, b1].
struct CoverPiece {
  Vec2 origin;
  Mat2 V;
  Rect param;
};

/// Walks the cover of f^k(piece) against `dst` (lifted box, taken modulo Z^2). On each piece f^k is
/// replaced by its affine model at the center plus the measured model error; pieces whose model
/// parallelogram misses dst (separating axes) are pruned, others are bisected across their most
/// stretched side. `leaf(piece, center)` is called where the image may meet dst; returning true stops.
/// A non-null `budget` caps the number of pieces visited; once spent, the rest of the cover is skipped.
template <class Leaf>
bool walk_cover(const SurfaceMap& f, const CoverPiece& pc, int k, const Rect& dst, Leaf&& leaf, int depth = 0,
                long* budget = nullptr) {
  if (budget && (*budget)-- <= 0) return false;
  const Rect& q = pc.param;
  const double sa = q.x1 - q.x0, sb = q.y1 - q.y0;
  auto at = [&](double a, double b) { return pc.origin + pc.V * Vec2{a, b}; };
  const Vec2 c = at(q.x0 + sa / 2, q.y0 + sb / 2);
  const Vec2 fc = f.iterate_lift(c, k);
  const Mat2 J = f.tangent_iterate(wrap(c, f.surface()), k);
  const Vec2 e1 = J * (pc.V * Vec2{sa / 2, 0}), e2 = J * (pc.V * Vec2{0, sb / 2});
  double err = 0;
  for (const auto& [u, v] : {std::pair{-1.0, -1.0}, {1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}, {0.0, 1.0}, {1.0, 0.0}}) {
    const Vec2 w = at(q.x0 + (1 + u) * sa / 2, q.y0 + (1 + v) * sb / 2);
    err = std::max(err, norm(f.iterate_lift(w, k) - (fc + J * (w - c))));
  }
  const double hx = (dst.x1 - dst.x0) / 2, hy = (dst.y1 - dst.y0) / 2;
  const double ext = std::abs(e1.x) + std::abs(e2.x) + std::abs(e1.y) + std::abs(e2.y);
  const bool can_split = depth < 80;
  if (!can_split || ext + 2 * err <= 0.5) {
    const double r = 2 * err + 1e-12;  // margin for the affine model
    const Vec2 dc{dst.x0 + hx, dst.y0 + hy};
    const Vec2 d = torus_delta(dc, fc);  // image center relative to dst, nearest translate
    const double Hx = hx + r, Hy = hy + r;
    if (std::abs(d.x) > Hx + std::abs(e1.x) + std::abs(e2.x)) return false;
    if (std::abs(d.y) > Hy + std::abs(e1.y) + std::abs(e2.y)) return false;
    for (const auto& [a, b] : {std::pair{e1, e2}, std::pair{e2, e1}}) {
      const double L = norm(a);
      if (L == 0) continue;
      const Vec2 n{-a.y / L, a.x / L};
      if (std::abs(dot(n, d)) > std::abs(dot(n, b)) + Hx * std::abs(n.x) + Hy * std::abs(n.y)) return false;
    }
    if (!can_split || err <= 0.05 * std::min(hx, hy)) return leaf(pc, c);
  }
  CoverPiece lo = pc, hi = pc;
  if (norm(e1) >= norm(e2)) {
    lo.param.x1 = hi.param.x0 = q.x0 + sa / 2;
  } else {
    lo.param.y1 = hi.param.y0 = q.y0 + sb / 2;
  }
  return walk_cover(f, lo, k, dst, leaf, depth + 1, budget) || walk_cover(f, hi, k, dst, leaf, depth + 1, budget);
}

/// Could f^k(piece) meet `dst`?
inline bool image_may_meet(const SurfaceMap& f, const CoverPiece& pc, int k, const Rect& dst) {
  return walk_cover(f, pc, k, dst, [](const CoverPiece&, const Vec2&) { return true; });
}

/// Cover of a lifted box by one parallelogram aligned with the singular directions of Df^k.
inline CoverPiece aligned_cover(const SurfaceMap& f, const Rect& box, int k) {
  const Vec2 c{(box.x0 + box.x1) / 2, (box.y0 + box.y1) / 2};
  const Mat2 J = f.tangent_iterate(wrap(c, f.surface()), k);
  // Right singular vectors: eigenvectors of J^T J.
  const Mat2 G = J.transpose() * J;
  const double th = 0.5 * std::atan2(2 * G.b, G.a - G.d);
  const Mat2 V{std::cos(th), -std::sin(th), std::sin(th), std::cos(th)};  // orthogonal
  double amax = 0, bmax = 0;
  for (const Vec2& w : {Vec2{box.x0, box.y0}, Vec2{box.x1, box.y0}, Vec2{box.x0, box.y1}, Vec2{box.x1, box.y1}}) {
    const Vec2 p = V.transpose() * (w - c);
    amax = std::max(amax, std::abs(p.x));
    bmax = std::max(bmax, std::abs(p.y));
  }
  return {c, V, {-amax, -bmax, amax, bmax}};
}

inline bool image_may_meet(const SurfaceMap& f, const Rect& src, int k, const Rect& dst) {
  return image_may_meet(f, aligned_cover(f, src, k), k, dst);
}

inline Rect piece_box(const DomainPiece& p) {
  const Rect r = p.tiling.region.bounding_box();
  return {p.base.x + r.x0, p.base.y + r.y0, p.base.x + r.x1, p.base.y + r.y1};
}

}  // namespace detail

struct DomainAudit {
  bool ok{true};
  std::string message;
};

/// Checks f^k(B_a) ∩ B_b = ∅ on the rectangle covers, for 0 ≤ k ≤ N-1 (k ≥ 1 when a = b).
inline DomainAudit audit_domain(const SurfaceMap& f, const PerturbationDomain& d) {
  DomainAudit out;
  for (std::size_t a = 0; a < d.pieces.size(); ++a) {
    const Rect ra = detail::piece_box(d.pieces[a]);
    if (std::max(ra.x1 - ra.x0, ra.y1 - ra.y0) >= 0.5) {
      out.ok = false;
      out.message = "piece " + std::to_string(a) + " does not fit a chart";
      return out;
    }
    for (std::size_t b = 0; b < d.pieces.size(); ++b) {
      const Rect rb = detail::piece_box(d.pieces[b]);
      for (int k = (a == b ? 1 : 0); k < d.N; ++k) {
        if (k == 0 && b < a) continue;
        if (detail::image_may_meet(f, ra, k, rb)) {
          std::ostringstream m;
          m << "iterate " << k << " of piece " << a << " meets piece " << b;
          out.ok = false;
          out.message = m.str();
          return out;
        }
      }
    }
  }
  return out;
}

inline PerturbationDomain make_domain(const SurfaceMap& f, std::vector<DomainPiece> pieces, int N) {
  if (N < 1) throw ContractError("make_domain: N must be >= 1");
  if (!f.has_inverse()) throw ContractError("make_domain: needs an invertible map");
  PerturbationDomain d{std::move(pieces), N};
  const auto a = audit_domain(f, d);
  if (!a.ok) throw StageError("connect", "domain not disjoint from its iterates: " + a.message);
  return d;
}

/// True when z lies in f^k(B) for some 0 ≤ k < N (exact pullback through the inverse).
inline bool in_iterated_domain(const SurfaceMap& f, const PerturbationDomain& d, TorusPoint z) {
  for (int k = 0; k < d.N; ++k) {
    if (d.in_region(z)) return true;
    z = f.inverse(z);
  }
  return false;
}

// ---------------------------------------------------------------------------------------------
// Property (P)

struct TimedBump {
  int time{0};
  BumpPerturbation bump;
  bool relay{false};  // leg of a same-time relay, applied in list order
};

/// x = f(z_{t_in - 1}) is the arrival, y = z_{t_out} the continuation.
struct Pair {
  std::size_t t_in{0}, t_out{0};
  TorusPoint x, y;
  std::vector<TileRef> tiles;        // owning tiles, one piece
  std::vector<std::size_t> members;  // indices of first-selection pairs merged into this one
  std::vector<TimedBump> bumps;      // planned realization, times 0..K-1
  std::vector<std::vector<TorusPoint>> trace;  // g-orbit points at times 0..N-1
  bool trivial() const { return x == y; }
};

struct PairChain {
  std::vector<Pair> pairs;
  std::vector<int> merge_count;  // per first-selection pair
  int merges{0};
  std::vector<long long> lengths;  // planned length after each merge
};

/// Planned g-length: n minus the skipped stretches.
inline long long planned_length(const PairChain& c, std::size_t n) {
  long long m = (long long)n;
  for (const auto& p : c.pairs) m -= (long long)(p.t_out - p.t_in);
  return m;
}

namespace detail {

inline void add_tile(std::vector<TileRef>& v, const std::optional<TileRef>& t) {
  if (t && std::find(v.begin(), v.end(), *t) == v.end()) v.push_back(*t);
}

}  // namespace detail

/// Inductive first selection. x'_{i+1} is the next entry into B after y'_i; y'_{i+1} is the
/// continuation of the last visit touching the tile of x'_{i+1}.
inline PairChain first_selection(const SurfaceMap& f, const PseudoOrbit& po, const PerturbationDomain& d) {
  PairChain chain;
  const auto& z = po.points;
  if (z.size() < 2) return chain;
  const std::size_t n = z.size() - 1;
  std::vector<char> jump(n + 1, 0);
  std::vector<std::optional<TileRef>> owner(n + 1);
  bool any = false;
  for (std::size_t t = 1; t <= n; ++t) {
    const TorusPoint a = f.apply(z[t - 1]);
    if (f.distance(a, z[t]) <= kJumpThreshold) continue;
    any = jump[t] = 1;
    owner[t] = d.common_enlarged(a, z[t], Enlargement::jump);
    if (!owner[t]) {
      std::ostringstream m;
      m << "first_selection: jump at step " << t - 1 << " is not inside any jump-enlarged tile";
      throw ContractError(m.str());
    }
  }
  if (!any) return chain;

  // Tiles touched by each visit t: those of f(z_{t-1}), z_t and the jump owner.
  std::vector<std::vector<TileRef>> touched(n + 1);
  for (std::size_t t = 1; t <= n; ++t) {
    const TorusPoint a = jump[t] ? f.apply(z[t - 1]) : z[t];
    if (!jump[t] && !d.in_region(a)) continue;
    detail::add_tile(touched[t], d.locate(a));
    if (jump[t]) {
      detail::add_tile(touched[t], d.locate(z[t]));
      detail::add_tile(touched[t], owner[t]);
    }
  }
  std::map<TileRef, std::vector<std::size_t>> visits_of;
  for (std::size_t t = 1; t <= n; ++t)
    for (const auto& r : touched[t]) visits_of[r].push_back(t);

  std::size_t pos = 0;
  while (true) {
    std::size_t t = pos + 1;
    while (t <= n && touched[t].empty()) ++t;
    if (t > n) break;
    const TorusPoint x = f.apply(z[t - 1]);  // what the g-orbit actually reaches
    const TileRef T = d.locate(x).value_or(owner[t].value_or(touched[t].front()));
    const std::size_t u = visits_of[T].back();
    Pair p;
    p.t_in = t;
    p.t_out = u;
    p.x = x;
    p.y = z[u];
    p.tiles.push_back(T);
    if (jump[u]) detail::add_tile(p.tiles, owner[u]);
    if (auto ty = d.locate(p.y)) detail::add_tile(p.tiles, ty);
    if (std::any_of(p.tiles.begin(), p.tiles.end(), [&](const TileRef& r) { return r.piece != T.piece; }))
      throw StageError("connect", "pair spans two domain pieces");
    p.members.push_back(chain.pairs.size());
    chain.pairs.push_back(std::move(p));
    pos = u;
  }
  chain.merge_count.assign(chain.pairs.size(), 0);
  chain.lengths.push_back(planned_length(chain, n));
  return chain;
}

struct PropertyPOptions {
  double eta{1.0};
  double eta_min{0.05};
  int boundary_samples{64};
  int max_rounds{100000};
};

namespace detail {

/// Pulled-back support circle of a time-k bump stays inside the union of closed rects (chart of piece).
inline bool support_inside(const SurfaceMap& f, const PerturbationDomain& d, int piece, const std::vector<Rect>& allowed,
                           const BumpPerturbation& b, int k, int samples) {
  if (b.is_identity()) return true;
  auto ok = [&](Vec2 w) {
    for (int i = 0; i < k; ++i) w = f.inverse_lift(w);
    const Vec2 l = torus_delta(d.pieces[piece].base.vec(), w);
    return std::any_of(allowed.begin(), allowed.end(), [&](const Rect& r) { return closed_contains(r, l); });
  };
  if (!ok(b.center)) return false;
  for (int s = 0; s < samples; ++s) {
    const double t = 2 * std::numbers::pi * s / samples;
    if (!ok(b.center + b.radius * Vec2{std::cos(t), std::sin(t)})) return false;
  }
  return true;
}

}  // namespace detail

/// Realize x -> y by K ≤ N elementary bumps at times 0..K-1 along the chart segment (K = 1 is a
/// single bump, K = 2 a relay through the midpoint). Smallest K whose supports fit wins.
inline void realize_pair(const SurfaceMap& f, const PerturbationDomain& d, Pair& p, const PropertyPOptions& opt) {
  p.bumps.clear();
  p.trace.assign(std::size_t(d.N), {});
  const int piece = p.tiles.front().piece;
  std::vector<Rect> allowed;
  for (const auto& t : p.tiles) allowed.push_back(d.enlarged_rect(t, Enlargement::support));
  auto fill_tail = [&](TorusPoint w, int from) {
    for (int k = from; k < d.N; ++k) {
      p.trace[std::size_t(k)].push_back(w);
      w = f.apply(w);
    }
  };
  if (p.trivial()) {
    fill_tail(p.y, 0);
    return;
  }
  const Vec2 xl = d.local(piece, p.x), yl = xl + torus_delta(p.x.vec(), p.y.vec());
  const Vec2 base = d.pieces[piece].base.vec();
  // one bump at time k moving src onto tgt, shrinking eta until its pulled-back support fits
  auto leg = [&](const TorusPoint& src, const TorusPoint& tgt, int k) -> std::optional<BumpPerturbation> {
    const Vec2 sl = src.vec(), tl = sl + torus_delta(sl, tgt.vec());
    for (double eta = opt.eta; eta >= opt.eta_min * (1 - 1e-12); eta /= 2) {
      const auto b = pinned(elementary_perturbation(sl, tl, eta), src, tgt);
      if (detail::support_inside(f, d, piece, allowed, b, k, opt.boundary_samples)) return b;
    }
    return std::nullopt;
  };

  if (auto b = leg(p.x, p.y, 0)) {
    p.bumps = {{0, *b}};
    p.trace[0] = {p.x, p.y};
    fill_tail(f.apply(p.y), 1);
    return;
  }

  // Relay at time 0 through one or two waypoints: tile centers and midpoints of shared tile edges.
  std::vector<Vec2> way{0.5 * (xl + yl)};
  for (std::size_t i = 0; i < p.tiles.size(); ++i) {
    const Rect a = enlarged(p.tiles[i].tile, 1.0);
    way.push_back({(a.x0 + a.x1) / 2, (a.y0 + a.y1) / 2});
    for (std::size_t j = i + 1; j < p.tiles.size(); ++j) {
      const Rect c = enlarged(p.tiles[j].tile, 1.0);
      const Rect m{std::max(a.x0, c.x0), std::max(a.y0, c.y0), std::min(a.x1, c.x1), std::min(a.y1, c.y1)};
      if (m.x1 >= m.x0 && m.y1 >= m.y0) way.push_back({(m.x0 + m.x1) / 2, (m.y0 + m.y1) / 2});
    }
  }
  auto relay = [&](const std::vector<Vec2>& via) {
    std::vector<TimedBump> legs;
    TorusPoint src = p.x;
    for (std::size_t i = 0; i <= via.size(); ++i) {
      const TorusPoint tgt = i == via.size() ? p.y : wrap(base + via[i]);
      if (tgt == src) continue;
      auto b = leg(src, tgt, 0);
      if (!b) return false;
      legs.push_back({0, *b, true});
      src = tgt;
    }
    p.bumps = std::move(legs);
    p.trace[0] = {p.x, p.y};
    fill_tail(f.apply(p.y), 1);
    return true;
  };
  for (const Vec2& w : way)
    if (relay({w})) return;
  for (const Vec2& w : way)
    for (const Vec2& v : way)
      if (!(w == v) && relay({w, v})) return;

  // Spread the displacement over times 0..K-1 along the chart segment.
  std::string last_failure = "no relay fits";
  for (int K = 2; K <= d.N; ++K) {
    std::vector<TimedBump> bumps;
    std::vector<std::vector<TorusPoint>> trace(std::size_t(d.N));
    TorusPoint src = p.x;
    bool fits = true;
    for (int k = 0; k < K; ++k) {
      const TorusPoint zeta = k + 1 == K ? p.y : wrap(base + xl + (double(k + 1) / K) * (yl - xl));
      const TorusPoint tgt = f.iterate(zeta, k);
      auto b = leg(src, tgt, k);
      if (!b) {
        std::ostringstream m;
        m << "K=" << K << " bump at time " << k << " escapes the 1.5-enlargement";
        last_failure = m.str();
        fits = false;
        break;
      }
      bumps.push_back({k, *b});
      trace[std::size_t(k)] = {src, tgt};
      src = f.apply(tgt);
    }
    if (!fits) continue;
    p.bumps = std::move(bumps);
    p.trace = std::move(trace);
    fill_tail(src, K);
    return;
  }
  std::ostringstream m;
  m << "pair at steps " << p.t_in << ".." << p.t_out << ": support escaping its tile (" << last_failure << ")";
  throw StageError("connect", m.str());
}

namespace detail {

inline bool pairs_conflict(const Pair& a, const Pair& b) {
  for (const auto& ba : a.bumps)
    for (const auto& bb : b.bumps)
      if (ba.time == bb.time && norm(torus_delta(ba.bump.center, bb.bump.center)) < ba.bump.radius + bb.bump.radius) return true;
  auto trace_hits = [](const Pair& p, const Pair& q) {
    for (const auto& bq : q.bumps)
      for (const auto& w : p.trace[std::size_t(bq.time)])
        if (norm(torus_delta(bq.bump.center, w.vec())) < bq.bump.radius) return true;
    return false;
  };
  return trace_hits(a, b) || trace_hits(b, a);
}

}  // namespace detail

/// Merge conflicting pairs (i < j) into x'_i -> y'_j until no two planned supports or traces meet.
inline PairChain resolve_conflicts(const SurfaceMap& f, PairChain chain, const PerturbationDomain& d, std::size_t n,
                                   const PropertyPOptions& opt = {}) {
  for (auto& p : chain.pairs)
    if (p.trace.empty()) realize_pair(f, d, p, opt);
  if (chain.lengths.empty()) chain.lengths.push_back(planned_length(chain, n));
  for (int round = 0;; ++round) {
    if (round >= opt.max_rounds) throw StageError("connect", "conflict resolution did not reach a fixpoint");
    std::optional<std::pair<std::size_t, std::size_t>> hit;
    for (std::size_t i = 0; i < chain.pairs.size() && !hit; ++i)
      for (std::size_t j = chain.pairs.size(); j-- > i + 1;)
        if (chain.pairs[i].tiles.front().piece == chain.pairs[j].tiles.front().piece &&
            detail::pairs_conflict(chain.pairs[i], chain.pairs[j])) {
          hit = std::pair{i, j};
          break;
        }
    if (!hit) break;
    const auto [i, j] = *hit;
    Pair m;
    m.t_in = chain.pairs[i].t_in;
    m.t_out = chain.pairs[j].t_out;
    m.x = chain.pairs[i].x;
    m.y = chain.pairs[j].y;
    for (std::size_t k = i; k <= j; ++k)
      m.members.insert(m.members.end(), chain.pairs[k].members.begin(), chain.pairs[k].members.end());
    for (const std::size_t k : {i, j})
      for (const auto& t : chain.pairs[k].tiles) detail::add_tile(m.tiles, t);
    for (const auto mem : m.members)
      if (++chain.merge_count[mem] > 12) {
        std::ostringstream e;
        e << "pair " << mem << " took part in more than 12 merges";
        throw StageError("connect", e.str());
      }
    ++chain.merges;
    realize_pair(f, d, m, opt);
    chain.pairs.erase(chain.pairs.begin() + std::ptrdiff_t(i), chain.pairs.begin() + std::ptrdiff_t(j) + 1);
    chain.pairs.insert(chain.pairs.begin() + std::ptrdiff_t(i), std::move(m));
    const long long len = planned_length(chain, n);
    if (!(len < chain.lengths.back())) throw StageError("connect", "merge did not shorten the pseudo-orbit");
    chain.lengths.push_back(len);
  }
  return chain;
}

inline std::vector<PlacedBump> chain_bumps(const PairChain& c) {
  std::vector<PlacedBump> out;
  int group = 0;
  for (const auto& p : c.pairs) {
    bool used = false;
    for (const auto& b : p.bumps) {
      out.push_back({b.time, b.bump, b.relay ? group : -1});
      used |= b.relay;
    }
    group += used;
  }
  return out;
}

struct PropertyPResult {
  CompositePerturbation g;
  long long m{0};
  PairChain chain;
  double residual{0};
};

/// (P): a perturbation supported in B ∪ ... ∪ f^{N-1}(B) with g^m(z_0) = z_n, m ≤ n.
inline PropertyPResult apply_property_P(const SurfaceMap& f, const PerturbationDomain& d, const PseudoOrbit& po,
                                        const PropertyPOptions& opt = {}) {
  if (po.points.empty()) throw ContractError("apply_property_P: empty pseudo-orbit");
  const std::size_t n = po.points.size() - 1;
  PairChain chain = first_selection(f, po, d);
  if (chain.pairs.empty()) {
    PropertyPResult r{CompositePerturbation(f, {}), (long long)n, chain, 0};
    r.residual = f.distance(f.iterate(po.points.front(), (long long)n), po.points.back());
    return r;
  }
  chain = resolve_conflicts(f, std::move(chain), d, n, opt);
  const long long m = planned_length(chain, n);
  if (m < 1 || m > (long long)n) throw StageError("connect", "planned length outside 1..n");
  auto bumps = chain_bumps(chain);
  if (auto o = find_overlap(bumps)) {
    std::ostringstream e;
    e << "supports of bumps " << o->first << " and " << o->second << " overlap after conflict resolution";
    throw StageError("connect", e.str());
  }
  PropertyPResult r{CompositePerturbation(f, std::move(bumps)), m, std::move(chain), 0};
  r.residual = f.distance(r.g.iterate(po.points.front(), m), po.points.back());
  if (!(r.residual <= 1e-6)) {
    std::ostringstream e;
    e << "g^m(z0) misses z_n by " << r.residual;
    throw StageError("connect", e.str());
  }
  return r;
}

struct SupportAudit {
  int samples{0};
  int outside{0};
  int violations{0};
};

/// g(z) == f(z) bit-exactly whenever f(z) is outside B ∪ ... ∪ f^{N-1}(B). Half the samples are
/// uniform, half are drawn near the iterated pieces.
inline SupportAudit audit_support(const SurfaceMap& f, const CompositePerturbation& g, const PerturbationDomain& d,
                                  int samples, std::uint64_t seed) {
  SupportAudit a;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0, 1);
  for (int s = 0; s < samples; ++s) {
    TorusPoint z{U(rng), U(rng)};
    if (s % 2 == 1 && !d.pieces.empty()) {
      const auto& pc = d.pieces[std::size_t(s / 2) % d.pieces.size()];
      const Rect r = pc.tiling.region.bounding_box();
      const double w = r.x1 - r.x0, h = r.y1 - r.y0;
      const Vec2 l{r.x0 - w / 2 + 2 * w * U(rng), r.y0 - h / 2 + 2 * h * U(rng)};
      const int k = int(rng() % std::uint64_t(d.N));
      z = f.iterate(wrap(pc.base.vec() + l), k - 1);
    }
    ++a.samples;
    const TorusPoint fz = f.apply(z);
    if (in_iterated_domain(f, d, fz)) continue;
    ++a.outside;
    const TorusPoint gz = g.apply(z);
    if (!(gz == fz)) ++a.violations;
  }
  return a;
}

// ---------------------------------------------------------------------------------------------
// Synthetic pseudo-orbits respecting a tiling

struct SyntheticCase {
  PerturbationDomain domain;
  PseudoOrbit pseudo;
  TorusPoint periodic;  // the periodic point the domain surrounds
  int period{0};
};

struct SyntheticOptions {
  int N{12};
  int jumps{8};
  int level{14};        // tile side 2^-level near the periodic point
  int extra_rects{3};   // random rectangles added to the core square
  int max_attempts{40};
};

namespace detail {

/// Unit eigenvector for the eigenvalue of smallest modulus, or nullopt when not real.
inline std::optional<Vec2> contracting_direction(const Mat2& M) {
  const auto ev = eigenvalues(M);
  if (ev[0].imag() != 0) return std::nullopt;
  const double l = std::abs(ev[0].real()) < std::abs(ev[1].real()) ? ev[0].real() : ev[1].real();
  Vec2 v{M.b, l - M.a};
  if (norm(v) < 1e-14 * (1 + std::abs(l))) v = {l - M.d, M.c};
  if (norm(v) == 0) return Vec2{1, 0};
  return (1.0 / norm(v)) * v;
}

}  // namespace detail

/// A tiled random domain around a periodic point of period N+1..N+8, and a pseudo-orbit that
/// re-enters it near the point every period and jumps inside jump-enlarged tiles. Jump targets
/// lie on the contracting direction of the return map so the next arrival lands near the point.
inline SyntheticCase synthetic_pseudo_orbit(const SurfaceMap& f, std::uint64_t seed, const SyntheticOptions& opt = {}) {
  if (!f.has_inverse()) throw ContractError("synthetic_pseudo_orbit: needs an invertible map");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0, 1);
  const double s = std::ldexp(1.0, -opt.level);
  std::string why = "no periodic orbit found";
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    const int period = opt.N + 1 + int(rng() % 8);
    PeriodicSearchOptions po;
    po.seeds_per_axis = 6;
    const auto found = find_periodic(f, period, po);
    std::vector<const PeriodicOrbit*> cands;
    for (const auto& o : found.orbits)
      if (o.period == period && !o.degenerate) cands.push_back(&o);
    if (cands.empty()) continue;
    const PeriodicOrbit& orb = *cands[rng() % cands.size()];
    const TorusPoint x = orb.points[rng() % orb.points.size()];
    const Mat2 M = f.tangent_iterate(x, period);
    Vec2 v = detail::contracting_direction(M).value_or(Vec2{1, 0});
    if (!detail::contracting_direction(M)) {
      const double th = 2 * std::numbers::pi * U(rng);
      v = {std::cos(th), std::sin(th)};
    }

    // Chart: x sits just off the dyadic corner at the origin.
    const Vec2 off{0.02 * s * (2 * U(rng) - 1), 0.02 * s * (2 * U(rng) - 1)};
    DomainPiece piece;
    piece.base = wrap(x.vec() - off);
    OpenSet Uset;
    Uset.rects.push_back({-2.5 * s, -2.5 * s, 2.5 * s, 2.5 * s});
    for (int r = 0; r < opt.extra_rects; ++r) {
      const double cx = (2 * U(rng) - 1) * 4 * s, cy = (2 * U(rng) - 1) * 4 * s;
      const double w = (1 + 3 * U(rng)) * s, h = (1 + 3 * U(rng)) * s;
      Uset.rects.push_back({cx - w, cy - h, cx + w, cy + h});
    }
    piece.tiling = tile_open_set(Uset, opt.level - 1, opt.level + 2);
    PerturbationDomain dom{{piece}, opt.N};
    if (!audit_domain(f, dom).ok) {
      why = "domain meets its iterates";
      continue;
    }

    std::vector<TorusPoint> z;
    auto push_orbit = [&](TorusPoint w, int steps) {
      for (int k = 0; k < steps; ++k) {
        w = f.apply(w);
        z.push_back(w);
      }
      return w;
    };
    auto near_x = [&](double delta) { return wrap(x.vec() + delta * v); };
    z.push_back(f.iterate(near_x(0.03 * s * (2 * U(rng) - 1)), -opt.N));
    TorusPoint cur = push_orbit(z.back(), opt.N);
    bool ok = true;
    for (int j = 0; j < opt.jumps && ok; ++j) {
      cur = push_orbit(cur, period - 1);
      ok = false;
      for (int tries = 0; tries < 50 && !ok; ++tries) {
        const TorusPoint c = near_x(0.05 * s * (2 * U(rng) - 1));
        const TorusPoint a = f.apply(cur);
        if (a == c || !dom.common_enlarged(a, c, Enlargement::jump)) continue;
        const TorusPoint back = f.iterate(c, period);
        if (!dom.locate(back)) continue;  // next arrival must stay tiled
        z.push_back(c);
        cur = c;
        ok = true;
      }
    }
    if (!ok) {
      why = "could not place a jump";
      continue;
    }
    push_orbit(cur, opt.N);
    SyntheticCase sc{dom, make_pseudo_orbit(f, std::move(z), 1.0), x, period};
    return sc;
  }
  throw StageError("connect", "synthetic_pseudo_orbit: " + why);
}


// ---------------------------------------------------------------------------------------------
// Forbidden periodic points

struct SigmaPoint {
  TorusPoint point;
  int period{0};
};

struct PeriodicScan {
  std::vector<SigmaPoint> points;
  int exhaustive_up_to{0};  // periods 1..this were covered completely
};

/// Periodic points of period <= max_period inside a lifted box. For each period the cover of f^k(box)
/// excludes the parts that cannot return to the box and Newton on f^k starts from every remaining
/// leaf (the affine model there is accurate, so a root in the leaf is found). The cover grows like
/// the expansion of f^k; past `budget` pieces the search continues from the leaves reached plus a
/// seed grid and is no longer exhaustive.
inline PeriodicScan periodic_points_in(const SurfaceMap& f, const Rect& box, int max_period, long budget = 20000,
                                       int grid = 8) {
  PeriodicScan out;
  bool complete = true;
  const Vec2 bc{(box.x0 + box.x1) / 2, (box.y0 + box.y1) / 2};
  const double hx = (box.x1 - box.x0) / 2, hy = (box.y1 - box.y0) / 2;
  auto inside = [&](const Vec2& z) {
    const Vec2 d = torus_delta(bc, z);
    return std::abs(d.x) <= hx && std::abs(d.y) <= hy;
  };
  for (int k = 1; k <= max_period; ++k) {
    auto newton = [&](Vec2 z) {
      for (int it = 0; it < 40; ++it) {
        Vec2 G = f.iterate_lift(z, k) - z;
        G -= detail::nearest_lattice(G, f.surface());
        if (norm(G) < 1e-15) break;
        const Mat2 A = f.tangent_iterate(wrap(z, f.surface()), k) - Mat2::identity();
        if (std::abs(A.det()) < 1e-14) break;
        Vec2 step = A.inverse() * G;
        const double sn = norm(step), cap = 2 * std::max(hx, hy);
        if (sn > cap) step = (cap / sn) * step;
        z -= step;
      }
      const TorusPoint w = wrap(z, f.surface());
      if (!inside(w.vec()) || f.distance(f.iterate(w, k), w) > 1e-9) return;
      int period = k;
      for (int d = 1; d < k; ++d)
        if (k % d == 0 && f.distance(f.iterate(w, d), w) <= 1e-9) {
          period = d;
          break;
        }
      for (const auto& o : out.points)
        if (f.distance(o.point, w) <= 1e-9) return;
      out.points.push_back({w, period});
    };
    long left = budget;
    detail::walk_cover(
        f, detail::aligned_cover(f, box, k), k, box,
        [&](const detail::CoverPiece&, const Vec2& c) {
          newton(c);
          return false;
        },
        0, &left);
    if (left < 0) {
      complete = false;
      for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) newton({box.x0 + (i + 0.5) / grid * 2 * hx, box.y0 + (j + 0.5) / grid * 2 * hy});
    }
    if (complete) out.exhaustive_up_to = k;
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Paths and surgery

/// Waypoints x_0..x_s, orbit lengths n_k and paths: path k is a polyline from f^{n_k}(x_k) to x_{k+1}.
struct PathSystem {
  std::vector<TorusPoint> waypoints;
  std::vector<long long> lengths;
  std::vector<std::vector<TorusPoint>> paths;
};

struct PathCrossing {
  std::size_t i{0}, j{0};
  int t{0};
  std::size_t seg_i{0}, seg_j{0};  // segment of the sampled image of path i, segment of path j
  double s{0}, u{0};              // parameters along those segments
};

namespace detail {

/// Crossing parameters of segments a0a1 and b0b1 (short, taken in the chart of b0), if they meet.
inline std::optional<std::pair<double, double>> segments_cross(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                                                               const Vec2& b1) {
  const Vec2 A0 = torus_delta(b0, a0), A1 = A0 + torus_delta(a0, a1), B1 = torus_delta(b0, b1);
  const Vec2 r = A1 - A0, q = B1;
  const double den = r.x * q.y - r.y * q.x;
  if (std::abs(den) < 1e-300) return std::nullopt;  // parallel
  const Vec2 w = -1.0 * A0;
  const double s = (w.x * q.y - w.y * q.x) / den, u = (w.x * r.y - w.y * r.x) / den;
  if (s < 0 || s > 1 || u < 0 || u > 1) return std::nullopt;
  return std::pair{s, u};
}

/// f^t of a polyline, each segment refined into `sub` pieces before mapping.
inline std::vector<TorusPoint> image_polyline(const SurfaceMap& f, const std::vector<TorusPoint>& path, int t, int sub) {
  std::vector<TorusPoint> out;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const Vec2 a = path[k].vec(), d = torus_delta(a, path[k + 1].vec());
    for (int m = 0; m < sub; ++m) out.push_back(f.iterate(wrap(a + (double(m) / sub) * d), t));
  }
  out.push_back(f.iterate(path.back(), t));
  return out;
}

}  // namespace detail

/// First crossing in the order of the surgery: smallest i, then largest j > i, then smallest t < N,
/// between f^t(path i) and path j. The orbit link (end of path i mapped by n_{i+1} onto the start of
/// path i+1) is not a crossing.
inline std::optional<PathCrossing> find_path_crossing(const SurfaceMap& f, const PathSystem& ps, int N, int sub = 32) {
  const std::size_t P = ps.paths.size();
  for (std::size_t i = 0; i < P; ++i) {
    if (ps.paths[i].size() < 2) continue;
    std::vector<std::vector<TorusPoint>> img(static_cast<std::size_t>(N));
    for (int t = 0; t < N; ++t) img[std::size_t(t)] = detail::image_polyline(f, ps.paths[i], t, sub);
    for (std::size_t j = P; j-- > i + 1;) {
      const auto& g = ps.paths[j];
      if (g.size() < 2) continue;
      for (int t = 0; t < N; ++t) {
        const auto& a = img[std::size_t(t)];
        const bool linked = j == i + 1 && t == ps.lengths[i + 1];
        for (std::size_t sa = 0; sa + 1 < a.size(); ++sa)
          for (std::size_t sb = 0; sb + 1 < g.size(); ++sb) {
            const auto c = detail::segments_cross(a[sa].vec(), a[sa + 1].vec(), g[sb].vec(), g[sb + 1].vec());
            if (!c) continue;
            if (linked && sa + 2 == a.size() && c->first > 1 - 1e-9 && sb == 0 && c->second < 1e-9) continue;
            return PathCrossing{i, j, t, sa, sb, c->first, c->second};
          }
      }
    }
  }
  return std::nullopt;
}

/// Removes crossings of iterated paths: at the first crossing (i, j, t) path i is cut at the point w
/// whose t-th image lies on path j, w becomes a waypoint with orbit length t, and the rest of path j
/// from f^t(w) continues; paths strictly between are dropped. Repeats until no crossing remains.
inline PathSystem path_surgery(const SurfaceMap& f, PathSystem ps, int N, int budget = 100, int sub = 32) {
  for (int round = 0;; ++round) {
    const auto c = find_path_crossing(f, ps, N, sub);
    if (!c) return ps;
    if (round >= budget) {
      std::ostringstream m;
      m << "path surgery did not terminate within " << budget << " operations; offending paths " << c->i << " and "
        << c->j << " at iterate " << c->t << ":";
      for (const std::size_t k : {c->i, c->j}) {
        m << " [";
        for (const auto& z : ps.paths[k]) m << " (" << z.x << "," << z.y << ")";
        m << " ]";
      }
      throw StageError("connect", m.str());
    }
    // w on path i: the crossing lies on refined segment seg_i of the image
    const int sub_idx = int(c->seg_i % std::size_t(sub));
    const std::size_t seg = c->seg_i / std::size_t(sub);
    const auto& pi = ps.paths[c->i];
    const Vec2 a = pi[seg].vec(), d = torus_delta(a, pi[seg + 1].vec());
    const TorusPoint w = wrap(a + ((sub_idx + c->s) / sub) * d);
    std::vector<TorusPoint> head(pi.begin(), pi.begin() + std::ptrdiff_t(seg) + 1);
    head.push_back(w);
    const auto& pj = ps.paths[c->j];
    std::vector<TorusPoint> rest{f.iterate(w, c->t)};  // the crossing point, up to the sampling of the image
    rest.insert(rest.end(), pj.begin() + std::ptrdiff_t(c->seg_j) + 1, pj.end());

    PathSystem out;
    out.waypoints.assign(ps.waypoints.begin(), ps.waypoints.begin() + std::ptrdiff_t(c->i) + 1);
    out.waypoints.push_back(w);
    out.waypoints.insert(out.waypoints.end(), ps.waypoints.begin() + std::ptrdiff_t(c->j) + 1, ps.waypoints.end());
    out.lengths.assign(ps.lengths.begin(), ps.lengths.begin() + std::ptrdiff_t(c->i) + 1);
    out.lengths.push_back(c->t);
    out.lengths.insert(out.lengths.end(), ps.lengths.begin() + std::ptrdiff_t(c->j) + 1, ps.lengths.end());
    out.paths.assign(ps.paths.begin(), ps.paths.begin() + std::ptrdiff_t(c->i));
    out.paths.push_back(std::move(head));
    out.paths.push_back(std::move(rest));
    out.paths.insert(out.paths.end(), ps.paths.begin() + std::ptrdiff_t(c->j) + 1, ps.paths.end());
    ps = std::move(out);
  }
}


// ---------------------------------------------------------------------------------------------
// Connecting pipeline

struct ConnectOptions {
  int N{12};
  long long forward_steps{200000};  // orbit of the current waypoint searched for jump sites
  int backward_steps{60};           // preimages of each target
  double roundtrip_tol{1e-7};       // preimages of q are used only while f^l(f^-l(q)) stays this close to q
  double max_jump{2e-3};
  int candidates{32};  // jump sites tried per target before falling back to an earlier one
  int max_hops{64};
  double sigma_margin{0.0};  // in piece sides, added around each piece for the periodic-point check
  long sigma_budget{20000};   // cover pieces per period in that check
  int graph_cells{256};
  int graph_samples{4};
  std::uint64_t seed{1};
  PropertyPOptions property{};
};

struct ConnectingPlan {
  PathSystem paths;  // x_0 = p, x_s = q; path k joins f^{n_k}(x_k) to x_{k+1}
  PerturbationDomain domain;  // one piece per jump path
  PseudoOrbit pseudo;
  std::vector<SigmaPoint> sigma;  // periodic points of period <= 2N met at rejected sites
  int sigma_exhaustive_up_to{0};  // periods 1..this were excluded exhaustively on every piece
  int rejected_sites{0};
  int rejected_tiling{0}, rejected_sigma{0}, rejected_audit{0};
  std::vector<TorusPoint> coarse;  // epsilon-chain targets, empty when q was reached directly
  double end_residual{0};         // d(last pseudo-orbit point, q)
};

namespace detail {

/// Square chart piece around a jump: side s = 2^-n0 >= 2|jump|, region (-s, 2s)^2 tiled at
/// levels n0..n0+2; the jump sits in the center tile (0, s)^2.
inline DomainPiece jump_piece(const TorusPoint& a, const TorusPoint& b) {
  const Vec2 d = torus_delta(a.vec(), b.vec());
  const double len = norm(d);
  const int n0 = std::clamp(int(std::floor(-std::log2(2 * len))), 2, 36);
  const double s = std::ldexp(1.0, -n0);
  OpenSet U;
  U.rects.push_back({-s, -s, 2 * s, 2 * s});
  return {wrap(a.vec() + 0.5 * d - Vec2{s / 2, s / 2}), tile_open_set(U, n0, n0 + 2)};
}

struct JumpSite {
  double dist{0};
  long long i{0};  // arrival index in the forward orbit
  int l{0};        // preimage index of the target
};

/// Jump sites between the forward orbit F and the preimages of one target, one per arrival.
inline std::vector<JumpSite> jump_sites(const SurfaceMap& f, const std::vector<TorusPoint>& F,
                                        const std::unordered_multimap<std::int64_t, long long>& grid, int G,
                                        const std::vector<TorusPoint>& back, double max_jump) {
  std::map<long long, JumpSite> best;
  for (int l = 0; l < int(back.size()); ++l) {
    const Vec2 v = back[std::size_t(l)].vec();
    const int cx = std::min(G - 1, int(v.x * G)), cy = std::min(G - 1, int(v.y * G));
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy) {
        const std::int64_t key = std::int64_t((cx + dx + G) % G) * G + (cy + dy + G) % G;
        const auto r = grid.equal_range(key);
        for (auto it = r.first; it != r.second; ++it) {
          const double d = f.distance(F[std::size_t(it->second)], back[std::size_t(l)]);
          if (d > max_jump) continue;
          auto [pos, fresh] = best.try_emplace(it->second, JumpSite{d, it->second, l});
          if (!fresh && d < pos->second.dist) pos->second = {d, it->second, l};
        }
      }
  }
  // closest first within each preimage, then interleaved by rank so that one preimage sitting near a
  // periodic orbit cannot occupy every candidate slot
  std::vector<std::vector<JumpSite>> by_l(back.size());
  for (const auto& [i, js] : best) by_l[std::size_t(js.l)].push_back(js);
  std::vector<std::pair<std::size_t, JumpSite>> ranked;
  for (auto& v : by_l) {
    std::sort(v.begin(), v.end(), [](const JumpSite& a, const JumpSite& b) { return a.dist < b.dist; });
    for (std::size_t r = 0; r < v.size(); ++r) ranked.push_back({r, v[r]});
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second.dist < b.second.dist;
  });
  std::vector<JumpSite> out;
  for (const auto& [r, js] : ranked) out.push_back(js);
  return out;
}

}  // namespace detail

/// Waypoints, jump paths, disjoint domains and the refined pseudo-orbit from p to q. Each hop follows
/// the orbit of the current waypoint and jumps onto a preimage of the furthest reachable target
/// (q itself, else the epsilon-chain points); each jump gets its own square piece, kept only if it
/// avoids periodic points of period <= 2N and the union stays disjoint from its N-1 iterates.
inline ConnectingPlan build_connecting_plan(const SurfaceMap& f, const TorusPoint& p, const TorusPoint& q, double epsilon,
                                            const ConnectOptions& opt = {}) {
  if (!f.has_inverse()) throw ContractError("build_connecting_plan: needs an invertible map");
  if (f.surface() != Surface::torus) throw ContractError("build_connecting_plan: torus maps only");
  if (!(epsilon > 0)) throw ContractError("build_connecting_plan: epsilon must be > 0");
  if (opt.N < 1 || opt.forward_steps < 1 || opt.backward_steps < 0 || !(opt.max_jump > 0))
    throw ContractError("build_connecting_plan: invalid options");
  for (const auto& [z, name] : {std::pair{p, "p"}, std::pair{q, "q"}}) {
    TorusPoint w = z;
    for (int k = 1; k <= 2 * opt.N; ++k) {
      w = f.apply(w);
      if (f.distance(w, z) <= 1e-9)
        throw ContractError(std::string("build_connecting_plan: ") + name + " is periodic of period " + std::to_string(k) +
                            " <= 2N; displace it first");
    }
  }

  ConnectingPlan plan{{}, PerturbationDomain{{}, opt.N}, {}, {}, 2 * opt.N};
  std::vector<TorusPoint> pts{p};
  plan.paths.waypoints.push_back(p);

  // q on the forward orbit of p: nothing to perturb
  {
    TorusPoint w = p;
    for (long long n = 1; n <= opt.forward_steps; ++n) {
      w = f.apply(w);
      pts.push_back(w);
      if (f.distance(w, q) <= 1e-12) {
        plan.paths.waypoints.push_back(q);
        plan.paths.lengths.push_back(n);
        plan.paths.paths.push_back({w, q});
        plan.pseudo = make_pseudo_orbit(f, std::move(pts), epsilon);
        plan.end_residual = f.distance(w, q);
        return plan;
      }
    }
    pts.resize(1);
  }

  // q's preimages usable without losing it to rounding
  std::vector<TorusPoint> back_q{q};
  for (int l = 1; l <= opt.backward_steps; ++l) {
    const TorusPoint b = f.inverse(back_q.back());
    if (f.distance(f.iterate(b, l), q) > opt.roundtrip_tol) break;
    back_q.push_back(b);
  }
  auto backward = [&](const TorusPoint& t) {
    std::vector<TorusPoint> b{t};
    for (int l = 1; l <= opt.backward_steps; ++l) b.push_back(f.inverse(b.back()));
    return b;
  };

  const int G = std::max(1, std::min(4096, int(1 / opt.max_jump)));
  std::vector<TorusPoint> targets{q};
  bool coarse_built = false;
  TorusPoint x = p;
  std::size_t reached = 0;  // targets before this index are behind us

  for (int hop = 0;; ++hop) {
    if (hop >= opt.max_hops) throw StageError("connect", "hop budget exhausted before reaching q");
    std::vector<TorusPoint> F{x};
    F.reserve(std::size_t(opt.forward_steps) + 1);
    for (long long i = 0; i < opt.forward_steps; ++i) F.push_back(f.apply(F.back()));
    std::unordered_multimap<std::int64_t, long long> grid;
    grid.reserve(F.size());
    for (std::size_t i = 1; i < F.size(); ++i) {
      const Vec2 v = F[i].vec();
      grid.emplace(std::int64_t(std::min(G - 1, int(v.x * G))) * G + std::min(G - 1, int(v.y * G)), (long long)i);
    }

    bool moved = false;
    for (std::size_t j = targets.size(); j-- > reached && !moved;) {
      const bool final = j + 1 == targets.size();
      const auto back = final ? back_q : backward(targets[j]);
      const auto sites = detail::jump_sites(f, F, grid, G, back, opt.max_jump);
      int tried = 0;
      for (const auto& js : sites) {
        if (tried++ >= opt.candidates) break;
        const TorusPoint a = F[std::size_t(js.i)], b = back[std::size_t(js.l)];
        const bool jump = f.distance(a, b) > kJumpThreshold;
        if (jump) {
          DomainPiece piece = detail::jump_piece(a, b);
          PerturbationDomain trial = plan.domain;
          trial.pieces.push_back(piece);
          if (!trial.common_enlarged(a, b, Enlargement::jump)) {
            ++plan.rejected_sites;
            ++plan.rejected_tiling;
            continue;
          }
          Rect box = detail::piece_box(piece);
          const double m = opt.sigma_margin * (box.x1 - box.x0) / 3;
          box = {box.x0 - m, box.y0 - m, box.x1 + m, box.y1 + m};
          const auto sig = periodic_points_in(f, box, 2 * opt.N, opt.sigma_budget);
          if (!sig.points.empty()) {
            plan.sigma.insert(plan.sigma.end(), sig.points.begin(), sig.points.end());
            ++plan.rejected_sites;
            ++plan.rejected_sigma;
            continue;
          }
          if (!audit_domain(f, trial).ok) {
            ++plan.rejected_sites;
            ++plan.rejected_audit;
            continue;
          }
          plan.domain = std::move(trial);
          plan.sigma_exhaustive_up_to = std::min(plan.sigma_exhaustive_up_to, sig.exhaustive_up_to);
        }
        // orbit of x up to the arrival, then the jump onto b
        pts.insert(pts.end(), F.begin() + 1, F.begin() + std::ptrdiff_t(js.i));
        pts.push_back(b);
        plan.paths.lengths.push_back(js.i);
        plan.paths.paths.push_back({a, b});
        if (final) {
          TorusPoint w = b;
          for (int l = 0; l < js.l; ++l) pts.push_back(w = f.apply(w));
          plan.paths.waypoints.push_back(b);
          plan.paths.lengths.push_back(js.l);
          plan.paths.paths.push_back({w, q});
          plan.paths.waypoints.push_back(q);
          plan.end_residual = f.distance(w, q);
          plan.pseudo = make_pseudo_orbit(f, std::move(pts), epsilon);
          return plan;
        }
        plan.paths.waypoints.push_back(b);
        x = b;
        reached = j + 1;
        moved = true;
        break;
      }
    }
    if (moved) continue;
    if (coarse_built) {
      std::ostringstream m;
      m << "no admissible jump from waypoint " << plan.paths.waypoints.size() - 1 << " within " << opt.max_jump
        << " (sites rejected: " << plan.rejected_tiling << " tiling, " << plan.rejected_sigma << " periodic points, "
        << plan.rejected_audit << " iterate overlap)";
      throw StageError("connect", m.str());
    }
    // fall back to waypoints of an epsilon-chain from the current point
    const auto g = build_graph(f, opt.graph_cells, epsilon, opt.graph_samples, opt.seed);
    const auto chain = realize_pseudo_orbit(f, x, q, epsilon, g);
    targets.assign(chain.points.begin() + 1, chain.points.end());
    plan.coarse = targets;
    reached = 0;
    coarse_built = true;
    --hop;
  }
}

struct ConnectResult {
  ConnectingPlan plan;
  CompositePerturbation g;
  long long n{0};
  double residual{0};  // d(g^n(p), q)
  double c0{0};
  PairChain chain;
};

/// g with g^n(p) = q: property (P) over the union of the plan's pieces, verified by re-iterating g.
inline ConnectResult connect_pseudo_orbit(const SurfaceMap& f, const TorusPoint& p, const TorusPoint& q, double epsilon,
                                          const ConnectOptions& opt = {}) {
  auto plan = build_connecting_plan(f, p, q, epsilon, opt);
  if (plan.domain.pieces.empty()) {
    const long long n = (long long)plan.pseudo.points.size() - 1;
    const double res = f.distance(f.iterate(p, n), q);
    return {std::move(plan), CompositePerturbation(f, {}), n, res, 0, {}};
  }
  auto r = apply_property_P(f, plan.domain, plan.pseudo, opt.property);
  const double res = f.distance(r.g.iterate(p, r.m), q);
  if (!(res <= 1e-5)) {
    std::ostringstream m;
    m << "g^" << r.m << "(p) misses q by " << res;
    throw StageError("connect", m.str());
  }
  const double c0 = r.g.c0_distance(20);
  return {std::move(plan), std::move(r.g), r.m, res, c0, std::move(r.chain)};
}

}  // namespace c1lab
