#pragma once

// Dyadic square tilings of open planar sets given as finite unions of open rectangles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <unordered_set>
#include <vector>

#include "c1lab/geometry.hpp"

namespace c1lab {

/// Open axis-aligned rectangle (x0, x1) x (y0, y1).
struct Rect {
  double x0{0}, y0{0}, x1{0}, y1{0};
  bool empty() const { return !(x0 < x1 && y0 < y1); }
  bool contains_open(const Vec2& p) const { return x0 < p.x && p.x < x1 && y0 < p.y && p.y < y1; }
};

/// Finite union of open rectangles.
struct OpenSet {
  std::vector<Rect> rects;

  bool empty() const {
    return std::all_of(rects.begin(), rects.end(), [](const Rect& r) { return r.empty(); });
  }
  bool contains(const Vec2& p) const {
    return std::any_of(rects.begin(), rects.end(), [&](const Rect& r) { return r.contains_open(p); });
  }

  /// Exact test that the open box (x0,x1) x (y0,y1) lies in the union. Rectangle edges split the
  /// box into cells, open edges and vertices; membership is constant on each piece, so one
  /// representative per piece decides.
  bool contains_open_box(double x0, double y0, double x1, double y1) const {
    std::vector<double> xs{x0, x1}, ys{y0, y1};
    for (const auto& r : rects) {
      if (r.empty()) continue;
      for (double v : {r.x0, r.x1})
        if (x0 < v && v < x1) xs.push_back(v);
      for (double v : {r.y0, r.y1})
        if (y0 < v && v < y1) ys.push_back(v);
    }
    auto reps = [](std::vector<double>& cs) {
      std::sort(cs.begin(), cs.end());
      cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
      std::vector<double> out;
      for (std::size_t k = 0; k + 1 < cs.size(); ++k) {
        out.push_back(cs[k] + (cs[k + 1] - cs[k]) / 2);
        if (k > 0) out.push_back(cs[k]);
      }
      return out;
    };
    const auto rx = reps(xs), ry = reps(ys);
    for (double x : rx)
      for (double y : ry)
        if (!contains({x, y})) return false;
    return true;
  }

  Rect bounding_box() const {
    Rect b{HUGE_VAL, HUGE_VAL, -HUGE_VAL, -HUGE_VAL};
    for (const auto& r : rects) {
      if (r.empty()) continue;
      b.x0 = std::min(b.x0, r.x0);
      b.y0 = std::min(b.y0, r.y0);
      b.x1 = std::max(b.x1, r.x1);
      b.y1 = std::max(b.y1, r.y1);
    }
    return b;
  }
};

/// Dyadic square [i 2^-n, (i+1) 2^-n] x [j 2^-n, (j+1) 2^-n].
struct Tile {
  int level{0};
  std::int64_t i{0}, j{0};

  double side() const { return std::ldexp(1.0, -level); }
  double x0() const { return std::ldexp(double(i), -level); }
  double y0() const { return std::ldexp(double(j), -level); }
  Vec2 center() const { return {std::ldexp(double(i) + 0.5, -level), std::ldexp(double(j) + 0.5, -level)}; }

  friend bool operator==(const Tile&, const Tile&) = default;
  friend auto operator<=>(const Tile&, const Tile&) = default;
};

struct TileHash {
  std::size_t operator()(const Tile& t) const noexcept {
    std::uint64_t h = std::uint64_t(t.level) * 0x9E3779B97F4A7C15ULL;
    h ^= std::uint64_t(t.i) + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2);
    h ^= std::uint64_t(t.j) + 0x85EBCA77C2B2AE63ULL + (h << 6) + (h >> 2);
    return std::size_t(h);
  }
};

/// Closed squares intersect (edge or corner contact counts). Exact in integers.
inline bool tiles_adjacent_or_equal(const Tile& a, const Tile& b) {
  const int L = std::max(a.level, b.level);
  const std::int64_t sa = std::int64_t(1) << (L - a.level), sb = std::int64_t(1) << (L - b.level);
  const std::int64_t ax0 = a.i * sa, ax1 = (a.i + 1) * sa, ay0 = a.j * sa, ay1 = (a.j + 1) * sa;
  const std::int64_t bx0 = b.i * sb, bx1 = (b.i + 1) * sb, by0 = b.j * sb, by1 = (b.j + 1) * sb;
  return ax0 <= bx1 && bx0 <= ax1 && ay0 <= by1 && by0 <= ay1;
}

enum class Enlargement { jump, t2, support };

inline double enlargement_ratio(Enlargement k) {
  switch (k) {
    case Enlargement::jump: return 1.1;
    case Enlargement::t2: return 1.2;
    default: return 1.5;
  }
}

/// Closed homothetic enlargement of a tile about its center.
inline Rect enlarged(const Tile& t, double ratio) {
  const Vec2 c = t.center();
  const double h = ratio * t.side() / 2;
  return {c.x - h, c.y - h, c.x + h, c.y + h};
}

inline bool closed_contains(const Rect& r, const Vec2& p) { return r.x0 <= p.x && p.x <= r.x1 && r.y0 <= p.y && p.y <= r.y1; }

inline bool closed_intersect(const Rect& a, const Rect& b) {
  return a.x0 <= b.x1 && b.x0 <= a.x1 && a.y0 <= b.y1 && b.y0 <= a.y1;
}

struct TiledDomain {
  OpenSet region;
  std::vector<Tile> tiles;  // sorted by (level, i, j)
  int n_min{0}, n_max{0};
  double jump_enlarge{1.1}, t2_enlarge{1.2}, support_enlarge{1.5};

  /// Width of the untiled collar along the boundary guaranteed by the truncation at n_max.
  double collar_width() const { return 3 * std::ldexp(1.0, -n_max); }

  bool contains_tile(const Tile& t) const { return index_.count(t) > 0; }

  void rebuild_index() {
    std::sort(tiles.begin(), tiles.end());
    index_ = {tiles.begin(), tiles.end()};
  }

 private:
  std::unordered_set<Tile, TileHash> index_;
};

/// Level-by-level induction: a tile of level n joins when it and its eight neighbours of the same
/// level lie in U (as open squares) and no coarser tile already covers it.
inline TiledDomain tile_open_set(const OpenSet& U, int n_min, int n_max) {
  if (n_max < n_min) throw ContractError("tile_open_set: n_max < n_min");
  if (n_min < 0) throw ContractError("tile_open_set: n_min must be >= 0");
  if (n_max > 40) throw ContractError("tile_open_set: n_max too large");
  TiledDomain dom;
  dom.region = U;
  dom.n_min = n_min;
  dom.n_max = n_max;
  if (U.empty()) return dom;
  const Rect bb = U.bounding_box();
  std::unordered_set<Tile, TileHash> placed;
  for (int n = n_min; n <= n_max; ++n) {
    const double scale = std::ldexp(1.0, n);
    const std::int64_t i0 = std::int64_t(std::floor(bb.x0 * scale)), i1 = std::int64_t(std::ceil(bb.x1 * scale));
    const std::int64_t j0 = std::int64_t(std::floor(bb.y0 * scale)), j1 = std::int64_t(std::ceil(bb.y1 * scale));
    const std::int64_t W = i1 - i0, H = j1 - j0;
    if (W <= 0 || H <= 0) continue;
    if (W * H > (std::int64_t(1) << 26)) throw ContractError("tile_open_set: resolution too fine for the region");
    std::vector<char> inside(std::size_t(W * H), 0);
    for (std::int64_t a = 0; a < W; ++a)
      for (std::int64_t b = 0; b < H; ++b) {
        const Tile t{n, i0 + a, j0 + b};
        inside[std::size_t(a * H + b)] = U.contains_open_box(t.x0(), t.y0(), t.x0() + t.side(), t.y0() + t.side());
      }
    auto in = [&](std::int64_t a, std::int64_t b) { return a >= 0 && b >= 0 && a < W && b < H && inside[std::size_t(a * H + b)]; };
    for (std::int64_t a = 0; a < W; ++a)
      for (std::int64_t b = 0; b < H; ++b) {
        bool ok = true;
        for (int da = -1; da <= 1 && ok; ++da)
          for (int db = -1; db <= 1 && ok; ++db) ok = in(a + da, b + db);
        if (!ok) continue;
        const Tile t{n, i0 + a, j0 + b};
        bool covered = false;
        for (int m = n - 1; m >= n_min && !covered; --m) {
          const int s = n - m;
          covered = placed.count(Tile{m, t.i >> s, t.j >> s}) > 0;  // arithmetic shift = floor division
        }
        if (!covered) {
          placed.insert(t);
          dom.tiles.push_back(t);
        }
      }
  }
  dom.rebuild_index();
  return dom;
}

/// The tile whose half-open square [x0, x0 + s) x [y0, y0 + s) contains p.
inline std::optional<Tile> tile_containing(const TiledDomain& d, const Vec2& p) {
  for (int n = d.n_min; n <= d.n_max; ++n) {
    const double s = std::ldexp(1.0, n);
    const Tile t{n, std::int64_t(std::floor(p.x * s)), std::int64_t(std::floor(p.y * s))};
    if (d.contains_tile(t)) return t;
  }
  return std::nullopt;
}

/// Some tile whose enlargement by the named ratio contains both points.
inline std::optional<Tile> common_enlarged_tile(const TiledDomain& d, const Vec2& p, const Vec2& q, Enlargement kind) {
  const double ratio = enlargement_ratio(kind);
  // Enlargements by at most 3/2 reach only into the 8 neighbouring squares of the same level.
  for (int n = d.n_min; n <= d.n_max; ++n) {
    const double s = std::ldexp(1.0, n);
    const std::int64_t pi = std::int64_t(std::floor(p.x * s)), pj = std::int64_t(std::floor(p.y * s));
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b) {
        const Tile t{n, pi + a, pj + b};
        if (!d.contains_tile(t)) continue;
        const Rect e = enlarged(t, ratio);
        if (closed_contains(e, p) && closed_contains(e, q)) return t;
      }
  }
  return std::nullopt;
}

inline bool same_enlarged_tile(const TiledDomain& d, const Vec2& p, const Vec2& q, Enlargement kind) {
  return common_enlarged_tile(d, p, q, kind).has_value();
}

/// Domain tiles whose closures meet the closure of `t` (t itself excluded).
inline std::vector<Tile> adjacency(const TiledDomain& d, const Tile& t) {
  std::vector<Tile> out;
  for (int m = d.n_min; m <= d.n_max; ++m) {
    if (m <= t.level) {
      const int s = t.level - m;
      const std::int64_t ilo = (t.i - 1) >> s, ihi = (t.i + 1) >> s;
      const std::int64_t jlo = (t.j - 1) >> s, jhi = (t.j + 1) >> s;
      for (std::int64_t i = ilo; i <= ihi; ++i)
        for (std::int64_t j = jlo; j <= jhi; ++j) {
          const Tile c{m, i, j};
          if (!(c == t) && d.contains_tile(c) && tiles_adjacent_or_equal(c, t)) out.push_back(c);
        }
    } else {
      // Finer squares touching the boundary ring of t.
      const std::int64_t k = std::int64_t(1) << (m - t.level);
      const std::int64_t ilo = t.i * k - 1, ihi = (t.i + 1) * k, jlo = t.j * k - 1, jhi = (t.j + 1) * k;
      for (std::int64_t i = ilo; i <= ihi; ++i)
        for (std::int64_t j = jlo; j <= jhi; ++j) {
          if (i != ilo && i != ihi && j != jlo && j != jhi) {
            j = jhi - 1;  // skip the interior column
            continue;
          }
          const Tile c{m, i, j};
          if (d.contains_tile(c)) out.push_back(c);
        }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Euclidean distance from p to the complement of U (0 when p is outside U). The boundary of a
/// union of rectangles is made of rectangle edges minus the parts covered by other open rectangles.
inline double distance_to_boundary(const OpenSet& U, const Vec2& p) {
  if (!U.contains(p)) return 0;
  double best = HUGE_VAL;
  auto seg_dist = [&](Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double L2 = dot(ab, ab);
    const double t = L2 > 0 ? std::clamp(dot(p - a, ab) / L2, 0.0, 1.0) : 0.0;
    return norm(p - (a + t * ab));
  };
  for (const auto& r : U.rects) {
    if (r.empty()) continue;
    // Four edges as (fixed coordinate, horizontal?, lo, hi).
    const struct { double c; bool horiz; double lo, hi; } edges[4] = {
        {r.y0, true, r.x0, r.x1}, {r.y1, true, r.x0, r.x1}, {r.x0, false, r.y0, r.y1}, {r.x1, false, r.y0, r.y1}};
    for (const auto& e : edges) {
      std::vector<std::pair<double, double>> keep{{e.lo, e.hi}};
      for (const auto& o : U.rects) {
        if (&o == &r || o.empty()) continue;
        // Covered part: points of the edge strictly inside o.
        double clo, chi;
        if (e.horiz) {
          if (!(o.y0 < e.c && e.c < o.y1)) continue;
          clo = o.x0, chi = o.x1;
        } else {
          if (!(o.x0 < e.c && e.c < o.x1)) continue;
          clo = o.y0, chi = o.y1;
        }
        std::vector<std::pair<double, double>> next;
        for (const auto& [lo, hi] : keep) {
          if (chi <= lo || hi <= clo) {
            next.push_back({lo, hi});
            continue;
          }
          if (lo < clo) next.push_back({lo, clo});
          if (chi < hi) next.push_back({chi, hi});
        }
        keep.swap(next);
      }
      for (const auto& [lo, hi] : keep)
        best = std::min(best, e.horiz ? seg_dist({lo, e.c}, {hi, e.c}) : seg_dist({e.c, lo}, {e.c, hi}));
    }
  }
  return best;
}

/// d^B(z, z') = |z - z'| / min(d(z, ∂U), d(z', ∂U)).
inline double boundary_relative_distance(const OpenSet& U, const Vec2& z, const Vec2& w) {
  const double m = std::min(distance_to_boundary(U, z), distance_to_boundary(U, w));
  return m > 0 ? norm(w - z) / m : HUGE_VAL;
}

}  // namespace c1lab
