#pragma once

// Pseudo-orbits: grid transition graphs, chain classes, explicit realization, recurrence search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "c1lab/geometry.hpp"
#include "c1lab/maps.hpp"

namespace c1lab {

/// Residuals above this count as jumps.
inline constexpr double kJumpThreshold = 1e-12;

struct PseudoOrbit {
  std::vector<TorusPoint> points;
  double epsilon{0};
  std::vector<std::size_t> jumps;  // k with d(f(z_k), z_{k+1}) > kJumpThreshold
};

struct PseudoOrbitCheck {
  bool ok{false};
  double max_residual{0};
  std::vector<std::size_t> jumps;
  std::string message;
};

/// Independent re-check of the pseudo-orbit invariant against `f`.
inline PseudoOrbitCheck check_pseudo_orbit(const SurfaceMap& f, const PseudoOrbit& po) {
  PseudoOrbitCheck c;
  c.ok = true;
  for (std::size_t k = 0; k + 1 < po.points.size(); ++k) {
    const double r = f.distance(f.apply(po.points[k]), po.points[k + 1]);
    c.max_residual = std::max(c.max_residual, r);
    if (r > kJumpThreshold) c.jumps.push_back(k);
    if (!(r < po.epsilon) && c.ok) {
      c.ok = false;
      std::ostringstream m;
      m << "step " << k << " residual " << r << " >= epsilon " << po.epsilon;
      c.message = m.str();
    }
  }
  if (c.ok && c.jumps != po.jumps) {
    c.ok = false;
    c.message = "jump list does not match residuals";
  }
  return c;
}

/// Build a pseudo-orbit from points, filling in the jump list.
inline PseudoOrbit make_pseudo_orbit(const SurfaceMap& f, std::vector<TorusPoint> pts, double epsilon) {
  PseudoOrbit po;
  po.points = std::move(pts);
  po.epsilon = epsilon;
  for (std::size_t k = 0; k + 1 < po.points.size(); ++k)
    if (f.distance(f.apply(po.points[k]), po.points[k + 1]) > kJumpThreshold) po.jumps.push_back(k);
  return po;
}

/// Cell transition graph on an m x m grid of the torus.
struct TransitionGraph {
  int m{0};
  double epsilon{0};
  int samples_per_cell{0};
  std::uint64_t seed{0};
  std::vector<std::vector<int>> successors;  // sorted, unique
  std::vector<TorusPoint> samples;           // cell-major, samples_per_cell per cell
  std::vector<TorusPoint> images;

  int cell_count() const { return m * m; }
  int cell_of(const TorusPoint& p) const {
    const int i = std::min(m - 1, int(p.x * m)), j = std::min(m - 1, int(p.y * m));
    return i * m + j;
  }
  Vec2 cell_center(int c) const { return {(c / m + 0.5) / m, (c % m + 0.5) / m}; }
  std::size_t edge_count() const {
    std::size_t e = 0;
    for (const auto& s : successors) e += s.size();
    return e;
  }
};

namespace detail {

/// Cells whose centers lie within `radius` of y (torus), each at most once.
template <typename Fn>
void for_cells_near(int m, const Vec2& y, double radius, Fn&& fn) {
  const int span = std::min(m, int(std::ceil(radius * m)) + 1);
  const int ci = int(std::floor(y.x * m)), cj = int(std::floor(y.y * m));
  const int lo = -span, hi = (2 * span + 1 >= m) ? lo + m - 1 : span;
  for (int di = lo; di <= hi; ++di)
    for (int dj = lo; dj <= hi; ++dj) {
      const int i = ((ci + di) % m + m) % m, j = ((cj + dj) % m + m) % m;
      fn(i * m + j);
    }
}

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Edge A -> B when some sample x in A has d(f(x), center B) <= epsilon + half cell diagonal.
inline TransitionGraph build_graph(const SurfaceMap& f, int m, double epsilon, int samples, std::uint64_t seed) {
  if (m < 2) throw ContractError("build_graph: m must be >= 2");
  if (samples < 1) throw ContractError("build_graph: samples must be >= 1");
  if (f.surface() != Surface::torus) throw ContractError("build_graph: transition graphs need a torus map");
  TransitionGraph g;
  g.m = m;
  g.epsilon = epsilon;
  g.samples_per_cell = samples;
  g.seed = seed;
  const int n = m * m;
  g.successors.resize(n);
  g.samples.reserve(std::size_t(n) * samples);
  g.images.reserve(std::size_t(n) * samples);
  const double radius = epsilon + std::sqrt(2.0) / (2 * m);
  const int strata = int(std::ceil(std::sqrt(double(samples))));
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<int> scratch;
  for (int c = 0; c < n; ++c) {
    std::mt19937_64 rng(detail::splitmix(seed ^ detail::splitmix(std::uint64_t(c))));
    const double x0 = double(c / m) / m, y0 = double(c % m) / m;
    scratch.clear();
    for (int s = 0; s < samples; ++s) {
      // Jittered stratified sample in sub-cell s.
      const int a = s / strata, b = s % strata;
      const TorusPoint x{x0 + (a + u(rng)) / (strata * double(m)), y0 + (b + u(rng)) / (strata * double(m))};
      const TorusPoint y = f.apply(x);
      g.samples.push_back(x);
      g.images.push_back(y);
      detail::for_cells_near(m, y.vec(), radius, [&](int b2) {
        const Vec2 cb = g.cell_center(b2);
        if (norm(torus_delta(y.vec(), cb)) <= radius) scratch.push_back(b2);
      });
    }
    std::sort(scratch.begin(), scratch.end());
    scratch.erase(std::unique(scratch.begin(), scratch.end()), scratch.end());
    g.successors[c] = scratch;
  }
  return g;
}

struct ChainClasses {
  std::vector<int> class_of;  // per cell
  int count{0};
  std::vector<int> sizes;
};

/// Strongly connected components (iterative Tarjan). Classes are numbered in order of their
/// smallest cell so the labelling is deterministic.
inline ChainClasses chain_classes(const TransitionGraph& g) {
  const int n = int(g.successors.size());
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
  std::vector<char> on_stack(n, 0);
  std::vector<int> stack;
  std::vector<std::pair<int, std::size_t>> call;
  int counter = 0, ncomp = 0;
  for (int root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& [v, pos] = call.back();
      if (pos < g.successors[v].size()) {
        const int w = g.successors[v][pos++];
        if (index[w] < 0) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = ncomp;
        } while (w != v);
        ++ncomp;
      }
      const int done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
    }
  }
  ChainClasses cc;
  cc.count = ncomp;
  std::vector<int> relabel(ncomp, -1);
  int next = 0;
  cc.class_of.resize(n);
  for (int v = 0; v < n; ++v) {
    if (relabel[comp[v]] < 0) relabel[comp[v]] = next++;
    cc.class_of[v] = relabel[comp[v]];
  }
  cc.sizes.assign(ncomp, 0);
  for (int v = 0; v < n; ++v) ++cc.sizes[cc.class_of[v]];
  return cc;
}

/// Cells reachable from `from` along graph edges (including `from`).
inline std::vector<char> reachable_cells(const TransitionGraph& g, int from) {
  std::vector<char> seen(g.successors.size(), 0);
  std::vector<int> todo{from};
  seen[from] = 1;
  while (!todo.empty()) {
    const int v = todo.back();
    todo.pop_back();
    for (int w : g.successors[v])
      if (!seen[w]) {
        seen[w] = 1;
        todo.push_back(w);
      }
  }
  return seen;
}

/// Explicit epsilon-pseudo-orbit from p to q. Jump sites are the graph's sample points, so every
/// intermediate step is an exact orbit step of a sample followed by a jump smaller than epsilon;
/// the search is breadth-first over cells, one representative sample per reached cell.
inline PseudoOrbit realize_pseudo_orbit(const SurfaceMap& f, const TorusPoint& p, const TorusPoint& q, double epsilon,
                                        const TransitionGraph& g) {
  if (f.distance(p, q) == 0) return make_pseudo_orbit(f, {p}, epsilon);
  const TorusPoint fp = f.apply(p);
  if (f.distance(fp, q) < epsilon) return make_pseudo_orbit(f, {p, q}, epsilon);

  const int cp = g.cell_of(p), cq = g.cell_of(q);
  if (!reachable_cells(g, cp)[cq]) {
    const auto cc = chain_classes(g);
    std::ostringstream m;
    m << "cell of q (chain class " << cc.class_of[cq] << ") is unreachable from cell of p (chain class "
      << cc.class_of[cp] << ")";
    throw StageError("chains", m.str());
  }

  const int S = g.samples_per_cell;
  const std::size_t N = g.samples.size();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> parent(N, kNone);
  std::vector<char> cell_seen(g.successors.size(), 0);  // first sample reaching a cell represents it
  std::deque<std::size_t> queue;
  const std::size_t kStart = N;  // parent marker for p

  auto expand = [&](const TorusPoint& y, std::size_t from) {
    detail::for_cells_near(g.m, y.vec(), epsilon + std::sqrt(2.0) / g.m, [&](int c) {
      if (cell_seen[c]) return;
      for (int s = 0; s < S; ++s) {
        const std::size_t k = std::size_t(c) * S + s;
        if (f.distance(y, g.samples[k]) < epsilon) {
          cell_seen[c] = 1;
          parent[k] = from;
          queue.push_back(k);
          return;
        }
      }
    });
  };
  expand(fp, kStart);
  std::size_t last = kNone;
  while (!queue.empty()) {
    const std::size_t k = queue.front();
    queue.pop_front();
    if (f.distance(g.images[k], q) < epsilon) {
      last = k;
      break;
    }
    expand(g.images[k], k);
  }
  if (last == kNone) throw StageError("chains", "no pseudo-orbit through sample points; the graph edge is spurious at this resolution");
  std::vector<TorusPoint> rev{q};
  for (std::size_t k = last; k != kStart; k = parent[k]) rev.push_back(g.samples[k]);
  rev.push_back(p);
  std::reverse(rev.begin(), rev.end());
  return make_pseudo_orbit(f, std::move(rev), epsilon);
}

struct Recurrence {
  TorusPoint point;
  long long return_time{0};
  double return_distance{0};
};

/// First return of the orbit of x to within `radius` of x.
inline Recurrence find_recurrent_near(const SurfaceMap& f, const TorusPoint& x, double radius, long long max_iter) {
  if (!(radius > 0)) throw ContractError("find_recurrent_near: radius must be > 0");
  TorusPoint y = x;
  double best = std::numeric_limits<double>::infinity();
  long long best_n = 0;
  for (long long n = 1; n <= max_iter; ++n) {
    y = f.apply(y);
    const double d = f.distance(x, y);
    if (d < radius) return {x, n, d};
    if (d < best) {
      best = d;
      best_n = n;
    }
  }
  std::ostringstream m;
  m << "no return within radius " << radius << " after " << max_iter << " iterates; best candidate n=" << best_n
    << " at distance " << best;
  throw StageError("chains", m.str());
}

}  // namespace c1lab
