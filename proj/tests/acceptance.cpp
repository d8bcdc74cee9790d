// Acceptance run: one PASS/FAIL line per criterion. `acceptance` runs all of them,
// `acceptance 5` only the fifth.

#include <gmpxx.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "c1lab/closing.hpp"
#include "c1lab/io.hpp"

using namespace c1lab;

namespace {

struct Outcome {
  bool ok{false};
  std::string detail;
};

const LinearMapParams kCat{{{{2, 1}, {1, 1}}}};

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------------------------------
// 1. elementary perturbations

Outcome elementary_suite() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0, 1), ang(0, 2 * std::numbers::pi), len(1e-4, 0.08), unit(-1, 1);
  const double etas[] = {0.5, 1.0, 2.0};
  double worst_hit = 0, worst_det = 0;
  long long outside_mismatch = 0;
  for (int c = 0; c < 200; ++c) {
    const double eta = etas[c % 3];
    const Vec2 x{u(rng), u(rng)};
    const double a = ang(rng), l = len(rng);
    const Vec2 y = x + l * Vec2{std::cos(a), std::sin(a)};
    const auto b = elementary_perturbation(x, y, eta);
    worst_hit = std::max(worst_hit, norm(torus_delta(apply_bump(Bump{b}, x, Surface::torus), y)));
    for (int s = 0; s < 10000; ++s) {
      // outside: anywhere on the torus at distance >= radius from the center
      const Vec2 z{u(rng), u(rng)};
      if (norm(torus_delta(b.center, z)) < b.radius) continue;
      const Vec2 img = apply_bump(Bump{b}, z, Surface::torus);
      if (!(img.x == z.x && img.y == z.y)) ++outside_mismatch;
    }
    for (int s = 0; s < 10000;) {
      const Vec2 w{unit(rng), unit(rng)};
      if (norm(w) >= 1) continue;
      ++s;
      Mat2 t;
      apply_bump(Bump{b}, b.center + b.radius * w, Surface::torus, &t);
      worst_det = std::max(worst_det, std::abs(t.det() - 1));
    }
  }
  const bool ok = worst_hit <= 1e-10 && outside_mismatch == 0 && worst_det <= 1e-8;
  return {ok, "max |phi(x)-y| " + fmt(worst_hit) + ", outside mismatches " + std::to_string(outside_mismatch) +
                  ", max |det-1| " + fmt(worst_det)};
}

// ---------------------------------------------------------------------------------------------
// 2. composition of disjoint supports

Outcome composition_suite() {
  const auto f = standard_map({0.5});
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0, 1), len(0.005, 0.05), ang(0, 2 * std::numbers::pi);
  double worst = 0;
  long long perm_mismatch = 0;
  for (int c = 0; c < 50;) {
    auto make = [&] {
      const Vec2 x{u(rng), u(rng)};
      const double a = ang(rng);
      return elementary_perturbation(x, x + len(rng) * Vec2{std::cos(a), std::sin(a)}, 1.0);
    };
    const auto b1 = make(), b2 = make();
    if (norm(torus_delta(b1.center, b2.center)) <= b1.radius + b2.radius) continue;
    ++c;
    const CompositePerturbation g12(f, {{0, b1}, {0, b2}}), g21(f, {{0, b2}, {0, b1}});
    const double d1 = CompositePerturbation(f, {{0, b1}}).c0_distance(100);
    const double d2 = CompositePerturbation(f, {{0, b2}}).c0_distance(100);
    worst = std::max(worst, std::abs(g12.c0_distance(100) - std::max(d1, d2)));
    for (int s = 0; s < 2000; ++s) {
      TorusPoint z{u(rng), u(rng)};
      if (s % 2 == 0) {
        // pull a support point back so f lands it inside a bump
        const auto& b = s % 4 == 0 ? b1 : b2;
        const double t = ang(rng);
        z = f.inverse(wrap(b.center + (0.9 * b.radius * u(rng)) * Vec2{std::cos(t), std::sin(t)}));
      }
      if (!(g12.apply(z) == g21.apply(z))) ++perm_mismatch;
    }
  }
  return {worst <= 1e-12 && perm_mismatch == 0,
          "max |C0(g) - max C0| " + fmt(worst) + ", permutation mismatches " + std::to_string(perm_mismatch)};
}

// ---------------------------------------------------------------------------------------------
// 3. closing

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

Outcome closing_suite() {
  const auto f = standard_map({0.8});
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0, 1);
  int ok = 0, tried = 0, wrong = 0;
  std::string first_bad;
  while (tried < 20) {
    const TorusPoint p{u(rng), u(rng)};
    try {
      find_recurrent_near(f, p, 0.05, 100000);
    } catch (const StageError&) {
      continue;  // not a recurrent seed
    }
    ++tried;
    std::optional<ClosingResult> found;
    try {
      found = close_orbit(f, p, {p, 0.05}, 0.5);
    } catch (const StageError&) {
      continue;
    }
    const ClosingResult& r = *found;
    // pair = exhaustive minimum of D over the scanned returns
    double best = 1e300;
    for (std::size_t j = 1; j < r.cloud.returns.size(); ++j)
      for (std::size_t i = 0; i < j; ++i) best = std::min(best, hyperbolic_ratio(r.cloud, i, j));
    const bool pair_ok = r.pair.ratio == best;
    const bool claim_ok = brute_claim(r.cloud, r.pair.i, r.pair.j, 0.5);
    const auto& q = r.cloud.returns[r.pair.i].point;
    TorusPoint z = q;
    const auto g = r.map.as_map();
    for (long long k = 0; k < r.period; ++k) z = g.apply(z);
    const bool periodic_ok = f.distance(z, q) <= 1e-6;
    // support audit: g = f bit-exactly wherever f(z) is outside the bump support
    bool support_ok = true;
    for (int s = 0; s < 2000 && support_ok; ++s) {
      const TorusPoint w{u(rng), u(rng)};
      if (norm(torus_delta(r.bump.center, f.apply(w).vec())) < r.bump.radius) continue;
      support_ok = g.apply(w) == f.apply(w);
    }
    if (pair_ok && claim_ok && periodic_ok && support_ok) {
      ++ok;
    } else {
      ++wrong;
      if (first_bad.empty())
        first_bad = "; first bad seed pair " + std::to_string(pair_ok) + " claim " + std::to_string(claim_ok) + " periodic " +
                    std::to_string(periodic_ok) + " support " + std::to_string(support_ok);
    }
  }
  return {ok >= 15 && wrong == 0, std::to_string(ok) + "/20 closed, " + std::to_string(wrong) + " wrong answers" + first_bad};
}

// ---------------------------------------------------------------------------------------------
// 4. tilings

Outcome tiling_suite() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> count(1, 5);
  long long t1 = 0, t2 = 0, mono = 0;
  std::size_t worst_adj = 0, tiles = 0;
  for (int c = 0; c < 100; ++c) {
    OpenSet U;
    for (int k = count(rng); k > 0; --k) {
      const double a = u(rng), b = u(rng), e = u(rng), d = u(rng);
      U.rects.push_back({std::min(a, b), std::min(e, d), std::max(a, b), std::max(e, d)});
    }
    const auto T = tile_open_set(U, 2, 8);
    tiles += T.tiles.size();
    for (std::size_t a = 0; a < T.tiles.size(); ++a) {
      const Tile& s = T.tiles[a];
      // (T1): the open square lies in U, checked on an interior grid (edges are generic)
      for (int i = 1; i < 16; ++i)
        for (int j = 1; j < 16; ++j)
          if (!U.contains({s.x0() + s.side() * i / 16, s.y0() + s.side() * j / 16})) {
            ++t1;
            i = j = 16;
          }
      // (T2): 1.2-enlargements meet only for adjacent tiles; interiors are disjoint
      for (std::size_t b = a + 1; b < T.tiles.size(); ++b) {
        const Tile& t = T.tiles[b];
        const Tile &lo = s.level <= t.level ? s : t, &hi = s.level <= t.level ? t : s;
        const int k = hi.level - lo.level;
        if ((hi.i >> k) == lo.i && (hi.j >> k) == lo.j) ++t2;
        if (closed_intersect(enlarged(s, 1.2), enlarged(t, 1.2)) && !tiles_adjacent_or_equal(s, t)) ++t2;
      }
      worst_adj = std::max(worst_adj, adjacency(T, s).size());
    }
    const auto T7 = tile_open_set(U, 2, 7);
    for (const auto& t : T7.tiles) mono += T.contains_tile(t) ? 0 : 1;
  }
  return {t1 == 0 && t2 == 0 && mono == 0 && worst_adj <= 12,
          std::to_string(tiles) + " tiles; T1 violations " + std::to_string(t1) + ", T2 violations " + std::to_string(t2) +
              ", max adjacency " + std::to_string(worst_adj) + ", monotonicity violations " + std::to_string(mono)};
}

// ---------------------------------------------------------------------------------------------
// 5. property (P)

Outcome property_p_suite() {
  int ok = 0, total = 0, worst_merges = 0;
  std::string first_bad;
  for (const auto& spec : {MapSpec{kCat}, MapSpec{StandardMapParams{0.5}}}) {
    const auto f = make_map(spec);
    for (int c = 0; c < 50; ++c) {
      ++total;
      SyntheticOptions o;
      o.N = 12;
      o.jumps = 1 + c % 20;
      try {
        const auto sc = synthetic_pseudo_orbit(f, 5000 + c, o);
        const auto r = apply_property_P(f, sc.domain, sc.pseudo);
        const long long n = (long long)sc.pseudo.points.size() - 1;
        TorusPoint z = sc.pseudo.points.front();
        const auto g = r.g.as_map();
        for (long long k = 0; k < r.m; ++k) z = g.apply(z);
        const double res = f.distance(z, sc.pseudo.points.back());
        const auto a = audit_support(f, r.g, sc.domain, 10000, 77 + c);
        int merges = 0;
        for (const int m : r.chain.merge_count) merges = std::max(merges, m);
        worst_merges = std::max(worst_merges, merges);
        if (res <= 1e-6 && r.m <= n && a.violations == 0 && merges <= 12) ++ok;
        else if (first_bad.empty())
          first_bad = "; case " + std::to_string(c) + " residual " + fmt(res) + " violations " + std::to_string(a.violations);
      } catch (const std::exception& e) {
        if (first_bad.empty()) first_bad = "; case " + std::to_string(c) + ": " + e.what();
      }
    }
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " cases, max merges per pair " +
                           std::to_string(worst_merges) + first_bad};
}

// ---------------------------------------------------------------------------------------------
// 6. end-to-end connection

Outcome connecting_suite() {
  const auto f = standard_map({0.5});
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0, 1);
  const auto dir = std::filesystem::temp_directory_path() / "c1lab_acceptance";
  std::filesystem::create_directories(dir);
  int ok = 0, wrong = 0, pairs = 0;
  std::string notes;
  while (pairs < 10) {
    const TorusPoint p{u(rng), u(rng)}, q{u(rng), u(rng)};
    ConnectOptions o;
    o.graph_cells = 256;
    std::optional<ConnectResult> r;
    try {
      r = connect_pseudo_orbit(f, p, q, 0.02, o);
    } catch (const ContractError&) {
      continue;  // periodic endpoint: not a valid pair
    } catch (const StageError& e) {
      ++pairs;
      notes += std::string("; failed at ") + e.what();
      continue;
    }
    ++pairs;
    // serialize, read back, replay from the file alone
    const auto path = dir / ("connection_" + std::to_string(pairs) + ".json");
    {
      std::ofstream os(path);
      os << json{{"perturbation", perturbation_to_json(r->g)}, {"p", p}, {"q", q}, {"n", r->n}}.dump();
    }
    const auto replay = replay_connection(read_json_file(path.string()), 1e-5);
    if (r->residual <= 1e-5 && replay.ok) ++ok;
    else {
      ++wrong;
      notes += "; pair " + std::to_string(pairs) + " residual " + fmt(r->residual) + " replay " + fmt(replay.residual);
    }
  }
  return {ok >= 7 && wrong == 0, std::to_string(ok) + "/10 connected, " + std::to_string(wrong) + " wrong answers" + notes};
}

// ---------------------------------------------------------------------------------------------
// 7. Lyapunov exponents

Outcome lyapunov_suite() {
  const auto cat = linear_automorphism(kCat);
  const double exact = std::log((3 + std::sqrt(5.0)) / 2);
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int k = 0; k < 10; ++k) worst = std::max(worst, std::abs(lyapunov_upper(cat, {u(rng), u(rng)}, 10000) - exact));
  const double id = std::abs(lyapunov_upper(identity_map(), {u(rng), u(rng)}, 10000));
  return {worst <= 1e-3 && id <= 1e-6, "max |lambda - log phi^2| " + fmt(worst) + ", identity " + fmt(id)};
}

// ---------------------------------------------------------------------------------------------
// 8. periodic classification

Outcome classification_suite() {
  const double a = 0.1, tp = 2 * std::numbers::pi * a;
  const auto res = find_periodic(standard_map({a}), 1);
  std::optional<OrbitClass> origin, half;
  for (const auto& o : res.orbits) {
    const auto& z = o.points[0];
    if (torus_distance(z, {0, 0}) < 1e-9) origin = classify(o);
    if (torus_distance(z, {0.5, 0}) < 1e-9) half = classify(o);
  }
  const auto cat = find_periodic(linear_automorphism(kCat), 1);
  if (!origin || !half) return {false, "fixed points (0,0) or (0.5,0) not found"};
  const bool ok = origin->tag == OrbitType::saddle && std::abs(origin->trace - (2 + tp)) <= 1e-9 &&
                  half->tag == OrbitType::elliptic && std::abs(half->trace - (2 - tp)) <= 1e-9 && cat.orbits.size() == 1;
  return {ok, std::string("(0,0) ") + to_string(origin->tag) + " trace error " + fmt(std::abs(origin->trace - (2 + tp))) +
                  ", (0.5,0) " + to_string(half->tag) + " trace error " + fmt(std::abs(half->trace - (2 - tp))) +
                  ", cat fixed orbits " + std::to_string(cat.orbits.size())};
}

// ---------------------------------------------------------------------------------------------
// 9. chain transitivity

Outcome chain_suite() {
  const int m = 256;
  const double eps = 4.0 / m;
  bool ok = true;
  std::string detail;
  for (const auto& spec : {MapSpec{StandardMapParams{0.5}}, MapSpec{kCat}}) {
    const auto f = make_map(spec);
    const auto g = build_graph(f, m, eps, 4, 909);
    const auto cc = chain_classes(g);
    const bool single = cc.count == 1 && cc.sizes.at(0) == m * m;
    // independent re-check against a freshly built map
    const auto h = make_map(spec);
    std::mt19937_64 rng(910);
    std::uniform_real_distribution<double> u(0, 1);
    double worst = 0;
    int bad = 0;
    for (int k = 0; k < 20; ++k) {
      const TorusPoint p{u(rng), u(rng)}, q{u(rng), u(rng)};
      const auto po = realize_pseudo_orbit(f, p, q, eps, g);
      if (!(po.points.front() == p) || !(po.points.back() == q)) ++bad;
      for (std::size_t i = 0; i + 1 < po.points.size(); ++i) {
        const double r = h.distance(h.apply(po.points[i]), po.points[i + 1]);
        worst = std::max(worst, r);
        if (!(r < eps)) ++bad;
      }
    }
    ok = ok && single && bad == 0;
    detail += f.name() + ": " + std::to_string(cc.count) + " class(es), max jump " + fmt(worst) + ", bad " +
              std::to_string(bad) + "; ";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------------------------
// 10. pendulum

Outcome pendulum_suite() {
  PendulumParams P;
  P.fourier_cos = {0.4};
  P.period = 1.0;
  P.steps = 64;
  const auto f = pendulum_time_T(P);
  const double dt = P.period / P.steps, two_pi = 2 * std::numbers::pi;
  std::mt19937_64 rng(1010);
  std::uniform_real_distribution<double> u(0, 1), v(-2, 2);
  long long inexact = 0;
  double worst = 0, drift = 0;
  for (int s = 0; s < 10000; ++s) {
    const TorusPoint z{u(rng), v(rng)};
    worst = std::max(worst, std::abs(f.tangent(z).det() - 1));
    if (s % 10) continue;
    // per-step factors in exact rational arithmetic, fed the same doubles the map uses
    double th = z.x, vel = z.y;
    Mat2 numeric = Mat2::identity();
    for (int i = 0; i < P.steps; ++i) {
      const mpq_class c(-two_pi * dt * std::cos(two_pi * th)), h(dt);
      const mpq_class step_a = 1 + h * c, step_b = h, step_c = c, step_d = 1;  // drift * kick
      if (step_a * step_d - step_b * step_c != 1) ++inexact;
      const Mat2 kick{1, 0, c.get_d(), 1}, drf{1, dt, 0, 1};
      numeric = drf * (kick * numeric);
      vel += dt * (-std::sin(two_pi * th) + P.forcing(i * dt));
      th += dt * vel;
    }
    const Mat2 lib = f.tangent(z);
    drift = std::max({drift, std::abs(lib.a - numeric.a), std::abs(lib.b - numeric.b), std::abs(lib.c - numeric.c),
                      std::abs(lib.d - numeric.d)});
  }
  return {inexact == 0 && worst <= 1e-12 && drift <= 1e-12,
          "exact step determinants != 1: " + std::to_string(inexact) + ", max |det-1| " + fmt(worst) +
              ", tangent vs shear product " + fmt(drift)};
}

// ---------------------------------------------------------------------------------------------
// 11. homoclinic points

Outcome homoclinic_suite() {
  const auto f = linear_automorphism(kCat);
  const auto orbit = find_periodic(f, 1).orbits.at(0);
  const auto wu = grow_manifold(f, orbit, false, 3.0, 1e-3);
  const auto ws = grow_manifold(f, orbit, true, 3.0, 1e-3);
  const auto hs = homoclinic_points(f, orbit, ws, wu);
  // eigenvectors (1, phi - 1) and (1, -phi) of [[2,1],[1,1]]
  const double phi = (1 + std::sqrt(5.0)) / 2;
  const Vec2 eu{1, phi - 1}, es{1, -phi};
  const double want = std::acos(std::abs(eu.x * es.x + eu.y * es.y) / (norm(eu) * norm(es)));
  int matching = 0;
  double worst = 0;
  for (const auto& h : hs) {
    worst = std::max(worst, std::abs(h.angle - want));
    if (std::abs(h.angle - want) <= 1e-6) ++matching;
  }
  return {matching >= 1, std::to_string(hs.size()) + " intersections, " + std::to_string(matching) +
                             " matching the eigenvector angle " + fmt(want) + ", max angle error " + fmt(worst)};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "elementary perturbation suite", 60, elementary_suite},
      {2, "composition of disjoint supports", 0, composition_suite},
      {3, "closing, eta = 0.5", 300, closing_suite},
      {4, "tiling suite", 120, tiling_suite},
      {5, "property (P) on synthetic pseudo-orbits", 600, property_p_suite},
      {6, "end-to-end connecting", 1800, connecting_suite},
      {7, "Lyapunov exponents", 0, lyapunov_suite},
      {8, "periodic classification", 0, classification_suite},
      {9, "chain transitivity", 300, chain_suite},
      {10, "pendulum conservativity", 0, pendulum_suite},
      {11, "homoclinic detection", 0, homoclinic_suite},
  };
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failed = 0;
  for (const auto& c : all) {
    if (only && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs > c.limit_s) {
      o.ok = false;
      o.detail += "; runtime over " + std::to_string(int(c.limit_s)) + " s";
    }
    std::printf("criterion %2d %s: %s (%s; %.1f s)\n", c.id, o.ok ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.ok ? 0 : 1;
  }
  return failed ? 1 : 0;
}
