// c1lab command-line front end. Every command writes its artifacts under --out and exits
// 0 when its postconditions hold, 1 when one fails, 2 on bad input.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "c1lab/closing.hpp"
#include "c1lab/io.hpp"

namespace fs = std::filesystem;
using namespace c1lab;

#ifndef C1LAB_FIXTURE_DIR
#define C1LAB_FIXTURE_DIR "fixtures"
#endif

namespace {

constexpr int kOk = 0, kFailed = 1, kBadInput = 2;

/// Postcondition failure: the artifacts are written, then the run exits 1.
struct Failure {
  std::string what;
};

// ---------------------------------------------------------------------------------------------
// Configuration

std::vector<double> parse_numbers(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ContractError(what + ": cannot parse '" + s + "' as numbers");
    }
  }
  return out;
}

/// "standard:0.5", "cat", "linear:2,1,1,1", "translation:0.25,0.1", "pendulum:c1,c2,...", "identity",
/// or a JSON object.
json map_from_string(const std::string& s) {
  if (!s.empty() && s.front() == '{') {
    try {
      return json::parse(s);
    } catch (const json::exception& e) {
      throw ContractError(std::string("--map: ") + e.what());
    }
  }
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : s.substr(colon + 1);
  const auto nums = rest.empty() ? std::vector<double>{} : parse_numbers(rest, "--map");
  if (kind == "cat") return map_to_json(LinearMapParams{{{{2, 1}, {1, 1}}}});
  if (kind == "identity") return map_to_json(LinearMapParams{});
  if (kind == "standard" && nums.size() == 1) return map_to_json(StandardMapParams{nums[0]});
  if (kind == "linear" && nums.size() == 4) {
    LinearMapParams p;
    for (int k = 0; k < 4; ++k) {
      if (nums[k] != std::floor(nums[k])) throw ContractError("--map: linear entries must be integers");
      p.matrix[k / 2][k % 2] = static_cast<long long>(nums[k]);
    }
    return map_to_json(p);
  }
  if (kind == "translation" && nums.size() == 2) return map_to_json(TranslationParams{{nums[0], nums[1]}});
  if (kind == "pendulum") {
    PendulumParams p;
    p.fourier_cos = nums;
    return map_to_json(p);
  }
  throw ContractError("--map: unrecognized map '" + s + "'");
}

/// Run configuration: map, seed, tolerance and command parameters. Values given on the command line
/// override the --config file.
class Config {
 public:
  json data;

  double num(const std::string& key, double fallback) const {
    const json* v = find(key);
    if (!v) return fallback;
    if (v->is_number()) return v->get<double>();
    if (v->is_string()) {
      const auto n = parse_numbers(v->get<std::string>(), key);
      if (n.size() == 1) return n[0];
    }
    throw ContractError(key + ": expected a number");
  }
  long long integer(const std::string& key, long long fallback) const {
    const double v = num(key, double(fallback));
    if (v != std::floor(v)) throw ContractError(key + ": expected an integer");
    return static_cast<long long>(v);
  }
  bool has(const std::string& key) const { return find(key) != nullptr; }
  std::string str(const std::string& key, const std::string& fallback) const {
    const json* v = find(key);
    return v ? (v->is_string() ? v->get<std::string>() : v->dump()) : fallback;
  }
  TorusPoint point(const std::string& key) const {
    const json* v = find(key);
    if (!v) throw ContractError("missing required parameter --" + key);
    std::vector<double> n;
    if (v->is_string()) n = parse_numbers(v->get<std::string>(), key);
    else if (v->is_array()) n = v->get<std::vector<double>>();
    if (n.size() != 2 || !std::isfinite(n[0]) || !std::isfinite(n[1])) throw ContractError(key + ": expected x,y");
    return {n[0], n[1]};
  }

 private:
  const json* find(const std::string& key) const {
    const auto& p = data.at("params");
    const auto it = p.find(key);
    return it == p.end() || it->is_null() ? nullptr : &*it;
  }
};

struct Run {
  std::string command;
  Config cfg;
  SurfaceMap f = identity_map();
  std::uint64_t seed{1};
  fs::path out;
  std::optional<double> tol;

  double tolerance(double fallback) const { return tol.value_or(fallback); }

  json artifact(const std::string& kind, json payload) const { return make_artifact(kind, cfg.data, std::move(payload)); }

  fs::path write_json(const std::string& name, const json& j) const {
    const fs::path p = out / name;
    std::ofstream os(p);
    os << j.dump(2) << '\n';
    if (!os) throw ContractError("cannot write '" + p.string() + "'");
    return p;
  }
  std::ofstream open(const std::string& name) const {
    std::ofstream os(out / name);
    if (!os) throw ContractError("cannot write '" + (out / name).string() + "'");
    os << "# config_hash " << config_hash(cfg.data) << '\n';
    return os;
  }
};

// ---------------------------------------------------------------------------------------------
// Commands

int cmd_orbit(const Run& r) {
  const TorusPoint x = r.cfg.point("at");
  const long long n = r.cfg.integer("n", 1000);
  if (n < 0) throw ContractError("n must be >= 0");
  std::vector<TorusPoint> pts{x};
  for (long long k = 0; k < n; ++k) pts.push_back(r.f.apply(pts.back()));
  auto os = r.open("orbit.csv");
  write_points_csv(os, pts);
  r.write_json("orbit.json", r.artifact("orbit", {{"start", x}, {"n", n}, {"end", pts.back()}}));
  std::printf("orbit: %lld steps, end %s,%s\n", n, format_double(pts.back().x).c_str(), format_double(pts.back().y).c_str());
  return kOk;
}

int cmd_portrait(const Run& r) {
  const long long seeds = r.cfg.integer("seeds", 64), n = r.cfg.integer("n", 500);
  const double vmax = r.cfg.num("vmax", 3.0);
  if (seeds < 1 || n < 0) throw ContractError("portrait: seeds >= 1 and n >= 0 required");
  std::mt19937_64 rng(r.seed);
  std::uniform_real_distribution<double> u(0, 1), v(-vmax, vmax);
  const bool cyl = r.f.surface() == Surface::cylinder;
  auto os = r.open("portrait.csv");
  os << "orbit,step,x,y\n";
  long long written = 0;
  for (long long s = 0; s < seeds; ++s) {
    const double x0 = u(rng), y0 = cyl ? v(rng) : u(rng);
    TorusPoint z{x0, y0};
    for (long long k = 0; k <= n; ++k) {
      if (k > 0) z = r.f.apply(z);
      if (cyl && std::abs(z.y) > vmax) continue;  // clipped for plotting
      os << s << ',' << k << ',' << format_double(z.x) << ',' << format_double(z.y) << '\n';
      ++written;
    }
  }
  std::printf("portrait: %lld orbits, %lld points\n", seeds, written);
  return kOk;
}

PeriodicSearchResult search(const Run& r, int tau) {
  if (tau < 1) throw ContractError("tau must be >= 1");
  PeriodicSearchOptions o;
  o.seeds_per_axis = static_cast<int>(r.cfg.integer("grid", o.seeds_per_axis));
  return find_periodic(r.f, tau, o);
}

json orbit_record(const PeriodicOrbit& o) {
  json j = periodic_orbit_to_json(o);
  j["type"] = to_string(classify(o).tag);
  return j;
}

int cmd_periodic(const Run& r) {
  const int tau = static_cast<int>(r.cfg.integer("tau", 1));
  const auto res = search(r, tau);
  const double tol = r.tolerance(1e-9);
  json orbits = json::array();
  auto os = r.open("periodic.csv");
  os << "orbit,index,x,y\n";
  std::string bad;
  for (std::size_t k = 0; k < res.orbits.size(); ++k) {
    const auto& o = res.orbits[k];
    orbits.push_back(orbit_record(o));
    for (std::size_t i = 0; i < o.points.size(); ++i)
      os << k << ',' << i << ',' << format_double(o.points[i].x) << ',' << format_double(o.points[i].y) << '\n';
    const double replay = r.f.distance(r.f.iterate(o.points[0], o.period), o.points[0]);
    if (!(replay <= tol) && bad.empty()) bad = "orbit " + std::to_string(k) + " replays with residual " + format_double(replay);
  }
  r.write_json("periodic.json", r.artifact("periodic", {{"tau", tau}, {"orbits", orbits}, {"non_isolated", res.non_isolated}}));
  std::printf("periodic: %zu orbits of period dividing %d%s\n", res.orbits.size(), tau, res.non_isolated ? " (non-isolated roots seen)" : "");
  if (!bad.empty()) throw Failure{bad};
  return kOk;
}

int cmd_classify(const Run& r) {
  const int tau = static_cast<int>(r.cfg.integer("tau", 1));
  const auto res = search(r, tau);
  std::vector<const PeriodicOrbit*> chosen;
  if (r.cfg.has("at")) {
    const TorusPoint q = r.cfg.point("at");
    for (const auto& o : res.orbits)
      for (const auto& p : o.points)
        if (r.f.distance(p, q) <= r.cfg.num("radius", 1e-6)) {
          chosen.push_back(&o);
          break;
        }
    if (chosen.empty()) throw Failure{"no periodic orbit of period dividing " + std::to_string(tau) + " passes through --at"};
  } else {
    for (const auto& o : res.orbits) chosen.push_back(&o);
  }
  json records = json::array();
  std::string bad;
  for (const auto* o : chosen) {
    const auto c = classify(*o);
    // the trace must not depend on which orbit point the monodromy starts from
    double spread = 0;
    for (const auto& p : o->points) spread = std::max(spread, std::abs(r.f.tangent_iterate(p, o->period).trace() - c.trace));
    const double tol = r.tolerance(1e-8) * std::max(1.0, std::abs(c.trace));
    if (!(spread <= tol) && bad.empty()) bad = "trace varies by " + format_double(spread) + " around an orbit";
    json j = orbit_record(*o);
    j["eigenvalues"] = json::array({json::array({c.eigenvalues[0].real(), c.eigenvalues[0].imag()}),
                                    json::array({c.eigenvalues[1].real(), c.eigenvalues[1].imag()})});
    j["trace_spread"] = spread;
    records.push_back(j);
    std::printf("%s period %d at %s,%s trace %s\n", to_string(c.tag), o->period, format_double(o->points[0].x).c_str(),
                format_double(o->points[0].y).c_str(), format_double(c.trace).c_str());
  }
  r.write_json("classify.json", r.artifact("classification", {{"tau", tau}, {"orbits", records}}));
  if (!bad.empty()) throw Failure{bad};
  return kOk;
}

int cmd_lyapunov(const Run& r) {
  const long long n = r.cfg.integer("n", 10000);
  std::vector<TorusPoint> xs;
  if (r.cfg.has("at")) {
    xs.push_back(r.cfg.point("at"));
  } else {
    std::mt19937_64 rng(r.seed);
    std::uniform_real_distribution<double> u(0, 1);
    for (long long k = r.cfg.integer("points", 1); k > 0; --k) xs.push_back({u(rng), u(rng)});
  }
  json recs = json::array();
  for (const auto& x : xs) {
    const double l = lyapunov_upper(r.f, x, n);
    if (!std::isfinite(l)) throw Failure{"non-finite exponent"};
    recs.push_back({{"point", x}, {"exponent", l}});
    std::printf("%s\n", format_double(l).c_str());
  }
  r.write_json("lyapunov.json", r.artifact("lyapunov", {{"n", n}, {"records", recs}}));
  return kOk;
}

TransitionGraph graph(const Run& r, double* eps) {
  const int m = static_cast<int>(r.cfg.integer("m", 256));
  *eps = r.cfg.num("eps", m > 0 ? 4.0 / m : 0.0);
  return build_graph(r.f, m, *eps, static_cast<int>(r.cfg.integer("samples", 4)), r.seed);
}

int cmd_chain_classes(const Run& r) {
  double eps = 0;
  const auto g = graph(r, &eps);
  const auto cc = chain_classes(g);
  auto os = r.open("classes.csv");
  os << "cell,i,j,class\n";
  for (int c = 0; c < g.cell_count(); ++c) os << c << ',' << c / g.m << ',' << c % g.m << ',' << cc.class_of[c] << '\n';
  long long covered = 0;
  for (const int s : cc.sizes) covered += s;
  r.write_json("chain_classes.json", r.artifact("chain_classes", {{"m", g.m}, {"epsilon", eps}, {"edges", g.edge_count()},
                                                                  {"count", cc.count}, {"sizes", cc.sizes}}));
  std::printf("chain-classes: %d class(es) over %d cells\n", cc.count, g.cell_count());
  if (covered != g.cell_count()) throw Failure{"class sizes do not cover the grid"};
  return kOk;
}

int cmd_pseudo_orbit(const Run& r) {
  double eps = 0;
  const auto g = graph(r, &eps);
  const TorusPoint p = r.cfg.point("from"), q = r.cfg.point("to");
  const auto po = realize_pseudo_orbit(r.f, p, q, eps, g);
  auto os = r.open("pseudo_orbit.csv");
  write_pseudo_orbit_csv(os, po);
  r.write_json("pseudo_orbit.json", r.artifact("pseudo_orbit", {{"map", map_to_json(r.f)}, {"pseudo_orbit", pseudo_orbit_to_json(po)}}));
  const auto chk = check_pseudo_orbit(r.f, po);
  std::printf("pseudo-orbit: %zu points, %zu jumps, max residual %s\n", po.points.size(), po.jumps.size(),
              format_double(chk.max_residual).c_str());
  if (!chk.ok) throw Failure{chk.message};
  return kOk;
}

json bump_report(const BumpPerturbation& b) {
  json j = bump_to_json(b);
  j["c0"] = c0_size(Bump{b});
  j["c1"] = c1_size(Bump{b});
  return j;
}

int cmd_close(const Run& r) {
  const TorusPoint p = r.cfg.point("at");
  const Ball ball{r.cfg.has("center") ? r.cfg.point("center") : p, r.cfg.num("radius", 0.05)};
  const double eta = r.cfg.num("eta", 0.5);
  ClosingOptions o;
  o.max_iter = r.cfg.integer("max-iter", o.max_iter);
  o.conjugate = r.cfg.integer("conjugate", 0) != 0;
  const auto res = close_orbit(r.f, p, ball, eta, o);
  const auto& ri = res.cloud.returns[res.pair.i];
  const auto& rj = res.cloud.returns[res.pair.j];
  const bool claim = verify_claim(res.cloud, res.pair.i, res.pair.j, eta);
  json rep{{"map", map_to_json(r.f)},
           {"source", p},
           {"ball", {{"center", ball.center}, {"radius", ball.radius}}},
           {"eta", eta},
           {"pair", {{"i", ri.iterate}, {"j", rj.iterate}, {"ratio", res.pair.ratio}}},
           {"claim_verified", claim},
           {"period", res.period},
           {"periodic_point", ri.point},
           {"scanned", res.scanned},
           {"bump", bump_report(res.bump)},
           {"perturbation", perturbation_to_json(res.map)},
           {"residual", res.periodic_residual}};
  if (res.conjugator) rep["conjugator"] = bump_report(*res.conjugator);
  r.write_json("close.json", r.artifact("closing", rep));
  std::printf("close: pair (%lld, %lld) ratio %s, period %lld, residual %s\n", ri.iterate, rj.iterate,
              format_double(res.pair.ratio).c_str(), res.period, format_double(res.periodic_residual).c_str());
  if (!claim) throw Failure{"claim does not hold for the selected pair"};
  if (!(res.periodic_residual <= r.tolerance(1e-6))) throw Failure{"periodic residual above tolerance"};
  return kOk;
}

int cmd_connect(const Run& r) {
  const TorusPoint p = r.cfg.point("from"), q = r.cfg.point("to");
  const double eps = r.cfg.num("eps", 0.02);
  ConnectOptions o;
  o.N = static_cast<int>(r.cfg.integer("N", o.N));
  o.graph_cells = static_cast<int>(r.cfg.integer("m", o.graph_cells));
  o.graph_samples = static_cast<int>(r.cfg.integer("samples", o.graph_samples));
  o.seed = r.seed;
  const double tol = r.tolerance(1e-5);
  json audit{{"from", p}, {"to", q}, {"epsilon", eps}, {"N", o.N}};
  std::optional<ConnectResult> found;
  try {
    found = connect_pseudo_orbit(r.f, p, q, eps, o);
  } catch (const StageError& e) {
    audit["ok"] = false;
    audit["stage"] = e.stage();
    audit["error"] = e.what();
    r.write_json("audit.json", r.artifact("connect_audit", audit));
    throw Failure{e.what()};
  }
  const ConnectResult& res = *found;
  r.write_json("plan.json", r.artifact("plan", plan_to_json(res.plan)));
  const fs::path pert = r.write_json("perturbation.json", r.artifact("connection", {{"perturbation", perturbation_to_json(res.g)},
                                                                                     {"p", p},
                                                                                     {"q", q},
                                                                                     {"n", res.n},
                                                                                     {"residual", res.residual},
                                                                                     {"c0", res.c0}}));
  std::vector<TorusPoint> orbit{p};
  const auto g = res.g.as_map();
  for (long long k = 0; k < res.n; ++k) orbit.push_back(g.apply(orbit.back()));
  {
    auto os = r.open("orbit.csv");
    write_points_csv(os, orbit);
  }
  // independent checks: replay from the file just written, domain disjointness, support audit
  const auto replay = replay_connection(read_json_file(pert.string()), 2 * res.residual + 1e-15);
  const auto dom = audit_domain(r.f, res.plan.domain);
  const auto sup = audit_support(r.f, res.g, res.plan.domain, 10000, r.seed);
  audit["n"] = res.n;
  audit["residual"] = res.residual;
  audit["replay"] = {{"ok", replay.ok}, {"residual", replay.residual}, {"message", replay.message}};
  audit["domain"] = {{"ok", dom.ok}, {"message", dom.message}};
  audit["support"] = {{"samples", sup.samples}, {"outside", sup.outside}, {"violations", sup.violations}};
  audit["bumps"] = res.g.bumps().size();
  audit["c0"] = res.c0;
  const bool ok = replay.ok && dom.ok && sup.violations == 0 && res.residual <= tol;
  audit["ok"] = ok;
  r.write_json("audit.json", r.artifact("connect_audit", audit));
  std::printf("connect: n = %lld, residual %s, %zu bumps, replay %s\n", res.n, format_double(res.residual).c_str(),
              res.g.bumps().size(), replay.ok ? "ok" : "FAILED");
  if (!ok) throw Failure{"connection audit failed (see audit.json)"};
  return kOk;
}

OpenSet parse_rects(const std::string& s) {
  OpenSet U;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ';')) {
    const auto n = parse_numbers(tok, "rects");
    if (n.size() != 4) throw ContractError("rects: expected x0,y0,x1,y1 per rectangle");
    U.rects.push_back({n[0], n[1], n[2], n[3]});
  }
  if (U.rects.empty()) throw ContractError("tile: --rects is required");
  return U;
}

int cmd_tile(const Run& r) {
  const auto t = tile_open_set(parse_rects(r.cfg.str("rects", "")), static_cast<int>(r.cfg.integer("nmin", 2)),
                               static_cast<int>(r.cfg.integer("nmax", 8)));
  std::size_t worst = 0;
  for (const auto& x : t.tiles) worst = std::max(worst, adjacency(t, x).size());
  auto os = r.open("squares.csv");
  os << "level,i,j,x0,y0,side\n";
  for (const auto& x : t.tiles)
    os << x.level << ',' << x.i << ',' << x.j << ',' << format_double(x.x0()) << ',' << format_double(x.y0()) << ','
       << format_double(x.side()) << '\n';
  json j = tiling_to_json(t);
  j["max_adjacency"] = worst;
  j["collar_width"] = t.collar_width();
  r.write_json("tiling.json", r.artifact("tiling", j));
  std::printf("tile: %zu tiles, max adjacency %zu\n", t.tiles.size(), worst);
  if (worst > 12) throw Failure{"a tile has more than 12 neighbours"};
  return kOk;
}

int cmd_manifolds(const Run& r) {
  const int tau = static_cast<int>(r.cfg.integer("tau", 1));
  const double len = r.cfg.num("len", 3.0), refine = r.cfg.num("refine", 1e-3);
  const auto res = search(r, tau);
  auto os = r.open("manifolds.csv");
  os << "orbit,branch,index,x,y\n";
  json recs = json::array();
  int saddles = 0;
  for (std::size_t k = 0; k < res.orbits.size(); ++k) {
    const auto& o = res.orbits[k];
    if (classify(o).tag != OrbitType::saddle) continue;
    ++saddles;
    const auto wu = grow_manifold(r.f, o, false, len, refine);
    const auto ws = grow_manifold(r.f, o, true, len, refine);
    for (const auto* arc : {&wu, &ws})
      for (std::size_t i = 0; i < arc->points.size(); ++i)
        os << k << ',' << (arc->stable ? "stable" : "unstable") << ',' << i << ',' << format_double(arc->points[i].x) << ','
           << format_double(arc->points[i].y) << '\n';
    json hs = json::array();
    for (const auto& h : homoclinic_points(r.f, o, ws, wu)) hs.push_back({{"point", h.point}, {"angle", h.angle}});
    recs.push_back({{"orbit", orbit_record(o)}, {"unstable_points", wu.points.size()}, {"stable_points", ws.points.size()},
                    {"homoclinic", hs}});
    std::printf("manifolds: saddle %zu, %zu homoclinic points\n", k, hs.size());
  }
  r.write_json("manifolds.json", r.artifact("manifolds", {{"tau", tau}, {"length", len}, {"saddles", recs}}));
  if (saddles == 0) std::printf("manifolds: no saddle of period dividing %d\n", tau);
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// verify

struct Check {
  bool ok{false};
  std::string message;
};

/// Re-verifies one serialized artifact from scratch.
Check verify_artifact(const json& a) {
  const auto kind = a.value("kind", std::string{});
  if (a.contains("config") && a.value("config_hash", std::string{}) != config_hash(a.at("config")))
    return {false, "config hash does not match the embedded config"};
  if (kind == "connection") {
    const auto c = replay_connection(a, 2 * a.value("residual", 0.0) + 1e-15);
    return {c.ok, c.message};
  }
  if (kind == "closing") {
    const auto g = perturbation_from_json(a.at("perturbation")).as_map();
    const auto z = a.at("periodic_point").get<TorusPoint>();
    const double res = g.distance(g.iterate(z, a.at("period").get<long long>()), z);
    const double stored = a.at("residual").get<double>();
    return {res <= 2 * stored + 1e-15, "periodic residual " + format_double(res)};
  }
  if (kind == "pseudo_orbit") {
    const auto f = make_map(map_from_json(a.at("map")));
    const auto po = pseudo_orbit_from_json(f, a.at("pseudo_orbit"));
    const auto c = check_pseudo_orbit(f, po);
    return {c.ok, c.message};
  }
  if (kind == "tiling") {
    const auto t = tiling_from_json(a);
    for (const auto& x : t.tiles)
      if (adjacency(t, x).size() > 12) return {false, "adjacency above 12"};
    return {true, ""};
  }
  if (kind == "periodic") {
    const auto f = make_map(map_from_json(a.at("config").at("map")));
    for (const auto& o : a.at("orbits")) {
      const auto pts = o.at("points").get<std::vector<TorusPoint>>();
      const int period = o.at("period").get<int>();
      if (f.distance(f.iterate(pts.at(0), period), pts.at(0)) > 1e-8) return {false, "orbit no longer closes"};
      if (std::abs(f.tangent_iterate(pts.at(0), period).trace() - o.at("trace").get<double>()) > 1e-8)
        return {false, "monodromy trace changed"};
    }
    return {true, ""};
  }
  return {false, "unknown artifact kind '" + kind + "'"};
}

/// Quick replays of the invariant suites, independent of any artifact.
std::vector<std::pair<std::string, Check>> builtin_checks() {
  std::vector<std::pair<std::string, Check>> out;
  {
    const auto f = standard_map({0.5});
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.2, 0.8), d(-0.02, 0.02);
    double worst = 0;
    for (int k = 0; k < 20; ++k) {
      const Vec2 x{u(rng), u(rng)}, y{x.x + d(rng), x.y + d(rng)};
      const auto b = elementary_perturbation(x, y, 1.0);
      worst = std::max(worst, norm(torus_delta(apply_bump(Bump{b}, x, Surface::torus), y)));
    }
    out.push_back({"elementary perturbation pins x onto y", {worst <= 1e-10, "max miss " + format_double(worst)}});
  }
  {
    const auto f = linear_automorphism({{{{2, 1}, {1, 1}}}});
    const double l = lyapunov_upper(f, {0.3, 0.7}, 10000), exact = std::log((3 + std::sqrt(5.0)) / 2);
    out.push_back({"cat map Lyapunov exponent", {std::abs(l - exact) <= 1e-3, format_double(l)}});
  }
  {
    const auto f = standard_map({0.1});
    const double tr = f.tangent({0, 0}).trace(), want = 2 + 2 * std::numbers::pi * 0.1;
    out.push_back({"standard map fixed point trace", {std::abs(tr - want) <= 1e-9, format_double(tr)}});
  }
  {
    const auto t = tile_open_set(OpenSet{{{0.1, 0.1, 0.6, 0.3}, {0.4, 0.2, 0.7, 0.8}}}, 2, 8);
    std::size_t worst = 0;
    for (const auto& x : t.tiles) worst = std::max(worst, adjacency(t, x).size());
    out.push_back({"tiling adjacency bound", {worst <= 12, std::to_string(worst)}});
  }
  return out;
}

int cmd_verify(const Run& r) {
  std::vector<fs::path> files;
  if (r.cfg.has("artifact")) {
    files.push_back(r.cfg.str("artifact", ""));
  } else {
    const fs::path dir = r.cfg.str("corpus", C1LAB_FIXTURE_DIR);
    if (!fs::is_directory(dir)) throw ContractError("verify: corpus directory '" + dir.string() + "' not found");
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  }
  int failed = 0;
  json results = json::array();
  auto report = [&](const std::string& name, const Check& c) {
    std::printf("%s %s%s%s\n", c.ok ? "PASS" : "FAIL", name.c_str(), c.message.empty() ? "" : ": ", c.message.c_str());
    results.push_back({{"name", name}, {"ok", c.ok}, {"message", c.message}});
    failed += c.ok ? 0 : 1;
  };
  if (!r.cfg.has("artifact"))
    for (const auto& [name, c] : builtin_checks()) report(name, c);
  for (const auto& p : files) {
    Check c;
    try {
      c = verify_artifact(read_json_file(p.string()));
    } catch (const std::exception& e) {
      c = {false, e.what()};
    }
    report(p.filename().string(), c);
  }
  r.write_json("verify.json", r.artifact("verify", {{"results", results}, {"failed", failed}}));
  if (failed) throw Failure{std::to_string(failed) + " check(s) failed"};
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"c1lab: experiments with C1 perturbations of surface maps"};
  app.require_subcommand(1, 1);
  std::string config_file, map_arg, out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  app.add_option("--config", config_file, "JSON run configuration");
  app.add_option("--map", map_arg, "map, e.g. standard:0.5, cat, linear:2,1,1,1, translation:a,b, pendulum:c1,...");
  app.add_option("--seed", seed, "seed for every stochastic stage");
  app.add_option("--out", out_dir, "artifact directory");
  app.add_option("--tol", tol, "override the command's postcondition tolerance");

  struct Param {
    std::string name;
    std::string value;
    CLI::Option* opt{nullptr};
  };
  std::map<std::string, std::vector<Param>> params;
  auto sub = [&](const std::string& name, const std::string& help,
                 std::vector<std::pair<std::string, std::string>> opts) {
    auto* s = app.add_subcommand(name, help);
    auto& ps = params[name];
    ps.reserve(opts.size());
    for (auto& [o, h] : opts) ps.push_back({o, "", nullptr});
    for (std::size_t k = 0; k < opts.size(); ++k) ps[k].opt = s->add_option("--" + opts[k].first, ps[k].value, opts[k].second);
  };
  sub("orbit", "iterate one point", {{"at", "x,y"}, {"n", "steps"}});
  sub("portrait", "phase portrait from random seeds", {{"seeds", "number of orbits"}, {"n", "steps per orbit"}, {"vmax", "cylinder clip"}});
  sub("periodic", "periodic orbits of period dividing tau", {{"tau", "period"}, {"grid", "Newton seeds per axis"}});
  sub("classify", "elliptic / saddle classification", {{"tau", "period"}, {"at", "x,y on the orbit"}, {"radius", "match radius"}, {"grid", "Newton seeds per axis"}});
  sub("lyapunov", "upper Lyapunov exponent", {{"n", "steps"}, {"at", "x,y"}, {"points", "random points if --at is absent"}});
  sub("chain-classes", "chain classes of the grid transition graph", {{"m", "cells per axis"}, {"eps", "epsilon"}, {"samples", "samples per cell"}});
  sub("pseudo-orbit", "epsilon-pseudo-orbit between two points", {{"from", "x,y"}, {"to", "x,y"}, {"m", "cells per axis"}, {"eps", "epsilon"}, {"samples", "samples per cell"}});
  sub("close", "close a recurrent orbit with one perturbation", {{"at", "x,y"}, {"center", "ball center"}, {"radius", "ball radius"}, {"eta", "eta"}, {"max-iter", "iterates"}, {"conjugate", "0 or 1"}});
  sub("connect", "perturb so that the orbit of p hits q", {{"from", "x,y"}, {"to", "x,y"}, {"eps", "epsilon"}, {"N", "horizon"}, {"m", "fallback grid"}, {"samples", "fallback samples"}});
  sub("tile", "dyadic tiling of a rectangle union", {{"rects", "x0,y0,x1,y1;..."}, {"nmin", "coarsest level"}, {"nmax", "finest level"}});
  sub("manifolds", "invariant manifolds and homoclinic points", {{"tau", "saddle period"}, {"len", "arclength"}, {"refine", "refinement distance"}, {"grid", "Newton seeds per axis"}});
  sub("verify", "re-verify artifacts and replay the invariant checks", {{"artifact", "one artifact file"}, {"corpus", "directory of artifacts"}});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  Run run;
  try {
    json file = json::object();
    if (!config_file.empty()) file = read_json_file(config_file);
    run.command = app.get_subcommands().front()->get_name();
    json cfg{{"command", run.command}};
    cfg["map"] = !map_arg.empty() ? map_from_string(map_arg) : file.value("map", map_to_json(StandardMapParams{0.5}));
    cfg["seed"] = seed ? *seed : file.value("seed", std::uint64_t{1});
    if (tol) cfg["tol"] = *tol;
    else if (file.contains("tol")) cfg["tol"] = file["tol"];
    json p = file.value("params", json::object());
    for (const auto& prm : params[run.command])
      if (prm.opt->count() > 0) p[prm.name] = prm.value;
    cfg["params"] = p;
    run.cfg.data = cfg;
    run.f = make_map(map_from_json(cfg["map"]));
    run.seed = cfg["seed"].get<std::uint64_t>();
    if (cfg.contains("tol")) run.tol = cfg["tol"].get<double>();
    run.out = out_dir;
    fs::create_directories(run.out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  }

  static const std::map<std::string, int (*)(const Run&)> commands{
      {"orbit", cmd_orbit},       {"portrait", cmd_portrait},          {"periodic", cmd_periodic},
      {"classify", cmd_classify}, {"lyapunov", cmd_lyapunov},          {"chain-classes", cmd_chain_classes},
      {"pseudo-orbit", cmd_pseudo_orbit}, {"close", cmd_close},        {"connect", cmd_connect},
      {"tile", cmd_tile},         {"manifolds", cmd_manifolds},        {"verify", cmd_verify}};
  try {
    return commands.at(run.command)(run);
  } catch (const Failure& e) {
    std::fprintf(stderr, "postcondition failed: %s\n", e.what.c_str());
    return kFailed;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  } catch (const StageError& e) {
    std::fprintf(stderr, "failed at %s\n", e.what());
    return kFailed;
  }
}
