#pragma once

// JSON artifacts (maps, perturbations, tilings, pseudo-orbits, plans), CSV point streams and the
// re-verification of serialized perturbations.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "c1lab/analysis.hpp"
#include "c1lab/chains.hpp"
#include "c1lab/connect.hpp"
#include "c1lab/geometry.hpp"
#include "c1lab/maps.hpp"
#include "c1lab/perturb.hpp"
#include "c1lab/tiling.hpp"

namespace c1lab {

using json = nlohmann::json;

// nlohmann writes doubles in the shortest form that parses back to the same bits.

inline void to_json(json& j, const Vec2& v) { j = json::array({v.x, v.y}); }
inline void from_json(const json& j, Vec2& v) { v = {j.at(0).get<double>(), j.at(1).get<double>()}; }
inline void to_json(json& j, const TorusPoint& p) { j = json::array({p.x, p.y}); }
inline void from_json(const json& j, TorusPoint& p) { p = {j.at(0).get<double>(), j.at(1).get<double>()}; }
inline void to_json(json& j, const Mat2& m) { j = json::array({json::array({m.a, m.b}), json::array({m.c, m.d})}); }
inline void from_json(const json& j, Mat2& m) {
  m = {j.at(0).at(0).get<double>(), j.at(0).at(1).get<double>(), j.at(1).at(0).get<double>(), j.at(1).at(1).get<double>()};
}
inline void to_json(json& j, const Rect& r) { j = json::array({r.x0, r.y0, r.x1, r.y1}); }
inline void from_json(const json& j, Rect& r) {
  r = {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

// ---------------------------------------------------------------------------------------------
// Maps

inline json map_to_json(const MapSpec& spec) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, StandardMapParams>) return {{"kind", "standard"}, {"a", p.a}};
        else if constexpr (std::is_same_v<T, LinearMapParams>) return {{"kind", "linear"}, {"matrix", p.matrix}};
        else if constexpr (std::is_same_v<T, TranslationParams>) return {{"kind", "translation"}, {"shift", p.shift}};
        else
          return {{"kind", "pendulum"}, {"fourier_cos", p.fourier_cos}, {"fourier_sin", p.fourier_sin},
                  {"period", p.period}, {"steps", p.steps}};
      },
      spec);
}

/// Map spec from JSON; malformed input raises ContractError naming the field.
inline MapSpec map_from_json(const json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "standard") return StandardMapParams{j.at("a").get<double>()};
    if (kind == "linear") {
      LinearMapParams p;
      p.matrix = j.at("matrix").get<std::array<std::array<long long, 2>, 2>>();
      return p;
    }
    if (kind == "translation") return TranslationParams{j.at("shift").get<Vec2>()};
    if (kind == "pendulum") {
      PendulumParams p;
      p.fourier_cos = j.value("fourier_cos", std::vector<double>{});
      p.fourier_sin = j.value("fourier_sin", std::vector<double>{});
      p.period = j.value("period", 1.0);
      p.steps = j.value("steps", 64);
      return p;
    }
    throw ContractError("map: unknown kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw ContractError(std::string("map: ") + e.what());
  }
}

inline json map_to_json(const SurfaceMap& f) {
  if (!f.spec()) throw ContractError("map '" + f.name() + "' has no serializable spec");
  return map_to_json(*f.spec());
}

// ---------------------------------------------------------------------------------------------
// Perturbations

inline json bump_to_json(const Bump& b) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        json j{{"center", x.center}, {"radius", x.radius}, {"plateau_radius", x.plateau_radius}, {"flow_steps", x.flow_steps}};
        if constexpr (std::is_same_v<T, BumpPerturbation>) {
          j["kind"] = "translation";
          j["displacement"] = x.displacement;
          if (x.pin_source) j["pin"] = json::array({*x.pin_source, *x.pin_target});
        } else {
          j["kind"] = "quadratic";
          j["generator"] = x.generator;
        }
        return j;
      },
      b);
}

inline Bump bump_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "translation") {
    BumpPerturbation b;
    b.center = j.at("center").get<Vec2>();
    b.radius = j.at("radius").get<double>();
    b.plateau_radius = j.at("plateau_radius").get<double>();
    b.flow_steps = j.at("flow_steps").get<int>();
    b.displacement = j.at("displacement").get<Vec2>();
    if (j.contains("pin")) {
      b.pin_source = j.at("pin").at(0).get<TorusPoint>();
      b.pin_target = j.at("pin").at(1).get<TorusPoint>();
    }
    return b;
  }
  if (kind == "quadratic") {
    QuadraticBump b;
    b.center = j.at("center").get<Vec2>();
    b.radius = j.at("radius").get<double>();
    b.plateau_radius = j.at("plateau_radius").get<double>();
    b.flow_steps = j.at("flow_steps").get<int>();
    b.generator = j.at("generator").get<Mat2>();
    return b;
  }
  throw ContractError("bump: unknown kind '" + kind + "'");
}

inline json perturbation_to_json(const CompositePerturbation& g) {
  json bumps = json::array();
  for (const auto& pb : g.bumps()) {
    json b = bump_to_json(pb.bump);
    b["iterate"] = pb.iterate;
    if (pb.group >= 0) b["group"] = pb.group;
    bumps.push_back(std::move(b));
  }
  return {{"map", map_to_json(g.base())}, {"bumps", std::move(bumps)}};
}

/// Rebuilds g from its artifact. The supports are re-audited (relay legs excepted).
inline CompositePerturbation perturbation_from_json(const json& j) {
  const SurfaceMap f = make_map(map_from_json(j.at("map")));
  std::vector<PlacedBump> bumps;
  for (const auto& b : j.at("bumps")) bumps.push_back({b.value("iterate", 0), bump_from_json(b), b.value("group", -1)});
  return compose_disjoint(f, std::move(bumps));
}

// ---------------------------------------------------------------------------------------------
// Tilings, pseudo-orbits, plans

inline json tiling_to_json(const TiledDomain& t) {
  json rects = json::array();
  for (const auto& r : t.region.rects) rects.push_back(r);
  json tiles = json::array();
  for (const auto& x : t.tiles) tiles.push_back(json::array({x.level, x.i, x.j}));
  return {{"region", std::move(rects)},
          {"n_min", t.n_min},
          {"n_max", t.n_max},
          {"ratios", {{"jump", t.jump_enlarge}, {"t2", t.t2_enlarge}, {"support", t.support_enlarge}}},
          {"tiles", std::move(tiles)}};
}

/// Re-tiles the region and checks the stored tiles agree.
inline TiledDomain tiling_from_json(const json& j) {
  OpenSet U;
  for (const auto& r : j.at("region")) U.rects.push_back(r.get<Rect>());
  auto t = tile_open_set(U, j.at("n_min").get<int>(), j.at("n_max").get<int>());
  if (j.contains("tiles")) {
    std::vector<Tile> stored;
    for (const auto& x : j.at("tiles")) stored.push_back({x.at(0).get<int>(), x.at(1).get<std::int64_t>(), x.at(2).get<std::int64_t>()});
    if (stored != t.tiles) throw ContractError("tiling: stored tiles differ from the re-tiled region");
  }
  return t;
}

inline json pseudo_orbit_to_json(const PseudoOrbit& po) {
  return {{"epsilon", po.epsilon}, {"points", po.points}, {"jumps", po.jumps}};
}

/// Points and epsilon are authoritative; the jump list is recomputed and checked against f.
inline PseudoOrbit pseudo_orbit_from_json(const SurfaceMap& f, const json& j) {
  auto po = make_pseudo_orbit(f, j.at("points").get<std::vector<TorusPoint>>(), j.at("epsilon").get<double>());
  if (j.contains("jumps") && j.at("jumps").get<std::vector<std::size_t>>() != po.jumps)
    throw ContractError("pseudo-orbit: stored jumps differ from the recomputed ones");
  return po;
}

inline json domain_to_json(const PerturbationDomain& d) {
  json pieces = json::array();
  for (const auto& p : d.pieces) pieces.push_back({{"base", p.base}, {"tiling", tiling_to_json(p.tiling)}});
  return {{"N", d.N}, {"pieces", std::move(pieces)}};
}

inline PerturbationDomain domain_from_json(const SurfaceMap& f, const json& j) {
  std::vector<DomainPiece> pieces;
  for (const auto& p : j.at("pieces")) pieces.push_back({p.at("base").get<TorusPoint>(), tiling_from_json(p.at("tiling"))});
  return make_domain(f, std::move(pieces), j.at("N").get<int>());
}

inline json plan_to_json(const ConnectingPlan& plan, bool with_pseudo_orbit = true) {
  json paths = json::array();
  for (const auto& p : plan.paths.paths) paths.push_back(p);
  json sigma = json::array();
  for (const auto& s : plan.sigma) sigma.push_back({{"point", s.point}, {"period", s.period}});
  json j{{"waypoints", plan.paths.waypoints},
         {"lengths", plan.paths.lengths},
         {"paths", std::move(paths)},
         {"domain", domain_to_json(plan.domain)},
         {"sigma_rejections", std::move(sigma)},
         {"sigma_exhaustive_up_to", plan.sigma_exhaustive_up_to},
         {"rejected_sites", {{"tiling", plan.rejected_tiling}, {"periodic", plan.rejected_sigma}, {"audit", plan.rejected_audit}}},
         {"coarse_targets", plan.coarse},
         {"end_residual", plan.end_residual}};
  if (with_pseudo_orbit) j["pseudo_orbit"] = pseudo_orbit_to_json(plan.pseudo);
  return j;
}

inline json periodic_orbit_to_json(const PeriodicOrbit& o) {
  return {{"period", o.period}, {"points", o.points}, {"monodromy", o.monodromy},
          {"trace", o.monodromy.trace()}, {"residual", o.residual}, {"degenerate", o.degenerate}};
}

// ---------------------------------------------------------------------------------------------
// Hashing, CSV

/// FNV-1a of the canonical dump; embedded in artifacts to tie them to their configuration.
inline std::string config_hash(const json& config) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : config.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// "step,x,y" rows with 17 significant digits.
inline void write_points_csv(std::ostream& os, const std::vector<TorusPoint>& pts) {
  os << "step,x,y\n";
  for (std::size_t k = 0; k < pts.size(); ++k) os << k << ',' << format_double(pts[k].x) << ',' << format_double(pts[k].y) << '\n';
}

/// "step,x,y,jump" rows; jump is 1 where d(f(z_k), z_{k+1}) exceeds the jump threshold.
inline void write_pseudo_orbit_csv(std::ostream& os, const PseudoOrbit& po) {
  os << "step,x,y,jump\n";
  std::size_t next = 0;
  for (std::size_t k = 0; k < po.points.size(); ++k) {
    const bool jump = next < po.jumps.size() && po.jumps[next] == k;
    if (jump) ++next;
    os << k << ',' << format_double(po.points[k].x) << ',' << format_double(po.points[k].y) << ',' << (jump ? 1 : 0) << '\n';
  }
}

inline std::vector<TorusPoint> read_points_csv(std::istream& is) {
  std::vector<TorusPoint> out;
  std::string line;
  while (std::getline(is, line) && !line.empty() && line[0] == '#') {
  }
  if (line != "step,x,y") throw ContractError("csv: expected header 'step,x,y'");
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string k, x, y;
    if (!std::getline(ls, k, ',') || !std::getline(ls, x, ',') || !std::getline(ls, y))
      throw ContractError("csv: malformed row '" + line + "'");
    out.push_back({std::stod(x), std::stod(y)});
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Re-verification

struct ReplayCheck {
  bool ok{false};
  double residual{0};
  std::string message;
};

/// Replays a connection artifact {perturbation, p, q, n}: g is rebuilt from JSON and iterated through
/// the generic map interface, then compared with q against `tol`.
inline ReplayCheck replay_connection(const json& artifact, double tol) {
  ReplayCheck out;
  try {
    const auto g = perturbation_from_json(artifact.at("perturbation")).as_map();
    const auto p = artifact.at("p").get<TorusPoint>(), q = artifact.at("q").get<TorusPoint>();
    const auto n = artifact.at("n").get<long long>();
    TorusPoint z = p;
    for (long long k = 0; k < n; ++k) z = g.apply(z);
    out.residual = g.distance(z, q);
    out.ok = out.residual <= tol;
    if (!out.ok) out.message = "replayed g^n(p) misses q by " + format_double(out.residual);
  } catch (const std::exception& e) {
    out.message = e.what();
  }
  return out;
}

/// Wraps a payload with its kind, the run configuration and that configuration's hash.
inline json make_artifact(const std::string& kind, const json& config, json payload) {
  payload["kind"] = kind;
  payload["config"] = config;
  payload["config_hash"] = config_hash(config);
  return payload;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ContractError("'" + path + "': " + e.what());
  }
}

}  // namespace c1lab
