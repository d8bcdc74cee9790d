#pragma once

// Conservative surface maps: the SurfaceMap contract and the map catalog.

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "c1lab/geometry.hpp"

namespace c1lab {

struct StandardMapParams {
  double a{0};
};

struct LinearMapParams {
  std::array<std::array<long long, 2>, 2> matrix{{{1, 0}, {0, 1}}};
};

struct TranslationParams {
  Vec2 shift{};
};

/// Time-T map of theta'' = -sin(2 pi theta) + h(t) with h given by a Fourier series
/// h(t) = sum_k cos_k cos(2 pi k t / T) + sin_k sin(2 pi k t / T), k >= 1.
struct PendulumParams {
  std::vector<double> fourier_cos;
  std::vector<double> fourier_sin;
  double period{1.0};
  int steps{64};

  double forcing(double t) const {
    double h = 0;
    const double w = 2 * std::numbers::pi * t / period;
    for (std::size_t k = 0; k < fourier_cos.size(); ++k) h += fourier_cos[k] * std::cos(double(k + 1) * w);
    for (std::size_t k = 0; k < fourier_sin.size(); ++k) h += fourier_sin[k] * std::sin(double(k + 1) * w);
    return h;
  }
};

using MapSpec = std::variant<StandardMapParams, LinearMapParams, TranslationParams, PendulumParams>;

/// A conservative diffeomorphism given through a continuous lift to R^2.
///
/// `lift` maps R^2 -> R^2 and commutes with the lattice translations of the surface;
/// `apply` wraps the lift back to canonical coordinates. Tangents are evaluated on the lift.
class SurfaceMap {
 public:
  using LiftFn = std::function<Vec2(const Vec2&)>;
  using TangentFn = std::function<Mat2(const Vec2&)>;

  SurfaceMap(std::string name, Surface surface, LiftFn lift, TangentFn tangent, std::optional<LiftFn> inverse_lift = {},
             std::optional<MapSpec> spec = {})
      : name_(std::move(name)),
        surface_(surface),
        lift_(std::move(lift)),
        tangent_(std::move(tangent)),
        inverse_(std::move(inverse_lift)),
        spec_(std::move(spec)) {}

  const std::string& name() const { return name_; }
  Surface surface() const { return surface_; }
  const std::optional<MapSpec>& spec() const { return spec_; }

  Vec2 lift(const Vec2& p) const { return lift_(p); }
  TorusPoint apply(const TorusPoint& p) const { return wrap(lift_(p.vec()), surface_); }
  Mat2 tangent(const TorusPoint& p) const { return tangent_(p.vec()); }
  Mat2 tangent_lift(const Vec2& p) const { return tangent_(p); }

  bool has_inverse() const { return inverse_.has_value(); }
  TorusPoint inverse(const TorusPoint& p) const {
    if (!inverse_) throw ContractError("map '" + name_ + "' has no inverse");
    return wrap((*inverse_)(p.vec()), surface_);
  }
  Vec2 inverse_lift(const Vec2& p) const {
    if (!inverse_) throw ContractError("map '" + name_ + "' has no inverse");
    return (*inverse_)(p);
  }

  TorusPoint iterate(TorusPoint p, long long n) const {
    if (n >= 0) {
      for (long long k = 0; k < n; ++k) p = apply(p);
    } else {
      for (long long k = 0; k < -n; ++k) p = inverse(p);
    }
    return p;
  }

  /// Lifted iterate without wrapping between steps.
  Vec2 iterate_lift(Vec2 p, long long n) const {
    for (long long k = 0; k < n; ++k) p = lift_(p);
    return p;
  }

  /// D_p f^n accumulated along the orbit.
  Mat2 tangent_iterate(TorusPoint p, long long n) const {
    Mat2 m = Mat2::identity();
    for (long long k = 0; k < n; ++k) {
      m = tangent(p) * m;
      p = apply(p);
    }
    return m;
  }

  TorusPoint wrap_point(const Vec2& v) const { return wrap(v, surface_); }
  double distance(const TorusPoint& p, const TorusPoint& q) const { return torus_distance(p, q, surface_); }
  Vec2 delta(const TorusPoint& from, const TorusPoint& to) const { return torus_delta(from.vec(), to.vec(), surface_); }

 private:
  std::string name_;
  Surface surface_;
  LiftFn lift_;
  TangentFn tangent_;
  std::optional<LiftFn> inverse_;
  std::optional<MapSpec> spec_;
};

/// (x, y) -> (x + y, y + a sin(2 pi (x + y))) mod Z^2.
inline SurfaceMap standard_map(StandardMapParams params) {
  const double a = params.a;
  if (!std::isfinite(a)) throw ContractError("standard map coupling must be finite");
  constexpr double two_pi = 2 * std::numbers::pi;
  auto lift = [a](const Vec2& p) {
    const double x1 = p.x + p.y;
    return Vec2{x1, p.y + a * std::sin(two_pi * x1)};
  };
  auto tangent = [a](const Vec2& p) {
    const double c = two_pi * a * std::cos(two_pi * (p.x + p.y));
    return Mat2{1, 1, c, 1 + c};
  };
  auto inverse = [a](const Vec2& q) {
    const double y = q.y - a * std::sin(two_pi * q.x);
    return Vec2{q.x - y, y};
  };
  return SurfaceMap("standard", Surface::torus, lift, tangent, inverse, MapSpec{params});
}

inline Mat2 to_mat2(const LinearMapParams& p) {
  return {double(p.matrix[0][0]), double(p.matrix[0][1]), double(p.matrix[1][0]), double(p.matrix[1][1])};
}

/// p -> M p mod Z^2 for M in SL(2, Z).
inline SurfaceMap linear_automorphism(LinearMapParams params) {
  const auto& m = params.matrix;
  if (m[0][0] * m[1][1] - m[0][1] * m[1][0] != 1) throw ContractError("linear automorphism requires det(M) = 1");
  const Mat2 M = to_mat2(params);
  const Mat2 Minv{double(m[1][1]), double(-m[0][1]), double(-m[1][0]), double(m[0][0])};
  const bool is_identity = m[0][0] == 1 && m[0][1] == 0 && m[1][0] == 0 && m[1][1] == 1;
  return SurfaceMap(
      is_identity ? "identity" : "linear", Surface::torus, [M](const Vec2& p) { return M * p; },
      [M](const Vec2&) { return M; }, [Minv](const Vec2& q) { return Minv * q; }, MapSpec{params});
}

inline SurfaceMap identity_map() { return linear_automorphism({}); }

/// Rigid translation p -> p + shift, the conformal model map.
inline SurfaceMap translation_map(TranslationParams params) {
  const Vec2 s = params.shift;
  return SurfaceMap(
      "translation", Surface::torus, [s](const Vec2& p) { return p + s; }, [](const Vec2&) { return Mat2::identity(); },
      [s](const Vec2& q) { return q - s; }, MapSpec{params});
}

/// Time-T map of the forced pendulum on the annulus R/Z x R, as `steps` kick-drift shear pairs.
inline SurfaceMap pendulum_time_T(PendulumParams params) {
  if (params.steps < 1) throw ContractError("pendulum steps must be >= 1");
  if (!(params.period > 0)) throw ContractError("pendulum period must be > 0");
  constexpr double two_pi = 2 * std::numbers::pi;
  const int n = params.steps;
  const double dt = params.period / n;
  std::vector<double> h(n);
  for (int i = 0; i < n; ++i) h[i] = params.forcing(i * dt);

  auto lift = [h, dt, n](const Vec2& p) {
    double th = p.x, v = p.y;
    for (int i = 0; i < n; ++i) {
      v += dt * (-std::sin(two_pi * th) + h[i]);
      th += dt * v;
    }
    return Vec2{th, v};
  };
  auto tangent = [dt, n, h](const Vec2& p) {
    double th = p.x, v = p.y;
    Mat2 m = Mat2::identity();
    for (int i = 0; i < n; ++i) {
      const Mat2 kick{1, 0, -two_pi * dt * std::cos(two_pi * th), 1};
      v += dt * (-std::sin(two_pi * th) + h[i]);
      th += dt * v;
      const Mat2 drift{1, dt, 0, 1};
      m = drift * (kick * m);
    }
    return m;
  };
  auto inverse = [h, dt, n](const Vec2& q) {
    double th = q.x, v = q.y;
    for (int i = n - 1; i >= 0; --i) {
      th -= dt * v;
      v -= dt * (-std::sin(two_pi * th) + h[i]);
    }
    return Vec2{th, v};
  };
  return SurfaceMap("pendulum", Surface::cylinder, lift, tangent, inverse, MapSpec{params});
}

inline SurfaceMap make_map(const MapSpec& spec) {
  return std::visit(
      [](const auto& p) -> SurfaceMap {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, StandardMapParams>) return standard_map(p);
        else if constexpr (std::is_same_v<T, LinearMapParams>) return linear_automorphism(p);
        else if constexpr (std::is_same_v<T, TranslationParams>) return translation_map(p);
        else return pendulum_time_T(p);
      },
      spec);
}

}  // namespace c1lab
