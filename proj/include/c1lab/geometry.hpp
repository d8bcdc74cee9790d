#pragma once

// Planar vectors, 2x2 matrices and torus geometry.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <numbers>
#include <stdexcept>
#include <string>

namespace c1lab {

/// Raised when an input violates an operation's precondition.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a multi-stage construction fails; carries the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

template <typename Real = double>
struct BasicVec2 {
  Real x{0};
  Real y{0};

  constexpr BasicVec2& operator+=(const BasicVec2& o) { x += o.x; y += o.y; return *this; }
  constexpr BasicVec2& operator-=(const BasicVec2& o) { x -= o.x; y -= o.y; return *this; }
  constexpr BasicVec2& operator*=(Real s) { x *= s; y *= s; return *this; }
  friend constexpr BasicVec2 operator+(BasicVec2 a, const BasicVec2& b) { return a += b; }
  friend constexpr BasicVec2 operator-(BasicVec2 a, const BasicVec2& b) { return a -= b; }
  friend constexpr BasicVec2 operator-(const BasicVec2& a) { return {-a.x, -a.y}; }
  friend constexpr BasicVec2 operator*(Real s, BasicVec2 a) { return a *= s; }
  friend constexpr BasicVec2 operator*(BasicVec2 a, Real s) { return a *= s; }
  friend constexpr BasicVec2 operator/(BasicVec2 a, Real s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(const BasicVec2&, const BasicVec2&) = default;
};

using Vec2 = BasicVec2<double>;
/// Planar coordinates in a local chart.
using ChartPoint = Vec2;

template <typename Real>
constexpr Real dot(const BasicVec2<Real>& a, const BasicVec2<Real>& b) { return a.x * b.x + a.y * b.y; }
template <typename Real>
constexpr Real cross(const BasicVec2<Real>& a, const BasicVec2<Real>& b) { return a.x * b.y - a.y * b.x; }
template <typename Real>
inline Real norm(const BasicVec2<Real>& a) { using std::hypot; return hypot(a.x, a.y); }
/// Rotation by +pi/2.
template <typename Real>
constexpr BasicVec2<Real> perp(const BasicVec2<Real>& a) { return {-a.y, a.x}; }

/// Row-major 2x2 matrix [[a, b], [c, d]].
template <typename Real = double>
struct BasicMat2 {
  Real a{1}, b{0}, c{0}, d{1};

  static constexpr BasicMat2 identity() { return {1, 0, 0, 1}; }
  static constexpr BasicMat2 zero() { return {0, 0, 0, 0}; }
  /// Rotation by +pi/2, the standard symplectic matrix.
  static constexpr BasicMat2 symplectic() { return {0, -1, 1, 0}; }

  constexpr Real det() const { return a * d - b * c; }
  constexpr Real trace() const { return a + d; }
  constexpr BasicMat2 transpose() const { return {a, c, b, d}; }
  constexpr BasicMat2 inverse() const {
    const Real D = det();
    return {d / D, -b / D, -c / D, a / D};
  }
  constexpr BasicVec2<Real> operator*(const BasicVec2<Real>& v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
  friend constexpr BasicMat2 operator*(const BasicMat2& m, const BasicMat2& n) {
    return {m.a * n.a + m.b * n.c, m.a * n.b + m.b * n.d, m.c * n.a + m.d * n.c, m.c * n.b + m.d * n.d};
  }
  friend constexpr BasicMat2 operator+(const BasicMat2& m, const BasicMat2& n) { return {m.a + n.a, m.b + n.b, m.c + n.c, m.d + n.d}; }
  friend constexpr BasicMat2 operator-(const BasicMat2& m, const BasicMat2& n) { return {m.a - n.a, m.b - n.b, m.c - n.c, m.d - n.d}; }
  friend constexpr BasicMat2 operator*(Real s, const BasicMat2& m) { return {s * m.a, s * m.b, s * m.c, s * m.d}; }
  friend constexpr bool operator==(const BasicMat2&, const BasicMat2&) = default;
  constexpr BasicVec2<Real> col(int j) const { return j == 0 ? BasicVec2<Real>{a, c} : BasicVec2<Real>{b, d}; }
  static constexpr BasicMat2 from_cols(const BasicVec2<Real>& c0, const BasicVec2<Real>& c1) { return {c0.x, c1.x, c0.y, c1.y}; }
};

using Mat2 = BasicMat2<double>;

inline double max_abs(const Mat2& m) {
  return std::max({std::abs(m.a), std::abs(m.b), std::abs(m.c), std::abs(m.d)});
}

/// Singular value decomposition M = U diag(s1, s2) V^T with s1 >= s2 >= 0.
struct Svd2 {
  Mat2 u;
  Mat2 v;
  double s1{0};
  double s2{0};
};

/// `det` may be supplied when known more accurately than a*d - b*c (products of many factors).
inline Svd2 svd(const Mat2& m, std::optional<double> det = std::nullopt) {
  // Closed form via M = rotation(phi) diag rotation(-theta).
  const double e = (m.a + m.d) / 2, f = (m.a - m.d) / 2;
  const double g = (m.c + m.b) / 2, h = (m.c - m.b) / 2;
  const double q = std::hypot(e, h), r = std::hypot(f, g);
  const double a1 = std::atan2(g, f), a2 = std::atan2(h, e);
  const double theta = (a2 - a1) / 2, phi = (a2 + a1) / 2;
  // s2 from the determinant avoids cancellation in q - r for strongly stretched maps.
  double s1 = q + r, s2 = s1 > 0 ? det.value_or(m.a * m.d - m.b * m.c) / s1 : 0.0;
  Mat2 u{std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi)};
  Mat2 v{std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta)};
  // M = U diag(s1, s2) V^T; a negative s2 flips the second right vector.
  if (s2 < 0) {
    s2 = -s2;
    v.b = -v.b;
    v.d = -v.d;
  }
  return {u, v, s1, s2};
}

/// Operator (spectral) norm.
inline double op_norm(const Mat2& m) { return svd(m).s1; }

/// Eigenvalues of a 2x2 matrix, larger real part (or positive imaginary part) first.
inline std::array<std::complex<double>, 2> eigenvalues(const Mat2& m) {
  const double t = m.trace(), D = m.det();
  const double disc = t * t / 4 - D;
  if (disc >= 0) {
    const double s = std::sqrt(disc);
    return {std::complex<double>(t / 2 + s, 0), std::complex<double>(t / 2 - s, 0)};
  }
  const double s = std::sqrt(-disc);
  return {std::complex<double>(t / 2, s), std::complex<double>(t / 2, -s)};
}

/// exp(A) for trace-free A (so that det exp(A) = 1).
inline Mat2 exp_sl2(const Mat2& A) {
  const double mu2 = -A.det();  // A^2 = mu2 * I
  double c, s;
  if (mu2 > 1e-300) {
    const double mu = std::sqrt(mu2);
    c = std::cosh(mu);
    s = std::sinh(mu) / mu;
  } else if (mu2 < -1e-300) {
    const double w = std::sqrt(-mu2);
    c = std::cos(w);
    s = std::sin(w) / w;
  } else {
    c = 1 + mu2 / 2;
    s = 1 + mu2 / 6;
  }
  return c * Mat2::identity() + s * A;
}

/// Principal logarithm in sl(2,R) of a unit-determinant matrix with trace > -2.
inline Mat2 log_sl2(const Mat2& C) {
  const double t = C.trace();
  if (!(t > -2)) throw ContractError("log_sl2: trace <= -2 has no real logarithm near the identity");
  const Mat2 traceless = C - (t / 2) * Mat2::identity();
  double k;
  const double half = t / 2;
  if (std::abs(half - 1) < 1e-12) {
    k = 1;
  } else if (half > 1) {
    const double mu = std::acosh(half);
    k = mu / std::sinh(mu);
  } else {
    const double w = std::acos(half);
    k = w / std::sin(w);
  }
  return k * traceless;
}

// ---------------------------------------------------------------------------
// Torus and cylinder.

enum class Surface { torus, cylinder };

/// A point of T^2 = R^2/Z^2 (or of the annulus when the surface is a cylinder).
/// On the torus both coordinates lie in [0, 1).
struct TorusPoint {
  double x{0};
  double y{0};
  constexpr Vec2 vec() const { return {x, y}; }
  friend constexpr bool operator==(const TorusPoint&, const TorusPoint&) = default;
};

/// Canonical representative of t modulo 1 in [0, 1).
inline double wrap_unit(double t) {
  double r = t - std::floor(t);
  if (r >= 1.0) r = 0.0;  // floor rounding for tiny negative t
  return r;
}

inline TorusPoint wrap(const Vec2& v, Surface s = Surface::torus) {
  return {wrap_unit(v.x), s == Surface::torus ? wrap_unit(v.y) : v.y};
}

/// Shortest representative of a displacement modulo the lattice.
inline Vec2 torus_delta(const Vec2& from, const Vec2& to, Surface s = Surface::torus) {
  Vec2 d = to - from;
  d.x -= std::nearbyint(d.x);
  if (s == Surface::torus) d.y -= std::nearbyint(d.y);
  return d;
}

/// Distance on T^2: minimum over integer translates of the Euclidean distance.
inline double torus_distance(const TorusPoint& p, const TorusPoint& q, Surface s = Surface::torus) {
  return norm(torus_delta(p.vec(), q.vec(), s));
}

/// Affine (translation) chart around a base point of the surface.
class Chart {
 public:
  Chart(TorusPoint base, double radius, Surface surface = Surface::torus)
      : base_(base), radius_(radius), surface_(surface) {
    if (!(radius > 0) || !(radius < 0.25)) throw ContractError("chart radius must lie in (0, 1/4)");
  }

  const TorusPoint& base() const { return base_; }
  double radius() const { return radius_; }
  Surface surface() const { return surface_; }

  bool in_domain(const TorusPoint& p) const { return norm(torus_delta(base_.vec(), p.vec(), surface_)) < radius_; }

  /// Chart coordinates of p; throws when p is outside the chart domain U_z.
  ChartPoint to_chart(const TorusPoint& p) const {
    const Vec2 d = torus_delta(base_.vec(), p.vec(), surface_);
    if (!(norm(d) < radius_)) throw ContractError("point outside chart domain");
    return d;
  }
  /// Chart coordinates of the lattice translate of p nearest to the base, without a domain check.
  ChartPoint to_chart_unchecked(const TorusPoint& p) const { return torus_delta(base_.vec(), p.vec(), surface_); }

  TorusPoint to_surface(const ChartPoint& c) const {
    if (!(norm(c) < radius_)) throw ContractError("chart point outside chart image");
    return wrap(base_.vec() + c, surface_);
  }
  TorusPoint to_surface_unchecked(const ChartPoint& c) const { return wrap(base_.vec() + c, surface_); }

 private:
  TorusPoint base_;
  double radius_;
  Surface surface_;
};

/// Closed segment intersection in the plane; returns the parameter on the first segment.
inline bool segments_intersect(const Vec2& p0, const Vec2& p1, const Vec2& q0, const Vec2& q1,
                               double* t_out = nullptr, double* s_out = nullptr) {
  if (std::max(p0.x, p1.x) < std::min(q0.x, q1.x) || std::max(q0.x, q1.x) < std::min(p0.x, p1.x) ||
      std::max(p0.y, p1.y) < std::min(q0.y, q1.y) || std::max(q0.y, q1.y) < std::min(p0.y, p1.y))
    return false;
  const Vec2 r = p1 - p0, s = q1 - q0;
  const double den = cross(r, s);
  const Vec2 qp = q0 - p0;
  const double scale = norm(r) * norm(s);
  if (std::abs(den) <= 1e-12 * scale) {
    if (std::abs(cross(qp, r)) > 1e-12 * norm(r) * std::max(norm(qp), norm(s))) return false;
    // Collinear: project onto r.
    const double rr = dot(r, r);
    if (rr == 0) return p0 == q0;
    double t0 = dot(qp, r) / rr, t1 = dot(q1 - p0, r) / rr;
    if (t0 > t1) std::swap(t0, t1);
    if (t1 < 0 || t0 > 1) return false;
    if (t_out) *t_out = std::max(0.0, t0);
    if (s_out) *s_out = 0;
    return true;
  }
  const double t = cross(qp, s) / den, u = cross(qp, r) / den;
  if (t < 0 || t > 1 || u < 0 || u > 1) return false;
  if (t_out) *t_out = t;
  if (s_out) *s_out = u;
  return true;
}

}  // namespace c1lab
