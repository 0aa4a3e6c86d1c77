#pragma once

// Convex bodies as finite halfspace intersections, plus cones and hulls.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "isolab/errors.hpp"

namespace isolab {

using Vec = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline constexpr double kPi = std::numbers::pi;

/// H = {x : normal . x >= offset}, normal of unit length.
struct Halfspace {
  Vec normal;
  double offset = 0.0;

  Halfspace(Vec n, double c) {
    const double len = n.norm();
    if (!(len > 0.0) || !std::isfinite(len)) throw DegenerateInput("halfspace normal must be nonzero and finite");
    normal = n / len;
    offset = c / len;
  }

  double slack(const Vec& x) const { return normal.dot(x) - offset; }
};

struct Box {
  Vec lo;
  Vec hi;
  Vec extent() const { return hi - lo; }
  Vec center() const { return 0.5 * (lo + hi); }
};

/// Axis-aligned ellipse used as the analytic boundary of smooth bodies.
struct Ellipse {
  Vec2 center = Vec2::Zero();
  double a = 1.0;
  double b = 1.0;

  /// Curvature of the ellipse at the boundary point nearest (in parameter) to p.
  double curvature_at(const Vec2& p) const {
    const Vec2 q = p - center;
    const double t = std::atan2(q.y() / b, q.x() / a);
    const double s = std::sin(t), c = std::cos(t);
    return a * b / std::pow(a * a * s * s + b * b * c * c, 1.5);
  }
};

class ConvexBody {
 public:
  ConvexBody(std::vector<Halfspace> halfspaces, bool symmetric, std::optional<Ellipse> smooth = std::nullopt,
             std::string kind = "polytope")
      : halfspaces_(std::move(halfspaces)), symmetric_(symmetric), smooth_(smooth), kind_(std::move(kind)) {
    if (halfspaces_.empty()) throw DegenerateInput("convex body needs at least one halfspace");
    dim_ = static_cast<int>(halfspaces_.front().normal.size());
    if (dim_ != 2 && dim_ != 3) throw DimensionMismatch("convex bodies must be 2- or 3-dimensional");
    for (const auto& h : halfspaces_)
      if (h.normal.size() != dim_) throw DimensionMismatch("halfspace dimensions disagree");
    if (dim_ == 2)
      build_polygon();
    else
      build_vertices_3d();
    bbox_ = Box{vertices_.front(), vertices_.front()};
    for (const auto& v : vertices_) {
      bbox_.lo = bbox_.lo.cwiseMin(v);
      bbox_.hi = bbox_.hi.cwiseMax(v);
    }
    if (symmetric_ && !has_mirror_pairs(1e-9))
      throw PreconditionError("body flagged symmetric but a halfspace has no mirror partner");
  }

  int dim() const { return dim_; }
  const std::vector<Halfspace>& halfspaces() const { return halfspaces_; }
  const Box& bbox() const { return bbox_; }
  bool symmetric() const { return symmetric_; }
  const std::optional<Ellipse>& smooth() const { return smooth_; }
  const std::string& kind() const { return kind_; }
  /// Extreme points; for 2D bodies a counter-clockwise polygon.
  const std::vector<Vec>& vertices() const { return vertices_; }

  bool contains(const Vec& x) const {
    check_dim(x);
    for (const auto& h : halfspaces_)
      if (h.slack(x) < -1e-12) return false;
    return true;
  }

  bool contains_strictly(const Vec& x) const {
    check_dim(x);
    for (const auto& h : halfspaces_)
      if (h.slack(x) <= 1e-12) return false;
    return true;
  }

  /// h(a) = max over the body of a . x. The optimum of the linear program is
  /// attained at a vertex, and the vertex set is exact.
  double support(const Vec& direction) const {
    check_dim(direction);
    if (std::abs(direction.norm() - 1.0) > 1e-9) throw PreconditionError("support direction must be a unit vector");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& v : vertices_) best = std::max(best, direction.dot(v));
    return best;
  }

  /// min over halfspaces of normal . x - offset; equals the distance to the
  /// boundary for interior points, negative outside.
  double boundary_distance(const Vec& x) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& h : halfspaces_) d = std::min(d, h.slack(x));
    return d;
  }

  std::size_t nearest_facet(const Vec& x) const {
    std::size_t best = 0;
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < halfspaces_.size(); ++k) {
      const double s = std::abs(halfspaces_[k].slack(x));
      if (s < d) {
        d = s;
        best = k;
      }
    }
    return best;
  }

  /// Parameter interval {t : p + t d in body}, empty if the line misses it.
  std::optional<std::pair<double, double>> clip_line(const Vec& p, const Vec& d) const {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (const auto& h : halfspaces_) {
      const double nd = h.normal.dot(d);
      const double s = h.slack(p);
      if (std::abs(nd) < 1e-300) {
        if (s < 0.0) return std::nullopt;
        continue;
      }
      const double t = -s / nd;
      if (nd > 0.0)
        lo = std::max(lo, t);
      else
        hi = std::min(hi, t);
    }
    if (!(hi > lo)) return std::nullopt;
    return std::make_pair(lo, hi);
  }

  /// Second fundamental form of the boundary in the tangent direction at a
  /// boundary point. Smooth bodies use their analytic ellipse; polytopes are
  /// flat on facets and carry exterior_angle / corner_scale at a vertex.
  double boundary_curvature(const Vec2& p, double corner_scale) const {
    if (smooth_) return smooth_->curvature_at(p);
    if (dim_ != 2) return 0.0;
    const std::size_t m = vertices_.size();
    for (std::size_t k = 0; k < m; ++k) {
      const Vec2 v = vertices_[k];
      if ((p - v).norm() <= corner_scale) {
        const Vec2 e0 = (v - Vec2(vertices_[(k + m - 1) % m])).normalized();
        const Vec2 e1 = (Vec2(vertices_[(k + 1) % m]) - v).normalized();
        const double turn = std::atan2(e0.x() * e1.y() - e0.y() * e1.x(), e0.dot(e1));
        return std::abs(turn) / corner_scale;
      }
    }
    return 0.0;
  }

  /// Area of a 2D body.
  double volume() const {
    if (dim_ != 2) throw DimensionMismatch("volume is implemented for 2D bodies only");
    double a = 0.0;
    const std::size_t m = vertices_.size();
    for (std::size_t k = 0; k < m; ++k) {
      const Vec& p = vertices_[k];
      const Vec& q = vertices_[(k + 1) % m];
      a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * a;
  }

  bool has_mirror_pairs(double tol) const {
    for (const auto& h : halfspaces_) {
      bool found = false;
      for (const auto& g : halfspaces_) {
        if ((g.normal + h.normal).norm() <= tol && std::abs(g.offset - h.offset) <= tol) {
          found = true;
          break;
        }
      }
      if (!found) return false;
    }
    return true;
  }

 private:
  void check_dim(const Vec& x) const {
    if (x.size() != dim_) throw DimensionMismatch("point dimension does not match body dimension");
  }

  void build_polygon() {
    // A second pass inside a tight box keeps the clipping round-off at the body's scale.
    vertices_.clear();
    clip_square(1e8);
    double r = 0.0;
    for (const auto& v : vertices_) r = std::max(r, v.cwiseAbs().maxCoeff());
    clip_square(2.0 * r + 1.0);
  }

  void clip_square(double big) {
    std::vector<Vec2> poly{{-big, -big}, {big, -big}, {big, big}, {-big, big}};
    for (const auto& h : halfspaces_) {
      const Vec2 n = h.normal;
      std::vector<Vec2> out;
      const std::size_t m = poly.size();
      for (std::size_t k = 0; k < m; ++k) {
        const Vec2& p = poly[k];
        const Vec2& q = poly[(k + 1) % m];
        const double sp = n.dot(p) - h.offset;
        const double sq = n.dot(q) - h.offset;
        if (sp >= 0.0) out.push_back(p);
        if ((sp >= 0.0) != (sq >= 0.0)) out.push_back(p + (q - p) * (sp / (sp - sq)));
      }
      poly = std::move(out);
      if (poly.size() < 3) throw DegenerateInput("halfspace intersection has empty interior");
    }
    std::vector<Vec2> clean;
    for (const auto& p : poly)
      if (clean.empty() || (p - clean.back()).norm() > 1e-12) clean.push_back(p);
    while (clean.size() > 1 && (clean.front() - clean.back()).norm() <= 1e-12) clean.pop_back();
    for (const auto& p : clean)
      if (p.cwiseAbs().maxCoeff() > 0.5 * big) throw DegenerateInput("halfspace intersection is unbounded");
    vertices_.assign(clean.begin(), clean.end());
    if (vertices_.size() < 3 || volume() <= 1e-14) throw DegenerateInput("halfspace intersection has empty interior");
  }

  void build_vertices_3d() {
    const std::size_t m = halfspaces_.size();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j)
        for (std::size_t k = j + 1; k < m; ++k) {
          Eigen::Matrix3d A;
          A.row(0) = halfspaces_[i].normal.transpose();
          A.row(1) = halfspaces_[j].normal.transpose();
          A.row(2) = halfspaces_[k].normal.transpose();
          if (std::abs(A.determinant()) < 1e-12) continue;
          const Eigen::Vector3d x =
              A.partialPivLu().solve(Eigen::Vector3d(halfspaces_[i].offset, halfspaces_[j].offset, halfspaces_[k].offset));
          bool feasible = true;
          for (const auto& h : halfspaces_)
            if (h.slack(x) < -1e-9) {
              feasible = false;
              break;
            }
          if (!feasible) continue;
          bool dup = false;
          for (const auto& v : vertices_)
            if ((v - x).norm() < 1e-9) dup = true;
          if (!dup) vertices_.emplace_back(x);
        }
    if (vertices_.size() < 4) throw DegenerateInput("halfspace intersection is unbounded or has empty interior");
    Eigen::MatrixXd d(3, vertices_.size() - 1);
    for (std::size_t k = 1; k < vertices_.size(); ++k) d.col(k - 1) = vertices_[k] - vertices_[0];
    if (d.fullPivLu().rank() < 3) throw DegenerateInput("halfspace intersection has empty interior");
  }

  int dim_ = 2;
  std::vector<Halfspace> halfspaces_;
  bool symmetric_ = false;
  std::optional<Ellipse> smooth_;
  std::string kind_;
  std::vector<Vec> vertices_;
  Box bbox_;
};

/// Open circular cone {x != apex : angle(x - apex, axis) <= half_angle}.
struct Cone {
  Vec apex;
  Vec axis;
  double half_angle = kPi / 2;

  Cone(Vec apex_, Vec axis_, double half_angle_) : apex(std::move(apex_)), axis(std::move(axis_)), half_angle(half_angle_) {
    if (apex.size() != axis.size()) throw DimensionMismatch("cone apex and axis dimensions differ");
    if (std::abs(axis.norm() - 1.0) > 1e-12) throw PreconditionError("cone axis must be a unit vector");
    if (!(half_angle > 0.0 && half_angle <= kPi / 2 + 1e-15)) throw PreconditionError("cone half-angle must lie in (0, pi/2]");
  }

  bool contains(const Vec& x) const {
    if (x.size() != apex.size()) throw DimensionMismatch("point dimension does not match cone dimension");
    const Vec d = x - apex;
    const double r = d.norm();
    if (r == 0.0) return false;
    const double c = std::clamp(axis.dot(d) / r, -1.0, 1.0);
    return std::acos(c) <= half_angle + 1e-12;
  }
};

inline Vec vec2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

/// Polygon from counter-clockwise vertices (each edge contributes its halfspace).
inline ConvexBody polygon_from_ccw(const std::vector<Vec2>& v, std::optional<bool> symmetric = std::nullopt,
                                   std::optional<Ellipse> smooth = std::nullopt, std::string kind = "polygon") {
  const std::size_t m = v.size();
  if (m < 3) throw DegenerateInput("polygon needs at least three vertices");
  std::vector<Halfspace> hs;
  hs.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const Vec2 e = v[(k + 1) % m] - v[k];
    const Vec2 inward(-e.y(), e.x());
    hs.emplace_back(Vec(inward), inward.dot(v[k]));
  }
  if (symmetric) return ConvexBody(std::move(hs), *symmetric, smooth, std::move(kind));
  ConvexBody probe(hs, false, smooth, kind);
  const bool sym = probe.has_mirror_pairs(1e-9);
  return ConvexBody(std::move(hs), sym, smooth, std::move(kind));
}

inline ConvexBody make_box(const Vec2& lo, const Vec2& hi) {
  if (!(hi.x() > lo.x() && hi.y() > lo.y())) throw DegenerateInput("box corners must satisfy lo < hi");
  std::vector<Halfspace> hs{
      {vec2(1, 0), lo.x()}, {vec2(-1, 0), -hi.x()}, {vec2(0, 1), lo.y()}, {vec2(0, -1), -hi.y()}};
  const bool sym = (lo + hi).norm() <= 1e-12;
  return ConvexBody(std::move(hs), sym, std::nullopt, "box");
}

/// Square [-half, half]^2.
inline ConvexBody make_square(double half) { return make_box(Vec2(-half, -half), Vec2(half, half)); }

/// Regular m-gon with vertices on the circle of the given radius, first vertex at angle `phase`.
inline ConvexBody make_regular_polygon(int m, double radius, double phase = 0.0) {
  if (m < 3) throw DegenerateInput("regular polygon needs m >= 3");
  std::vector<Vec2> v(m);
  for (int k = 0; k < m; ++k) {
    const double t = phase + 2.0 * kPi * k / m;
    v[k] = radius * Vec2(std::cos(t), std::sin(t));
  }
  return polygon_from_ccw(v, m % 2 == 0, std::nullopt, "polygon");
}

inline ConvexBody make_ellipse(double a, double b, int facets = 256) {
  if (!(a > 0.0 && b > 0.0)) throw DegenerateInput("ellipse semi-axes must be positive");
  std::vector<Vec2> v(facets);
  for (int k = 0; k < facets; ++k) {
    const double t = 2.0 * kPi * k / facets;
    v[k] = Vec2(a * std::cos(t), b * std::sin(t));
  }
  return polygon_from_ccw(v, facets % 2 == 0, Ellipse{Vec2::Zero(), a, b}, a == b ? "disk" : "ellipse");
}

/// Disk approximated by a regular polygon inscribed in the circle.
inline ConvexBody make_disk(double radius, int facets = 256) { return make_ellipse(radius, radius, facets); }

/// Minimal convex polygon containing the points (monotone chain).
inline ConvexBody convex_hull(const std::vector<Vec>& points) {
  if (points.empty()) throw DegenerateInput("convex hull of an empty point set");
  const long dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw DimensionMismatch("hull points have mixed dimensions");
  if (dim != 2) throw DimensionMismatch("convex_hull is implemented for 2D point sets only");
  std::vector<Vec2> p;
  p.reserve(points.size());
  for (const auto& q : points) p.emplace_back(q);
  std::sort(p.begin(), p.end(), [](const Vec2& a, const Vec2& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
  p.erase(std::unique(p.begin(), p.end(), [](const Vec2& a, const Vec2& b) { return (a - b).norm() == 0.0; }), p.end());
  if (p.size() < 3) throw DegenerateInput("convex hull needs at least three distinct points");
  const double scale = (p.back() - p.front()).norm() + 1.0;
  auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Vec2> h(2 * p.size());
  std::size_t k = 0;
  const double eps = 1e-14 * scale * scale;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= eps) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= eps) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  if (h.size() < 3) throw DegenerateInput("points are affinely dependent (collinear)");
  return polygon_from_ccw(h, std::nullopt, std::nullopt, "hull");
}

/// Body reconstructed from sampled support values: {x : a_k . x <= h_k for all k}.
inline ConvexBody from_support(const std::vector<Vec2>& directions, const std::vector<double>& values,
                               std::optional<bool> symmetric = std::nullopt) {
  if (directions.size() != values.size()) throw PreconditionError("support samples and directions differ in length");
  std::vector<Halfspace> hs;
  hs.reserve(directions.size());
  for (std::size_t k = 0; k < directions.size(); ++k) hs.emplace_back(Vec(-directions[k]), -values[k]);
  if (symmetric) return ConvexBody(std::move(hs), *symmetric, std::nullopt, "support");
  ConvexBody probe(hs, false, std::nullopt, "support");
  const bool sym = probe.has_mirror_pairs(1e-9);
  return ConvexBody(std::move(hs), sym, std::nullopt, "support");
}

}  // namespace isolab
