#pragma once

// Interfaces S = Omega ∩ ∂E as polylines with unit normals pointing out of E,
// and the discrete geometry measured on them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <unordered_map>
#include <vector>

#include "isolab/convex.hpp"
#include "isolab/errors.hpp"
#include "isolab/grid.hpp"
#include "isolab/measure.hpp"

namespace isolab {

/// Ordered vertex indices of one connected piece.
struct Chain {
  std::vector<std::size_t> idx;
  bool closed = false;
};

struct Interface {
  std::vector<Vec2> vertices;
  std::vector<Vec2> normals;
  std::vector<Chain> chains;
  std::vector<std::size_t> boundary_vertices;
  double resolution = 0.0;  ///< spacing of the grid it was extracted from

  std::size_t segment_count() const {
    std::size_t n = 0;
    for (const auto& c : chains) n += c.closed ? c.idx.size() : (c.idx.empty() ? 0 : c.idx.size() - 1);
    return n;
  }

  template <class Fn>
  void for_each_segment(Fn&& fn) const {
    for (const auto& c : chains) {
      const std::size_t m = c.idx.size();
      const std::size_t last = c.closed ? m : m - 1;
      for (std::size_t k = 0; k < last && m >= 2; ++k) fn(c.idx[k], c.idx[(k + 1) % m]);
    }
  }

  double length() const {
    double s = 0.0;
    for_each_segment([&](std::size_t a, std::size_t b) { s += (vertices[b] - vertices[a]).norm(); });
    return s;
  }

  /// Half the length of the segments incident to each vertex.
  std::vector<double> dual_lengths() const {
    std::vector<double> l(vertices.size(), 0.0);
    for_each_segment([&](std::size_t a, std::size_t b) {
      const double e = (vertices[b] - vertices[a]).norm();
      l[a] += 0.5 * e;
      l[b] += 0.5 * e;
    });
    return l;
  }

  bool is_boundary(std::size_t v) const {
    return std::find(boundary_vertices.begin(), boundary_vertices.end(), v) != boundary_vertices.end();
  }

  /// Open or closed polyline with normals from `normal_fn` (must point out of E).
  static Interface from_polyline(const std::vector<Vec2>& pts, bool closed, const std::function<Vec2(const Vec2&)>& normal_fn,
                                 double resolution = 0.0) {
    Interface s;
    s.vertices = pts;
    s.normals.reserve(pts.size());
    for (const auto& p : pts) s.normals.push_back(normal_fn(p).normalized());
    Chain c;
    c.closed = closed;
    for (std::size_t k = 0; k < pts.size(); ++k) c.idx.push_back(k);
    s.chains.push_back(std::move(c));
    s.resolution = resolution;
    return s;
  }

  /// Appends another interface as additional components.
  void append(const Interface& other) {
    const std::size_t off = vertices.size();
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    normals.insert(normals.end(), other.normals.begin(), other.normals.end());
    for (auto c : other.chains) {
      for (auto& i : c.idx) i += off;
      chains.push_back(std::move(c));
    }
    for (auto b : other.boundary_vertices) boundary_vertices.push_back(b + off);
    resolution = std::max(resolution, other.resolution);
  }
};

/// Circle of radius r around `center` bounding E = disk, n vertices.
inline Interface make_circle_interface(const Vec2& center, double r, int n, double phase = 0.0) {
  std::vector<Vec2> pts(n);
  for (int k = 0; k < n; ++k) {
    const double t = phase + 2 * kPi * k / n;
    pts[k] = center + r * Vec2(std::cos(t), std::sin(t));
  }
  return Interface::from_polyline(pts, true, [&](const Vec2& p) { return Vec2(p - center); }, 2 * kPi * r / n);
}

/// Straight segment p -> q subdivided into n pieces; E lies on the side opposite `normal`.
inline Interface make_segment_interface(const Vec2& p, const Vec2& q, int n, const Vec2& normal) {
  std::vector<Vec2> pts(n + 1);
  for (int k = 0; k <= n; ++k) pts[k] = p + (q - p) * (static_cast<double>(k) / n);
  return Interface::from_polyline(pts, false, [&](const Vec2&) { return normal; }, (q - p).norm() / n);
}

namespace detail {

inline void trim_and_extend_end(Interface& s, Chain& c, bool at_front, const ConvexBody& body, double h) {
  auto& idx = c.idx;
  if (idx.size() < 2) return;
  auto end_ref = [&](std::size_t k) -> std::size_t& { return at_front ? idx[k] : idx[idx.size() - 1 - k]; };
  auto pop_end = [&] {
    if (at_front)
      idx.erase(idx.begin());
    else
      idx.pop_back();
  };
  std::optional<Vec2> outside;
  Vec2 outside_normal;
  while (idx.size() >= 2 && body.boundary_distance(Vec(s.vertices[end_ref(0)])) < -1e-12) {
    outside = s.vertices[end_ref(0)];
    outside_normal = s.normals[end_ref(0)];
    pop_end();
  }
  const std::size_t e = end_ref(0);
  const Vec2 end = s.vertices[e];
  Vec2 dir;
  if (outside) {
    dir = *outside - end;
  } else {
    dir = end - s.vertices[end_ref(1)];
  }
  if (dir.norm() == 0.0) return;
  dir.normalize();
  const auto iv = body.clip_line(Vec(end), Vec(dir));
  if (!iv) return;
  const double dist = iv->second;
  if (dist < 0.0 || dist > 2.0 * h) return;
  if (dist < 1e-12 * std::max(1.0, h)) {
    s.boundary_vertices.push_back(e);
    return;
  }
  s.vertices.push_back(end + dist * dir);
  s.normals.push_back(s.normals[e]);
  const std::size_t nv = s.vertices.size() - 1;
  if (at_front)
    idx.insert(idx.begin(), nv);
  else
    idx.push_back(nv);
  s.boundary_vertices.push_back(nv);
}

}  // namespace detail

/// Marching squares on the cell-center lattice of active cells; E = {f > level}.
/// Open ends near the body boundary are trimmed or extended onto it.
inline Interface extract(const ScalarField& f, double level = 0.0) {
  const Grid& g = *f.grid;
  const double h = g.spacing();
  Interface s;
  s.resolution = h;
  std::unordered_map<std::uint64_t, std::size_t> edge_vertex;
  std::vector<Vec2> grads(g.size());
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.active(k)) grads[k] = f.gradient(k);
  auto val = [&](std::size_t k) { return f[k] - level; };
  auto vertex_on = [&](std::size_t a, std::size_t b) {
    const std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double va = val(a), vb = val(b);
    const double t = va / (va - vb);
    const Vec2 p = g.center(a) + t * (g.center(b) - g.center(a));
    Vec2 grad = (1 - t) * grads[a] + t * grads[b];
    if (grad.norm() == 0.0) grad = (g.center(b) - g.center(a)) * (vb - va);
    s.vertices.push_back(p);
    s.normals.push_back(-grad.normalized());
    edge_vertex.emplace(key, s.vertices.size() - 1);
    return s.vertices.size() - 1;
  };
  std::vector<std::pair<std::size_t, std::size_t>> segs;
  for (int j = 0; j + 1 < g.ny(); ++j)
    for (int i = 0; i + 1 < g.nx(); ++i) {
      const std::size_t c[4] = {g.index(i, j), g.index(i + 1, j), g.index(i + 1, j + 1), g.index(i, j + 1)};
      if (!g.active(c[0]) || !g.active(c[1]) || !g.active(c[2]) || !g.active(c[3])) continue;
      int code = 0;
      for (int q = 0; q < 4; ++q)
        if (val(c[q]) > 0.0) code |= 1 << q;
      if (code == 0 || code == 15) continue;
      // edges: 0:(c0,c1) 1:(c1,c2) 2:(c2,c3) 3:(c3,c0)
      auto ev = [&](int e) { return vertex_on(c[e], c[(e + 1) % 4]); };
      auto add = [&](int e0, int e1) { segs.emplace_back(ev(e0), ev(e1)); };
      switch (code) {
        case 1: case 14: add(3, 0); break;
        case 2: case 13: add(0, 1); break;
        case 3: case 12: add(3, 1); break;
        case 4: case 11: add(1, 2); break;
        case 6: case 9: add(0, 2); break;
        case 7: case 8: add(2, 3); break;
        case 5: case 10: {
          const double mid = 0.25 * (val(c[0]) + val(c[1]) + val(c[2]) + val(c[3]));
          const bool corner0_in = (code == 5);
          // Connect around the corners whose sign differs from the center.
          if ((mid > 0.0) == corner0_in) {
            add(0, 1);
            add(2, 3);
          } else {
            add(3, 0);
            add(1, 2);
          }
          break;
        }
        default: break;
      }
    }
  if (segs.empty()) throw PreconditionError("field has no sign change on active cells: empty interface");

  // Chain the segments.
  std::vector<std::vector<std::size_t>> adj(s.vertices.size());
  for (std::size_t k = 0; k < segs.size(); ++k) {
    adj[segs[k].first].push_back(k);
    adj[segs[k].second].push_back(k);
  }
  std::vector<char> used(segs.size(), 0);
  auto other = [&](std::size_t seg, std::size_t v) { return segs[seg].first == v ? segs[seg].second : segs[seg].first; };
  auto walk = [&](std::size_t start) {
    Chain c;
    c.idx.push_back(start);
    std::size_t v = start;
    for (;;) {
      std::size_t next_seg = segs.size();
      for (auto sg : adj[v])
        if (!used[sg]) {
          next_seg = sg;
          break;
        }
      if (next_seg == segs.size()) break;
      used[next_seg] = 1;
      v = other(next_seg, v);
      if (v == start) {
        c.closed = true;
        break;
      }
      c.idx.push_back(v);
    }
    return c;
  };
  for (std::size_t v = 0; v < adj.size(); ++v)
    if (adj[v].size() == 1 && !used[adj[v][0]]) s.chains.push_back(walk(v));
  for (std::size_t k = 0; k < segs.size(); ++k)
    if (!used[k]) s.chains.push_back(walk(segs[k].first));

  // Drop vertices crowding their predecessor (keeps chain ends).
  const double min_gap = 0.25 * h;
  for (auto& c : s.chains) {
    if (c.idx.size() < 3) continue;
    std::vector<std::size_t> kept{c.idx.front()};
    for (std::size_t k = 1; k + 1 < c.idx.size(); ++k)
      if ((s.vertices[c.idx[k]] - s.vertices[kept.back()]).norm() >= min_gap) kept.push_back(c.idx[k]);
    if (kept.size() > 1 && (s.vertices[c.idx.back()] - s.vertices[kept.back()]).norm() < min_gap && !c.closed) kept.pop_back();
    kept.push_back(c.idx.back());
    if (c.closed && kept.size() > 3 && (s.vertices[kept.back()] - s.vertices[kept.front()]).norm() < min_gap) kept.pop_back();
    c.idx = std::move(kept);
  }
  for (auto& c : s.chains)
    if (!c.closed) {
      detail::trim_and_extend_end(s, c, true, g.body(), h);
      detail::trim_and_extend_end(s, c, false, g.body(), h);
    }
  // Compact away vertices no chain references.
  std::vector<std::size_t> remap(s.vertices.size(), SIZE_MAX);
  Interface out;
  out.resolution = h;
  for (auto& c : s.chains) {
    Chain nc;
    nc.closed = c.closed;
    for (auto v : c.idx) {
      if (remap[v] == SIZE_MAX) {
        remap[v] = out.vertices.size();
        out.vertices.push_back(s.vertices[v]);
        out.normals.push_back(s.normals[v]);
      }
      nc.idx.push_back(remap[v]);
    }
    out.chains.push_back(std::move(nc));
  }
  for (auto b : s.boundary_vertices)
    if (remap[b] != SIZE_MAX) out.boundary_vertices.push_back(remap[b]);
  return out;
}

/// Sum over segments of length times the weight at the segment midpoint.
template <class Weight>
double perimeter(const Interface& s, Weight&& w) {
  double p = 0.0;
  s.for_each_segment([&](std::size_t a, std::size_t b) {
    const Vec2 m = 0.5 * (s.vertices[a] + s.vertices[b]);
    p += (s.vertices[b] - s.vertices[a]).norm() * w(m);
  });
  return p;
}

/// Weighted perimeter P_mu with the density's interior weight.
inline double perimeter(const Interface& s, const Density& d) {
  return perimeter(s, [&](const Vec2& x) { return d.interior_weight(x); });
}

struct CurvatureData {
  std::vector<double> mean;      ///< H_S (2D: signed curvature, positive when S bends towards E)
  std::vector<double> norm_a2;   ///< |A_S|^2
  std::vector<double> weighted;  ///< H_{S,mu} = (n-1) H_S - nu . grad V
};

/// Curvature as the rate of turning of the unit normal along arclength,
/// (dnu/ds) . t, by centered differences over each vertex's neighbours.
inline CurvatureData curvature(const Interface& s, const Density& d) {
  CurvatureData cd;
  const std::size_t n = s.vertices.size();
  cd.mean.assign(n, 0.0);
  cd.norm_a2.assign(n, 0.0);
  cd.weighted.assign(n, 0.0);
  for (const auto& c : s.chains) {
    const std::size_t m = c.idx.size();
    if (m < 3) throw PreconditionError("curvature needs at least three vertices per component");
    for (std::size_t k = 0; k < m; ++k) {
      std::size_t a, b;
      if (c.closed) {
        a = c.idx[(k + m - 1) % m];
        b = c.idx[(k + 1) % m];
      } else {
        a = c.idx[k == 0 ? 0 : k - 1];
        b = c.idx[k + 1 == m ? m - 1 : k + 1];
      }
      const std::size_t v = c.idx[k];
      const Vec2 dp = s.vertices[b] - s.vertices[a];
      const double arc = (s.vertices[v] - s.vertices[a]).norm() + (s.vertices[b] - s.vertices[v]).norm();
      const double H = (arc > 0.0 && dp.norm() > 0.0) ? (s.normals[b] - s.normals[a]).dot(dp) / (dp.norm() * arc) : 0.0;
      cd.mean[v] = H;
      cd.norm_a2[v] = H * H;
      cd.weighted[v] = H - s.normals[v].dot(d.grad_potential(s.vertices[v]));
    }
  }
  return cd;
}

struct CurvatureStats {
  double mean = 0.0;
  double stddev = 0.0;
  double mean_abs = 0.0;
  std::size_t count = 0;
};

/// Statistics of a per-vertex quantity over vertices farther than `collar` from the body boundary.
inline CurvatureStats interior_stats(const Interface& s, const std::vector<double>& q, const ConvexBody& body, double collar) {
  CurvatureStats st;
  double sum = 0.0, sum2 = 0.0, sabs = 0.0;
  for (std::size_t v = 0; v < s.vertices.size(); ++v) {
    if (body.boundary_distance(Vec(s.vertices[v])) <= collar) continue;
    sum += q[v];
    sum2 += q[v] * q[v];
    sabs += std::abs(q[v]);
    ++st.count;
  }
  if (st.count == 0) return st;
  st.mean = sum / st.count;
  st.mean_abs = sabs / st.count;
  st.stddev = std::sqrt(std::max(0.0, sum2 / st.count - st.mean * st.mean));
  return st;
}

struct ContactAngle {
  std::size_t vertex = 0;
  double angle_deg = 90.0;      ///< angle between S and the boundary tangent
  double deviation_deg = 0.0;   ///< |angle - 90|
};

/// Angles at which S meets the body boundary at its boundary vertices.
inline std::vector<ContactAngle> contact_angle(const Interface& s, const ConvexBody& body) {
  if (s.boundary_vertices.empty()) throw PreconditionError("interface has no boundary vertices");
  const double h = s.resolution > 0.0 ? s.resolution : 1e-3;
  std::vector<ContactAngle> out;
  for (auto bv : s.boundary_vertices) {
    const Vec2 p = s.vertices[bv];
    if (std::abs(body.boundary_distance(Vec(p))) > 2.0 * h)
      throw PreconditionError("interface endpoint lies farther than 2h from the boundary");
    const Chain* chain = nullptr;
    bool front = true;
    for (const auto& c : s.chains)
      if (!c.closed && !c.idx.empty() && (c.idx.front() == bv || c.idx.back() == bv)) {
        chain = &c;
        front = c.idx.front() == bv;
        break;
      }
    if (!chain || chain->idx.size() < 2) throw PreconditionError("boundary vertex is not a chain end");
    // Chord directions back to arclength s and 2s, combined by Richardson
    // extrapolation of their angles (the chord angle lags the tangent by about kappa s / 2).
    const std::size_t m = chain->idx.size();
    auto vert = [&](std::size_t k) { return s.vertices[chain->idx[front ? k : m - 1 - k]]; };
    double total = 0.0;
    for (std::size_t k = 1; k < m; ++k) total += (vert(k) - vert(k - 1)).norm();
    auto point_at = [&](double target) {
      double arc = 0.0;
      for (std::size_t k = 1; k < m; ++k) {
        const double e = (vert(k) - vert(k - 1)).norm();
        if (arc + e >= target && e > 0.0) return Vec2(vert(k - 1) + (vert(k) - vert(k - 1)) * ((target - arc) / e));
        arc += e;
      }
      return vert(m - 1);
    };
    const double step = std::min(2.0 * h, total / 4.0);
    const Vec2 n = Vec2(body.halfspaces()[body.nearest_facet(Vec(p))].normal);
    const Vec2 tau(-n.y(), n.x());
    auto angle_of = [&](const Vec2& q) {
      const Vec2 t = p - q;
      return std::atan2(t.dot(tau), t.dot(n));
    };
    const double a1 = angle_of(point_at(step)), a2 = angle_of(point_at(2.0 * step));
    double diff = a1 - a2;
    while (diff > kPi) diff -= 2 * kPi;
    while (diff < -kPi) diff += 2 * kPi;
    const double theta = a1 + diff;  // angle to the boundary normal
    const double dev = std::acos(std::clamp(std::abs(std::cos(theta)), 0.0, 1.0)) * 180.0 / kPi;
    out.push_back({bv, 90.0 - dev, dev});
  }
  return out;
}

struct GraphFit {
  Vec2 direction = Vec2(0, 1);  ///< height direction a; S is {a . x = g(x - (a . x) a)}
  double lipschitz = std::numeric_limits<double>::infinity();
  bool is_graph = false;
};

namespace detail {

/// Lipschitz constant of S as a graph in height direction a, +inf if not single-valued.
inline double graph_slope(const Interface& s, const Vec2& a) {
  const Vec2 perp(-a.y(), a.x());
  double L = 0.0;
  std::vector<std::pair<double, double>> ranges;
  for (const auto& c : s.chains) {
    if (c.closed) return std::numeric_limits<double>::infinity();
    const std::size_t m = c.idx.size();
    if (m < 2) continue;
    double sign = 0.0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k + 1 < m; ++k) {
      const Vec2 p = s.vertices[c.idx[k]], q = s.vertices[c.idx[k + 1]];
      const double ds = perp.dot(q - p), dh = a.dot(q - p);
      if (ds == 0.0) return std::numeric_limits<double>::infinity();
      const double sg = ds > 0 ? 1.0 : -1.0;
      if (sign == 0.0) sign = sg;
      if (sg != sign) return std::numeric_limits<double>::infinity();
      L = std::max(L, std::abs(dh / ds));
      lo = std::min({lo, perp.dot(p), perp.dot(q)});
      hi = std::max({hi, perp.dot(p), perp.dot(q)});
    }
    ranges.emplace_back(lo, hi);
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t k = 1; k < ranges.size(); ++k)
    if (ranges[k].first < ranges[k - 1].second) return std::numeric_limits<double>::infinity();
  return L;
}

}  // namespace detail

/// Scans height directions at 0.25 degree resolution over a half-turn and
/// returns the one with the smallest Lipschitz constant, refined locally.
inline GraphFit graph_fit(const Interface& s, int directions = 720) {
  GraphFit best;
  double best_angle = 0.0;
  for (int k = 0; k < directions; ++k) {
    const double phi = kPi * k / directions;
    const Vec2 a(std::cos(phi), std::sin(phi));
    const double L = detail::graph_slope(s, a);
    if (L < best.lipschitz) {
      best.lipschitz = L;
      best.direction = a;
      best.is_graph = std::isfinite(L);
      best_angle = phi;
    }
  }
  if (!best.is_graph) return best;
  const double step = kPi / directions;
  for (int k = -40; k <= 40; ++k) {
    const double phi = best_angle + step * k / 40.0;
    const Vec2 a(std::cos(phi), std::sin(phi));
    const double L = detail::graph_slope(s, a);
    if (L < best.lipschitz) {
      best.lipschitz = L;
      best.direction = a;
    }
  }
  return best;
}

struct DistanceRatio {
  double max_ratio = 1.0;
  bool disconnected = false;
  std::vector<double> per_component;
};

/// max over sampled vertex pairs of (shortest path along S) / |p - q|, per component.
inline DistanceRatio intrinsic_extrinsic_ratio(const Interface& s, int samples_per_component = 48) {
  DistanceRatio out;
  out.disconnected = s.chains.size() > 1;
  const std::size_t n = s.vertices.size();
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  s.for_each_segment([&](std::size_t a, std::size_t b) {
    const double e = (s.vertices[b] - s.vertices[a]).norm();
    adj[a].emplace_back(b, e);
    adj[b].emplace_back(a, e);
  });
  out.max_ratio = 1.0;
  for (const auto& c : s.chains) {
    const std::size_t m = c.idx.size();
    const std::size_t stride = std::max<std::size_t>(1, m / std::max(1, samples_per_component));
    std::vector<std::size_t> picks;
    for (std::size_t k = 0; k < m; k += stride) picks.push_back(c.idx[k]);
    if (!c.closed && picks.back() != c.idx.back()) picks.push_back(c.idx.back());
    double comp = 1.0;
    for (auto src : picks) {
      std::vector<double> dist(n, std::numeric_limits<double>::infinity());
      using Item = std::pair<double, std::size_t>;
      std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
      dist[src] = 0.0;
      pq.emplace(0.0, src);
      while (!pq.empty()) {
        auto [dv, v] = pq.top();
        pq.pop();
        if (dv > dist[v]) continue;
        for (auto [u, e] : adj[v])
          if (dv + e < dist[u]) {
            dist[u] = dv + e;
            pq.emplace(dist[u], u);
          }
      }
      for (auto dst : picks) {
        const double ext = (s.vertices[dst] - s.vertices[src]).norm();
        if (ext <= 1e-12 || !std::isfinite(dist[dst])) continue;
        comp = std::max(comp, dist[dst] / ext);
      }
    }
    out.per_component.push_back(comp);
    out.max_ratio = std::max(out.max_ratio, comp);
  }
  return out;
}

/// Largest distance from a vertex to the line through the origin with the given
/// direction, minimized over directions (one-sided Hausdorff distance to a diameter).
inline std::pair<double, Vec2> distance_to_best_line_through(const Interface& s, const Vec2& point = Vec2::Zero()) {
  auto worst = [&](double phi) {
    const Vec2 nrm(-std::sin(phi), std::cos(phi));
    double d = 0.0;
    for (const auto& v : s.vertices) d = std::max(d, std::abs(nrm.dot(v - point)));
    return d;
  };
  double best = std::numeric_limits<double>::infinity(), best_phi = 0.0;
  for (int k = 0; k < 1440; ++k) {
    const double phi = kPi * k / 1440;
    const double d = worst(phi);
    if (d < best) {
      best = d;
      best_phi = phi;
    }
  }
  double lo = best_phi - kPi / 1440, hi = best_phi + kPi / 1440;
  for (int it = 0; it < 100; ++it) {
    const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
    if (worst(m1) < worst(m2)) hi = m2; else lo = m1;
  }
  const double phi = 0.5 * (lo + hi);
  const double d = worst(phi);
  if (d < best) {
    best = d;
    best_phi = phi;
  }
  return {best, Vec2(std::cos(best_phi), std::sin(best_phi))};
}

}  // namespace isolab
