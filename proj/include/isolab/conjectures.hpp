#pragma once

// Quantitative checks on a labelled region E: two-hyperplane margin, hull
// fraction, cone fit, the KLS ratio and Milman's chain of inequalities.

#include <boost/math/tools/roots.hpp>
#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "isolab/convex.hpp"
#include "isolab/digest.hpp"
#include "isolab/errors.hpp"
#include "isolab/grid.hpp"
#include "isolab/measure.hpp"
#include "isolab/parallel.hpp"
#include "isolab/surface.hpp"

namespace isolab {

/// E = {level > 0} on a grid, with the density it is measured against.
struct RegionLabel {
  ScalarField level;
  std::shared_ptr<const Density> density;
  std::vector<double> weight;  ///< cell masses normalized to total 1
  double alpha = 0.0;
  bool minimizer = false;  ///< produced by a converged perimeter minimization

  const Grid& grid() const { return *level.grid; }
  bool in(std::size_t k) const { return level[k] > 0.0; }

  static RegionLabel from_field(ScalarField f, const Density& d, bool minimizer = false) {
    RegionLabel r;
    r.level = std::move(f);
    r.density = std::make_shared<const Density>(d);
    r.minimizer = minimizer;
    const Grid& g = r.grid();
    r.weight.assign(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (g.active(k)) r.weight[k] = g.mask(k) * d.interior_weight(g.center(k)) * g.cell_area();
    const double total = pairwise_sum(r.weight);
    if (!(total > 0.0)) throw DegenerateInput("density has no mass on the grid");
    for (auto& w : r.weight) w /= total;
    std::vector<double> in_e(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (g.active(k) && r.in(k)) in_e[k] = r.weight[k];
    r.alpha = pairwise_sum(in_e);
    if (!(r.alpha > 0.0 && r.alpha < 1.0)) throw PreconditionError("labelled region must have mass strictly between 0 and 1");
    return r;
  }

  template <class Phi>
  static RegionLabel from_level(GridPtr g, const Density& d, Phi&& phi, bool minimizer = false) {
    return from_field(ScalarField::sample(std::move(g), std::forward<Phi>(phi)), d, minimizer);
  }

  std::string digest() const {
    Sha256 h;
    const Grid& g = grid();
    const double dims[5] = {double(g.nx()), double(g.ny()), g.spacing(), g.origin().x(), g.origin().y()};
    h.update(std::span<const double>(dims, 5));
    h.update(density->name());
    h.update(std::span<const double>(level.values));
    return h.hex();
  }
};

namespace detail {

inline double cell_reach(const Vec2& a, double h) { return 0.5 * h * (std::abs(a.x()) + std::abs(a.y())); }

inline double boundary_length(const ConvexBody& b) {
  const auto& v = b.vertices();
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) s += (v[(k + 1) % v.size()] - v[k]).norm();
  return s;
}

inline double wrap_angle(double x) {
  x = std::fmod(x + kPi, 2 * kPi);
  if (x < 0) x += 2 * kPi;
  return x - kPi;
}

}  // namespace detail

struct DirectionScan {
  double angle = 0.0;
  double c1 = 0.0;  ///< least c with {a.x >= c} inside E
  double c2 = 0.0;  ///< least c with {a.x <= -c} inside the complement
  double b = 0.0;   ///< mass of {a.x >= max(c1, c2)} on the grid
};

/// Offsets for a single direction. Whole cells count: a cell of the wrong
/// label blocks the halfspace if any part of it lies inside.
inline DirectionScan two_hyperplane_at(const RegionLabel& E, const Vec2& a) {
  const Grid& g = E.grid();
  const double reach = detail::cell_reach(a, g.spacing());
  double c1 = -std::numeric_limits<double>::infinity(), c2 = c1;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!g.active(k)) continue;
    const double s = a.dot(g.center(k));
    if (E.in(k))
      c2 = std::max(c2, -s + reach);
    else
      c1 = std::max(c1, s + reach);
  }
  DirectionScan d;
  d.angle = std::atan2(a.y(), a.x());
  d.c1 = c1;
  d.c2 = c2;
  const double c = std::max({c1, c2, 0.0});
  std::vector<double> part(g.size(), 0.0);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.active(k) && a.dot(g.center(k)) >= c) part[k] = E.weight[k];
  d.b = pairwise_sum(part);
  return d;
}

struct TwoHyperplane {
  double b_star = 0.0;     ///< mass of the witness, by quadrature of the marginal
  double b_grid = 0.0;     ///< same on the grid
  Halfspace witness{vec2(1, 0), 0.0};
  bool exploratory = false;  ///< mass of E outside [0.45, 0.55]
  std::vector<DirectionScan> scan;
};

/// Largest halfspace H with H inside E and -H inside the complement.
inline TwoHyperplane two_hyperplane_margin(const RegionLabel& E, int directions = 1440) {
  if (!E.density->symmetric()) throw PreconditionError("two-hyperplane margin needs a symmetric density");
  TwoHyperplane r;
  r.exploratory = E.alpha < 0.45 || E.alpha > 0.55;
  r.scan.resize(directions);
  parallel_for(static_cast<std::size_t>(directions), [&](std::size_t k) {
    const double phi = 2 * kPi * static_cast<double>(k) / directions;
    r.scan[k] = two_hyperplane_at(E, Vec2(std::cos(phi), std::sin(phi)));
  });
  std::size_t best = 0;
  for (std::size_t k = 1; k < r.scan.size(); ++k)
    if (r.scan[k].b > r.scan[best].b) best = k;
  DirectionScan top = r.scan[best];
  // Local refinement to 1/40 of the scan step.
  const double step = 2 * kPi / directions;
  for (int j = -40; j <= 40; ++j) {
    if (j == 0) continue;
    const double phi = 2 * kPi * static_cast<double>(best) / directions + step * j / 40.0;
    const auto d = two_hyperplane_at(E, Vec2(std::cos(phi), std::sin(phi)));
    if (d.b > top.b) top = d;
  }
  r.b_grid = top.b;
  if (!(top.b > 0.0)) return r;
  const Vec2 a(std::cos(top.angle), std::sin(top.angle));
  const double c = std::max({top.c1, top.c2, 0.0});
  r.witness = Halfspace(Vec(a), c);
  r.b_star = marginal(*E.density, a, {}).tail(c);
  return r;
}

/// mu(hull(E)) / mu(Omega) for a uniform density; the hull is taken over the
/// corners of the cells labelled E, so it contains every such cell.
inline double hull_fraction(const RegionLabel& E, const ConvexBody& body) {
  if (!E.density->is_uniform()) throw PreconditionError("hull fraction needs a uniform density");
  const Grid& g = E.grid();
  const double h = g.spacing();
  std::vector<Vec> pts;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!g.active(k) || !E.in(k)) continue;
    const Vec2 c = g.center(k);
    for (int sx : {-1, 1})
      for (int sy : {-1, 1}) pts.push_back(Vec(c + 0.5 * h * Vec2(sx, sy)));
  }
  const auto hull = convex_hull(pts);
  auto hs = hull.halfspaces();
  for (const auto& b : body.halfspaces()) hs.push_back(b);
  const ConvexBody cap(std::move(hs), false);
  return std::min(1.0, cap.volume() / body.volume());
}

struct ConeFit {
  Cone cone{vec2(0, 0), vec2(0, 1), kPi / 2};
  double mass = 0.0;
  bool halfspace_fallback = false;  ///< the best candidate is the two-hyperplane witness
  std::vector<std::pair<double, double>> scan;  ///< (axis angle, feasible half-angle)
};

namespace detail {

/// Angular mass density rho(theta) = int_0^R(theta) w(r theta) r dr on a
/// periodic table, integrated to a cumulative function.
class AngularMass {
 public:
  AngularMass(const Density& d, int samples = 2880) : n_(samples), cum_(samples + 1, 0.0) {
    const double dt = 2 * kPi / n_;
    std::vector<double> rho(n_);
    parallel_for(static_cast<std::size_t>(n_), [&](std::size_t j) {
      const double t = (static_cast<double>(j) + 0.5) * dt;
      const Vec2 u(std::cos(t), std::sin(t));
      const auto iv = d.support().clip_line(vec2(0, 0), Vec(u));
      const double R = iv ? std::max(0.0, iv->second) : 0.0;
      rho[j] = integrate([&](double r) { return d.interior_weight(r * u) * r; }, 0.0, R, {}, 1e-11, nullptr, 10);
    });
    for (int j = 0; j < n_; ++j) cum_[j + 1] = cum_[j] + rho[j] * dt;
  }

  double total() const { return cum_.back(); }

  /// Mass of the sector [lo, hi] (radians, hi >= lo, width at most 2 pi).
  double sector(double lo, double hi) const { return at(hi) - at(lo); }

 private:
  double at(double t) const {
    const double turns = std::floor(t / (2 * kPi));
    const double x = (t - turns * 2 * kPi) / (2 * kPi) * n_;
    const int j = std::min(n_ - 1, static_cast<int>(x));
    return turns * total() + cum_[j] + (x - j) * (cum_[j + 1] - cum_[j]);
  }

  int n_;
  std::vector<double> cum_;
};

/// Angular interval [center + lo, center + hi] seen from the origin, or nullopt
/// when the cell contains the origin in its interior.
struct Span {
  double center, lo, hi;
};

inline std::optional<Span> angular_span(const Vec2& c, double h) {
  const double inner = 0.5 * h * (1 - 1e-9);
  if (std::abs(c.x()) < inner && std::abs(c.y()) < inner) return std::nullopt;
  Span s{std::atan2(c.y(), c.x()), 0.0, 0.0};
  bool any = false;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1}) {
      const Vec2 p = c + 0.5 * h * Vec2(sx, sy);
      if (p.norm() < 1e-12 * h) continue;
      const double d = wrap_angle(std::atan2(p.y(), p.x()) - s.center);
      s.lo = any ? std::min(s.lo, d) : d;
      s.hi = any ? std::max(s.hi, d) : d;
      any = true;
    }
  return s;
}

inline double angular_gap(double phi, const Span& s) {
  const double d = wrap_angle(phi - s.center);
  if (d >= s.lo && d <= s.hi) return 0.0;
  return std::min(std::abs(wrap_angle(d - s.lo)), std::abs(wrap_angle(d - s.hi)));
}

}  // namespace detail

/// Best circular cone with apex 0 such that the cone lies in E and its mirror
/// in the complement, cellwise; the two-hyperplane witness competes as the
/// half-angle pi/2 candidate with shifted apex.
inline ConeFit cone_fit(const RegionLabel& E, const TwoHyperplane* witness = nullptr, int axes = 1440) {
  if (!E.density->symmetric()) throw PreconditionError("cone fit needs a symmetric density");
  const Grid& g = E.grid();
  struct Cell {
    detail::Span span;
    bool in;
  };
  std::vector<Cell> cells;
  bool origin_blocked_in = false, origin_blocked_out = false;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!g.active(k)) continue;
    const auto s = detail::angular_span(g.center(k), g.spacing());
    if (!s) {
      (E.in(k) ? origin_blocked_in : origin_blocked_out) = true;
      continue;
    }
    cells.push_back({*s, E.in(k)});
  }
  const detail::AngularMass rho(*E.density);
  ConeFit r;
  r.scan.resize(axes);
  std::vector<double> mass(axes, 0.0);
  parallel_for(static_cast<std::size_t>(axes), [&](std::size_t j) {
    const double phi = 2 * kPi * static_cast<double>(j) / axes;
    double beta = (origin_blocked_in || origin_blocked_out) ? 0.0 : kPi / 2;
    for (const auto& c : cells) {
      if (beta <= 0.0) break;
      beta = std::min(beta, detail::angular_gap(c.in ? phi + kPi : phi, c.span));
    }
    r.scan[j] = {phi, beta};
    mass[j] = beta > 0.0 ? rho.sector(phi - beta, phi + beta) : 0.0;
  });
  std::size_t best = 0;
  for (std::size_t j = 1; j < mass.size(); ++j)
    if (mass[j] > mass[best]) best = j;
  if (mass[best] > 0.0) {
    const double phi = r.scan[best].first, beta = r.scan[best].second;
    r.cone = Cone(vec2(0, 0), vec2(std::cos(phi), std::sin(phi)), beta);
    r.mass = mass[best];
  }
  if (witness && witness->b_star > r.mass) {
    const Vec a = witness->witness.normal;
    r.cone = Cone(a * witness->witness.offset, a, kPi / 2);
    r.mass = witness->b_star;
    r.halfspace_fallback = true;
  }
  return r;
}

struct KlsCheck {
  double perimeter = 0.0;  ///< P_mu(E)
  double min_cut = 0.0;    ///< min over directions of w_a(0)
  double kls_ratio = 0.0;
  double witness_cut = 0.0;  ///< w_a(0) for the witness direction
  double bound = 0.0;        ///< w_a(0) / (4 log(1/b*))
  bool bound_ok = false;
  bool indeterminate = false;
};

inline double weighted_perimeter(const RegionLabel& E) { return perimeter(extract(E.level, 0.0), *E.density); }

inline KlsCheck kls_check(const RegionLabel& E, const TwoHyperplane& th, int directions = 180) {
  if (!E.density->symmetric()) throw PreconditionError("KLS check needs a symmetric density");
  KlsCheck r;
  r.perimeter = weighted_perimeter(E);
  r.min_cut = std::numeric_limits<double>::infinity();
  for (int k = 0; k < directions; ++k) {
    const double phi = kPi * k / directions;
    r.min_cut = std::min(r.min_cut, slice_mass(*E.density, Vec2(std::cos(phi), std::sin(phi)), 0.0));
  }
  r.kls_ratio = r.perimeter / r.min_cut;
  if (!(th.b_star > 0.0)) {
    r.indeterminate = true;
    return r;
  }
  const Vec2 a = th.witness.normal;
  r.witness_cut = slice_mass(*E.density, a, 0.0);
  r.bound = r.witness_cut / (4.0 * std::log(1.0 / std::min(th.b_star, 0.5)));
  r.bound_ok = r.perimeter >= r.bound - 1e-9 * r.bound;
  return r;
}

struct MilmanChain {
  double b_star = 0.0;
  double t_star = 0.0;  ///< offset at which each of +-H carries mass b*/2
  double gap = 0.0;     ///< L = 2 t*
  double cut = 0.0;     ///< w_a(0)
  double perimeter = 0.0;
  double gap_product = 0.0;   ///< w_a(0) L
  double gap_bound = 0.0;     ///< log(1/b*)
  double main_product = 0.0;  ///< L P_mu(E)
  bool gap_ok = false;
  bool main_ok = false;
  bool main_asserted = false;
  std::vector<double> t;
  std::vector<double> grow_in;   ///< mu(E_t \ E)
  std::vector<double> grow_out;  ///< mu((E^c)_t \ E^c)
  bool growth_ok = true;         ///< min of the two <= t P_mu(E) on the sampled t
};

inline MilmanChain milman_chain_check(const RegionLabel& E, const TwoHyperplane& th, double tol = 1e-9) {
  if (!(th.b_star > 0.0 && th.b_star <= 0.5 + 1e-6)) throw PreconditionError("Milman chain needs b* in (0, 1/2]");
  MilmanChain r;
  r.b_star = std::min(th.b_star, 0.5);
  const Vec2 a = th.witness.normal;
  const auto m = marginal(*E.density, a, {});
  const double hi = m.range().second;
  std::uintmax_t iters = 200;
  const auto root = boost::math::tools::toms748_solve([&](double s) { return m.tail(s) - 0.5 * r.b_star; }, 0.0, hi,
                                                      boost::math::tools::eps_tolerance<double>(40), iters);
  r.t_star = 0.5 * (root.first + root.second);
  r.gap = 2.0 * r.t_star;
  r.cut = slice_mass(*E.density, a, 0.0);
  const auto S = extract(E.level, 0.0);
  r.perimeter = perimeter(S, *E.density);
  r.gap_product = r.cut * r.gap;
  r.gap_bound = std::log(1.0 / r.b_star);
  r.gap_ok = r.gap_product <= r.gap_bound + tol;
  r.main_product = r.gap * r.perimeter;
  r.main_ok = r.main_product >= 0.25 - tol;
  r.main_asserted = E.minimizer;

  // Growth of E and its complement by distance t.
  const Grid& g = E.grid();
  std::vector<double> dist(g.size(), std::numeric_limits<double>::infinity());
  parallel_for(g.size(), [&](std::size_t k) {
    if (!g.active(k)) return;
    const Vec2 x = g.center(k);
    double best = std::numeric_limits<double>::infinity();
    S.for_each_segment([&](std::size_t i, std::size_t j) {
      const Vec2 p = S.vertices[i], q = S.vertices[j];
      const Vec2 d = q - p;
      const double len2 = d.squaredNorm();
      const double s = len2 > 0 ? std::clamp((x - p).dot(d) / len2, 0.0, 1.0) : 0.0;
      best = std::min(best, (p + s * d - x).norm());
    });
    dist[k] = best;
  });
  for (int j = 1; j <= 8; ++j) {
    const double t = r.gap * j / 8.0;
    std::vector<double> in(g.size(), 0.0), out(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!g.active(k)) continue;
      // Partial cover of a cell whose center is at distance d: linear across one cell width.
      const double cover = std::clamp((t - dist[k]) / g.spacing() + 0.5, 0.0, 1.0);
      (E.in(k) ? out : in)[k] = cover * E.weight[k];
    }
    r.t.push_back(t);
    r.grow_in.push_back(pairwise_sum(in));
    r.grow_out.push_back(pairwise_sum(out));
    r.growth_ok = r.growth_ok && std::min(r.grow_in.back(), r.grow_out.back()) <= t * r.perimeter + 1e-9;
  }
  return r;
}

enum class Verdict { consistent, violated, indeterminate };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::consistent: return "consistent";
    case Verdict::violated: return "violated";
    default: return "indeterminate";
  }
}

struct ConjectureReport {
  static constexpr int kSchemaVersion = 1;
  std::string name;
  std::string inputs_digest;
  std::map<std::string, double> scalars;
  Verdict verdict = Verdict::indeterminate;
  std::vector<std::string> notes;
};

/// All checks that apply to E. Hull fraction needs a uniform density and the body.
inline std::vector<ConjectureReport> conjecture_battery(const RegionLabel& E, const ConvexBody* body = nullptr,
                                                       const TwoHyperplane* precomputed = nullptr) {
  std::vector<ConjectureReport> out;
  const std::string digest = E.digest();
  auto report = [&](std::string name) {
    ConjectureReport r;
    r.name = std::move(name);
    r.inputs_digest = digest;
    r.scalars["alpha"] = E.alpha;
    return r;
  };
  const TwoHyperplane th = precomputed ? *precomputed : two_hyperplane_margin(E);
  {
    auto r = report("two_hyperplane");
    r.scalars["b_star"] = th.b_star;
    r.scalars["b_star_grid"] = th.b_grid;
    r.scalars["witness_angle"] = std::atan2(th.witness.normal.y(), th.witness.normal.x());
    r.scalars["witness_offset"] = th.witness.offset;
    if (th.exploratory) {
      r.verdict = Verdict::indeterminate;
      r.notes.push_back("mass of E outside [0.45, 0.55]; exploratory");
    } else {
      r.verdict = th.b_star > 0.0 ? Verdict::consistent : Verdict::violated;
    }
    out.push_back(std::move(r));
  }
  if (body && E.density->is_uniform()) {
    auto r = report("hull_fraction");
    const double f = hull_fraction(E, *body);
    r.scalars["hull_fraction"] = f;
    // A proper subset must leave more than a two-cell layer along the boundary.
    const double layer = 2.0 * E.grid().spacing() * detail::boundary_length(*body) / body->volume();
    r.scalars["layer_tolerance"] = layer;
    if (E.alpha > 0.5) {
      r.verdict = Verdict::indeterminate;
      r.notes.push_back("mass above 1/2; reported without verdict");
    } else {
      r.verdict = f < 1.0 - layer ? Verdict::consistent : Verdict::violated;
    }
    out.push_back(std::move(r));
  }
  {
    auto r = report("cone");
    const auto cf = cone_fit(E, &th);
    r.scalars["cone_mass"] = cf.mass;
    r.scalars["cone_half_angle"] = cf.cone.half_angle;
    r.scalars["cone_axis_angle"] = std::atan2(cf.cone.axis.y(), cf.cone.axis.x());
    r.scalars["cone_apex_x"] = cf.cone.apex[0];
    r.scalars["cone_apex_y"] = cf.cone.apex[1];
    r.scalars["halfspace_fallback"] = cf.halfspace_fallback ? 1.0 : 0.0;
    r.verdict = cf.mass > 0.0 ? Verdict::consistent : Verdict::indeterminate;
    out.push_back(std::move(r));
  }
  {
    auto r = report("kls");
    const auto k = kls_check(E, th);
    r.scalars["perimeter"] = k.perimeter;
    r.scalars["min_cut"] = k.min_cut;
    r.scalars["kls_ratio"] = k.kls_ratio;
    r.scalars["bound"] = k.bound;
    r.verdict = k.indeterminate ? Verdict::indeterminate : (k.bound_ok ? Verdict::consistent : Verdict::violated);
    if (k.indeterminate) r.notes.push_back("b* = 0: bound vacuous");
    out.push_back(std::move(r));
  }
  {
    auto r = report("milman_chain");
    if (th.b_star > 0.0) {
      const auto m = milman_chain_check(E, th);
      r.scalars["L"] = m.gap;
      r.scalars["L_gap"] = m.gap_bound - m.gap_product;
      r.scalars["gap_product"] = m.gap_product;
      r.scalars["gap_bound"] = m.gap_bound;
      r.scalars["main_product"] = m.main_product;
      r.scalars["main_residual"] = m.main_product - 0.25;
      const bool ok = m.gap_ok && (!m.main_asserted || m.main_ok);
      r.verdict = ok ? Verdict::consistent : Verdict::violated;
      if (!m.main_asserted) r.notes.push_back("input not a converged minimizer; L P >= 1/4 reported only");
      if (!m.growth_ok) r.notes.push_back("sampled growth exceeded t P on both sides");
    } else {
      r.verdict = Verdict::indeterminate;
      r.notes.push_back("b* = 0");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace isolab
