#pragma once

// Neumann eigenpairs on masked grids, hot-spots diagnostics, nodal sets and
// eigen-data along a family of bodies interpolated through support functions.

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "isolab/convex.hpp"
#include "isolab/errors.hpp"
#include "isolab/grid.hpp"
#include "isolab/parallel.hpp"
#include "isolab/surface.hpp"

namespace isolab {

struct EigenResult {
  double lambda = 0.0;
  ScalarField u;  ///< zero on inactive cells; integral of u^2 is 1, integral of u is 0
  double residual = 0.0;
  double mean = 0.0;
  bool degenerate = false;
  int iterations = 0;
};

struct NeumannOptions {
  double tol = 1e-9;  ///< relative residual |Ku - lambda M u| / (lambda |u|) in the M-dual norm
  int max_iters = 2000;
  int extra_block = 4;
  double degeneracy_gap = 1e-6;
  std::uint64_t seed = 0x5eed;
};

namespace detail {

/// Finite-volume Neumann operator on active cells. Fluxes cross faces in
/// proportion to their open aperture; no flux leaves through the body boundary.
struct NeumannSystem {
  GridPtr grid;
  std::vector<std::size_t> cells;  ///< compact index -> grid cell
  std::vector<long> compact;       ///< grid cell -> compact index or -1
  Eigen::SparseMatrix<double> K;
  Eigen::VectorXd m;  ///< lumped cell areas

  explicit NeumannSystem(GridPtr g) : grid(std::move(g)) {
    const Grid& gr = *grid;
    compact.assign(gr.size(), -1);
    for (std::size_t k = 0; k < gr.size(); ++k)
      if (gr.active(k)) {
        compact[k] = static_cast<long>(cells.size());
        cells.push_back(k);
      }
    const auto n = static_cast<Eigen::Index>(cells.size());
    m.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) m[i] = gr.mask(cells[i]) * gr.cell_area();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * gr.faces().size());
    for (const auto& f : gr.faces()) {
      const long a = compact[f.a], b = compact[f.b];
      t.emplace_back(a, a, f.aperture);
      t.emplace_back(b, b, f.aperture);
      t.emplace_back(a, b, -f.aperture);
      t.emplace_back(b, a, -f.aperture);
    }
    K.resize(n, n);
    K.setFromTriplets(t.begin(), t.end());
  }

  Eigen::Index size() const { return static_cast<Eigen::Index>(cells.size()); }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y(x.size());
    parallel_for(static_cast<std::size_t>(x.size()), [&](std::size_t i) {
      double s = 0.0;
      for (Eigen::SparseMatrix<double>::InnerIterator it(K, static_cast<Eigen::Index>(i)); it; ++it)
        s += it.value() * x[it.row()];
      y[static_cast<Eigen::Index>(i)] = s;
    });
    return y;
  }

  ScalarField to_field(const Eigen::VectorXd& x) const {
    ScalarField f(grid, 0.0);
    for (std::size_t i = 0; i < cells.size(); ++i) f.values[cells[i]] = x[static_cast<Eigen::Index>(i)];
    return f;
  }
};

inline void remove_mean(Eigen::VectorXd& x, const Eigen::VectorXd& m) { x.array() -= m.dot(x) / m.sum(); }

}  // namespace detail

/// First k nonconstant Neumann eigenpairs, ascending. When the last requested
/// eigenvalue is within the degeneracy gap of the next, the partner is
/// returned too and both are flagged.
inline std::vector<EigenResult> solve_neumann(const ConvexBody& body, GridPtr grid, int k = 1,
                                              const NeumannOptions& opt = {}) {
  if (body.dim() != 2) throw DimensionMismatch("Neumann solver is 2D");
  if (!grid) throw PreconditionError("no grid");
  if (std::max(grid->nx(), grid->ny()) < 64) throw ResolutionError("Neumann solver needs at least 64 cells across");
  if (k < 1) throw PreconditionError("k must be positive");
  detail::NeumannSystem sys(grid);
  const Eigen::Index n = sys.size();
  const int want = k + 1;
  const int b = want + opt.extra_block;
  if (n < 4 * b) throw ResolutionError("too few active cells for the requested eigenpairs");

  // lambda_1 >= pi^2 / diam^2 on convex bodies, so this shift stays well below it.
  const Vec ext = body.bbox().extent();
  const double sigma = 1.0 / ext.squaredNorm();
  Eigen::SparseMatrix<double> A = sys.K;
  for (Eigen::Index i = 0; i < n; ++i) A.coeffRef(i, i) += sigma * sys.m[i];
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw SolverError("factorization of the shifted Neumann operator failed");

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd X(n, b);
  for (Eigen::Index j = 0; j < b; ++j)
    for (Eigen::Index i = 0; i < n; ++i) X(i, j) = nd(rng);

  Eigen::VectorXd lam;
  Eigen::MatrixXd V;
  std::vector<double> res(want, 1.0);
  int it = 0;
  for (; it < opt.max_iters; ++it) {
    Eigen::MatrixXd Y(n, b);
    for (Eigen::Index j = 0; j < b; ++j) {
      Eigen::VectorXd x = X.col(j);
      detail::remove_mean(x, sys.m);
      Eigen::VectorXd y = ldlt.solve(sys.m.cwiseProduct(x));
      detail::remove_mean(y, sys.m);
      Y.col(j) = y;
    }
    // Rayleigh-Ritz in the M inner product.
    Eigen::MatrixXd KY(n, b);
    for (Eigen::Index j = 0; j < b; ++j) KY.col(j) = sys.apply(Y.col(j));
    const Eigen::MatrixXd MY = sys.m.asDiagonal() * Y;
    Eigen::MatrixXd Kr = Y.transpose() * KY, Mr = Y.transpose() * MY;
    Kr = 0.5 * (Kr + Kr.transpose()).eval();
    Mr = 0.5 * (Mr + Mr.transpose()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Kr, Mr);
    if (es.info() != Eigen::Success) throw SolverError("Rayleigh-Ritz step failed");
    lam = es.eigenvalues();
    V = Y * es.eigenvectors();
    X = V;
    bool done = true;
    for (int j = 0; j < want; ++j) {
      const Eigen::VectorXd v = V.col(j);
      const Eigen::VectorXd r = sys.apply(v) - lam[j] * sys.m.cwiseProduct(v);
      const double rn = std::sqrt(r.cwiseAbs2().cwiseQuotient(sys.m).sum());
      const double vn = std::sqrt(sys.m.dot(v.cwiseAbs2()));
      res[j] = rn / (std::abs(lam[j]) * vn);
      done = done && res[j] < opt.tol;
    }
    if (done) break;
  }
  if (it == opt.max_iters) throw SolverError("Neumann eigen-iteration did not converge");

  auto make = [&](int j) {
    Eigen::VectorXd v = V.col(j);
    detail::remove_mean(v, sys.m);
    v /= std::sqrt(sys.m.dot(v.cwiseAbs2()));
    // Sign: positive at the cell of largest magnitude (lowest index on ties).
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    EigenResult e;
    e.lambda = lam[j];
    e.u = sys.to_field(v);
    e.residual = res[j];
    e.mean = sys.m.dot(v);
    e.iterations = it + 1;
    if (!(e.lambda > 0.0)) throw InvariantViolation("nonpositive Neumann eigenvalue");
    return e;
  };
  std::vector<EigenResult> out;
  for (int j = 0; j < want; ++j) out.push_back(make(j));
  for (int j = 0; j + 1 < want; ++j)
    if (std::abs(out[j + 1].lambda - out[j].lambda) / out[j].lambda < opt.degeneracy_gap)
      out[j].degenerate = out[j + 1].degenerate = true;
  const auto keep = static_cast<std::size_t>(out[k - 1].degenerate && out[k].degenerate ? k + 1 : k);
  out.resize(keep);
  return out;
}

/// Integral of u * v over the grid.
inline double inner(const ScalarField& u, const ScalarField& v) {
  const Grid& g = *u.grid;
  return parallel_sum(g.size(), [&](std::size_t k) { return g.active(k) ? g.mask(k) * g.cell_area() * u[k] * v[k] : 0.0; });
}

struct HotSpotsOptions {
  int directions = 720;
  double collar = 0.0;  ///< absolute width; 0 means two cells
};

struct HotSpotsReport {
  Vec2 argmax = Vec2::Zero();
  Vec2 argmin = Vec2::Zero();
  double max_boundary_distance = 0.0;  ///< distance of argmax to the boundary
  double min_boundary_distance = 0.0;
  Vec2 direction = Vec2(1, 0);
  double margin = -1.0;  ///< min of direction . grad u over the interior, with sup |grad u| = 1
  double collar = 0.0;
  std::size_t interior_cells = 0;
  bool monotone = false;
  std::optional<Interface> nodal;
  Vec2 nodal_direction = Vec2(0, 1);
  double nodal_lipschitz = std::numeric_limits<double>::infinity();
};

struct NodalSet {
  Interface interface;
  GraphFit fit;
};

/// Zero set of an eigenfunction and its best graph direction.
inline NodalSet nodal_set(const EigenResult& e) {
  Interface s;
  try {
    s = extract(e.u, 0.0);
  } catch (const PreconditionError&) {
    throw SolverError("eigenfunction has an empty nodal set");
  }
  if (s.vertices.empty()) throw SolverError("eigenfunction has an empty nodal set");
  NodalSet out{std::move(s), {}};
  out.fit = graph_fit(out.interface);
  return out;
}

/// Extrema, best monotone direction and nodal set of an eigenfunction.
inline HotSpotsReport hot_spots_check(const EigenResult& e, const ConvexBody& body, const HotSpotsOptions& opt = {}) {
  const Grid& g = *e.u.grid;
  HotSpotsReport r;
  r.collar = opt.collar > 0.0 ? opt.collar : 2.0 * g.spacing();
  std::size_t imax = 0, imin = 0;
  bool first = true;
  std::vector<Vec2> grads;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!g.active(k)) continue;
    if (first || e.u[k] > e.u[imax]) imax = k;
    if (first || e.u[k] < e.u[imin]) imin = k;
    first = false;
    if (g.mask(k) >= 1.0 && body.boundary_distance(Vec(g.center(k))) > r.collar) grads.push_back(e.u.gradient(k));
  }
  r.argmax = g.center(imax);
  r.argmin = g.center(imin);
  // Cut-cell centers may sit just outside the body: those count as on it.
  r.max_boundary_distance = std::max(0.0, body.boundary_distance(Vec(r.argmax)));
  r.min_boundary_distance = std::max(0.0, body.boundary_distance(Vec(r.argmin)));
  r.interior_cells = grads.size();
  if (!grads.empty()) {
    double sup = 0.0;
    for (const auto& v : grads) sup = std::max(sup, v.norm());
    if (sup > 0.0)
      for (auto& v : grads) v /= sup;
    auto margin_at = [&](double phi) {
      const Vec2 a(std::cos(phi), std::sin(phi));
      double m = std::numeric_limits<double>::infinity();
      for (const auto& v : grads) m = std::min(m, a.dot(v));
      return m;
    };
    double best_phi = 0.0;
    r.margin = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < opt.directions; ++k) {
      const double phi = 2 * kPi * k / opt.directions;
      const double m = margin_at(phi);
      if (m > r.margin) r.margin = m, best_phi = phi;
    }
    // The margin is concave in the angle where it is positive; golden section
    // within one scan step either side.
    double lo = best_phi - 2 * kPi / opt.directions, hi = best_phi + 2 * kPi / opt.directions;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int k = 0; k < 60; ++k) {
      const double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
      if (margin_at(a) < margin_at(b)) lo = a;
      else hi = b;
    }
    const double phi = 0.5 * (lo + hi), m = margin_at(phi);
    if (m > r.margin) r.margin = m, best_phi = phi;
    r.direction = Vec2(std::cos(best_phi), std::sin(best_phi));
    r.monotone = r.margin > 0.0;
  }
  try {
    auto ns = nodal_set(e);
    r.nodal_direction = ns.fit.direction;
    r.nodal_lipschitz = ns.fit.lipschitz;
    r.nodal = std::move(ns.interface);
  } catch (const SolverError&) {
    r.nodal.reset();
  }
  return r;
}

struct DeformStep {
  double t = 0.0;
  double lambda = 0.0;
  double margin = 0.0;
  Vec2 direction = Vec2(1, 0);
  double lipschitz = 0.0;
  double extrema_boundary_distance = 0.0;  ///< larger of the two extrema distances
  bool degenerate = false;
};

struct DeformResult {
  std::vector<DeformStep> steps;
  std::optional<double> first_nonpositive;  ///< first sampled t whose margin is <= 0
};

struct DeformOptions {
  int support_samples = 360;
  int cells_across = 128;
  NeumannOptions neumann;
  HotSpotsOptions hot_spots;
};

/// Body with support (1 - t) h0 + t h1, rebuilt from sampled directions.
inline ConvexBody interpolate_support(const ConvexBody& b0, const ConvexBody& b1, double t, int samples = 360) {
  std::vector<Vec2> dirs;
  std::vector<double> vals;
  for (int k = 0; k < samples; ++k) {
    const double phi = 2 * kPi * k / samples;
    const Vec2 a(std::cos(phi), std::sin(phi));
    dirs.push_back(a);
    const double h0 = b0.support(Vec(a));
    vals.push_back(h0 + t * (b1.support(Vec(a)) - h0));
  }
  try {
    auto body = from_support(dirs, vals, b0.symmetric() && b1.symmetric());
    if (!(body.volume() > 0.0)) throw DegenerateInput("empty interpolant");
    return body;
  } catch (const PreconditionError& ex) {
    throw SolverError(std::string("support interpolant could not be rebuilt: ") + ex.what());
  }
}

/// Eigen-data along the support interpolation from body0 (t = 0) to body1 (t = 1).
inline DeformResult deform_family(const ConvexBody& body0, const ConvexBody& body1, int steps,
                                  const DeformOptions& opt = {}) {
  if (body0.dim() != 2 || body1.dim() != 2) throw DimensionMismatch("deformation is 2D");
  if (!body0.symmetric() || !body1.symmetric()) throw PreconditionError("deformation endpoints must be symmetric");
  if (steps < 1) throw PreconditionError("at least one step");
  DeformResult out;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const auto body = interpolate_support(body0, body1, t, opt.support_samples);
    const auto grid = Grid::over(body, opt.cells_across);
    const auto eig = solve_neumann(body, grid, 1, opt.neumann);
    const auto rep = hot_spots_check(eig.front(), body, opt.hot_spots);
    DeformStep st;
    st.t = t;
    st.lambda = eig.front().lambda;
    st.margin = rep.margin;
    st.direction = rep.direction;
    st.lipschitz = rep.nodal_lipschitz;
    st.extrema_boundary_distance = std::max(rep.max_boundary_distance, rep.min_boundary_distance);
    st.degenerate = eig.front().degenerate;
    if (!out.first_nonpositive && !(st.margin > 0.0)) out.first_nonpositive = t;
    out.steps.push_back(st);
  }
  return out;
}

}  // namespace isolab
