#pragma once

// Second variation of weighted perimeter on interfaces,
//
//   Q(f) = int_S [ |grad_S f|^2 - (|A_S|^2 + D^2 V(nu, nu)) f^2 ] w dH
//          - sum_{dS on dOmega} A_dOmega(nu, nu) f^2 w,
//
// and its minimum over the weighted mean-zero subspace.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "isolab/convex.hpp"
#include "isolab/errors.hpp"
#include "isolab/measure.hpp"
#include "isolab/surface.hpp"

namespace isolab {

using SparseMat = Eigen::SparseMatrix<double>;

/// One scalar per interface vertex (or per radial node in reduced problems).
struct SurfaceFunction {
  std::shared_ptr<const Interface> surface;
  std::vector<double> values;
};

/// Discrete form: Q(f) = f' K f - sum (potential + boundary) f^2, lumped weighted mass.
struct SecondVariationForm {
  SparseMat stiffness;
  Eigen::VectorXd potential;
  Eigen::VectorXd boundary;
  Eigen::VectorXd mass;

  SparseMat matrix() const {
    SparseMat a = stiffness;
    for (Eigen::Index k = 0; k < a.rows(); ++k) a.coeffRef(k, k) -= potential[k] + boundary[k];
    return a;
  }

  double bilinear(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
    return f.dot(stiffness * g) - f.dot((potential + boundary).cwiseProduct(g));
  }

  double weighted_mean_residual(const Eigen::VectorXd& f) const {
    const double scale = mass.dot(f.cwiseAbs());
    return scale > 0.0 ? std::abs(mass.dot(f)) / scale : 0.0;
  }
};

/// Assembles Q on S with P1 elements along each chain: edge weights at
/// midpoints, lumped mass, curvature from `curvature`. With a body, boundary
/// vertices pick up A_dOmega evaluated at resolution S.resolution.
inline SecondVariationForm assemble_second_variation(const Interface& S, const Density& d, const ConvexBody* body = nullptr) {
  const std::size_t n = S.vertices.size();
  if (S.normals.size() != n) throw PreconditionError("interface normals are missing");
  const CurvatureData cd = curvature(S, d);
  SecondVariationForm form;
  form.mass = Eigen::VectorXd::Zero(n);
  form.potential = Eigen::VectorXd::Zero(n);
  form.boundary = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> trip;
  S.for_each_segment([&](std::size_t a, std::size_t b) {
    const double len = (S.vertices[b] - S.vertices[a]).norm();
    if (len <= 0.0) return;
    const double w = d.interior_weight(0.5 * (S.vertices[a] + S.vertices[b]));
    const double k = w / len;
    trip.emplace_back(a, a, k);
    trip.emplace_back(b, b, k);
    trip.emplace_back(a, b, -k);
    trip.emplace_back(b, a, -k);
    form.mass[a] += 0.5 * len * w;
    form.mass[b] += 0.5 * len * w;
  });
  form.stiffness.resize(n, n);
  form.stiffness.setFromTriplets(trip.begin(), trip.end());
  for (std::size_t v = 0; v < n; ++v) {
    const Vec2& nu = S.normals[v];
    const double hess = nu.dot(d.hess_potential(S.vertices[v]) * nu);
    form.potential[v] = (cd.norm_a2[v] + hess) * form.mass[v];
  }
  if (body) {
    const double scale = S.resolution > 0.0 ? S.resolution : 1e-3;
    for (auto v : S.boundary_vertices)
      form.boundary[v] = body->boundary_curvature(S.vertices[v], scale) * d.interior_weight(S.vertices[v]);
  }
  return form;
}

/// Raw Q(f). With require_mean_zero, f must satisfy int_S f w dH = 0 (relative 1e-8).
inline double second_variation(const Interface& S, const Density& d, const SurfaceFunction& f, const ConvexBody* body = nullptr,
                               bool require_mean_zero = false) {
  if (f.values.size() != S.vertices.size()) throw DimensionMismatch("surface function does not match the interface");
  const auto form = assemble_second_variation(S, d, body);
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(f.values.data(), f.values.size());
  if (require_mean_zero && form.weighted_mean_residual(v) > 1e-8)
    throw ConstraintError("test function is not weighted mean-zero");
  return form.bilinear(v, v);
}

struct TranslationTest {
  std::vector<double> q;           ///< Q(f_j), f_j = e_j . nu
  std::vector<double> mean;        ///< int f_j w dH / int |f_j| w dH
  double sum_q = 0.0;
  double expected_sum = 0.0;       ///< -int D^2V(nu,nu) w dH - boundary terms
  double sum_rule_residual = 0.0;  ///< relative
  double unit_residual = 0.0;      ///< max_v |sum_j f_j^2 - 1|
  double gradient_residual = 0.0;  ///< max_v |sum_j |grad_S f_j|^2 - |A|^2|
  bool some_negative = false;
};

/// Per-vertex centered arclength derivative, one-sided at open chain ends.
inline std::vector<double> tangential_derivative(const Interface& S, const std::vector<double>& f) {
  std::vector<double> g(S.vertices.size(), 0.0);
  for (const auto& c : S.chains) {
    const std::size_t m = c.idx.size();
    if (m < 2) continue;
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
      const double arc = (S.vertices[v] - S.vertices[a]).norm() + (S.vertices[b] - S.vertices[v]).norm();
      g[v] = arc > 0.0 ? (f[b] - f[a]) / arc : 0.0;
    }
  }
  return g;
}

/// Coordinate translations as test functions, with the identities
/// sum_j f_j^2 = 1 and sum_j |grad_S f_j|^2 = |A|^2 and the sum rule
/// sum_j Q(f_j) = -int D^2V(nu,nu) w dH (minus boundary terms).
/// With claims_symmetric, each f_j must be mean-zero.
inline TranslationTest translation_test(const Interface& S, const Density& d, const ConvexBody* body = nullptr,
                                        bool claims_symmetric = false) {
  const std::size_t n = S.vertices.size();
  if (S.normals.size() != n) throw PreconditionError("interface normals are missing");
  const auto form = assemble_second_variation(S, d, body);
  const CurvatureData cd = curvature(S, d);
  TranslationTest t;
  std::vector<double> grad2(n, 0.0), sq(n, 0.0);
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXd f(n);
    std::vector<double> fv(n);
    for (std::size_t v = 0; v < n; ++v) fv[v] = f[v] = S.normals[v][j];
    const double q = form.bilinear(f, f);
    t.q.push_back(q);
    t.mean.push_back(form.weighted_mean_residual(f));
    t.sum_q += q;
    t.some_negative = t.some_negative || q < 0.0;
    const auto g = tangential_derivative(S, fv);
    for (std::size_t v = 0; v < n; ++v) {
      grad2[v] += g[v] * g[v];
      sq[v] += fv[v] * fv[v];
    }
    if (claims_symmetric && t.mean.back() > 1e-6) throw PreconditionError("translation test function is not mean-zero");
  }
  for (std::size_t v = 0; v < n; ++v) {
    t.unit_residual = std::max(t.unit_residual, std::abs(sq[v] - 1.0));
    t.gradient_residual = std::max(t.gradient_residual, std::abs(grad2[v] - cd.norm_a2[v]));
    const double hess = S.normals[v].dot(d.hess_potential(S.vertices[v]) * S.normals[v]);
    t.expected_sum -= hess * form.mass[v] + form.boundary[v] * sq[v];
  }
  const double scale = std::max({std::abs(t.expected_sum), std::abs(t.sum_q), 1e-300});
  t.sum_rule_residual = std::abs(t.sum_q - t.expected_sum) / scale;
  return t;
}

/// Both diagonals of the unit disk as four rays from the center, E = {|y| > |x|}.
/// Each ray ends on the circle.
inline Interface make_x_network(int per_ray) {
  Interface s;
  for (int k = 0; k < 4; ++k) {
    const double t = kPi / 4 + k * kPi / 2;
    const Vec2 dir(std::cos(t), std::sin(t));
    Vec2 nu(-dir.y(), dir.x());
    const Vec2 probe = 0.5 * dir + 0.1 * nu;
    if (std::abs(probe.y()) > std::abs(probe.x())) nu = -nu;
    auto ray = make_segment_interface(Vec2(0, 0), dir, per_ray, nu);
    ray.boundary_vertices = {ray.vertices.size() - 1};
    s.append(ray);
  }
  s.resolution = 1.0 / per_ray;
  return s;
}

struct StabilityVerdict {
  double min_rayleigh = 0.0;
  bool stable = false;
  SurfaceFunction witness;
  double constraint_residual = 0.0;
  double tolerance = 0.0;
  double resolution = 0.0;
  double unconstrained_min = 0.0;
  int iterations = 0;
  int n = 1;
  std::string domain;
  std::string bc;
};

struct EigenOptions {
  bool mean_zero = true;
  bool estimate_tolerance = true;
  int max_iters = 20000;
  double residual_tol = 1e-10;
  std::uint64_t seed = 12345;
};

namespace detail {

struct ConstrainedMin {
  double lambda = 0.0;
  double lower = 0.0;
  Eigen::VectorXd f;
  int iterations = 0;
};

/// Smallest generalized eigenvalue of (A, diag(mass)), optionally on the
/// subspace mass . f = 0, by shifted inverse iteration on the compressed operator.
inline ConstrainedMin smallest_eigenpair(const SparseMat& A, const Eigen::VectorXd& mass, const EigenOptions& opt) {
  const Eigen::Index n = A.rows();
  if (n < 2) throw PreconditionError("eigenproblem needs at least two unknowns");
  if ((mass.array() <= 0.0).any()) throw PreconditionError("lumped mass must be positive");
  const Eigen::VectorXd s = mass.cwiseSqrt().cwiseInverse();
  SparseMat B = s.asDiagonal() * A * s.asDiagonal();
  B = 0.5 * (B + SparseMat(B.transpose()));
  // Gershgorin bracket, then bisection on Cholesky success for lambda_min(B).
  double glo = std::numeric_limits<double>::infinity(), ghi = -glo;
  for (Eigen::Index k = 0; k < n; ++k) {
    double diag = 0.0, off = 0.0;
    for (SparseMat::InnerIterator it(B, k); it; ++it) {
      if (it.row() == k)
        diag += it.value();
      else
        off += std::abs(it.value());
    }
    glo = std::min(glo, diag - off);
    ghi = std::max(ghi, diag + off);
  }
  SparseMat I(n, n);
  I.setIdentity();
  auto spd = [&](double sigma) {
    Eigen::SimplicialLLT<SparseMat> llt(B - sigma * I);
    return llt.info() == Eigen::Success;
  };
  double lo = glo - 1e-12 * (1.0 + std::abs(glo)), hi = ghi;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (spd(mid)) lo = mid; else hi = mid;
  }
  ConstrainedMin out;
  out.lower = lo;
  const double sigma = lo - 1e-3 * (1.0 + std::abs(lo));
  Eigen::SimplicialLLT<SparseMat> llt(B - sigma * I);
  if (llt.info() != Eigen::Success) throw SolverError("shifted operator is not positive definite");
  Eigen::VectorXd c = mass.cwiseSqrt();
  c /= c.norm();
  const Eigen::VectorXd u = llt.solve(c);
  auto project = [&](Eigen::VectorXd& x) {
    if (opt.mean_zero) x -= c * c.dot(x);
  };
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd y(n);
  for (Eigen::Index k = 0; k < n; ++k) y[k] = nd(rng);
  project(y);
  y.normalize();
  std::vector<double> history;
  double lambda = y.dot(B * y);
  for (int it = 1; it <= opt.max_iters; ++it) {
    Eigen::VectorXd x = llt.solve(y);
    if (opt.mean_zero) x -= u * (c.dot(x) / c.dot(u));
    project(x);
    y = x / x.norm();
    lambda = y.dot(B * y);
    Eigen::VectorXd r = B * y - lambda * y;
    project(r);
    const double res = r.norm();
    history.push_back(res);
    if (res <= opt.residual_tol * (1.0 + std::abs(lambda))) {
      out.lambda = lambda;
      out.f = s.cwiseProduct(y);
      out.iterations = it;
      return out;
    }
  }
  std::ostringstream os;
  os << "inverse iteration stagnated after " << opt.max_iters << " iterations; residual history (last 5):";
  for (std::size_t k = history.size() >= 5 ? history.size() - 5 : 0; k < history.size(); ++k) os << ' ' << history[k];
  throw SolverError(os.str());
}

/// Every other vertex of each chain (ends kept), for a two-level error estimate.
inline Interface coarsen(const Interface& S) {
  Interface c;
  c.resolution = 2.0 * S.resolution;
  std::vector<std::size_t> remap(S.vertices.size(), SIZE_MAX);
  for (const auto& ch : S.chains) {
    Chain nc;
    nc.closed = ch.closed;
    const std::size_t m = ch.idx.size();
    for (std::size_t k = 0; k < m; ++k) {
      if (k % 2 != 0 && !(!ch.closed && k + 1 == m)) continue;
      const std::size_t v = ch.idx[k];
      remap[v] = c.vertices.size();
      c.vertices.push_back(S.vertices[v]);
      c.normals.push_back(S.normals[v]);
      nc.idx.push_back(remap[v]);
    }
    c.chains.push_back(std::move(nc));
  }
  for (auto b : S.boundary_vertices)
    if (remap[b] != SIZE_MAX) c.boundary_vertices.push_back(remap[b]);
  return c;
}

}  // namespace detail

/// Smallest Rayleigh quotient Q(f) / int f^2 w dH over weighted mean-zero f.
/// The verdict is stable iff it is >= -tol, tol = 10 x the two-level
/// (full vs every-other-vertex) Richardson error estimate.
inline StabilityVerdict min_eigenvalue(const Interface& S, const Density& d, const ConvexBody* body = nullptr,
                                       const EigenOptions& opt = {}) {
  const auto form = assemble_second_variation(S, d, body);
  const auto res = detail::smallest_eigenpair(form.matrix(), form.mass, opt);
  StabilityVerdict v;
  v.min_rayleigh = res.lambda;
  v.unconstrained_min = res.lower;
  v.iterations = res.iterations;
  v.resolution = S.resolution;
  v.domain = body ? body->kind() : "free";
  v.bc = opt.mean_zero ? "volume_constrained" : "unconstrained";
  v.witness.surface = std::make_shared<const Interface>(S);
  v.witness.values.assign(res.f.data(), res.f.data() + res.f.size());
  v.constraint_residual = form.weighted_mean_residual(res.f);
  double tol = 1e-9 * (1.0 + std::abs(res.lambda));
  bool coarsenable = true;
  for (const auto& c : S.chains) coarsenable = coarsenable && c.idx.size() >= 7;
  if (opt.estimate_tolerance && coarsenable) {
    const Interface coarse = detail::coarsen(S);
    EigenOptions o = opt;
    o.estimate_tolerance = false;
    const auto cf = assemble_second_variation(coarse, d, body);
    const double lc = detail::smallest_eigenpair(cf.matrix(), cf.mass, o).lambda;
    tol = std::max(tol, 10.0 * std::abs(res.lambda - lc) / 3.0);
  }
  v.tolerance = tol;
  v.stable = res.lambda >= -tol;
  return v;
}

enum class SimonsDomain { ball, hull };
enum class SimonsBc { volume_constrained, boundary_fixed };

inline std::string to_string(SimonsDomain d) { return d == SimonsDomain::ball ? "ball" : "hull"; }
inline std::string to_string(SimonsBc b) { return b == SimonsBc::volume_constrained ? "volume_constrained" : "boundary_fixed"; }

namespace detail {

struct RadialResult {
  double lambda = 0.0;
  Eigen::VectorXd g;
  double constraint_residual = 0.0;
};

/// Reduced quadratic forms on the Simons cone {|x| = |y|} in R^{2n}, radial
/// variable r in (0,1], area element r^{2n-2} dr, |A|^2 = (2n-2)/r^2.
///   degree 0 (g(r)):          Q = int (g'^2 - (2n-2) g^2 / r^2) r^{2n-2} - kappa g(1)^2
///   degree 1 (g(r) e . nu):   Q = c [int g'^2 r^{2n-2} - kappa g(1)^2], mass c int g^2 r^{2n-2}
/// (for translation modes the angular gradient term cancels |A|^2 on average).
/// Degree-1 modes are mean-zero by symmetry; degree-0 modes carry the constraint.
inline RadialResult radial_min(int n, int degree, double kappa, bool fixed, bool constrained, int elements) {
  const int N = elements;
  const double p = 2.0 * n - 2.0;
  const double pot = degree == 0 ? 2.0 * n - 2.0 : 0.0;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(N + 1, N + 1), M = K;
  using Quad = boost::math::quadrature::gauss<double, 20>;
  for (int e = 0; e < N; ++e) {
    const double a = static_cast<double>(e) / N, b = static_cast<double>(e + 1) / N, h = b - a;
    auto phi = [&](int i, double r) { return i == 0 ? (b - r) / h : (r - a) / h; };
    const double dphi[2] = {-1.0 / h, 1.0 / h};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const double kij = Quad::integrate([&](double r) { return dphi[i] * dphi[j] * std::pow(r, p); }, a, b);
        const double vij =
            pot > 0.0 ? Quad::integrate([&](double r) { return pot * phi(i, r) * phi(j, r) * std::pow(r, p - 2.0); }, a, b) : 0.0;
        const double mij = Quad::integrate([&](double r) { return phi(i, r) * phi(j, r) * std::pow(r, p); }, a, b);
        K(e + i, e + j) += kij - vij;
        M(e + i, e + j) += mij;
      }
  }
  K(N, N) -= kappa;
  // Basis of the admissible subspace. The mean constraint is solved for the
  // outermost free node, which keeps the r^p scaling of the rows intact.
  const int free_nodes = fixed ? N : N + 1;
  Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(N + 1, free_nodes);
  if (constrained) {
    const Eigen::VectorXd c = M * Eigen::VectorXd::Ones(N + 1);
    const int piv = free_nodes - 1;
    Eigen::MatrixXd Zc = Eigen::MatrixXd::Zero(N + 1, piv);
    for (int i = 0; i < piv; ++i) {
      Zc(i, i) = 1.0;
      Zc(piv, i) = -c[i] / c[piv];
    }
    Z = Zc;
  }
  Eigen::MatrixXd Kr = Z.transpose() * K * Z, Mr = Z.transpose() * M * Z;
  // Mass entries near the origin scale like r^p; equilibrate before solving.
  const Eigen::VectorXd s = Mr.diagonal().cwiseSqrt().cwiseInverse();
  Kr = s.asDiagonal() * Kr * s.asDiagonal();
  Mr = s.asDiagonal() * Mr * s.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Kr + Kr.transpose()), 0.5 * (Mr + Mr.transpose()));
  if (es.info() != Eigen::Success) throw SolverError("reduced generalized eigenproblem failed");
  RadialResult out;
  out.lambda = es.eigenvalues()[0];
  out.g = Z * (s.asDiagonal() * es.eigenvectors().col(0)).eval();
  const Eigen::VectorXd mg = M * out.g;
  out.constraint_residual = constrained ? std::abs(mg.sum()) / std::max(1e-300, (M * out.g.cwiseAbs()).sum()) : 0.0;
  return out;
}

}  // namespace detail

/// Stability of the Simons cone cut of the ball (or of hull(S ∩ B), whose
/// boundary has a right-angle ridge along S ∩ dB, smeared over one element)
/// under degree-0 and translation-type degree-1 perturbations.
inline StabilityVerdict simons_reduced(int n, SimonsDomain domain, SimonsBc bc, int elements = 400) {
  if (n < 1 || n > 16) throw PreconditionError("simons_reduced supports 1 <= n <= 16");
  if (elements < 16) throw ResolutionError("reduced Simons problem needs at least 16 elements");
  const bool fixed = bc == SimonsBc::boundary_fixed;
  auto solve = [&](int N) {
    const double kappa = domain == SimonsDomain::ball ? 1.0 : (kPi / 2) * N;
    const auto d0 = detail::radial_min(n, 0, kappa, fixed, !fixed, N);
    const auto d1 = detail::radial_min(n, 1, kappa, fixed, false, N);
    return d0.lambda <= d1.lambda ? d0 : d1;
  };
  const auto fine = solve(elements);
  const double mid = solve(elements / 2).lambda, coarse = solve(elements / 4).lambda;
  StabilityVerdict v;
  v.n = n;
  v.domain = to_string(domain);
  v.bc = to_string(bc);
  v.resolution = 1.0 / elements;
  v.min_rayleigh = fine.lambda;
  v.constraint_residual = fine.constraint_residual;
  v.witness.values.assign(fine.g.data(), fine.g.data() + fine.g.size());
  const double d1 = mid - fine.lambda, d2 = coarse - mid;
  // Refinement that keeps lowering the minimum by non-contracting amounts:
  // the form is unbounded below.
  const bool diverging = d1 > 0.0 && d2 > 0.0 && d1 >= 0.9 * d2 && fine.lambda < 0.0;
  v.tolerance = std::max(1e-9 * (1.0 + std::abs(fine.lambda)), 10.0 * std::abs(d1) / 3.0);
  v.stable = !diverging && fine.lambda >= -v.tolerance;
  return v;
}

}  // namespace isolab
