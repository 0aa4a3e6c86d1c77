#pragma once

// Constrained phase-field (Modica-Mortola) minimization on masked grids:
//
//   E_eps(f) = int_Omega [ eps |grad f|^2 + W(f) / eps ] w dx,  W(u) = (1 - u^2)^2,
//   subject to int f w dx = (2 alpha - 1) int w dx.
//
// As eps -> 0, E_eps / c0 approaches the weighted perimeter of {f > 0}, with
// c0 = 2 int_{-1}^{1} sqrt(W) = 8/3.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <sstream>
#include <vector>

#include "isolab/errors.hpp"
#include "isolab/grid.hpp"
#include "isolab/measure.hpp"
#include "isolab/parallel.hpp"

namespace isolab {

inline constexpr double kCalibration = 8.0 / 3.0;
inline constexpr double kClip = 1.5;

inline double well(double u) {
  const double a = 1.0 - u * u;
  return a * a;
}
inline double well_derivative(double u) { return -4.0 * u * (1.0 - u * u); }

struct PhaseFieldProblem {
  std::shared_ptr<const Density> density;
  GridPtr grid;
  double eps = 0.05;
  double alpha = 0.5;
  std::vector<double> cell_weight;  ///< mask * w * h^2 per cell
  std::vector<double> face_x;       ///< weight of the face between cell k and k+1
  std::vector<double> face_y;       ///< weight of the face between cell k and k+nx
  double total_weight = 0.0;

  static PhaseFieldProblem make(const Density& d, GridPtr g, double eps, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("volume fraction alpha must lie in (0,1)");
    PhaseFieldProblem p;
    p.density = std::make_shared<const Density>(d);
    p.grid = std::move(g);
    p.alpha = alpha;
    p.set_eps(eps);
    const Grid& gr = *p.grid;
    const std::size_t n = gr.size();
    p.cell_weight.assign(n, 0.0);
    std::vector<double> w(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
      if (gr.active(k)) {
        w[k] = d.interior_weight(gr.center(k));
        p.cell_weight[k] = gr.mask(k) * w[k] * gr.cell_area();
      }
    p.face_x.assign(n, 0.0);
    p.face_y.assign(n, 0.0);
    for (const auto& f : gr.faces()) (f.axis == 0 ? p.face_x : p.face_y)[f.a] = f.aperture * 0.5 * (w[f.a] + w[f.b]);
    p.total_weight = pairwise_sum(p.cell_weight);
    return p;
  }

  void set_eps(double e) {
    if (!(e >= 2.0 * grid->spacing() * (1.0 - 1e-12)))
      throw ResolutionError("interface width eps must be at least twice the grid spacing");
    eps = e;
  }

  double target_mass() const { return (2.0 * alpha - 1.0) * total_weight; }

  /// Weighted mean of f over the domain.
  double mean(const std::vector<double>& f) const {
    return parallel_sum(f.size(), [&](std::size_t k) { return cell_weight[k] * f[k]; }) / total_weight;
  }

  /// |int f w / int w - (2 alpha - 1)|.
  double constraint_residual(const std::vector<double>& f) const { return std::abs(mean(f) - (2.0 * alpha - 1.0)); }

  /// Adds the constant restoring the mass constraint.
  void project(std::vector<double>& f) const {
    for (int pass = 0; pass < 4; ++pass) {
      const double shift = (2.0 * alpha - 1.0) - mean(f);
      bool clipped = false;
      for (std::size_t k = 0; k < f.size(); ++k) {
        if (cell_weight[k] == 0.0) continue;
        f[k] += shift;
        if (std::abs(f[k]) > kClip) {
          f[k] = std::clamp(f[k], -kClip, kClip);
          clipped = true;
        }
      }
      if (!clipped) return;
    }
  }
};

inline double energy(const ScalarField& f, const PhaseFieldProblem& p) {
  if (f.values.size() != p.grid->size()) throw DimensionMismatch("field is not on the problem grid");
  if (!(p.eps >= 2.0 * p.grid->spacing() * (1.0 - 1e-12))) throw ResolutionError("eps below twice the grid spacing");
  const std::size_t nx = p.grid->nx();
  const auto& v = f.values;
  const double inv = 1.0 / p.eps;
  return parallel_sum(v.size(), [&](std::size_t k) {
    double e = 0.0;
    if (p.face_x[k] != 0.0) {
      const double d = v[k + 1] - v[k];
      e += p.eps * p.face_x[k] * d * d;
    }
    if (p.face_y[k] != 0.0) {
      const double d = v[k + nx] - v[k];
      e += p.eps * p.face_y[k] * d * d;
    }
    return e + p.cell_weight[k] * well(v[k]) * inv;
  });
}

/// Gradient of the energy in L^2(w dx): -2 eps div_w(grad f) / w + W'(f) / eps per cell
/// (zero on inactive cells).
inline ScalarField energy_gradient(const ScalarField& f, const PhaseFieldProblem& p) {
  if (f.values.size() != p.grid->size()) throw DimensionMismatch("field is not on the problem grid");
  if (!(p.eps >= 2.0 * p.grid->spacing() * (1.0 - 1e-12))) throw ResolutionError("eps below twice the grid spacing");
  const std::size_t nx = p.grid->nx();
  const auto& v = f.values;
  ScalarField g(p.grid);
  const double inv = 1.0 / p.eps;
  parallel_for(v.size(), [&](std::size_t k) {
    if (p.cell_weight[k] == 0.0) return;
    double s = 0.0;
    if (p.face_x[k] != 0.0) s += p.face_x[k] * (v[k] - v[k + 1]);
    if (k >= 1 && p.face_x[k - 1] != 0.0) s += p.face_x[k - 1] * (v[k] - v[k - 1]);
    if (p.face_y[k] != 0.0) s += p.face_y[k] * (v[k] - v[k + nx]);
    if (k >= nx && p.face_y[k - nx] != 0.0) s += p.face_y[k - nx] * (v[k] - v[k - nx]);
    g.values[k] = (2.0 * p.eps * s + p.cell_weight[k] * well_derivative(v[k]) * inv) / p.cell_weight[k];
  });
  return g;
}

struct OptimizerConfig {
  double tol = 2e-3;        ///< RMS of the projected gradient in L^2(w dx)
  int max_iters = 20000;    ///< per annealing stage
  int eps_stages = 3;       ///< eps halves between stages
  double armijo = 1e-4;
  double max_update = 0.25;  ///< cap on the per-cell change of a trial step
};

struct StageRecord {
  double eps = 0.0;
  int iterations = 0;
  double energy = 0.0;
  double grad_norm = 0.0;
  double max_constraint_residual = 0.0;
};

struct MinimizeResult {
  ScalarField field;
  std::vector<StageRecord> stages;
  std::vector<double> energy_history;  ///< accepted energies, reset per stage
  std::vector<std::size_t> stage_offsets;
};

/// Thrown when a stage exhausts its iteration budget; carries the last iterate.
class NonConvergence : public SolverError {
 public:
  NonConvergence(const std::string& what, ScalarField last, double residual)
      : SolverError(what), last_iterate(std::move(last)), residual(residual) {}
  ScalarField last_iterate;
  double residual;
};

namespace detail {

inline double weighted_dot(const PhaseFieldProblem& p, const std::vector<double>& a, const std::vector<double>& b) {
  return parallel_sum(a.size(), [&](std::size_t k) { return p.cell_weight[k] * a[k] * b[k]; });
}

inline void project_gradient(const PhaseFieldProblem& p, std::vector<double>& g) {
  const double m = p.mean(g);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (p.cell_weight[k] != 0.0) g[k] -= m;
}

}  // namespace detail

/// Projected gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking, annealing eps through cfg.eps_stages halvings starting at p.eps.
inline MinimizeResult minimize(const PhaseFieldProblem& problem, const ScalarField& init, const OptimizerConfig& cfg) {
  if (init.values.size() != problem.grid->size()) throw DimensionMismatch("initial field is not on the problem grid");
  if (problem.constraint_residual(init.values) > 1e-3) throw PreconditionError("initial field violates the mass constraint");
  PhaseFieldProblem p = problem;
  p.set_eps(problem.eps / std::pow(2.0, std::max(0, cfg.eps_stages - 1)));
  p.set_eps(problem.eps);

  MinimizeResult out;
  out.field = ScalarField(p.grid, init.values);
  auto& f = out.field.values;
  for (std::size_t k = 0; k < f.size(); ++k)
    if (p.cell_weight[k] == 0.0) f[k] = 0.0;
  p.project(f);

  for (int stage = 0; stage < std::max(1, cfg.eps_stages); ++stage) {
    if (stage > 0) p.set_eps(p.eps / 2.0);
    out.stage_offsets.push_back(out.energy_history.size());
    StageRecord rec;
    rec.eps = p.eps;
    double e = energy(out.field, p);
    std::vector<double> g = energy_gradient(out.field, p).values;
    detail::project_gradient(p, g);
    out.energy_history.push_back(e);
    double step = p.grid->spacing() * p.grid->spacing() / (8.0 * p.eps);
    bool converged = false;
    int it = 0;
    double gnorm = 0.0;
    std::vector<double> trial(f.size());
    for (; it <= cfg.max_iters; ++it) {
      const double gg = detail::weighted_dot(p, g, g);
      gnorm = std::sqrt(gg / p.total_weight);
      if (gnorm < cfg.tol) {
        converged = true;
        break;
      }
      if (it == cfg.max_iters) break;
      double t = step;
      double e_trial = 0.0;
      for (int bt = 0;; ++bt) {
        // Per-cell clamp keeps low-weight cells from overshooting on long steps.
        double decrease = 0.0;
        for (std::size_t k = 0; k < f.size(); ++k) {
          const double du = std::clamp(t * g[k], -cfg.max_update, cfg.max_update);
          trial[k] = f[k] - du;
          decrease += p.cell_weight[k] * g[k] * du;
        }
        p.project(trial);
        e_trial = energy(ScalarField(p.grid, trial), p);
        if (e_trial <= e - cfg.armijo * decrease) break;
        t *= 0.5;
        if (bt > 60) {
          std::ostringstream os;
          os << "line search failed at eps " << p.eps << " after " << it << " iterations (gradient RMS " << gnorm << ")";
          throw NonConvergence(os.str(), out.field, gnorm);
        }
      }
      const double drift = p.constraint_residual(trial);
      rec.max_constraint_residual = std::max(rec.max_constraint_residual, drift);
      if (drift > 1e-6) throw InvariantViolation("mass constraint drifted after projection");
      if (e_trial > e) throw InvariantViolation("energy increased along an accepted step");

      std::vector<double> g_new = energy_gradient(ScalarField(p.grid, trial), p).values;
      detail::project_gradient(p, g_new);
      double ss = 0.0, sy = 0.0;
      for (std::size_t k = 0; k < f.size(); ++k) {
        const double s = trial[k] - f[k], y = g_new[k] - g[k];
        ss += p.cell_weight[k] * s * s;
        sy += p.cell_weight[k] * s * y;
      }
      step = sy > 0.0 ? ss / sy : 2.0 * t;
      f.swap(trial);
      g.swap(g_new);
      e = e_trial;
      out.energy_history.push_back(e);
    }
    rec.iterations = it;
    rec.energy = e;
    rec.grad_norm = gnorm;
    out.stages.push_back(rec);
    if (!converged) {
      std::ostringstream os;
      os << "phase-field descent did not converge at eps " << p.eps << " within " << cfg.max_iters
         << " iterations (gradient RMS " << gnorm << ")";
      throw NonConvergence(os.str(), out.field, gnorm);
    }
  }
  return out;
}

/// f = tanh((a . x - c) / eps) with c chosen so the mass constraint holds.
inline ScalarField halfspace_initial_field(const PhaseFieldProblem& p, const Vec2& direction) {
  const Vec2 a = direction.normalized();
  const Grid& g = *p.grid;
  auto field_for = [&](double c) {
    ScalarField f(p.grid);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (g.active(k)) f.values[k] = std::tanh((a.dot(g.center(k)) - c) / p.eps);
    return f;
  };
  const Vec av(a);
  double lo = -g.body().support(-av) - 2 * p.eps, hi = g.body().support(av) + 2 * p.eps;
  for (int k = 0; k < 200 && hi - lo > 1e-14; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (p.mean(field_for(mid).values) > 2 * p.alpha - 1) lo = mid; else hi = mid;
  }
  ScalarField f = field_for(0.5 * (lo + hi));
  p.project(f.values);
  return f;
}

/// Initial field for a halfspace with a random direction drawn from the seed.
inline ScalarField random_initial_field(const PhaseFieldProblem& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double angle = 2.0 * kPi * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  return halfspace_initial_field(p, Vec2(std::cos(angle), std::sin(angle)));
}

/// mu({f > 0}) / mu(support), the zero level resolved by bilinear subcell interpolation.
inline double volume_fraction(const ScalarField& f, const Density& d, int subsamples = 4) {
  return measure(d, f, subsamples) / total_mass(d, *f.grid);
}

}  // namespace isolab
