#pragma once

// Log-concave probability densities w = exp(-V)/Z on the plane, grid
// quadrature against them, one-dimensional marginals and the symmetric
// log-concave tail bound  int_t^inf w_a <= exp(-2 w_a(0) t) / 2.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "isolab/convex.hpp"
#include "isolab/errors.hpp"
#include "isolab/grid.hpp"
#include "isolab/parallel.hpp"

namespace isolab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Symmetric one-dimensional log-concave factor e^{-v(s)} / z.
struct Factor1d {
  enum class Kind { gaussian, laplace, uniform, power };
  Kind kind = Kind::gaussian;
  double p1 = 1.0;  ///< sigma, rate m, half-width, or exponent beta
  double p2 = 1.0;  ///< scale (power only)

  static Factor1d gaussian(double sigma) { return check({Kind::gaussian, sigma, 1.0}); }
  /// (m/2) e^{-m|s|}
  static Factor1d laplace(double m) { return check({Kind::laplace, m, 1.0}); }
  static Factor1d uniform(double half_width) { return check({Kind::uniform, half_width, 1.0}); }
  static Factor1d power(double beta, double scale) { return check({Kind::power, beta, scale}); }

  double v(double s) const {
    switch (kind) {
      case Kind::gaussian: return s * s / (2 * p1 * p1);
      case Kind::laplace: return p1 * std::abs(s);
      case Kind::uniform: return std::abs(s) <= p1 ? 0.0 : kInf;
      case Kind::power: return std::pow(std::abs(s) / p2, p1);
    }
    return kInf;
  }
  double dv(double s) const {
    switch (kind) {
      case Kind::gaussian: return s / (p1 * p1);
      case Kind::laplace: return s == 0.0 ? 0.0 : p1 * (s > 0 ? 1.0 : -1.0);
      case Kind::uniform: return 0.0;
      case Kind::power: return s == 0.0 ? 0.0 : p1 * std::pow(std::abs(s) / p2, p1 - 1) / p2 * (s > 0 ? 1.0 : -1.0);
    }
    return 0.0;
  }
  double d2v(double s) const {
    switch (kind) {
      case Kind::gaussian: return 1.0 / (p1 * p1);
      case Kind::laplace: return 0.0;
      case Kind::uniform: return 0.0;
      case Kind::power: return s == 0.0 ? (p1 == 2.0 ? 2.0 / (p2 * p2) : kInf)
                                        : p1 * (p1 - 1) * std::pow(std::abs(s) / p2, p1 - 2) / (p2 * p2);
    }
    return 0.0;
  }
  double z() const {
    switch (kind) {
      case Kind::gaussian: return p1 * std::sqrt(2 * kPi);
      case Kind::laplace: return 2.0 / p1;
      case Kind::uniform: return 2.0 * p1;
      case Kind::power: return 2.0 * p2 * std::tgamma(1.0 + 1.0 / p1);
    }
    return 1.0;
  }
  /// Half-width outside of which the two-sided tail mass is below `tail`.
  double truncation(double tail) const {
    switch (kind) {
      case Kind::gaussian: return p1 * std::sqrt(2.0) * boost::math::erfc_inv(tail);
      case Kind::laplace: return std::log(1.0 / tail) / p1;
      case Kind::uniform: return p1;
      case Kind::power: return p2 * std::pow(boost::math::gamma_q_inv(1.0 / p1, tail), 1.0 / p1);
    }
    return 0.0;
  }
  std::string name() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::gaussian: os << "gaussian(" << p1 << ")"; break;
      case Kind::laplace: os << "laplace(" << p1 << ")"; break;
      case Kind::uniform: os << "uniform(" << p1 << ")"; break;
      case Kind::power: os << "power(" << p1 << "," << p2 << ")"; break;
    }
    return os.str();
  }

 private:
  static Factor1d check(Factor1d f) {
    if (!(f.p1 > 0.0) || !(f.p2 > 0.0)) throw PreconditionError("1D factor parameters must be positive");
    if (f.kind == Kind::power && !(f.p1 > 1.0)) throw PreconditionError("power factor needs beta > 1");
    return f;
  }
};

/// Probability density w = e^{-V} / Z on the plane with a bounded support used
/// for quadrature (the body itself, or a box carrying all but
/// `truncation_mass` of the mass).
class Density {
 public:
  enum class Kind { uniform, gaussian, power_exp, product_1d, custom };

  static Density uniform(const ConvexBody& body) {
    if (body.dim() != 2) throw DimensionMismatch("densities are 2D");
    Density d(Kind::uniform);
    d.support_ = std::make_shared<const ConvexBody>(body);
    d.z_ = body.volume();
    d.symmetric_ = body.symmetric();
    return d;
  }

  /// V = |x|^2 / (2 sigma^2).
  static Density gaussian(double sigma = 1.0, double truncation_mass = 1e-10) {
    if (!(sigma > 0.0)) throw PreconditionError("gaussian sigma must be positive");
    Density d(Kind::gaussian);
    d.p1_ = sigma;
    d.z_ = 2 * kPi * sigma * sigma;
    d.set_truncation(truncation_mass, sigma * std::sqrt(2.0 * std::log(1.0 / truncation_mass)));
    return d;
  }

  /// V = (|x| / scale)^beta, beta > 1.
  static Density power_exp(double beta, double scale = 1.0, double truncation_mass = 1e-10) {
    if (!(beta > 1.0)) throw PreconditionError("power_exp requires beta > 1");
    if (!(scale > 0.0)) throw PreconditionError("power_exp scale must be positive");
    Density d(Kind::power_exp);
    d.p1_ = beta;
    d.p2_ = scale;
    d.z_ = 2 * kPi * scale * scale * std::tgamma(2.0 / beta) / beta;
    d.set_truncation(truncation_mass, scale * std::pow(boost::math::gamma_q_inv(2.0 / beta, truncation_mass), 1.0 / beta));
    return d;
  }

  /// w(x) = f_1(x_1) f_2(x_2).
  static Density product(std::vector<Factor1d> factors, double truncation_mass = 1e-10) {
    if (factors.size() != 2) throw DimensionMismatch("product densities need one factor per axis (2)");
    Density d(Kind::product_1d);
    d.factors_ = std::move(factors);
    d.z_ = d.factors_[0].z() * d.factors_[1].z();
    d.truncation_mass_ = truncation_mass;
    const double rx = d.factors_[0].truncation(truncation_mass / 2), ry = d.factors_[1].truncation(truncation_mass / 2);
    d.radius_ = std::max(rx, ry);
    d.support_ = std::make_shared<const ConvexBody>(make_box(Vec2(-rx, -ry), Vec2(rx, ry)));
    d.symmetric_ = true;
    return d;
  }

  /// Potential sampled on a grid; bilinear between cell centers, normalized by grid quadrature.
  static Density custom(ScalarField potential) {
    Density d(Kind::custom);
    d.custom_ = std::make_shared<const ScalarField>(std::move(potential));
    const Grid& g = *d.custom_->grid;
    d.support_ = std::make_shared<const ConvexBody>(g.body());
    d.z_ = 1.0;
    const double total = parallel_sum(g.size(), [&](std::size_t k) {
      return g.mask(k) * std::exp(-d.custom_->values[k]) * g.cell_area();
    });
    if (!(total > 0.0) || !std::isfinite(total)) throw PreconditionError("custom potential has no finite mass");
    d.z_ = total;
    d.symmetric_ = true;
    for (std::size_t k = 0; k < g.size() && d.symmetric_; ++k) {
      const auto m = g.size() - 1 - k;
      if (std::abs(d.custom_->values[k] - d.custom_->values[m]) > 1e-9 || (g.center(k) + g.center(m)).norm() > 1e-9)
        d.symmetric_ = false;
    }
    return d;
  }

  Kind kind() const { return kind_; }
  bool is_uniform() const { return kind_ == Kind::uniform; }
  bool symmetric() const { return symmetric_; }
  double normalization() const { return z_; }
  double truncation_mass() const { return truncation_mass_; }
  /// Radius of the truncated support (0 when the support is a body).
  double truncation_radius() const { return radius_; }
  const ConvexBody& support() const { return *support_; }
  const std::vector<Factor1d>& factors() const { return factors_; }

  std::string name() const {
    std::ostringstream os;
    switch (kind_) {
      case Kind::uniform: os << "uniform(" << support_->kind() << ")"; break;
      case Kind::gaussian: os << "gaussian(" << p1_ << ")"; break;
      case Kind::power_exp: os << "power_exp(" << p1_ << "," << p2_ << ")"; break;
      case Kind::product_1d: os << "product(" << factors_[0].name() << "," << factors_[1].name() << ")"; break;
      case Kind::custom: os << "custom"; break;
    }
    return os.str();
  }

  /// V(x), +inf outside the body for uniform densities.
  double potential(const Vec2& x) const {
    switch (kind_) {
      case Kind::uniform: return support_->contains(Vec(x)) ? 0.0 : kInf;
      case Kind::gaussian: return x.squaredNorm() / (2 * p1_ * p1_);
      case Kind::power_exp: return std::pow(x.norm() / p2_, p1_);
      case Kind::product_1d: return factors_[0].v(x.x()) + factors_[1].v(x.y());
      case Kind::custom: return custom_->interpolate(x);
    }
    return kInf;
  }

  Vec2 grad_potential(const Vec2& x) const {
    switch (kind_) {
      case Kind::uniform: return Vec2::Zero();
      case Kind::gaussian: return x / (p1_ * p1_);
      case Kind::power_exp: {
        const double r = x.norm();
        if (r == 0.0) return Vec2::Zero();
        return p1_ * std::pow(r / p2_, p1_ - 1) / p2_ * (x / r);
      }
      case Kind::product_1d: return Vec2(factors_[0].dv(x.x()), factors_[1].dv(x.y()));
      case Kind::custom: {
        const double e = 1e-4 * custom_->grid->spacing();
        return Vec2(custom_->interpolate(x + Vec2(e, 0)) - custom_->interpolate(x - Vec2(e, 0)),
                    custom_->interpolate(x + Vec2(0, e)) - custom_->interpolate(x - Vec2(0, e))) /
               (2 * e);
      }
    }
    return Vec2::Zero();
  }

  Mat2 hess_potential(const Vec2& x) const {
    switch (kind_) {
      case Kind::uniform: return Mat2::Zero();
      case Kind::gaussian: return Mat2::Identity() / (p1_ * p1_);
      case Kind::power_exp: {
        const double r = x.norm();
        if (r == 0.0) return Mat2::Identity() * (p1_ == 2.0 ? 2.0 / (p2_ * p2_) : kInf);
        const Vec2 u = x / r;
        const double c = p1_ * std::pow(r / p2_, p1_ - 2) / (p2_ * p2_);
        return c * (Mat2::Identity() + (p1_ - 2) * u * u.transpose());
      }
      case Kind::product_1d: {
        Mat2 m = Mat2::Zero();
        m(0, 0) = factors_[0].d2v(x.x());
        m(1, 1) = factors_[1].d2v(x.y());
        return m;
      }
      case Kind::custom: {
        const double e = custom_->grid->spacing();
        Mat2 m;
        m.col(0) = (grad_potential(x + Vec2(e, 0)) - grad_potential(x - Vec2(e, 0))) / (2 * e);
        m.col(1) = (grad_potential(x + Vec2(0, e)) - grad_potential(x - Vec2(0, e))) / (2 * e);
        return 0.5 * (m + m.transpose());
      }
    }
    return Mat2::Zero();
  }

  /// w(x) = e^{-V(x)} / Z; zero where V is infinite.
  double operator()(const Vec2& x) const {
    const double v = potential(x);
    return std::isinf(v) ? 0.0 : std::exp(-v) / z_;
  }

  /// Density value ignoring the hard wall of uniform densities, used on grid
  /// cells whose partial volume is already carried by the mask.
  double interior_weight(const Vec2& x) const {
    if (kind_ == Kind::uniform) return 1.0 / z_;
    if (kind_ == Kind::product_1d) {
      double v = 0.0;
      for (int a = 0; a < 2; ++a) {
        const auto& f = factors_[a];
        v += f.kind == Factor1d::Kind::uniform ? 0.0 : f.v(x[a]);
      }
      return std::exp(-v) / z_;
    }
    return (*this)(x);
  }

  /// Midpoint-convexity check of V on random triples inside the support.
  bool check_convexity(std::uint64_t seed, int samples = 2000) const {
    std::mt19937_64 rng(seed);
    const Box& b = support_->bbox();
    std::uniform_real_distribution<double> ux(b.lo.x(), b.hi.x()), uy(b.lo.y(), b.hi.y());
    for (int s = 0; s < samples; ++s) {
      const Vec2 p(ux(rng), uy(rng)), q(ux(rng), uy(rng));
      if (!support_->contains(Vec(p)) || !support_->contains(Vec(q))) continue;
      const double vp = potential(p), vq = potential(q), vm = potential(0.5 * (p + q));
      if (vm > 0.5 * (vp + vq) + 1e-9 * (1.0 + std::abs(vp) + std::abs(vq))) return false;
    }
    return true;
  }

 private:
  explicit Density(Kind k) : kind_(k) {}

  void set_truncation(double mass, double radius) {
    if (!(mass > 0.0 && mass < 1.0)) throw PreconditionError("truncation mass must lie in (0,1)");
    truncation_mass_ = mass;
    radius_ = radius;
    support_ = std::make_shared<const ConvexBody>(make_square(radius));
    symmetric_ = true;
  }

  Kind kind_;
  double p1_ = 1.0;
  double p2_ = 1.0;
  double z_ = 1.0;
  double truncation_mass_ = 0.0;
  double radius_ = 0.0;
  bool symmetric_ = false;
  std::vector<Factor1d> factors_;
  std::shared_ptr<const ConvexBody> support_;
  std::shared_ptr<const ScalarField> custom_;
};

namespace detail {
inline void check_grid_resolution(const Grid& g) {
  if (std::min(g.nx(), g.ny()) < 16) throw ResolutionError("grid too coarse for quadrature (fewer than 16 cells across)");
}
}  // namespace detail

/// mu(E) by the masked midpoint rule. With subsamples > 1 each cell is split
/// into subsamples^2 midpoint subcells.
template <class Pred>
  requires std::predicate<Pred, const Vec2&>
double measure(const Density& d, Pred&& in_set, const Grid& g, int subsamples = 1) {
  detail::check_grid_resolution(g);
  const int s = std::max(1, subsamples);
  const double h = g.spacing();
  return parallel_sum(g.size(), [&](std::size_t k) {
    if (!g.active(k)) return 0.0;
    const Vec2 c = g.center(k);
    double acc = 0.0;
    for (int a = 0; a < s; ++a)
      for (int b = 0; b < s; ++b) {
        const Vec2 p = c + h * Vec2((a + 0.5) / s - 0.5, (b + 0.5) / s - 0.5);
        if (in_set(p)) acc += d.interior_weight(p);
      }
    return g.mask(k) * acc * g.cell_area() / (s * s);
  });
}

/// mu({f > 0}); subcells read f by bilinear interpolation.
inline double measure(const Density& d, const ScalarField& f, int subsamples = 1) {
  const Grid& g = *f.grid;
  if (subsamples <= 1) {
    detail::check_grid_resolution(g);
    return parallel_sum(g.size(), [&](std::size_t k) {
      return g.active(k) && f[k] > 0.0 ? g.mask(k) * d.interior_weight(g.center(k)) * g.cell_area() : 0.0;
    });
  }
  return measure(d, [&](const Vec2& p) { return f.interpolate(p) > 0.0; }, g, subsamples);
}

/// Total mass of the density on the grid.
inline double total_mass(const Density& d, const Grid& g) {
  return parallel_sum(g.size(), [&](std::size_t k) {
    return g.active(k) ? g.mask(k) * d.interior_weight(g.center(k)) * g.cell_area() : 0.0;
  });
}

namespace detail {

/// Adaptive Gauss-Kronrod over [a, b] split at the given breakpoints.
template <class F>
double integrate(F&& f, double a, double b, std::vector<double> breaks, double tol, double* err_out = nullptr,
                 unsigned max_depth = 15) {
  if (!(b > a)) return 0.0;
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  // Breakpoints a rounding error apart would leave slivers the rule can never resolve.
  const double merge = 1e-12 * (b - a);
  breaks.erase(std::unique(breaks.begin(), breaks.end(), [&](double x, double y) { return y - x <= merge; }),
               breaks.end());
  if (breaks.back() < b) breaks.back() = b;
  double total = 0.0, err = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double lo = std::max(a, breaks[k]), hi = std::min(b, breaks[k + 1]);
    if (!(hi > lo)) continue;
    double e = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, max_depth, tol, &e);
    err += e;
  }
  if (err_out) *err_out = err;
  return total;
}

}  // namespace detail

/// w_a(t) = integral of w over the line {a . x = t}.
inline double slice_mass(const Density& d, const Vec2& a, double t) {
  const Vec2 perp(-a.y(), a.x());
  const Vec2 p0 = t * a;
  const auto iv = d.support().clip_line(Vec(p0), Vec(perp));
  if (!iv) return 0.0;
  if (d.is_uniform()) return (iv->second - iv->first) / d.normalization();
  std::vector<double> breaks{0.0};
  if (std::abs(perp.x()) > 1e-14) breaks.push_back(-p0.x() / perp.x());
  if (std::abs(perp.y()) > 1e-14) breaks.push_back(-p0.y() / perp.y());
  double err = 0.0;
  const double val = detail::integrate([&](double s) { return d(p0 + s * perp); }, iv->first, iv->second, breaks, 1e-13, &err);
  if (!(err <= 1e-9 * std::abs(val) + 1e-14) || !std::isfinite(val)) {
    std::ostringstream os;
    os << "slice quadrature did not converge: direction (" << a.x() << "," << a.y() << "), t = " << t
       << ", value " << val << ", error estimate " << err;
    throw SolverError(os.str());
  }
  return val;
}

/// Sampled one-dimensional marginal of a density in direction a.
struct Marginal {
  std::shared_ptr<const Density> density;
  Vec2 direction = Vec2(1, 0);
  std::vector<double> t;
  std::vector<double> values;

  double at(double s) const { return slice_mass(*density, direction, s); }

  /// Extent [lo, hi] of the support projected on the direction.
  std::pair<double, double> range() const {
    const Vec a(direction);
    return {-density->support().support(-a), density->support().support(a)};
  }

  std::vector<double> breakpoints() const {
    std::vector<double> b{0.0};
    for (const auto& v : density->support().vertices()) b.push_back(direction.dot(Vec2(v)));
    return b;
  }

  /// int_s^inf w_a.
  double tail(double s) const {
    const auto [lo, hi] = range();
    return detail::integrate([&](double u) { return at(u); }, std::max(s, lo), hi, breakpoints(), 1e-10, nullptr, 10);
  }

  double total_mass() const {
    const auto [lo, hi] = range();
    return detail::integrate([&](double u) { return at(u); }, lo, hi, breakpoints(), 1e-10, nullptr, 10);
  }
};

inline Marginal marginal(const Density& d, const Vec2& a, std::vector<double> t_grid) {
  if (std::abs(a.norm() - 1.0) > 1e-12) throw PreconditionError("marginal direction must be a unit vector");
  Marginal m;
  m.density = std::make_shared<const Density>(d);
  m.direction = a;
  m.t = std::move(t_grid);
  m.values.resize(m.t.size());
  for (std::size_t k = 0; k < m.t.size(); ++k) m.values[k] = m.at(m.t[k]);
  return m;
}

struct TailBound {
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
};

/// Checks int_t^inf w_a(s) ds <= exp(-2 w_a(0) t) / 2 for a symmetric log-concave marginal.
inline TailBound tail_bound_check(const Marginal& m, double t) {
  if (t < 0.0) throw PreconditionError("tail bound needs t >= 0");
  for (std::size_t k = 0; k < m.t.size(); ++k) {
    const double mirror = m.at(-m.t[k]);
    if (std::abs(mirror - m.values[k]) > 1e-6 * std::max(1.0, std::abs(m.values[k])))
      throw PreconditionError("marginal is not symmetric");
  }
  for (std::size_t k = 1; k + 1 < m.values.size(); ++k) {
    const double a = m.values[k - 1], b = m.values[k], c = m.values[k + 1];
    if (a <= 0.0 || c <= 0.0) continue;
    const double s0 = m.t[k - 1], s1 = m.t[k], s2 = m.t[k + 1];
    const double chord = ((s2 - s1) * std::log(a) + (s1 - s0) * std::log(c)) / (s2 - s0);
    if (b <= 0.0 || std::log(b) < chord - 1e-9)
      throw PreconditionError("marginal samples are not log-concave");
  }
  TailBound r;
  r.lhs = m.tail(t);
  r.rhs = 0.5 * std::exp(-2.0 * m.at(0.0) * t);
  r.satisfied = r.lhs <= r.rhs + 1e-8;
  return r;
}

}  // namespace isolab
