#include <gtest/gtest.h>

#include <boost/math/tools/roots.hpp>
#include <cmath>

#include "isolab/stability.hpp"

using namespace isolab;

namespace {

// Unit weight everywhere: uniform density normalized by a unit-area box.
Density unit_weight() { return Density::uniform(make_box(Vec2(0, 0), Vec2(1, 1))); }

// V = |x|^2.
Density quadratic_potential() { return Density::gaussian(1.0 / std::sqrt(2.0)); }

SurfaceFunction on(const Interface& s, auto&& fn) {
  SurfaceFunction f;
  f.surface = std::make_shared<const Interface>(s);
  for (const auto& p : s.vertices) f.values.push_back(fn(p));
  return f;
}

// Root of k tanh k = 1: the 1D problem -g'' = lambda g, g'(0) = 0, g'(1) = g(1).
double robin_root() {
  std::uintmax_t it = 100;
  const auto r = boost::math::tools::toms748_solve([](double k) { return k * std::tanh(k) - 1.0; }, 0.5, 2.0,
                                                   boost::math::tools::eps_tolerance<double>(50), it);
  return 0.5 * (r.first + r.second);
}

}  // namespace

TEST(SecondVariation, FlatSegmentConstant) {
  const auto seg = make_segment_interface(Vec2(-1, 0), Vec2(1, 0), 64, Vec2(0, 1));
  const auto f = on(seg, [](const Vec2&) { return 1.0; });
  EXPECT_NEAR(second_variation(seg, unit_weight(), f), 0.0, 1e-12);
  EXPECT_THROW(second_variation(seg, unit_weight(), f, nullptr, true), ConstraintError);
}

TEST(SecondVariation, UnitCircleQuadraticPotentialCos) {
  const auto d = quadratic_potential();
  const auto s = make_circle_interface(Vec2::Zero(), 1.0, 1024);
  const double w = std::exp(-1.0) / kPi;
  const double q = second_variation(s, d, on(s, [](const Vec2& p) { return p.x(); }), nullptr, true);
  EXPECT_NEAR(q, -2 * kPi * w, 1e-3 * 2 * kPi * w);
}

TEST(SecondVariation, UnitCircleCos2Theta) {
  const auto s = make_circle_interface(Vec2::Zero(), 1.0, 1024);
  const auto f = on(s, [](const Vec2& p) { return std::cos(2 * std::atan2(p.y(), p.x())); });
  EXPECT_NEAR(second_variation(s, unit_weight(), f), 3 * kPi, 1e-3 * 3 * kPi);
}

TEST(SecondVariation, FormIsSymmetric) {
  const auto s = make_circle_interface(Vec2(0.1, -0.2), 0.8, 300);
  const auto form = assemble_second_variation(s, Density::power_exp(1.5), nullptr);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Eigen::VectorXd f(s.vertices.size()), g(s.vertices.size());
  for (Eigen::Index k = 0; k < f.size(); ++k) f[k] = nd(rng), g[k] = nd(rng);
  const double a = form.bilinear(f, g), b = form.bilinear(g, f);
  EXPECT_LE(std::abs(a - b), 1e-12 * std::max(std::abs(a), 1.0));
}

TEST(Translation, UnitCircleIdentities) {
  const auto s = make_circle_interface(Vec2::Zero(), 1.0, 512);
  const auto t = translation_test(s, unit_weight(), nullptr, true);
  EXPECT_LE(t.unit_residual, 1e-15);
  EXPECT_LE(t.gradient_residual, 1e-9);
}

TEST(Translation, SumRuleQuadraticPotential) {
  const auto d = quadratic_potential();
  const auto s = make_circle_interface(Vec2::Zero(), 1.0, 512);
  const auto t = translation_test(s, d, nullptr, true);
  const double weighted_length = perimeter(s, d);
  EXPECT_NEAR(t.sum_q, -2 * weighted_length, 0.02 * 2 * weighted_length);
  EXPECT_LE(t.sum_rule_residual, 0.01);
  EXPECT_TRUE(t.some_negative);
}

TEST(Translation, StraightLineNeutral) {
  const auto body = make_box(Vec2(-1, -1), Vec2(1, 1));
  const auto seg = make_segment_interface(Vec2(-1, 0), Vec2(1, 0), 50, Vec2(0, -1));
  const auto t = translation_test(seg, Density::uniform(body));
  EXPECT_NEAR(t.sum_q, 0.0, 1e-12);
  EXPECT_LE(t.gradient_residual, 1e-12);
}

TEST(Translation, MissingNormals) {
  auto s = make_circle_interface(Vec2::Zero(), 1.0, 32);
  s.normals.clear();
  EXPECT_THROW(translation_test(s, unit_weight()), PreconditionError);
}

TEST(Translation, GradientIdentityConvergesOnExtractedCircles) {
  std::vector<double> hs, res;
  for (int n : {32, 64, 128, 256}) {
    const auto g = Grid::over(make_square(1.0), n);
    const auto s = extract(ScalarField::sample(g, [](const Vec2& x) { return 1.0 - (x - Vec2(0.01, 0.02)).norm(); }));
    // Unit circle clipped to the square is fine for the pointwise identity.
    hs.push_back(2.0 / n);
    res.push_back(translation_test(s, unit_weight()).gradient_residual);
  }
  const double slope = std::log(res.front() / res.back()) / std::log(hs.front() / hs.back());
  EXPECT_GE(slope, 1.0);
}

TEST(MinEigenvalue, FlatSegmentNeumann) {
  const double len = 2.0;
  const auto seg = make_segment_interface(Vec2(0, 0), Vec2(len, 0), 400, Vec2(0, 1));
  const auto v = min_eigenvalue(seg, unit_weight());
  EXPECT_NEAR(v.min_rayleigh, std::pow(kPi / len, 2), 1e-3 * std::pow(kPi / len, 2));
  EXPECT_TRUE(v.stable);
  EXPECT_LE(v.constraint_residual, 1e-8);
}

TEST(MinEigenvalue, CircleQuadraticPotentialUnstable) {
  const auto s = make_circle_interface(Vec2::Zero(), 1.0, 512);
  const auto v = min_eigenvalue(s, quadratic_potential());
  EXPECT_LE(v.min_rayleigh, -2.0 + 1e-3);
  EXPECT_FALSE(v.stable);
  EXPECT_LE(v.constraint_residual, 1e-8);
}

TEST(MinEigenvalue, ConstraintNeverLowersMinimum) {
  for (const auto& s : {make_circle_interface(Vec2::Zero(), 1.0, 200), make_segment_interface(Vec2(0, 0), Vec2(1, 1), 100, Vec2(-1, 1).normalized())}) {
    EigenOptions free;
    free.mean_zero = false;
    const auto d = quadratic_potential();
    EXPECT_GE(min_eigenvalue(s, d, nullptr).min_rayleigh, min_eigenvalue(s, d, nullptr, free).min_rayleigh - 1e-12);
  }
}

TEST(MinEigenvalue, XNetworkInDiskMatchesReducedModel) {
  const auto disk = make_disk(1.0);
  const auto v = min_eigenvalue(make_x_network(400), unit_weight(), &disk);
  const double k = robin_root();
  EXPECT_NEAR(v.min_rayleigh, -k * k, 1e-3 * k * k);
  EXPECT_FALSE(v.stable);
  const auto r = simons_reduced(1, SimonsDomain::ball, SimonsBc::volume_constrained);
  EXPECT_FALSE(r.stable);
  EXPECT_NEAR(r.min_rayleigh, v.min_rayleigh, 1e-3 * k * k);
}

TEST(Simons, FourBallBoundaryFixedStable) {
  const auto v = simons_reduced(4, SimonsDomain::ball, SimonsBc::boundary_fixed);
  EXPECT_TRUE(v.stable);
  // Radial Bessel problem: g = r^{-3} sin(pi r), lambda = pi^2.
  EXPECT_NEAR(v.min_rayleigh, kPi * kPi, 1e-2 * kPi * kPi);
}

TEST(Simons, FourBallVolumeConstrainedUnstable) {
  const auto v = simons_reduced(4, SimonsDomain::ball, SimonsBc::volume_constrained);
  EXPECT_FALSE(v.stable);
  EXPECT_LT(v.min_rayleigh, -7.0 + 1e-9);  // g = 1 already gives -(2n-1)
}

TEST(Simons, LowDimensionsFixedBoundaryUnstable) {
  for (int n : {2, 3}) EXPECT_FALSE(simons_reduced(n, SimonsDomain::ball, SimonsBc::boundary_fixed).stable) << n;
  for (int n : {4, 5, 8, 16}) EXPECT_TRUE(simons_reduced(n, SimonsDomain::ball, SimonsBc::boundary_fixed).stable) << n;
}

TEST(Simons, HullUnstable) {
  for (int n : {1, 4, 8}) EXPECT_FALSE(simons_reduced(n, SimonsDomain::hull, SimonsBc::volume_constrained).stable) << n;
}

TEST(Simons, UnsupportedDimension) {
  EXPECT_THROW(simons_reduced(0, SimonsDomain::ball, SimonsBc::boundary_fixed), PreconditionError);
  EXPECT_THROW(simons_reduced(17, SimonsDomain::ball, SimonsBc::boundary_fixed), PreconditionError);
}
