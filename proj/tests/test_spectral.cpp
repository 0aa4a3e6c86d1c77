#include <gtest/gtest.h>

#include <boost/math/special_functions/bessel_prime.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>

#include "isolab/spectral.hpp"

using namespace isolab;

namespace {

const ConvexBody kRect = make_box(Vec2(-1, -0.5), Vec2(1, 0.5));

// First positive zero of J1'.
double bessel_prime_root() {
  std::uintmax_t it = 100;
  const auto r = boost::math::tools::toms748_solve([](double x) { return boost::math::cyl_bessel_j_prime(1, x); }, 1.0,
                                                   2.5, boost::math::tools::eps_tolerance<double>(50), it);
  return 0.5 * (r.first + r.second);
}

EigenResult first(const ConvexBody& b, int n) { return solve_neumann(b, Grid::over(b, n), 1).front(); }

ConvexBody rotated(const ConvexBody& b, double th) {
  std::vector<Vec2> v;
  for (const auto& p : b.vertices()) v.push_back(Eigen::Rotation2Dd(th) * Vec2(p));
  return polygon_from_ccw(v);
}

}  // namespace

TEST(Neumann, RectangleEigenvalueAndMode) {
  const auto e = first(kRect, 256);
  EXPECT_NEAR(e.lambda, kPi * kPi / 4, 0.01 * kPi * kPi / 4);
  EXPECT_FALSE(e.degenerate);
  EXPECT_LE(std::abs(e.mean), 1e-8);
  EXPECT_NEAR(inner(e.u, e.u), 1.0, 1e-12);
  EXPECT_LT(e.residual, 1e-8);
  // Mode is +-sin(pi x / 2) normalized over area 2.
  const auto ref = ScalarField::sample(e.u.grid, [](const Vec2& x) { return std::sin(kPi * x.x() / 2); });
  const double c = inner(e.u, ref) / std::sqrt(inner(ref, ref));
  EXPECT_GT(std::abs(c), 1.0 - 1e-6);
}

TEST(Neumann, RectangleSecondOrder) {
  std::vector<double> err, h;
  for (int n : {64, 128, 256}) {
    err.push_back(std::abs(first(kRect, n).lambda - kPi * kPi / 4));
    h.push_back(2.0 / n);
  }
  EXPECT_GE(std::log(err[1] / err[2]) / std::log(2.0), 1.8);
  EXPECT_GE(std::log(err[0] / err[1]) / std::log(2.0), 1.8);
}

TEST(Neumann, SquareDegeneratePair) {
  const auto b = make_square(0.5);
  const auto e = solve_neumann(b, Grid::over(b, 128), 1);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_TRUE(e[0].degenerate);
  EXPECT_TRUE(e[1].degenerate);
  EXPECT_NEAR(e[0].lambda, kPi * kPi, 0.01 * kPi * kPi);
  EXPECT_LT(std::abs(inner(e[0].u, e[1].u)), 1e-6);
}

TEST(Neumann, UnitDisk) {
  const double j = bessel_prime_root();
  ASSERT_NEAR(j * j, 3.3900, 1e-4);
  const auto e = solve_neumann(make_disk(1.0), Grid::over(make_disk(1.0), 256), 1);
  EXPECT_NEAR(e.front().lambda, j * j, 0.01 * j * j);
}

TEST(Neumann, Orthogonality) {
  const auto b = make_ellipse(1.0, 0.7);
  const auto e = solve_neumann(b, Grid::over(b, 96), 4);
  ASSERT_GE(e.size(), 4u);
  for (std::size_t i = 0; i < e.size(); ++i) {
    EXPECT_NEAR(inner(e[i].u, e[i].u), 1.0, 1e-10);
    if (i) EXPECT_LE(e[i - 1].lambda, e[i].lambda);
    for (std::size_t j = i + 1; j < e.size(); ++j) EXPECT_LT(std::abs(inner(e[i].u, e[j].u)), 1e-6);
  }
}

TEST(Neumann, LongerBodySmallerEigenvalue) {
  EXPECT_LT(first(kRect, 128).lambda, first(make_square(0.5), 128).lambda);
}

TEST(Neumann, RejectsCoarseGrid) {
  EXPECT_THROW(solve_neumann(kRect, Grid::over(kRect, 32), 1), ResolutionError);
}

TEST(HotSpots, Rectangle) {
  const auto e = first(kRect, 256);
  const auto r = hot_spots_check(e, kRect);
  EXPECT_GT(r.margin, 0.0);
  EXPECT_NEAR(std::abs(r.direction.x()), 1.0, 1e-9);
  // Extrema on the short sides x = +-1.
  EXPECT_NEAR(std::abs(r.argmax.x()), 1.0, 2.0 / 256);
  EXPECT_NEAR(std::abs(r.argmin.x()), 1.0, 2.0 / 256);
  EXPECT_LE(r.max_boundary_distance, 2.0 / 256);
  ASSERT_TRUE(r.nodal.has_value());
  EXPECT_LE(r.nodal_lipschitz, 0.02);
  EXPECT_DOUBLE_EQ(r.collar, 2 * 2.0 / 256);
}

TEST(HotSpots, RectangleNodalMidline) {
  const auto ns = nodal_set(first(kRect, 128));
  for (const auto& p : ns.interface.vertices) EXPECT_NEAR(p.x(), 0.0, 1e-9);
  EXPECT_LE(ns.fit.lipschitz, 0.02);
}

TEST(HotSpots, UnitDisk) {
  const auto b = make_disk(1.0);
  const auto e = solve_neumann(b, Grid::over(b, 256), 1);
  for (const auto& x : e) {
    const auto r = hot_spots_check(x, b);
    EXPECT_GT(r.margin, 0.0);
    EXPECT_LE(r.max_boundary_distance, 2.0 / 256);
    EXPECT_LE(r.min_boundary_distance, 2.0 / 256);
    EXPECT_LE(r.nodal_lipschitz, 0.05);
  }
}

TEST(HotSpots, EllipseNodalExploratory) {
  const auto b = make_ellipse(2.0, 1.0);
  const auto r = hot_spots_check(first(b, 256), b);
  EXPECT_LT(r.nodal_lipschitz, 0.2);
}

TEST(HotSpots, HexagonSelfConsistent) {
  // Same absolute collar at both resolutions; the two eigenfunctions are
  // matched by their monotone direction.
  const auto b = make_regular_polygon(6, 1.0);
  HotSpotsOptions opt;
  opt.collar = 0.0625;
  auto margins = [&](int n) {
    std::array<double, 2> m{0, 0};
    for (const auto& e : solve_neumann(b, Grid::over(b, n), 2)) {
      const auto r = hot_spots_check(e, b, opt);
      m[std::abs(r.direction.x()) > std::abs(r.direction.y()) ? 0 : 1] = r.margin;
    }
    return m;
  };
  const auto c = margins(384), f = margins(512);
  for (int i = 0; i < 2; ++i) {
    EXPECT_GT(c[i], 0.0);
    EXPECT_NEAR(c[i], f[i], 0.05 * f[i]) << i;
  }
}

TEST(HotSpots, RotationEquivariance) {
  const auto e0 = first(kRect, 192);
  const auto r0 = hot_spots_check(e0, kRect);
  const double th = 0.5;
  const auto b = rotated(kRect, th);
  const auto r1 = hot_spots_check(first(b, 192), b);
  const Vec2 expect = Eigen::Rotation2Dd(th) * r0.direction;
  // Sign of an eigenfunction is a convention; compare lines.
  const double ang = std::acos(std::min(1.0, std::abs(expect.dot(r1.direction))));
  EXPECT_LE(ang, 0.05);
  EXPECT_GT(r1.margin, 0.0);
}

TEST(HotSpots, Deterministic) {
  const auto a = hot_spots_check(first(kRect, 128), kRect), b = hot_spots_check(first(kRect, 128), kRect);
  EXPECT_EQ(a.margin, b.margin);
  EXPECT_EQ(a.direction, b.direction);
  EXPECT_EQ(a.nodal_lipschitz, b.nodal_lipschitz);
}

TEST(Deform, SameBodyConstantReports) {
  const auto r = deform_family(make_disk(1.0), make_disk(1.0), 3);
  ASSERT_EQ(r.steps.size(), 4u);
  for (const auto& s : r.steps) {
    EXPECT_EQ(s.lambda, r.steps[0].lambda);
    EXPECT_EQ(s.margin, r.steps[0].margin);
    EXPECT_EQ(s.lipschitz, r.steps[0].lipschitz);
  }
  EXPECT_FALSE(r.first_nonpositive.has_value());
}

TEST(Deform, SquareToRectangle) {
  const auto r = deform_family(make_square(1.0), kRect, 4);
  for (const auto& s : r.steps) {
    // Every member is [-1,1] x [-h,h] with h >= 1/2, whose first mode is sin(pi x / 2).
    EXPECT_NEAR(s.lambda, kPi * kPi / 4, 0.01 * kPi * kPi / 4) << s.t;
    EXPECT_GT(s.margin, 0.0) << s.t;
  }
  EXPECT_FALSE(r.first_nonpositive.has_value());
}

TEST(Deform, BallToThinRhombusFlagsStable) {
  const auto rh = polygon_from_ccw({Vec2(1.5, 0), Vec2(0, 0.3), Vec2(-1.5, 0), Vec2(0, -0.3)});
  std::array<std::optional<double>, 2> flags;
  int i = 0;
  for (int n : {96, 128}) {
    DeformOptions opt;
    opt.cells_across = n;
    const auto r = deform_family(make_disk(1.0), rh, 10, opt);
    EXPECT_EQ(r.steps.size(), 11u);
    flags[i++] = r.first_nonpositive;
  }
  EXPECT_EQ(flags[0], flags[1]);
}

TEST(Deform, RejectsAsymmetricEndpoints) {
  const auto tri = make_regular_polygon(3, 1.0);
  EXPECT_THROW(deform_family(tri, make_disk(1.0), 2), PreconditionError);
}
