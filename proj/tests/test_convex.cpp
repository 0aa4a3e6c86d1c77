#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "isolab/convex.hpp"

using namespace isolab;

TEST(Contains, SquareCenterAndOutside) {
  const auto sq = make_square(1.0);
  EXPECT_TRUE(sq.contains(vec2(0, 0)));
  EXPECT_FALSE(sq.contains(vec2(2, 0)));
}

TEST(Contains, DiskPolygonNearBoundary) {
  const auto disk = make_disk(1.0, 64);
  // Inradius of the 64-gon is cos(pi/64) ~ 0.9988.
  EXPECT_TRUE(disk.contains(vec2(0.99, 0)));
  int inside = 0;
  for (const auto& h : disk.halfspaces()) inside += h.slack(vec2(0.99, 0)) >= 0;
  EXPECT_EQ(inside, 64);
}

TEST(Contains, RejectsWrongDimension) {
  const auto sq = make_square(1.0);
  Vec x(3);
  x << 0, 0, 0;
  EXPECT_THROW(sq.contains(x), DimensionMismatch);
}

TEST(Support, SquareAxisAndCorner) {
  const auto sq = make_square(1.0);
  EXPECT_NEAR(sq.support(vec2(1, 0)), 1.0, 1e-12);
  EXPECT_NEAR(sq.support(vec2(1 / std::sqrt(2.0), 1 / std::sqrt(2.0))), std::sqrt(2.0), 1e-12);
}

TEST(Support, DiskPolygonWithinRadiusBounds) {
  const auto disk = make_disk(1.0, 64);
  for (int k = 0; k < 37; ++k) {
    const double t = 0.17 * k;
    EXPECT_NEAR(disk.support(vec2(std::cos(t), std::sin(t))), 1.0, 2e-3);
  }
}

TEST(Support, RequiresUnitDirection) {
  EXPECT_THROW(make_square(1.0).support(vec2(2, 0)), PreconditionError);
}

TEST(Support, WidthPositiveAndSymmetric) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  const auto hex = make_regular_polygon(6, 1.3, 0.2);
  for (int k = 0; k < 50; ++k) {
    Vec a = vec2(n(rng), n(rng));
    a.normalize();
    EXPECT_GT(hex.support(a) + hex.support(-a), 0.0);
    EXPECT_NEAR(hex.support(a), hex.support(-a), 1e-9);
  }
}

TEST(Hull, DiamondFromAxisPoints) {
  const auto d = convex_hull({vec2(1, 0), vec2(0, 1), vec2(-1, 0), vec2(0, -1)});
  EXPECT_EQ(d.halfspaces().size(), 4u);
  EXPECT_NEAR(d.volume(), 2.0, 1e-12);
  EXPECT_TRUE(d.contains(vec2(0.49, 0.49)));
  EXPECT_FALSE(d.contains(vec2(0.51, 0.51)));
  EXPECT_TRUE(d.symmetric());
}

TEST(Hull, SquareCorners) {
  const auto s = convex_hull({vec2(1, 1), vec2(-1, 1), vec2(-1, -1), vec2(1, -1), vec2(0.2, 0.3)});
  EXPECT_NEAR(s.volume(), 4.0, 1e-12);
  EXPECT_NEAR(s.support(vec2(1, 0)), 1.0, 1e-12);
}

TEST(Hull, HalfDiskArea) {
  std::vector<Vec> pts;
  for (int k = 0; k < 1000; ++k) {
    const double t = kPi * k / 999.0;
    pts.push_back(vec2(std::cos(t), std::sin(t)));
  }
  const auto h = convex_hull(pts);
  EXPECT_NEAR(h.volume(), kPi / 2, 0.01 * kPi / 2);
  for (const auto& p : pts) EXPECT_TRUE(h.contains(p));
}

TEST(Hull, CollinearInputIsDegenerate) {
  EXPECT_THROW(convex_hull({vec2(0, 0), vec2(1, 1), vec2(2, 2)}), DegenerateInput);
}

TEST(Cone, Membership) {
  const Cone c(vec2(0, 0), vec2(0, 1), kPi / 4);
  EXPECT_TRUE(c.contains(vec2(0, 1)));
  EXPECT_FALSE(c.contains(vec2(1, 0)));
  EXPECT_FALSE(c.contains(vec2(0, 0)));
  const Cone half(vec2(0, 0), vec2(0, 1), kPi / 2);
  EXPECT_TRUE(half.contains(vec2(100, 1e-6)));
  EXPECT_TRUE(half.contains(vec2(-3, 0.5)));
}

TEST(Cone, RejectsBadAngle) {
  EXPECT_THROW(Cone(vec2(0, 0), vec2(0, 1), 0.0), PreconditionError);
  EXPECT_THROW(Cone(vec2(0, 0), vec2(0, 1), 2.0), PreconditionError);
}

TEST(Body, SymmetryClaimIsVerified) {
  std::vector<Halfspace> hs{Halfspace(vec2(1, 0), -1), Halfspace(vec2(-1, 0), -2), Halfspace(vec2(0, 1), -1),
                            Halfspace(vec2(0, -1), -1)};
  EXPECT_THROW(ConvexBody(hs, true), PreconditionError);
  EXPECT_NO_THROW(ConvexBody(hs, false));
}

TEST(Body, EmptyIntersectionRejected) {
  std::vector<Halfspace> hs{Halfspace(vec2(1, 0), 1), Halfspace(vec2(-1, 0), 1), Halfspace(vec2(0, 1), -1),
                            Halfspace(vec2(0, -1), -1)};
  EXPECT_THROW(ConvexBody(hs, false), DegenerateInput);
}

TEST(Body, FromSupportReproducesSquare) {
  std::vector<Vec2> dirs;
  std::vector<double> vals;
  const auto sq = make_square(1.0);
  for (int k = 0; k < 360; ++k) {
    const Vec2 a(std::cos(2 * kPi * k / 360), std::sin(2 * kPi * k / 360));
    dirs.push_back(a);
    vals.push_back(sq.support(Vec(a)));
  }
  const auto b = from_support(dirs, vals);
  EXPECT_NEAR(b.volume(), 4.0, 1e-9);
  EXPECT_TRUE(b.symmetric());
}

TEST(Body, ThreeDimensionalQueries) {
  std::vector<Halfspace> hs;
  for (int axis = 0; axis < 3; ++axis)
    for (double s : {1.0, -1.0}) {
      Vec n = Vec::Zero(3);
      n[axis] = s;
      hs.emplace_back(n, -1.0);
    }
  const ConvexBody cube(hs, true);
  Vec x(3), a(3);
  x << 0.5, -0.5, 0.9;
  a << 1, 1, 1;
  a.normalize();
  EXPECT_TRUE(cube.contains(x));
  EXPECT_NEAR(cube.support(a), std::sqrt(3.0), 1e-12);
}
