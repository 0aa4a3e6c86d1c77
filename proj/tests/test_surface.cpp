#include <gtest/gtest.h>

#include <cmath>

#include "isolab/surface.hpp"

using namespace isolab;

namespace {

Interface extracted_circle(int n, double r, const Vec2& c = Vec2::Zero()) {
  const auto g = Grid::over(make_square(1.0), n);
  return extract(ScalarField::sample(g, [&](const Vec2& x) { return r * r - (x - c).squaredNorm(); }));
}

double log_slope(const std::vector<double>& h, const std::vector<double>& e) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = h.size();
  for (std::size_t k = 0; k < h.size(); ++k) {
    const double x = std::log(h[k]), y = std::log(e[k]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace

TEST(Extract, HorizontalLine) {
  const auto g = Grid::over(make_square(1.0), 64);
  const auto s = extract(ScalarField::sample(g, [](const Vec2& x) { return x.y(); }));
  ASSERT_EQ(s.chains.size(), 1u);
  EXPECT_NEAR(s.length(), 2.0, 1e-12);
  for (const auto& v : s.vertices) EXPECT_NEAR(v.y(), 0.0, 1e-12);
  for (const auto& n : s.normals) {
    EXPECT_NEAR(n.norm(), 1.0, 1e-9);
    EXPECT_NEAR(n.y(), -1.0, 1e-12);  // E = {y > 0}, normal points out of E
  }
  EXPECT_EQ(s.boundary_vertices.size(), 2u);
}

TEST(Extract, CircleWithinSecondOrder) {
  const int n = 64;
  const double h = 2.0 / n, r = 0.5;
  const auto s = extracted_circle(n, r);
  ASSERT_EQ(s.chains.size(), 1u);
  EXPECT_TRUE(s.chains[0].closed);
  for (const auto& v : s.vertices) EXPECT_LT(std::abs(v.norm() - r), h * h);
  EXPECT_NEAR(s.length(), 2 * kPi * r, 2 * h * h);
}

TEST(Extract, NoZerosIsAnError) {
  const auto g = Grid::over(make_square(1.0), 32);
  EXPECT_THROW(extract(ScalarField(g, 1.0)), PreconditionError);
}

TEST(Extract, VerticesHaveAtMostTwoSegments) {
  const auto g = Grid::over(make_disk(1.0), 96);
  const auto s = extract(ScalarField::sample(g, [](const Vec2& x) { return std::sin(5 * x.x()) * std::cos(4 * x.y()); }));
  std::vector<int> deg(s.vertices.size(), 0);
  s.for_each_segment([&](std::size_t a, std::size_t b) { ++deg[a], ++deg[b]; });
  for (int d : deg) EXPECT_LE(d, 2);
}

TEST(Perimeter, DiameterOfDisk) {
  const auto seg = make_segment_interface(Vec2(-1, 0), Vec2(1, 0), 100, Vec2(0, -1));
  EXPECT_NEAR(perimeter(seg, Density::uniform(make_disk(1.0))), 2.0 / make_disk(1.0).volume(), 1e-12);
  EXPECT_NEAR(perimeter(seg, Density::uniform(make_disk(1.0))), 2.0 / kPi, 2e-4);
  EXPECT_NEAR(perimeter(seg, [](const Vec2&) { return 1.0; }), 2.0, 1e-12);
}

TEST(Perimeter, CircleUnitWeightSecondOrder) {
  for (double r : {0.3, 0.7}) {
    std::vector<double> hs, errs;
    for (int n : {64, 128, 256}) {
      const auto s = extracted_circle(n, r, Vec2(0.011, 0.007));
      hs.push_back(2.0 / n);
      errs.push_back(std::abs(perimeter(s, [](const Vec2&) { return 1.0; }) - 2 * kPi * r));
    }
    EXPECT_LT(errs.back(), 1e-3 * r);
    EXPECT_GE(log_slope(hs, errs), 1.8);
  }
}

TEST(Perimeter, GaussianBisectingLine) {
  const auto d = Density::gaussian();
  const double R = d.truncation_radius();
  const auto seg = make_segment_interface(Vec2(-R, 0), Vec2(R, 0), 2000, Vec2(0, -1));
  EXPECT_NEAR(perimeter(seg, d), 1.0 / std::sqrt(2 * kPi), 1e-3);
}

TEST(Perimeter, RotationInvariantWithinTwoPercent) {
  const auto g = Grid::over(make_disk(1.0), 128);
  std::vector<double> p;
  for (int k = 0; k < 8; ++k) {
    const double t = 0.37 * k;
    const Vec2 a(std::cos(t), std::sin(t));
    // A rotated ellipse-shaped set.
    const auto f = ScalarField::sample(g, [&](const Vec2& x) {
      const double u = a.dot(x), v = -a.y() * x.x() + a.x() * x.y();
      return 1.0 - (u * u / 0.36 + v * v / 0.09);
    });
    p.push_back(extract(f).length());
  }
  for (double v : p) EXPECT_NEAR(v / p[0], 1.0, 0.02);
}

TEST(Curvature, StraightSegment) {
  const auto seg = make_segment_interface(Vec2(-1, 0.2), Vec2(1, -0.3), 40, Vec2(0.25, 1).normalized());
  const auto cd = curvature(seg, Density::uniform(make_square(2.0)));
  for (std::size_t k = 0; k < seg.vertices.size(); ++k) {
    EXPECT_NEAR(cd.mean[k], 0.0, 1e-12);
    EXPECT_NEAR(cd.weighted[k], 0.0, 1e-12);
  }
}

TEST(Curvature, AnalyticCircle) {
  const double r = 0.6;
  const auto s = make_circle_interface(Vec2::Zero(), r, 200);
  const auto cd = curvature(s, Density::uniform(make_square(1.0)));
  for (std::size_t k = 0; k < s.vertices.size(); ++k) {
    EXPECT_NEAR(cd.mean[k], 1 / r, 1e-3);
    EXPECT_NEAR(cd.norm_a2[k], 1 / (r * r), 3e-3);
  }
}

TEST(Curvature, UnitCircleInQuadraticPotential) {
  // V = |x|^2: grad V = 2x, so H_mu = 1 - 2 = -1 everywhere.
  const auto d = Density::gaussian(1.0 / std::sqrt(2.0));
  const auto s = make_circle_interface(Vec2::Zero(), 1.0, 256);
  const auto cd = curvature(s, d);
  for (double v : cd.weighted) EXPECT_NEAR(v, -1.0, 1e-3);
}

TEST(Curvature, TooFewVertices) {
  const auto seg = make_segment_interface(Vec2(0, 0), Vec2(1, 0), 1, Vec2(0, 1));
  EXPECT_THROW(curvature(seg, Density::gaussian()), PreconditionError);
}

TEST(Curvature, ExtractedCircleConvergesFirstOrder) {
  const double r = 0.55;
  std::vector<double> hs, errs;
  for (int n : {32, 64, 128, 256}) {
    const auto s = extracted_circle(n, r, Vec2(0.013, -0.021));
    const auto cd = curvature(s, Density::uniform(make_square(1.0)));
    double e = 0.0;
    for (double H : cd.mean) e = std::max(e, std::abs(H - 1 / r));
    hs.push_back(2.0 / n);
    errs.push_back(e);
  }
  EXPECT_GE(log_slope(hs, errs), 1.0);
}

TEST(ContactAngle, DiameterInDisk) {
  const auto body = make_disk(1.0);
  const auto g = Grid::over(body, 128);
  const auto s = extract(ScalarField::sample(g, [](const Vec2& x) { return x.y() - 0.3 * x.x(); }));
  ASSERT_EQ(s.boundary_vertices.size(), 2u);
  // Chord through the center along (1, 0.3)/|.| is a diameter.
  for (const auto& a : contact_angle(s, body)) EXPECT_NEAR(a.angle_deg, 90.0, 1.0);
}

TEST(ContactAngle, QuarterCircleAtSquareCorner) {
  const auto body = make_square(1.0);
  const auto g = Grid::over(body, 128);
  const auto s = extract(ScalarField::sample(g, [](const Vec2& x) { return 0.8 * 0.8 - (x - Vec2(1, 1)).squaredNorm(); }));
  const auto angles = contact_angle(s, body);
  ASSERT_EQ(angles.size(), 2u);
  for (const auto& a : angles) EXPECT_NEAR(a.angle_deg, 90.0, 1.0);
}

TEST(ContactAngle, ClosedCurveHasNoContacts) {
  EXPECT_THROW(contact_angle(make_circle_interface(Vec2::Zero(), 0.5, 50), make_square(1.0)), PreconditionError);
}

TEST(GraphFit, StraightSegment) {
  const auto seg = make_segment_interface(Vec2(-1, -0.5), Vec2(1, 0.5), 30, Vec2(0.5, -1).normalized());
  const auto fit = graph_fit(seg);
  EXPECT_TRUE(fit.is_graph);
  EXPECT_NEAR(fit.lipschitz, 0.0, 5e-3);
  EXPECT_NEAR(std::abs(fit.direction.dot(Vec2(-0.5, 1).normalized())), 1.0, 1e-4);
}

TEST(GraphFit, VShape) {
  const auto s = Interface::from_polyline({Vec2(-1, 1), Vec2(-0.5, 0.5), Vec2(0, 0), Vec2(0.5, 0.5), Vec2(1, 1)}, false,
                                          [](const Vec2&) { return Vec2(0, -1); });
  const auto fit = graph_fit(s);
  EXPECT_TRUE(fit.is_graph);
  EXPECT_NEAR(fit.lipschitz, 1.0, 1e-9);
  EXPECT_NEAR(std::abs(fit.direction.y()), 1.0, 1e-9);
}

TEST(GraphFit, FullCircleIsNotAGraph) {
  const auto fit = graph_fit(make_circle_interface(Vec2::Zero(), 1.0, 64));
  EXPECT_FALSE(fit.is_graph);
  EXPECT_TRUE(std::isinf(fit.lipschitz));
}

TEST(IntrinsicRatio, SegmentAndSemicircle) {
  const auto seg = make_segment_interface(Vec2(0, 0), Vec2(2, 1), 50, Vec2(0, 1));
  EXPECT_NEAR(intrinsic_extrinsic_ratio(seg).max_ratio, 1.0, 1e-12);
  std::vector<Vec2> pts;
  for (int k = 0; k <= 400; ++k) pts.push_back(Vec2(std::cos(kPi * k / 400), std::sin(kPi * k / 400)));
  const auto semi = Interface::from_polyline(pts, false, [](const Vec2& p) { return p; });
  const auto r = intrinsic_extrinsic_ratio(semi);
  EXPECT_NEAR(r.max_ratio, kPi / 2, 0.02 * kPi / 2);
  EXPECT_FALSE(r.disconnected);
}

TEST(IntrinsicRatio, DisconnectedFlag) {
  auto s = make_segment_interface(Vec2(0, 0), Vec2(1, 0), 10, Vec2(0, 1));
  s.append(make_segment_interface(Vec2(0, 1), Vec2(1, 1), 10, Vec2(0, 1)));
  const auto r = intrinsic_extrinsic_ratio(s);
  EXPECT_TRUE(r.disconnected);
  EXPECT_EQ(r.per_component.size(), 2u);
}
