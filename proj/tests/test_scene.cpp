#include "dof/scene.hpp"
#include "dof/shapes.hpp"
#include "test_util.hpp"

using namespace dof;

TEST(Scene, SpherePrimitive) {
  Scene s;
  s.add_primitive(Sphere{Vec3::Zero(), 1.0});
  auto h = s.closest_point(Vec3(2, 0, 0));
  EXPECT_TRUE(h.point.isApprox(Vec3(1, 0, 0)));
  EXPECT_DOUBLE_EQ(h.distance, 1.0);
}

TEST(Scene, PlanePrimitive) {
  Scene s;
  s.add_primitive(Plane{Vec3::Zero(), Vec3::UnitZ()});
  auto h = s.closest_point(Vec3(3, 4, 5));
  EXPECT_EQ(h.point, Vec3(3, 4, 0));
  EXPECT_DOUBLE_EQ(h.distance, 5.0);
}

TEST(Scene, SegmentAndCapsule) {
  Scene s;
  s.add_primitive(Segment{Vec3(0, 0, 0), Vec3(0, 0, 2)});
  auto h = s.closest_point(Vec3(3, 0, 1));
  EXPECT_EQ(h.point, Vec3(0, 0, 1));
  EXPECT_DOUBLE_EQ(h.param, 0.5);
  EXPECT_GT(s.closest_point(Vec3(0, 0, 1)).distance, 0.0);
  Scene c;
  c.add_primitive(Capsule{Vec3(0, 0, 0), Vec3(0, 0, 2), 0.5});
  auto hc = c.closest_point(Vec3(0, 0, 4));
  EXPECT_TRUE(hc.point.isApprox(Vec3(0, 0, 2.5)));
  EXPECT_DOUBLE_EQ(hc.distance, 1.5);
}

TEST(Scene, InvalidPrimitives) {
  Scene s;
  EXPECT_THROW(s.add_primitive(Sphere{Vec3::Zero(), 0.0}), Error);
  EXPECT_THROW(s.add_primitive(Plane{Vec3::Zero(), Vec3(0, 0, 2)}), Error);
  EXPECT_THROW(s.add_primitive(Segment{Vec3::Zero(), Vec3::Zero()}), Error);
}

TEST(Scene, CloudMatchesLinearScan) {
  PointCloud c;
  c.points = test::random_points(1000, 31);
  Scene s;
  s.add_cloud(c);
  for (const auto& q : test::random_points(100, 32, 2.0)) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < c.size(); ++i)
      if ((c.points[i] - q).squaredNorm() < (c.points[best] - q).squaredNorm()) best = i;
    auto h = s.closest_point(q);
    EXPECT_EQ(h.vertex, best);
    EXPECT_EQ(h.point, c.points[best]);
    EXPECT_EQ(h.distance, (q - c.points[best]).norm());
  }
}

TEST(Scene, TieGoesToLowestSurface) {
  Scene s;
  s.add_primitive(Plane{Vec3(0, 0, 1), Vec3::UnitZ()});
  s.add_primitive(Plane{Vec3(0, 0, -1), Vec3::UnitZ()});
  EXPECT_EQ(s.closest_point(Vec3(0, 0, 0)).surface_id, 0u);
}

TEST(Scene, DistanceIsLipschitzAndConsistent) {
  Scene s;
  s.add_cloud(shapes::fibonacci_sphere(500, 0.5));
  s.add_primitive(Plane{Vec3(0, 0, -1), Vec3::UnitZ()});
  s.add_primitive(Capsule{Vec3(1, 0, 0), Vec3(1, 1, 0), 0.1});
  s.add_primitive(Segment{Vec3(-1, 0, 0), Vec3(-1, 0, 1)});
  auto xs = test::random_points(400, 33, 2.0);
  for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
    auto a = s.closest_point(xs[i]), b = s.closest_point(xs[i + 1]);
    EXPECT_LE(std::abs(a.distance - b.distance), (xs[i] - xs[i + 1]).norm() + 1e-9);
    EXPECT_NEAR(a.distance, (xs[i] - a.point).norm(), 1e-9);
  }
}
