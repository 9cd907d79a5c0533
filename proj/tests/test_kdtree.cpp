#include "dof/kdtree.hpp"
#include "test_util.hpp"

using namespace dof;

namespace {

std::vector<Neighbor> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, std::size_t k) {
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < pts.size(); ++i) all.push_back({i, (pts[i] - q).squaredNorm()});
  std::sort(all.begin(), all.end());
  all.resize(std::min(k, all.size()));
  return all;
}

}  // namespace

TEST(KdTree, NearestMatchesLinearScan) {
  auto pts = test::random_points(1000, 7);
  KdTree tree(pts);
  auto queries = test::random_points(200, 8, 1.5);
  for (const auto& q : queries) {
    auto expect = brute_knn(pts, q, 1)[0];
    auto got = tree.nearest(q);
    EXPECT_EQ(got.index, expect.index);
    EXPECT_EQ(got.dist2, expect.dist2);
  }
}

TEST(KdTree, KnnMatchesLinearScan) {
  auto pts = test::random_points(500, 9);
  KdTree tree(pts);
  for (const auto& q : test::random_points(50, 10)) {
    auto expect = brute_knn(pts, q, 17);
    auto got = tree.knn(q, 17);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].index, expect[i].index);
  }
}

TEST(KdTree, TiesResolveToLowestIndex) {
  std::vector<Vec3> pts(40, Vec3(1, 2, 3));
  pts.push_back(Vec3(0, 0, 0));
  KdTree tree(pts);
  EXPECT_EQ(tree.nearest(Vec3(1, 2, 3)).index, 0u);
  auto nb = tree.knn(Vec3(1, 2, 3), 5);
  for (std::size_t i = 0; i < nb.size(); ++i) EXPECT_EQ(nb[i].index, i);
}

TEST(KdTree, RadiusQuery) {
  auto pts = test::random_points(300, 11);
  KdTree tree(pts);
  Vec3 q(0.1, -0.2, 0.3);
  auto got = tree.radius(q, 0.4);
  std::size_t expect = 0;
  for (const auto& p : pts) expect += (p - q).squaredNorm() <= 0.16;
  EXPECT_EQ(got.size(), expect);
}
