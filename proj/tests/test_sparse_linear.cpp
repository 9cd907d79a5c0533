#include "dof/laplacian.hpp"
#include "dof/shapes.hpp"
#include "dof/sparse_linear.hpp"
#include "test_util.hpp"

using namespace dof;

TEST(Assemble, DuplicatesSum) {
  SparseMatrix m = assemble(1, {{0, 0, 1.0}, {0, 0, 2.0}});
  EXPECT_EQ(m.nonZeros(), 1);
  EXPECT_EQ(m.coeff(0, 0), 3.0);
}

TEST(Assemble, Identity) {
  SparseMatrix m = assemble(3, {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}});
  EXPECT_TRUE(MatX(m).isIdentity());
}

TEST(Assemble, OutOfRange) {
  try {
    assemble(2, {{0, 2, 1.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::assembly);
  }
}

TEST(Assemble, MatvecMatchesDense) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> idx(0, 99);
  std::normal_distribution<double> g;
  std::vector<Triplet> t;
  MatX dense = MatX::Zero(100, 100);
  for (int k = 0; k < 600; ++k) {
    int i = idx(rng), j = idx(rng);
    double v = g(rng);
    t.push_back({i, j, v});
    t.push_back({j, i, v});
    dense(i, j) += v;
    dense(j, i) += v;
  }
  SparseMatrix m = assemble(100, t);
  VecX x = VecX::Random(100);
  EXPECT_LT((m * x - dense * x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(asymmetry(m), 1e-12);
}

TEST(Factorize, IdentityAndDiagonal) {
  SparseMatrix id = assemble(5, {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}, {3, 3, 1}, {4, 4, 1}});
  VecX b(5);
  b << 1, 2, 3, 4, 5;
  EXPECT_EQ(solve(factorize_spd(id), VecX(b)), b);
  SparseMatrix two = assemble(1, {{0, 0, 2}});
  EXPECT_DOUBLE_EQ(solve(factorize_spd(two), VecX(VecX::Constant(1, 4.0)))(0), 2.0);
}

TEST(Factorize, NonSpdNamesPivot) {
  SparseMatrix a = assemble(3, {{0, 0, 1}, {1, 1, -1}, {2, 2, 1}});
  try {
    factorize_spd(a);
    FAIL();
  } catch (const DefinitenessError& e) {
    EXPECT_EQ(e.pivot(), 1);
    EXPECT_EQ(e.kind(), ErrorKind::definiteness);
  }
}

TEST(Factorize, CloudSystemResidual) {
  PointCloud c = shapes::random_blob(500, 3);
  LaplacianPair lap = build_laplacian(c);
  SparseMatrix a = SparseMatrix(lap.M.asDiagonal()) - 0.1 * lap.C;
  Factorization f = factorize_spd(a);
  VecX b = VecX::Random(a.rows());
  VecX x = f.solve(b);
  EXPECT_LT((a * x - b).norm() / b.norm(), 1e-8);
  VecX y = VecX::Random(a.rows());
  EXPECT_LT((f.solve(VecX(a * y)) - y).norm() / y.norm(), 1e-8);
}

TEST(Factorize, IterativeFallbackWhenOverCap) {
  PointCloud c = shapes::random_blob(500, 4);
  LaplacianPair lap = build_laplacian(c);
  SparseMatrix a = SparseMatrix(lap.M.asDiagonal()) - 0.1 * lap.C;
  FactorOptions opts;
  opts.memory_cap_bytes = 16;
  Factorization f = Factorization::factorize_spd(a, opts);
  EXPECT_TRUE(f.iterative());
  VecX b = VecX::Random(a.rows());
  VecX x = f.solve(b);
  EXPECT_LT((a * x - b).norm() / b.norm(), 1e-8);
  EXPECT_EQ(x, f.solve(b));
}

TEST(Solve, ZeroDeterministicAndBatched) {
  PointCloud c = shapes::random_blob(300, 5);
  LaplacianPair lap = build_laplacian(c);
  SparseMatrix a = SparseMatrix(lap.M.asDiagonal()) - 0.5 * lap.C;
  Factorization f = factorize_spd(a);
  EXPECT_EQ(f.solve(VecX(VecX::Zero(a.rows()))), VecX::Zero(a.rows()));
  VecX b = VecX::Random(a.rows());
  EXPECT_EQ(f.solve(b), f.solve(b));
  MatX B = MatX::Random(a.rows(), 3);
  MatX X = f.solve(B);
  for (int j = 0; j < 3; ++j) EXPECT_EQ(VecX(X.col(j)), f.solve(VecX(B.col(j))));
}

TEST(Solve, ShapeMismatch) {
  SparseMatrix id = assemble(2, {{0, 0, 1}, {1, 1, 1}});
  try {
    solve(factorize_spd(id), VecX(VecX::Zero(3)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}
