#pragma once

#include "dof/common.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <bit>
#include <memory>
#include <variant>

namespace dof {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct Triplet {
  std::ptrdiff_t row;
  std::ptrdiff_t col;
  double value;
};

// Duplicates are summed; explicit zeros are dropped.
inline SparseMatrix assemble(std::ptrdiff_t n, const std::vector<Triplet>& entries) {
  require(n >= 0, ErrorKind::assembly, "negative dimension");
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(entries.size());
  for (const auto& t : entries) {
    if (t.row < 0 || t.col < 0 || t.row >= n || t.col >= n)
      throw Error(ErrorKind::assembly, "index (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                                           ") out of range for n = " + std::to_string(n));
    trips.emplace_back(t.row, t.col, t.value);
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  m.prune(0.0);
  m.makeCompressed();
  return m;
}

inline double asymmetry(const SparseMatrix& a) {
  SparseMatrix d = SparseMatrix(a.transpose()) - a;
  double worst = 0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(d, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
  return worst;
}

inline std::uint64_t fingerprint(const SparseMatrix& a) {
  SparseMatrix c = a;
  c.makeCompressed();
  std::uint64_t h = fnv1a(c.outerIndexPtr(), sizeof(int) * (c.outerSize() + 1));
  h = fnv1a(c.innerIndexPtr(), sizeof(int) * c.nonZeros(), h);
  return fnv1a(c.valuePtr(), sizeof(double) * c.nonZeros(), h);
}

struct FactorOptions {
  // Cap on the Cholesky factor's storage; larger factors fall back to CG.
  std::size_t memory_cap_bytes = std::size_t(2) << 30;
  double cg_tolerance = 1e-10;
};

// Reusable solver for an SPD matrix. Direct sparse Cholesky with AMD ordering;
// conjugate gradients when the factor would exceed the memory cap.
class Factorization {
 public:
  using Llt = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;
  using Cg = Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper>;

  static Factorization factorize_spd(const SparseMatrix& a, const FactorOptions& opts = {}, double tau = 0.0) {
    require(a.rows() == a.cols(), ErrorKind::shape, "matrix must be square");
    require(asymmetry(a) <= 1e-10 * std::max(1.0, max_abs(a)), ErrorKind::shape, "matrix must be symmetric");
    Factorization f;
    f.n_ = a.rows();
    f.tau_ = tau;
    f.fingerprint_ = hash_combine(dof::fingerprint(a), std::bit_cast<std::uint64_t>(tau));
    auto llt = std::make_shared<Llt>();
    llt->compute(a);
    if (llt->info() != Eigen::Success) throw DefinitenessError(failing_pivot(a));
    std::size_t bytes = static_cast<std::size_t>(llt->matrixL().nestedExpression().nonZeros()) * 12;
    if (bytes > opts.memory_cap_bytes) {
      auto cg = std::make_shared<Cg>();
      cg->setTolerance(opts.cg_tolerance);
      cg->setMaxIterations(10 * std::max<Eigen::Index>(a.rows(), 1));
      f.cg_matrix_ = std::make_shared<SparseMatrix>(a);
      cg->compute(*f.cg_matrix_);
      f.solver_ = std::move(cg);
    } else {
      f.solver_ = std::move(llt);
    }
    return f;
  }

  VecX solve(const VecX& b) const {
    require(b.size() == n_, ErrorKind::shape,
            "right-hand side has " + std::to_string(b.size()) + " entries, expected " + std::to_string(n_));
    if (auto* llt = std::get_if<std::shared_ptr<Llt>>(&solver_)) return (*llt)->solve(b);
    return std::get<std::shared_ptr<Cg>>(solver_)->solve(b);
  }

  MatX solve(const MatX& b) const {
    require(b.rows() == n_, ErrorKind::shape, "right-hand side row count mismatch");
    MatX x(b.rows(), b.cols());
    for (Eigen::Index j = 0; j < b.cols(); ++j) x.col(j) = solve(VecX(b.col(j)));
    return x;
  }

  Eigen::Index size() const { return n_; }
  double tau() const { return tau_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  bool iterative() const { return std::holds_alternative<std::shared_ptr<Cg>>(solver_); }

 private:
  static double max_abs(const SparseMatrix& a) {
    double m = 0;
    for (int k = 0; k < a.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(a, k); it; ++it) m = std::max(m, std::abs(it.value()));
    return m;
  }

  // Natural-ordering LDLT reports the first non-positive pivot in original indexing.
  static std::ptrdiff_t failing_pivot(const SparseMatrix& a) {
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> ldlt(a);
    VecX d = ldlt.vectorD();
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (!(d(i) > 0)) return i;
    return d.size() < a.rows() ? d.size() : -1;
  }

  Eigen::Index n_ = 0;
  double tau_ = 0;
  std::uint64_t fingerprint_ = 0;
  std::variant<std::shared_ptr<Llt>, std::shared_ptr<Cg>> solver_;
  std::shared_ptr<SparseMatrix> cg_matrix_;  // keeps the matrix referenced by CG alive
};

inline Factorization factorize_spd(const SparseMatrix& a, const FactorOptions& opts = {}) {
  return Factorization::factorize_spd(a, opts);
}

inline VecX solve(const Factorization& f, const VecX& b) { return f.solve(b); }

}  // namespace dof
