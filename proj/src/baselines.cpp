#include "kfmc/baselines.hpp"

#include "kfmc/errors.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace kfmc {

namespace {

/// Ridge solve (A'A + lambda I) w = A'b for small dense systems.
Vector ridge_solve(const Matrix& gram, const Vector& rhs) {
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    Vector w = ldlt.solve(rhs);
    if (w.allFinite()) return w;
  }
  return gram.completeOrthogonalDecomposition().solve(rhs);
}

}  // namespace

double lrf_objective(const MaskedMatrix& mm, const Matrix& U, const Matrix& V, double lambda) {
  double sum = 0.0;
  for (Index j = 0; j < mm.cols(); ++j)
    for (Index i = 0; i < mm.rows(); ++i)
      if (mm.mask.observed(i, j)) {
        const double res = mm.M(i, j) - U.row(i).dot(V.row(j));
        sum += res * res;
      }
  return sum + lambda * (U.squaredNorm() + V.squaredNorm());
}

LrfResult lrf_complete(const MaskedMatrix& mm, Index rank, double lambda, int iters) {
  const Index m = mm.rows();
  const Index n = mm.cols();
  if (rank < 1 || rank > std::min(m, n)) throw ArgumentError("rank must lie in [1, min(m, n)]");
  if (!(lambda >= 0.0)) throw ArgumentError("lambda must be >= 0");
  if (iters < 0) throw ArgumentError("iters must be >= 0");

  const MaskedMatrix init = impute_init(mm.M, mm.mask, InitStrategy::RowMean);
  Eigen::BDCSVD<Matrix> svd(init.X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector root = svd.singularValues().head(rank).cwiseSqrt();

  LrfResult out;
  out.U = svd.matrixU().leftCols(rank) * root.asDiagonal();
  out.V = svd.matrixV().leftCols(rank) * root.asDiagonal();
  const Matrix I = Matrix::Identity(rank, rank);

  for (int it = 0; it < iters; ++it) {
    for (Index i = 0; i < m; ++i) {
      Matrix gram = lambda * I;
      Vector rhs = Vector::Zero(rank);
      for (Index j = 0; j < n; ++j)
        if (mm.mask.observed(i, j)) {
          gram.noalias() += out.V.row(j).transpose() * out.V.row(j);
          rhs.noalias() += mm.M(i, j) * out.V.row(j).transpose();
        }
      out.U.row(i) = ridge_solve(gram, rhs).transpose();
    }
    out.objective_trace.push_back(lrf_objective(mm, out.U, out.V, lambda));
    for (Index j = 0; j < n; ++j) {
      Matrix gram = lambda * I;
      Vector rhs = Vector::Zero(rank);
      for (Index i = 0; i < m; ++i)
        if (mm.mask.observed(i, j)) {
          gram.noalias() += out.U.row(i).transpose() * out.U.row(i);
          rhs.noalias() += mm.M(i, j) * out.U.row(i).transpose();
        }
      out.V.row(j) = ridge_solve(gram, rhs).transpose();
    }
    out.objective_trace.push_back(lrf_objective(mm, out.U, out.V, lambda));
  }

  out.X = out.U * out.V.transpose();
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m; ++i)
      if (mm.mask.observed(i, j)) out.X(i, j) = mm.M(i, j);
  if (!out.X.allFinite()) throw NumericalError("LRF produced non-finite values");
  return out;
}

Matrix lrf_basis(const Matrix& X_train, Index rank) {
  if (rank < 1 || rank > std::min(X_train.rows(), X_train.cols()))
    throw ArgumentError("rank must lie in [1, min(m, n)]");
  Eigen::BDCSVD<Matrix> svd(X_train, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(rank);
}

Vector ose_lrf(const Matrix& U, const Vector& x, const IndexList& observed, double lambda) {
  if (observed.empty()) throw ArgumentError("ose_lrf needs at least one observed entry");
  if (x.size() != U.rows()) throw ArgumentError("sample length does not match basis rows");
  if (!(lambda >= 0.0)) throw ArgumentError("lambda must be >= 0");
  const Index r = U.cols();
  Matrix U_obs(static_cast<Index>(observed.size()), r);
  Vector x_obs(static_cast<Index>(observed.size()));
  std::vector<char> is_obs(static_cast<std::size_t>(x.size()), 0);
  for (std::size_t k = 0; k < observed.size(); ++k) {
    const Index i = observed[k];
    if (i < 0 || i >= x.size()) throw ArgumentError("observed index out of range");
    U_obs.row(static_cast<Index>(k)) = U.row(i);
    x_obs(static_cast<Index>(k)) = x(i);
    is_obs[static_cast<std::size_t>(i)] = 1;
  }
  Matrix gram = U_obs.transpose() * U_obs;
  gram.diagonal().array() += lambda;
  const Vector coef = gram.completeOrthogonalDecomposition().solve(U_obs.transpose() * x_obs);
  Vector out = x;
  for (Index i = 0; i < x.size(); ++i)
    if (!is_obs[static_cast<std::size_t>(i)]) out(i) = U.row(i).dot(coef);
  return out;
}

}  // namespace kfmc
