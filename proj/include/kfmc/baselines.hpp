#pragma once

#include "kfmc/masked_matrix.hpp"
#include "kfmc/types.hpp"

#include <vector>

namespace kfmc {

struct LrfResult {
  Matrix X;  ///< U V' with the observed entries of M written back
  Matrix U;  ///< m x r
  Matrix V;  ///< n x r
  /// sum_Omega residual^2 + lambda (|U|^2 + |V|^2) after every half-sweep
  std::vector<double> objective_trace;
};

/// Low-rank factorization completion by alternating ridge least squares.
/// Starts from the rank-r SVD of the row-mean-imputed matrix.
LrfResult lrf_complete(const MaskedMatrix& mm, Index rank, double lambda, int iters);

double lrf_objective(const MaskedMatrix& mm, const Matrix& U, const Matrix& V, double lambda);

/// Leading r left singular vectors of a training matrix.
Matrix lrf_basis(const Matrix& X_train, Index rank);

/// x_missing = U_missing (U_obs' U_obs + lambda I)^{-1} U_obs' x_obs.
Vector ose_lrf(const Matrix& U, const Vector& x, const IndexList& observed, double lambda);

}  // namespace kfmc
