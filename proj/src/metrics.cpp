#include "kfmc/metrics.hpp"

#include "kfmc/errors.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace kfmc {

double relative_error(const Matrix& X_hat, const Matrix& X_true) {
  if (X_hat.rows() != X_true.rows() || X_hat.cols() != X_true.cols())
    throw ArgumentError("relative_error: shape mismatch");
  const double denom = X_true.norm();
  if (!(denom > 0.0)) throw ArgumentError("relative_error: reference matrix has zero norm");
  return (X_hat - X_true).norm() / denom;
}

Index numerical_rank(const Matrix& X, double rel_tol) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw ArgumentError("rel_tol must lie in (0, 1)");
  if (X.size() == 0) return 0;
  const Vector sv = Eigen::JacobiSVD<Matrix>(X).singularValues();
  if (!(sv(0) > 0.0)) return 0;
  return static_cast<Index>((sv.array() > rel_tol * sv(0)).count());
}

double masked_relative_error(const Matrix& X_hat, const Matrix& X_true, const Mask& mask,
                             ErrorScope scope) {
  if (scope == ErrorScope::All) return relative_error(X_hat, X_true);
  if (X_hat.rows() != X_true.rows() || X_hat.cols() != X_true.cols() ||
      mask.rows() != X_true.rows() || mask.cols() != X_true.cols())
    throw ArgumentError("masked_relative_error: shape mismatch");
  double num = 0.0;
  double den = 0.0;
  Index count = 0;
  for (Index j = 0; j < X_true.cols(); ++j)
    for (Index i = 0; i < X_true.rows(); ++i)
      if (!mask.observed(i, j)) {
        const double diff = X_hat(i, j) - X_true(i, j);
        num += diff * diff;
        den += X_true(i, j) * X_true(i, j);
        ++count;
      }
  if (count == 0) throw ArgumentError("masked_relative_error: no missing entries");
  if (!(den > 0.0)) throw ArgumentError("masked_relative_error: reference has zero norm");
  return std::sqrt(num / den);
}

bool non_increasing(const std::vector<double>& trace, double slack) {
  for (std::size_t k = 1; k < trace.size(); ++k)
    if (trace[k] > trace[k - 1] + slack * std::abs(trace[k - 1])) return false;
  return true;
}

}  // namespace kfmc
