#pragma once

#include "kfmc/masked_matrix.hpp"
#include "kfmc/types.hpp"

#include <vector>

namespace kfmc {

/// |X_hat - X_true|_F / |X_true|_F
double relative_error(const Matrix& X_hat, const Matrix& X_true);

/// Number of singular values above rel_tol * sigma_max.
Index numerical_rank(const Matrix& X, double rel_tol = 1e-8);

enum class ErrorScope { MissingOnly, All };

/// relative_error restricted to the unobserved entries (or to every entry).
double masked_relative_error(const Matrix& X_hat, const Matrix& X_true, const Mask& mask,
                             ErrorScope scope = ErrorScope::MissingOnly);

/// True when every step of `trace` rises by at most slack * |previous|.
bool non_increasing(const std::vector<double>& trace, double slack = 0.0);

}  // namespace kfmc
