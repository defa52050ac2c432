#pragma once

#include "kfmc/types.hpp"

namespace kfmc {

/// Ridge added before a Hessian-like solve: 1e-8 * |trace(H)| / r.
double hessian_ridge(const Eigen::Ref<const Matrix>& H);

/// Returns G * H^{-1} for a square H, after symmetrizing H and adding
/// hessian_ridge(H) to its diagonal. Cholesky is tried first; indefinite
/// matrices fall back to a pivoted LDL'.
Matrix solve_right_symmetric(const Eigen::Ref<const Matrix>& G, const Eigen::Ref<const Matrix>& H);

/// Largest absolute eigenvalue of the symmetric part of H.
double spectral_norm_symmetric(const Eigen::Ref<const Matrix>& H);

/// Keeps the sign of v but lifts |v| to at least floor (positive for v == 0).
double floor_magnitude(double v, double floor);

bool all_finite(const Eigen::Ref<const Matrix>& A);

}  // namespace kfmc
