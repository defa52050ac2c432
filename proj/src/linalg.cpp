#include "kfmc/linalg.hpp"

#include <cmath>

namespace kfmc {

double hessian_ridge(const Eigen::Ref<const Matrix>& H) {
  const double eps = 1e-8 * std::abs(H.trace()) / static_cast<double>(H.rows());
  return eps > 0.0 ? eps : 1e-12;
}

Matrix solve_right_symmetric(const Eigen::Ref<const Matrix>& G, const Eigen::Ref<const Matrix>& H) {
  Matrix S = 0.5 * (H + H.transpose());
  S.diagonal().array() += hessian_ridge(H);
  // G H^{-1} = (H^{-1} G')' for symmetric H
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() == Eigen::Success) return llt.solve(G.transpose()).transpose();
  Eigen::LDLT<Matrix> ldlt(S);
  return ldlt.solve(G.transpose()).transpose();
}

double spectral_norm_symmetric(const Eigen::Ref<const Matrix>& H) {
  const Matrix S = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

double floor_magnitude(double v, double floor) {
  if (std::abs(v) >= floor) return v;
  return v < 0.0 ? -floor : floor;
}

bool all_finite(const Eigen::Ref<const Matrix>& A) { return A.allFinite(); }

}  // namespace kfmc
