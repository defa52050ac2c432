#pragma once

#include "kfmc/errors.hpp"
#include "kfmc/kernel.hpp"
#include "kfmc/masked_matrix.hpp"
#include "kfmc/types.hpp"

#include <cstdint>
#include <vector>

namespace kfmc {

struct OfflineHyperparams {
  Index r = 0;            ///< dictionary size; 0 means "use m"
  double alpha = 0.01;    ///< weight on |phi(D)|_F^2
  double beta = 0.01;     ///< weight on |Z|_F^2
  double tau = 2.0;       ///< Newton relaxation, > 1
  double eta = 0.5;       ///< momentum in [0, 1)
  int t_max = 500;
  double tol = 1e-6;      ///< relative objective change that stops the loop
  std::uint64_t seed = 0;
  /// Times a step that raises the objective is retried with tau doubled
  /// before it is accepted anyway.
  int max_backtracks = 1;
  /// When false only Z and D are updated (dictionary training on complete data).
  bool update_x = true;

  void validate() const;
};

/// Iterate state of batch completion.
struct OfflineModel {
  OfflineHyperparams hp;
  Matrix D;     ///< m x r dictionary
  Matrix Z;     ///< r x n coefficients
  MaskedMatrix mm;
  Matrix momD;  ///< momentum buffer for D
  Matrix momX;  ///< momentum buffer for X
  std::vector<double> trace;  ///< objective after each outer iteration
  int iterations = 0;
  bool converged = false;

  const Matrix& X() const noexcept { return mm.X; }
};

/// Thrown by fit(); carries the last finite iterate and its trace.
class FitError : public NumericalError {
 public:
  FitError(const std::string& what, long iteration, OfflineModel partial)
      : NumericalError(what, iteration), partial_(std::move(partial)) {}
  const OfflineModel& partial() const noexcept { return partial_; }

 private:
  OfflineModel partial_;
};

/// 1/2 Tr(K_XX - 2 K_XD Z + Z' K_DD Z) + alpha/2 Tr(K_DD) + beta/2 |Z|_F^2.
/// Only the diagonal of K_XX is ever formed.
double objective(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                 double alpha, double beta);
double objective(const OfflineModel& model, const KernelSpec& spec);

/// Z = (K_DD + beta I)^{-1} K_XD' via Cholesky.
Matrix update_Z(const KernelSpec& spec, const Matrix& X, const Matrix& D, double beta);

/// Relaxed Newton step for D (to be subtracted). Polynomial kernels use the
/// reweighted gradient g_D and Hessian H_D; RBF uses the approximate Hessian
/// that drops the X Q1 term.
Matrix newton_step_D(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                     double alpha, double tau);

/// Relaxed Newton step for X with a diagonal (per-column) scaling. Covers all
/// entries; callers mask out the observed ones.
Matrix newton_step_X(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                     double tau);

Matrix newton_step_D(const OfflineModel& model, const KernelSpec& spec);
Matrix newton_step_X(const OfflineModel& model, const KernelSpec& spec);

// Building blocks of the steps, exposed for verification.

/// g_D = -X (W1 .* Z') + D ((Z Z' + alpha I) .* W2) with W1, W2 frozen at D.
Matrix poly_gradient_D(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                       double alpha);
/// H_D = Z Z' .* W2 + alpha W2 .* I.
Matrix poly_hessian_D(const KernelSpec& spec, const Matrix& D, const Matrix& Z, double alpha);
/// g_X = q X .* (1 w') - q D (W4' .* Z), which is the exact gradient in X.
Matrix poly_gradient_X(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z);
/// Exact gradient of objective() in D for the RBF kernel.
Matrix rbf_gradient_D(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                      double alpha);
/// Exact gradient of objective() in X for the RBF kernel.
Matrix rbf_gradient_X(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z);
/// Approximate Hessian (1/s)(2 Q2 - Gamma1 - 2 Gamma2) used by the RBF D step.
Matrix rbf_hessian_D(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                     double alpha);

/// Fresh model: D ~ N(0,1) from hp.seed, zero momentum, Z empty.
OfflineModel init_offline(const MaskedMatrix& mm, const OfflineHyperparams& hp);

/// Offline KFMC. Alternates the closed-form Z update with momentum-accelerated
/// relaxed Newton steps on D and on the missing entries of X until the relative
/// objective change drops below hp.tol or hp.t_max iterations run.
OfflineModel fit(const MaskedMatrix& mm, const KernelSpec& spec, const OfflineHyperparams& hp);

/// Same loop, continuing from a caller-supplied model (D, buffers, X).
OfflineModel fit(OfflineModel model, const KernelSpec& spec);

}  // namespace kfmc
