#pragma once

#include "kfmc/types.hpp"

#include <string>

namespace kfmc {

enum class KernelKind { Polynomial, Rbf };

/// Kernel choice plus its hyperparameters.
///
/// Polynomial: k(x,y) = (x'y + c)^q with integer q >= 1 and c >= 0.
/// Rbf:        k(x,y) = exp(-|x - y|^2 / sigma^2), sigma > 0.
struct KernelSpec {
  KernelKind kind = KernelKind::Rbf;
  double c = 1.0;
  int q = 2;
  double sigma = 1.0;

  static KernelSpec polynomial(double c, int q);
  static KernelSpec rbf(double sigma);

  bool is_polynomial() const noexcept { return kind == KernelKind::Polynomial; }
  bool is_rbf() const noexcept { return kind == KernelKind::Rbf; }

  /// Throws ArgumentError when the invariants above do not hold.
  void validate() const;

  std::string name() const { return is_polynomial() ? "poly" : "rbf"; }
};

/// Integer power by repeated squaring.
double ipow(double base, int exponent);

double eval_kernel(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y);

/// Dense kernel matrix between the columns of A (m x p) and B (m x s); result is p x s.
Matrix kernel_matrix(const KernelSpec& spec, const Eigen::Ref<const Matrix>& A,
                     const Eigen::Ref<const Matrix>& B);

/// Row vector k(x, B) of length s.
RowVector kernel_row(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                     const Eigen::Ref<const Matrix>& B);

/// k(a_j, a_j) for every column of A.
Vector kernel_diagonal(const KernelSpec& spec, const Eigen::Ref<const Matrix>& A);

/// Elementwise <G + c>^(q-1) for the polynomial kernel. These are the
/// reweighting matrices used by the relaxed Newton steps.
Matrix power_weights(const KernelSpec& spec, const Eigen::Ref<const Matrix>& G);

}  // namespace kfmc
