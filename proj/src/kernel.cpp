#include "kfmc/kernel.hpp"

#include "kfmc/errors.hpp"
#include "kfmc/parallel.hpp"

#include <cmath>

namespace kfmc {

KernelSpec KernelSpec::polynomial(double c, int q) {
  KernelSpec spec;
  spec.kind = KernelKind::Polynomial;
  spec.c = c;
  spec.q = q;
  spec.validate();
  return spec;
}

KernelSpec KernelSpec::rbf(double sigma) {
  KernelSpec spec;
  spec.kind = KernelKind::Rbf;
  spec.sigma = sigma;
  spec.validate();
  return spec;
}

void KernelSpec::validate() const {
  if (is_polynomial()) {
    if (q < 1) throw ArgumentError("polynomial kernel order q must be >= 1");
    if (!(c >= 0.0)) throw ArgumentError("polynomial kernel offset c must be >= 0");
  } else {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw ArgumentError("rbf kernel bandwidth sigma must be a positive finite number");
  }
}

double ipow(double base, int exponent) {
  double result = 1.0;
  while (exponent > 0) {
    if (exponent & 1) result *= base;
    base *= base;
    exponent >>= 1;
  }
  return result;
}

namespace {

inline double apply(const KernelSpec& spec, double inner, double sqdist) {
  if (spec.is_polynomial()) return ipow(inner + spec.c, spec.q);
  return std::exp(-sqdist / (spec.sigma * spec.sigma));
}

}  // namespace

double eval_kernel(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y) {
  if (x.size() != y.size()) throw ArgumentError("eval_kernel: vectors differ in length");
  if (spec.is_polynomial()) return ipow(x.dot(y) + spec.c, spec.q);
  return std::exp(-(x - y).squaredNorm() / (spec.sigma * spec.sigma));
}

Matrix kernel_matrix(const KernelSpec& spec, const Eigen::Ref<const Matrix>& A,
                     const Eigen::Ref<const Matrix>& B) {
  if (A.rows() != B.rows()) throw ArgumentError("kernel_matrix: row counts differ");
  Matrix K(A.cols(), B.cols());
  parallel_for(static_cast<std::size_t>(B.cols()), [&](std::size_t jj) {
    const auto j = static_cast<Index>(jj);
    for (Index i = 0; i < A.cols(); ++i) {
      // direct distance keeps K(A,A) exactly symmetric with a unit diagonal
      K(i, j) = spec.is_polynomial() ? apply(spec, A.col(i).dot(B.col(j)), 0.0)
                                     : apply(spec, 0.0, (A.col(i) - B.col(j)).squaredNorm());
    }
  });
  return K;
}

RowVector kernel_row(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                     const Eigen::Ref<const Matrix>& B) {
  if (x.size() != B.rows()) throw ArgumentError("kernel_row: dimension mismatch");
  RowVector k(B.cols());
  for (Index j = 0; j < B.cols(); ++j) {
    k(j) = spec.is_polynomial() ? apply(spec, x.dot(B.col(j)), 0.0)
                                : apply(spec, 0.0, (x - B.col(j)).squaredNorm());
  }
  return k;
}

Vector kernel_diagonal(const KernelSpec& spec, const Eigen::Ref<const Matrix>& A) {
  if (spec.is_rbf()) return Vector::Ones(A.cols());
  Vector d(A.cols());
  for (Index j = 0; j < A.cols(); ++j) d(j) = ipow(A.col(j).squaredNorm() + spec.c, spec.q);
  return d;
}

Matrix power_weights(const KernelSpec& spec, const Eigen::Ref<const Matrix>& G) {
  if (!spec.is_polynomial()) throw ArgumentError("power_weights requires a polynomial kernel");
  const int e = spec.q - 1;
  const double c = spec.c;
  return G.unaryExpr([e, c](double g) { return ipow(g + c, e); });
}

}  // namespace kfmc
