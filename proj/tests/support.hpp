#pragma once

#include "kfmc/kernel.hpp"
#include "kfmc/types.hpp"

#include <cstdint>
#include <random>

namespace kfmc::test {

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix A(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) A(i, j) = normal(rng);
  return A;
}

inline Vector random_vector(Index n, std::uint64_t seed, double scale = 1.0) {
  return random_matrix(n, 1, seed, scale).col(0);
}

/// Central difference of f along every entry of A.
template <class F>
Matrix numeric_gradient(F&& f, Matrix A, double h = 1e-6) {
  Matrix G(A.rows(), A.cols());
  for (Index j = 0; j < A.cols(); ++j) {
    for (Index i = 0; i < A.rows(); ++i) {
      const double keep = A(i, j);
      A(i, j) = keep + h;
      const double up = f(A);
      A(i, j) = keep - h;
      const double down = f(A);
      A(i, j) = keep;
      G(i, j) = (up - down) / (2.0 * h);
    }
  }
  return G;
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

/// Polynomial objective in D with W1 = <X'D0 + c>^(q-1) and W2 = <D0'D0 + c>^(q-1) held fixed.
struct FrozenSurrogateD {
  KernelSpec spec;
  Matrix X, Z, W1, W2;
  double alpha;

  FrozenSurrogateD(const KernelSpec& s, const Matrix& X_, const Matrix& D0, const Matrix& Z_,
                   double a)
      : spec(s), X(X_), Z(Z_), alpha(a) {
    W1 = (X.transpose() * D0).array() + spec.c;
    W2 = (D0.transpose() * D0).array() + spec.c;
    W1 = W1.array().pow(spec.q - 1);
    W2 = W2.array().pow(spec.q - 1);
  }

  double operator()(const Matrix& D) const {
    const Matrix A = (X.transpose() * D).array() + spec.c;
    const Matrix B = (D.transpose() * D).array() + spec.c;
    const Matrix WB = W2.cwiseProduct(B);
    return -(W1.cwiseProduct(A) * Z).trace() + 0.5 * (Z.transpose() * WB * Z).trace() +
           0.5 * alpha * WB.trace();
  }
};

/// Per-sample polynomial objective in D with w1 = <D0'x + c>^(q-1), W2 = <D0'D0 + c>^(q-1) fixed.
inline double frozen_sample_surrogate(const KernelSpec& spec, const Vector& x, const Matrix& D0,
                                      const Vector& z, double alpha, const Matrix& D) {
  const Vector w1 = ((D0.transpose() * x).array() + spec.c).pow(spec.q - 1);
  const Matrix W2 = ((D0.transpose() * D0).array() + spec.c).pow(spec.q - 1);
  const Vector a = (D.transpose() * x).array() + spec.c;
  const Matrix WB = W2.cwiseProduct(Matrix((D.transpose() * D).array() + spec.c));
  return -w1.cwiseProduct(a).dot(z) + 0.5 * z.dot(WB * z) + 0.5 * alpha * WB.trace();
}

}  // namespace kfmc::test
