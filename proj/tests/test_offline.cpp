#include <doctest.h>

#include "kfmc/kernel.hpp"
#include "kfmc/metrics.hpp"
#include "kfmc/offline.hpp"
#include "kfmc/synth.hpp"
#include "support.hpp"

#include <cmath>
#include <random>

using namespace kfmc;
using kfmc::test::FrozenSurrogateD;
using kfmc::test::numeric_gradient;
using kfmc::test::random_matrix;
using kfmc::test::rel_diff;

namespace {

/// Degree-2 feature map with phi(x)'phi(y) = (x'y + c)^2.
Matrix explicit_features(const Matrix& A, double c) {
  const Index m = A.rows();
  Matrix F(m * m + m + 1, A.cols());
  for (Index j = 0; j < A.cols(); ++j) {
    Index k = 0;
    for (Index a = 0; a < m; ++a)
      for (Index b = 0; b < m; ++b) F(k++, j) = A(a, j) * A(b, j);
    for (Index a = 0; a < m; ++a) F(k++, j) = std::sqrt(2.0 * c) * A(a, j);
    F(k, j) = c;
  }
  return F;
}

/// Polynomial objective in X with w = diag(<X0'X0 + c>^(q-1)) and W4 = <X0'D + c>^(q-1) held
/// fixed, scaled by q so its gradient is g_X.
struct FrozenSurrogateX {
  KernelSpec spec;
  Matrix D, Z, W4;
  Vector w;

  FrozenSurrogateX(const KernelSpec& s, const Matrix& X0, const Matrix& D_, const Matrix& Z_)
      : spec(s), D(D_), Z(Z_) {
    W4 = ((X0.transpose() * D).array() + spec.c).pow(spec.q - 1);
    w = (X0.colwise().squaredNorm().transpose().array() + spec.c).pow(spec.q - 1);
  }

  double operator()(const Matrix& X) const {
    const double q = spec.q;
    double value = 0.0;
    for (Index j = 0; j < X.cols(); ++j) value += 0.5 * q * w(j) * (X.col(j).squaredNorm() + spec.c);
    const Matrix A = (X.transpose() * D).array() + spec.c;
    return value - q * (W4.cwiseProduct(A) * Z).trace();
  }
};

/// Gradient descent on -Tr(K_XD Z) + 1/2 Tr(Z' K_DD Z) + beta/2 |Z|^2.
Matrix quadratic_minimizer(const Matrix& Kxd, const Matrix& Kdd, double beta) {
  Matrix A = Kdd;
  A.diagonal().array() += beta;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(A, Eigen::EigenvaluesOnly);
  const double step = 1.0 / eig.eigenvalues().maxCoeff();
  Matrix Z = Matrix::Zero(Kdd.rows(), Kxd.rows());
  for (int it = 0; it < 200000; ++it) {
    const Matrix grad = A * Z - Kxd.transpose();
    Z -= step * grad;
    if (grad.norm() < 1e-12) break;
  }
  return Z;
}

}  // namespace

TEST_CASE("objective special cases") {
  const Matrix D = random_matrix(3, 4, 1);
  for (const auto& spec : {KernelSpec::polynomial(1.0, 2), KernelSpec::rbf(1.2)}) {
    CHECK(std::abs(objective(spec, D, D, Matrix::Identity(4, 4), 0.0, 0.0)) < 1e-10);
    const Matrix X = random_matrix(3, 5, 2);
    CHECK(objective(spec, X, D, Matrix::Zero(4, 5), 0.0, 0.0) ==
          doctest::Approx(0.5 * kernel_matrix(spec, X, X).trace()));
  }
  // the rbf dictionary term is the constant alpha r / 2
  const auto rbf = KernelSpec::rbf(0.7);
  const Matrix X = random_matrix(3, 5, 3);
  const Matrix Z = random_matrix(4, 5, 4);
  CHECK(objective(rbf, X, D, Z, 0.3, 0.0) - objective(rbf, X, D, Z, 0.0, 0.0) ==
        doctest::Approx(0.3 * 4 / 2.0));
}

TEST_CASE("objective matches an explicit degree-2 feature expansion") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const double c = 0.5 + 0.25 * static_cast<double>(seed);
    const auto spec = KernelSpec::polynomial(c, 2);
    const Matrix X = random_matrix(3, 4, 100 + seed);
    const Matrix D = random_matrix(3, 2, 200 + seed);
    const Matrix Z = random_matrix(2, 4, 300 + seed);
    const double alpha = 0.2, beta = 0.3;
    const Matrix FX = explicit_features(X, c);
    const Matrix FD = explicit_features(D, c);
    const double oracle = 0.5 * (FX - FD * Z).squaredNorm() + 0.5 * alpha * FD.squaredNorm() +
                          0.5 * beta * Z.squaredNorm();
    CHECK(objective(spec, X, D, Z, alpha, beta) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("update_Z minimizes the quadratic in Z") {
  const Matrix X = random_matrix(4, 6, 5);
  const Matrix D = random_matrix(4, 3, 6);
  for (const auto& spec : {KernelSpec::polynomial(1.0, 2), KernelSpec::rbf(2.0)}) {
    const double beta = 0.1;
    const Matrix Z = update_Z(spec, X, D, beta);
    const Matrix oracle =
        quadratic_minimizer(kernel_matrix(spec, X, D), kernel_matrix(spec, D, D), beta);
    CHECK((Z - oracle).cwiseAbs().maxCoeff() < 1e-6);
    // Z is the exact minimizer of the full objective in Z
    const double best = objective(spec, X, D, Z, 0.0, beta);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Matrix other = Z + 1e-3 * random_matrix(3, 6, 50 + s);
      CHECK(objective(spec, X, D, other, 0.0, beta) >= best);
    }
  }
}

TEST_CASE("update_Z special cases") {
  const Matrix D = random_matrix(3, 3, 7);
  const Matrix Z = update_Z(KernelSpec::rbf(1.5), D, D, 1e-10);
  CHECK((Z - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-6);

  // far-apart atoms give K_DD = I, so beta = 1 halves K_XD'
  Matrix far = Matrix::Zero(2, 2);
  far(0, 0) = 100.0;
  far(1, 1) = -100.0;
  const auto spec = KernelSpec::rbf(1.0);
  const Matrix X = far + 0.5 * random_matrix(2, 2, 8);
  const Matrix Zf = update_Z(spec, X, far, 1.0);
  CHECK((Zf - 0.5 * kernel_matrix(spec, X, far).transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rbf gradients match central finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dim(2, 5);
    const Index m = dim(rng), n = dim(rng), r = dim(rng);
    const auto spec = KernelSpec::rbf(1.0 + 0.3 * static_cast<double>(seed % 4));
    const Matrix X = random_matrix(m, n, 10 + seed);
    const Matrix D = random_matrix(m, r, 20 + seed);
    const Matrix Z = random_matrix(r, n, 30 + seed);
    const double alpha = 0.1, beta = 0.2;

    const Matrix gD = rbf_gradient_D(spec, X, D, Z, alpha);
    const Matrix fdD = numeric_gradient(
        [&](const Matrix& Dv) { return objective(spec, X, Dv, Z, alpha, beta); }, D);
    CHECK(rel_diff(gD, fdD) < 1e-5);

    const Matrix gX = rbf_gradient_X(spec, X, D, Z);
    const Matrix fdX = numeric_gradient(
        [&](const Matrix& Xv) { return objective(spec, Xv, D, Z, alpha, beta); }, X);
    CHECK(rel_diff(gX, fdX) < 1e-5);
  }
}

TEST_CASE("polynomial gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 77);
    std::uniform_int_distribution<int> dim(2, 5);
    const Index m = dim(rng), n = dim(rng), r = dim(rng);
    const int q = 2 + static_cast<int>(seed % 2);
    const auto spec = KernelSpec::polynomial(0.5 + 0.25 * static_cast<double>(seed % 3), q);
    const Matrix X = random_matrix(m, n, 40 + seed, 0.7);
    const Matrix D = random_matrix(m, r, 50 + seed, 0.7);
    const Matrix Z = random_matrix(r, n, 60 + seed);
    const double alpha = 0.15, beta = 0.1;

    // g_D is the gradient of the frozen-weight objective
    const Matrix gD = poly_gradient_D(spec, X, D, Z, alpha);
    const FrozenSurrogateD frozen(spec, X, D, Z, alpha);
    CHECK(rel_diff(gD, numeric_gradient(frozen, D)) < 1e-5);

    // and q g_D the gradient of the true objective
    const Matrix fdD = numeric_gradient(
        [&](const Matrix& Dv) { return objective(spec, X, Dv, Z, alpha, beta); }, D);
    CHECK(rel_diff(q * gD, fdD) < 1e-5);

    // g_X is the exact gradient in X
    const Matrix fdX = numeric_gradient(
        [&](const Matrix& Xv) { return objective(spec, Xv, D, Z, alpha, beta); }, X);
    CHECK(rel_diff(poly_gradient_X(spec, X, D, Z), fdX) < 1e-5);
  }
}

TEST_CASE("only the (ZZ' + alpha I) .* W2 grouping of g_D is consistent") {
  const auto spec = KernelSpec::polynomial(1.0, 2);
  const Matrix X = random_matrix(4, 5, 91, 0.8);
  const Matrix D = random_matrix(4, 3, 92, 0.8);
  const Matrix Z = random_matrix(3, 5, 93);
  const double alpha = 0.4;
  const Matrix W1 = power_weights(spec, X.transpose() * D);
  const Matrix W2 = power_weights(spec, D.transpose() * D);
  const Matrix I = Matrix::Identity(3, 3);
  const Matrix ZZ = Z * Z.transpose();

  const Matrix grouped = -X * W1.cwiseProduct(Z.transpose()) + D * (ZZ + alpha * I).cwiseProduct(W2);
  const Matrix literal = -X * W1.cwiseProduct(Z.transpose()) + D * (ZZ + (alpha * I).cwiseProduct(W2));

  const Matrix fd = numeric_gradient(FrozenSurrogateD(spec, X, D, Z, alpha), D);
  CHECK(rel_diff(grouped, fd) < 1e-5);
  CHECK(rel_diff(literal, fd) > 1e-2);
  CHECK(rel_diff(poly_gradient_D(spec, X, D, Z, alpha), grouped) < 1e-13);
}

TEST_CASE("sufficient decrease of the polynomial D step on frozen weights") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    std::uniform_int_distribution<int> dim(2, 5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Index m = dim(rng), r = dim(rng);
    const Index n = r + dim(rng);
    const int q = 1 + static_cast<int>(seed % 3);
    const auto spec = KernelSpec::polynomial(0.5 + unit(rng), q);
    const double alpha = 0.5 * unit(rng);
    const double tau = 1.1 + 3.0 * unit(rng);
    const Matrix X = random_matrix(m, n, 2000 + seed, 0.6);
    const Matrix D = random_matrix(m, r, 3000 + seed, 0.6);
    const Matrix Z = random_matrix(r, n, 4000 + seed, 0.6);

    const FrozenSurrogateD frozen(spec, X, D, Z, alpha);
    const Matrix g = poly_gradient_D(spec, X, D, Z, alpha);
    const Matrix H = poly_hessian_D(spec, D, Z, alpha);
    const Matrix step = newton_step_D(spec, X, D, Z, alpha, tau);
    const double predicted = (g * H.inverse() * g.transpose()).trace() / (2.0 * tau);
    CHECK(frozen(D - step) - frozen(D) <= -predicted + 1e-8);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("zero gradient gives a zero D step") {
  const auto spec = KernelSpec::polynomial(1.0, 2);
  const Matrix X = random_matrix(3, 4, 5);
  const Matrix D = random_matrix(3, 2, 6);
  CHECK(newton_step_D(spec, X, D, Matrix::Zero(2, 4), 0.0, 2.0).isZero(0.0));
  CHECK(poly_gradient_D(spec, X, D, Matrix::Zero(2, 4), 0.0).isZero(0.0));
}

TEST_CASE("polynomial X step decreases the frozen-weight objective after projection") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int q = 2 + static_cast<int>(seed % 2);
    const auto spec = KernelSpec::polynomial(1.0, q);
    const Matrix M = random_matrix(4, 6, 500 + seed, 0.6);
    const Mask mask = random_mask(4, 6, 0.4, 600 + seed);
    MaskedMatrix mm = impute_init(M, mask);
    const Matrix D = random_matrix(4, 3, 700 + seed, 0.6);
    const Matrix Z = update_Z(spec, mm.X, D, 0.1);
    const FrozenSurrogateX frozen(spec, mm.X, D, Z);
    const double before = frozen(mm.X);
    mm.X -= newton_step_X(spec, mm.X, D, Z, 2.0);
    project_observed(mm);
    CHECK(frozen(mm.X) <= before + 1e-12);
  }
}

TEST_CASE("rbf X step uses the -Gamma3 diagonal scaling") {
  const auto spec = KernelSpec::rbf(1.4);
  const Matrix X = random_matrix(3, 5, 11);
  const Matrix D = random_matrix(3, 4, 12);
  const Matrix Z = update_Z(spec, X, D, 0.01);
  const double tau = 2.5;
  const Matrix step = newton_step_X(spec, X, D, Z, tau);
  const Matrix grad = rbf_gradient_X(spec, X, D, Z);
  const Matrix Q3 = -Z.cwiseProduct(kernel_matrix(spec, X, D).transpose());
  const double s = 0.5 * 1.4 * 1.4;
  for (Index j = 0; j < 5; ++j) {
    const double scale = -Q3.col(j).sum() / s;
    CHECK((step.col(j) - grad.col(j) / scale / tau).norm() < 1e-12 * (1.0 + grad.col(j).norm()));
  }
  // zero gradient: X = D, Z = I and beta -> 0
  CHECK(newton_step_X(spec, D, D, Matrix::Identity(4, 4), tau).norm() < 1e-12);
}

TEST_CASE("hyperparameter validation") {
  OfflineHyperparams hp;
  CHECK_NOTHROW(hp.validate());
  hp.tau = 1.0;
  CHECK_THROWS_AS(hp.validate(), ArgumentError);
  hp = {};
  hp.beta = 0.0;
  CHECK_THROWS_AS(hp.validate(), ArgumentError);
  hp = {};
  hp.eta = 1.0;
  CHECK_THROWS_AS(hp.validate(), ArgumentError);
  hp = {};
  hp.alpha = -1.0;
  CHECK_THROWS_AS(hp.validate(), ArgumentError);
}

TEST_CASE("fit without momentum has a non-increasing objective and keeps the observed entries") {
  const Matrix M = twisted_cubic(40, 3);
  const Mask mask = random_mask(3, 40, 0.0, 4, Index{1});
  const MaskedMatrix mm = impute_init(M, mask);
  for (const auto& spec : {KernelSpec::polynomial(1.0, 2), KernelSpec::rbf(1.0)}) {
    OfflineHyperparams hp;
    hp.r = 6;
    hp.eta = 0.0;
    hp.t_max = 60;
    hp.tol = 0.0;
    hp.seed = 5;
    const OfflineModel model = fit(mm, spec, hp);
    REQUIRE(model.trace.size() >= 2);
    CHECK(non_increasing(model.trace, 1e-9));
    for (Index j = 0; j < 40; ++j)
      for (Index i = 0; i < 3; ++i)
        if (mask.observed(i, j)) CHECK(model.X()(i, j) == M(i, j));
  }
}

TEST_CASE("fully observed input is returned unchanged while D and Z improve") {
  const Matrix M = random_matrix(4, 10, 13);
  const MaskedMatrix mm = impute_init(M, Mask::full(4, 10));
  OfflineHyperparams hp;
  hp.r = 4;
  hp.eta = 0.0;
  hp.t_max = 20;
  hp.tol = 0.0;
  const OfflineModel model = fit(mm, KernelSpec::rbf(2.0), hp);
  CHECK(model.X() == M);
  CHECK(model.trace.back() < model.trace.front());
}

TEST_CASE("fit is deterministic for a fixed seed") {
  const Matrix M = twisted_cubic(30, 8);
  const MaskedMatrix mm = impute_init(M, random_mask(3, 30, 0.0, 9, Index{1}));
  OfflineHyperparams hp;
  hp.r = 5;
  hp.t_max = 30;
  hp.seed = 17;
  const OfflineModel a = fit(mm, KernelSpec::rbf(1.0), hp);
  const OfflineModel b = fit(mm, KernelSpec::rbf(1.0), hp);
  CHECK(a.X() == b.X());
  CHECK(a.D == b.D);
  CHECK(a.trace == b.trace);
}

TEST_CASE("momentum reaches the plain run's final objective no later") {
  const SyntheticData data = generate(preset("single-nonlinear", 2));
  const Mask mask = random_mask(data.X.rows(), data.X.cols(), 0.3, 3);
  const MaskedMatrix mm = impute_init(data.X, mask);
  const auto spec = KernelSpec::polynomial(1.0, 2);
  OfflineHyperparams hp;
  hp.r = 30;
  hp.t_max = 100;
  hp.tol = 0.0;
  hp.eta = 0.0;
  const OfflineModel plain = fit(mm, spec, hp);
  hp.eta = 0.5;
  const OfflineModel fast = fit(mm, spec, hp);
  const double target = plain.trace.back();
  std::size_t reached = fast.trace.size();
  for (std::size_t t = 0; t < fast.trace.size(); ++t) {
    if (fast.trace[t] <= target) {
      reached = t;
      break;
    }
  }
  CHECK(reached + 1 <= plain.trace.size());
}
