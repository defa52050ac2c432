#include "kfmc/offline.hpp"

#include "kfmc/linalg.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace kfmc {

namespace {

constexpr double kDiagonalFloor = 1e-12;

// The derivative of exp(-|x-y|^2 / sigma^2) carries 2/sigma^2; every RBF
// formula below is written against s = sigma^2 / 2.
double rbf_scale(const KernelSpec& spec) { return 0.5 * spec.sigma * spec.sigma; }

void check_shapes(const Matrix& X, const Matrix& D, const Matrix& Z) {
  if (X.rows() != D.rows()) throw ArgumentError("X and D must have the same number of rows");
  if (Z.rows() != D.cols() || Z.cols() != X.cols())
    throw ArgumentError("Z must be r x n for D m x r and X m x n");
}

}  // namespace

void OfflineHyperparams::validate() const {
  if (r < 0) throw ArgumentError("r must be >= 1 (or 0 for the default)");
  if (!(alpha >= 0.0)) throw ArgumentError("alpha must be >= 0");
  if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
  if (!(tau > 1.0)) throw ArgumentError("tau must be > 1");
  if (!(eta >= 0.0 && eta < 1.0)) throw ArgumentError("eta must lie in [0, 1)");
  if (t_max < 0) throw ArgumentError("t_max must be >= 0");
  if (!(tol >= 0.0)) throw ArgumentError("tol must be >= 0");
  if (max_backtracks < 0) throw ArgumentError("max_backtracks must be >= 0");
}

double objective(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                 double alpha, double beta) {
  check_shapes(X, D, Z);
  const Matrix Kxd = kernel_matrix(spec, X, D);
  const Matrix Kdd = kernel_matrix(spec, D, D);
  const double fit_xx = kernel_diagonal(spec, X).sum();
  const double cross = Kxd.transpose().cwiseProduct(Z).sum();
  const double quad = Z.cwiseProduct(Kdd * Z).sum();
  return 0.5 * fit_xx - cross + 0.5 * quad + 0.5 * alpha * Kdd.trace() +
         0.5 * beta * Z.squaredNorm();
}

double objective(const OfflineModel& model, const KernelSpec& spec) {
  return objective(spec, model.mm.X, model.D, model.Z, model.hp.alpha, model.hp.beta);
}

Matrix update_Z(const KernelSpec& spec, const Matrix& X, const Matrix& D, double beta) {
  if (X.rows() != D.rows()) throw ArgumentError("update_Z: X and D row counts differ");
  Matrix A = kernel_matrix(spec, D, D);
  A.diagonal().array() += beta;
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success)
    throw NumericalError("update_Z: K_DD + beta I is not positive definite");
  Matrix Z = llt.solve(kernel_matrix(spec, X, D).transpose());
  if (!Z.allFinite()) throw NumericalError("update_Z: non-finite coefficients");
  return Z;
}

Matrix poly_gradient_D(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                       double alpha) {
  check_shapes(X, D, Z);
  const Matrix W1 = power_weights(spec, X.transpose() * D);
  const Matrix W2 = power_weights(spec, D.transpose() * D);
  Matrix ZZ = Z * Z.transpose();
  ZZ.diagonal().array() += alpha;
  return -X * W1.cwiseProduct(Z.transpose()) + D * ZZ.cwiseProduct(W2);
}

Matrix poly_hessian_D(const KernelSpec& spec, const Matrix& D, const Matrix& Z, double alpha) {
  const Matrix W2 = power_weights(spec, D.transpose() * D);
  Matrix H = (Z * Z.transpose()).cwiseProduct(W2);
  H.diagonal() += alpha * W2.diagonal();
  return H;
}

Matrix poly_gradient_X(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z) {
  check_shapes(X, D, Z);
  const Matrix W4 = power_weights(spec, X.transpose() * D);
  const RowVector w = power_weights(spec, X.colwise().squaredNorm()).row(0);
  const double q = spec.q;
  return q * (X.array().rowwise() * w.array()).matrix() - q * D * W4.transpose().cwiseProduct(Z);
}

namespace {

struct RbfDTerms {
  Matrix Q1;      // n x r
  Matrix Q2;      // r x r
  RowVector g1;   // column sums of Q1
  RowVector g2;   // column sums of Q2
};

RbfDTerms rbf_d_terms(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                      double alpha) {
  const Matrix Kxd = kernel_matrix(spec, X, D);
  const Matrix Kdd = kernel_matrix(spec, D, D);
  RbfDTerms t;
  t.Q1 = -Z.transpose().cwiseProduct(Kxd);
  Matrix ZZ = 0.5 * Z * Z.transpose();
  ZZ.diagonal().array() += 0.5 * alpha;
  t.Q2 = ZZ.cwiseProduct(Kdd);
  t.g1 = t.Q1.colwise().sum();
  t.g2 = t.Q2.colwise().sum();
  return t;
}

}  // namespace

Matrix rbf_gradient_D(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                      double alpha) {
  check_shapes(X, D, Z);
  const RbfDTerms t = rbf_d_terms(spec, X, D, Z, alpha);
  const double s = rbf_scale(spec);
  return (X * t.Q1 - D * t.g1.asDiagonal()) / s +
         (2.0 / s) * (D * t.Q2 - D * t.g2.asDiagonal());
}

Matrix rbf_hessian_D(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                     double alpha) {
  check_shapes(X, D, Z);
  const RbfDTerms t = rbf_d_terms(spec, X, D, Z, alpha);
  Matrix B = 2.0 * t.Q2;
  B.diagonal() -= t.g1.transpose() + 2.0 * t.g2.transpose();
  return B / rbf_scale(spec);
}

Matrix rbf_gradient_X(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z) {
  check_shapes(X, D, Z);
  const Matrix Q3 = -Z.cwiseProduct(kernel_matrix(spec, X, D).transpose());
  const RowVector g3 = Q3.colwise().sum();
  // Q4 = 0.5 I .* K_XX is diagonal, so X Q4 - X Gamma4 vanishes identically.
  const double s = rbf_scale(spec);
  return (D * Q3 - X * g3.asDiagonal()) / s;
}

Matrix newton_step_D(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                     double alpha, double tau) {
  Matrix grad;
  Matrix hess;
  if (spec.is_polynomial()) {
    grad = poly_gradient_D(spec, X, D, Z, alpha);
    hess = poly_hessian_D(spec, D, Z, alpha);
  } else {
    grad = rbf_gradient_D(spec, X, D, Z, alpha);
    hess = rbf_hessian_D(spec, X, D, Z, alpha);
  }
  if (!grad.allFinite()) throw NumericalError("newton_step_D: non-finite gradient");
  if (grad.isZero(0.0)) return Matrix::Zero(D.rows(), D.cols());
  return solve_right_symmetric(grad, hess) / tau;
}

Matrix newton_step_X(const KernelSpec& spec, const Matrix& X, const Matrix& D, const Matrix& Z,
                     double tau) {
  Matrix grad;
  RowVector scale;
  if (spec.is_polynomial()) {
    grad = poly_gradient_X(spec, X, D, Z);
    scale = power_weights(spec, X.colwise().squaredNorm()).row(0);
    for (Index j = 0; j < scale.size(); ++j) scale(j) = std::max(scale(j), kDiagonalFloor);
  } else {
    grad = rbf_gradient_X(spec, X, D, Z);
    const Matrix Q3 = -Z.cwiseProduct(kernel_matrix(spec, X, D).transpose());
    const Vector kxx = kernel_diagonal(spec, X);
    // (1/s)(2 Q4 - Gamma3 - 2 Gamma4) with Q4 = Gamma4 = 0.5 diag(K_XX)
    scale = (kxx.transpose() - Q3.colwise().sum() - kxx.transpose()) / rbf_scale(spec);
    for (Index j = 0; j < scale.size(); ++j) scale(j) = floor_magnitude(scale(j), kDiagonalFloor);
  }
  if (!grad.allFinite()) throw NumericalError("newton_step_X: non-finite gradient");
  Matrix step = (grad.array().rowwise() / scale.array()).matrix() / tau;
  if (!step.allFinite()) throw NumericalError("newton_step_X: non-finite step");
  return step;
}

Matrix newton_step_D(const OfflineModel& model, const KernelSpec& spec) {
  return newton_step_D(spec, model.mm.X, model.D, model.Z, model.hp.alpha, model.hp.tau);
}

Matrix newton_step_X(const OfflineModel& model, const KernelSpec& spec) {
  return newton_step_X(spec, model.mm.X, model.D, model.Z, model.hp.tau);
}

OfflineModel init_offline(const MaskedMatrix& mm, const OfflineHyperparams& hp) {
  hp.validate();
  OfflineModel model;
  model.hp = hp;
  if (model.hp.r == 0) model.hp.r = mm.rows();
  const Index m = mm.rows();
  const Index r = model.hp.r;
  std::mt19937_64 rng(hp.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  model.D.resize(m, r);
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < m; ++i) model.D(i, j) = normal(rng);
  model.mm = mm;
  model.momD = Matrix::Zero(m, r);
  model.momX = Matrix::Zero(m, mm.cols());
  return model;
}

OfflineModel fit(const MaskedMatrix& mm, const KernelSpec& spec, const OfflineHyperparams& hp) {
  if (mm.mask.count() < 1) throw ArgumentError("fit: at least one observed entry is required");
  return fit(init_offline(mm, hp), spec);
}

namespace {

// Missing-entry indicator as a 0/1 matrix, used to confine X steps.
Matrix missing_indicator(const Mask& mask) {
  Matrix ind(mask.rows(), mask.cols());
  for (Index j = 0; j < mask.cols(); ++j)
    for (Index i = 0; i < mask.rows(); ++i) ind(i, j) = mask.observed(i, j) ? 0.0 : 1.0;
  return ind;
}

}  // namespace

OfflineModel fit(OfflineModel model, const KernelSpec& spec) {
  spec.validate();
  model.hp.validate();
  const OfflineHyperparams& hp = model.hp;
  if (model.D.rows() != model.mm.rows())
    throw ArgumentError("fit: dictionary row count does not match data");
  if (model.momD.rows() != model.D.rows() || model.momD.cols() != model.D.cols())
    model.momD = Matrix::Zero(model.D.rows(), model.D.cols());
  if (model.momX.rows() != model.mm.rows() || model.momX.cols() != model.mm.cols())
    model.momX = Matrix::Zero(model.mm.rows(), model.mm.cols());

  project_observed(model.mm);
  const Matrix missing = missing_indicator(model.mm.mask);
  const bool any_missing = hp.update_x && missing.sum() > 0.0;

  OfflineModel last_good = model;
  double previous = std::numeric_limits<double>::quiet_NaN();
  const int start = model.iterations;

  for (int t = start + 1; t <= start + hp.t_max; ++t) {
    try {
      model.Z = update_Z(spec, model.mm.X, model.D, hp.beta);
      double current = objective(spec, model.mm.X, model.D, model.Z, hp.alpha, hp.beta);

      // D step with momentum; a step that raises the objective is retried
      // without momentum, then with tau doubled.
      {
        double tau = hp.tau;
        for (int attempt = 0;; ++attempt) {
          const Matrix step = newton_step_D(spec, model.mm.X, model.D, model.Z, hp.alpha, tau);
          Matrix mom = attempt == 0 ? Matrix(hp.eta * model.momD + step) : step;
          Matrix D = model.D - mom;
          const double next = objective(spec, model.mm.X, D, model.Z, hp.alpha, hp.beta);
          if (!std::isfinite(next) || !D.allFinite())
            throw NumericalError("D update produced non-finite values");
          if (next <= current || attempt >= hp.max_backtracks) {
            model.momD = std::move(mom);
            model.D = std::move(D);
            current = next;
            break;
          }
          tau *= 2.0;
        }
      }

      if (any_missing) {
        double tau = hp.tau;
        for (int attempt = 0;; ++attempt) {
          const Matrix step =
              newton_step_X(spec, model.mm.X, model.D, model.Z, tau).cwiseProduct(missing);
          Matrix mom = attempt == 0 ? Matrix(hp.eta * model.momX + step) : step;
          Matrix X = model.mm.X - mom;
          const double next = objective(spec, X, model.D, model.Z, hp.alpha, hp.beta);
          if (!std::isfinite(next) || !X.allFinite())
            throw NumericalError("X update produced non-finite values");
          if (next <= current || attempt >= hp.max_backtracks) {
            model.momX = std::move(mom);
            model.mm.X = std::move(X);
            current = next;
            break;
          }
          tau *= 2.0;
        }
        project_observed(model.mm);
      }

      model.trace.push_back(current);
      model.iterations = t;
      last_good = model;

      if (std::isfinite(previous)) {
        const double change = std::abs(previous - current) /
                              std::max(std::abs(previous), std::numeric_limits<double>::min());
        if (change < hp.tol) {
          model.converged = true;
          break;
        }
      }
      previous = current;
    } catch (const NumericalError& e) {
      throw FitError(e.what(), t, last_good);
    }
  }
  return model;
}

}  // namespace kfmc
