#include "kfmc/online.hpp"

#include "kfmc/errors.hpp"
#include "kfmc/linalg.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace kfmc {

namespace {

constexpr double kFloor = 1e-12;

double rbf_scale(const KernelSpec& spec) { return 0.5 * spec.sigma * spec.sigma; }

std::size_t elements(const Matrix& A) { return static_cast<std::size_t>(A.size()); }

}  // namespace

void OnlineHyperparams::validate() const {
  if (r < 0) throw ArgumentError("r must be >= 1 (or 0 for the default)");
  if (!(alpha >= 0.0)) throw ArgumentError("alpha must be >= 0");
  if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
  if (!(tau > 1.0)) throw ArgumentError("tau must be > 1");
  if (!(eta >= 0.0 && eta < 1.0)) throw ArgumentError("eta must lie in [0, 1)");
  if (n_iter < 1) throw ArgumentError("n_iter must be >= 1");
  if (n_pass < 1) throw ArgumentError("n_pass must be >= 1");
  if (!(tol >= 0.0)) throw ArgumentError("tol must be >= 0");
  if (max_backtracks < 0) throw ArgumentError("max_backtracks must be >= 0");
}

SampleCompleter::SampleCompleter(const KernelSpec& spec, const Matrix& D, double alpha,
                                 double beta)
    : spec_(spec), D_(D), alpha_(alpha), beta_(beta), kdd_(kernel_matrix(spec, D, D)),
      d_sqnorm_(D.colwise().squaredNorm().transpose()), alpha_term_(0.5 * alpha * kdd_.trace()) {
  Matrix A = kdd_;
  A.diagonal().array() += beta;
  chol_.compute(A);
  if (chol_.info() != Eigen::Success)
    throw NumericalError("K_DD + beta I is not positive definite");
}

Vector SampleCompleter::kernel_col(const Vector& x) const {
  if (x.size() != D_.rows()) throw ArgumentError("sample length does not match dictionary rows");
  const Vector g = D_.transpose() * x;
  if (spec_.is_polynomial()) {
    const int q = spec_.q;
    const double c = spec_.c;
    return g.unaryExpr([q, c](double v) { return ipow(v + c, q); });
  }
  const double xx = x.squaredNorm();
  const double inv = 1.0 / (spec_.sigma * spec_.sigma);
  return ((d_sqnorm_.array() + xx - 2.0 * g.array()).max(0.0) * -inv).exp().matrix();
}

double SampleCompleter::loss_from(const Vector& x, const Vector& kx, const Vector& z) const {
  const double kxx = spec_.is_polynomial() ? ipow(x.squaredNorm() + spec_.c, spec_.q) : 1.0;
  return 0.5 * kxx - kx.dot(z) + 0.5 * z.dot(kdd_ * z) + 0.5 * beta_ * z.squaredNorm() + alpha_term_;
}

double SampleCompleter::step_direction(const Vector& x, const Vector& kx, const Vector& z,
                                       Vector& num) const {
  if (spec_.is_polynomial()) {
    const double w1 = ipow(x.squaredNorm() + spec_.c, spec_.q - 1);
    const Vector w2 = power_weights(spec_, D_.transpose() * x);
    num.noalias() = D_ * w2.cwiseProduct(z);
    num = w1 * x - num;
    return std::max(w1, kFloor);
  }
  // The curvature of the x-block is -gamma/s (gamma = sum of q), the same
  // diagonal the batch X step uses; s cancels between gradient and curvature.
  const Vector qv = -z.cwiseProduct(kx);
  const double gamma = floor_magnitude(qv.sum(), kFloor);
  num.noalias() = D_ * qv;
  num -= gamma * x;  // s * gradient
  return -gamma;
}

Vector SampleCompleter::coefficients(const Vector& x) const { return chol_.solve(kernel_col(x)); }

double SampleCompleter::loss(const Vector& x, const Vector& z) const {
  return loss_from(x, kernel_col(x), z);
}

Vector SampleCompleter::x_step(const Vector& x, const Vector& z, double tau) const {
  Vector num(x.size());
  const double scale = step_direction(x, kernel_col(x), z, num);
  return num / (scale * tau);
}

SampleResult SampleCompleter::complete(Vector x, const IndexList& missing,
                                       const InnerOptions& options) const {
  SampleResult result;
  Vector kx = kernel_col(x);
  Vector z = chol_.solve(kx);
  if (missing.empty()) {
    result.loss = loss_from(x, kx, z);
    result.loss_trace.push_back(result.loss);
    result.x = std::move(x);
    result.z = std::move(z);
    result.converged = true;
    return result;
  }

  // momentum and steps live on the missing entries only
  const auto n_missing = static_cast<Index>(missing.size());
  Vector mom = Vector::Zero(n_missing);
  Vector cand_mom(n_missing);
  Vector cand = x;
  Vector num(x.size());
  double current = loss_from(x, kx, z);
  result.loss_trace.push_back(current);
  for (int l = 1; l <= options.n_iter; ++l) {
    result.iterations = l;
    if (l > 1) {
      z = chol_.solve(kx);
      current = loss_from(x, kx, z);
      result.loss_trace.push_back(current);
    }

    const double scale = step_direction(x, kx, z, num);
    double tau = options.tau;
    for (int attempt = 0;; ++attempt) {
      const double eta = attempt == 0 ? options.eta : 0.0;
      for (Index k = 0; k < n_missing; ++k) {
        const Index i = missing[static_cast<std::size_t>(k)];
        cand_mom(k) = eta * mom(k) + num(i) / (scale * tau);
        cand(i) = x(i) - cand_mom(k);
      }
      Vector kc = kernel_col(cand);
      const double next = loss_from(cand, kc, z);
      if (!std::isfinite(next) || !cand_mom.allFinite())
        throw NumericalError("sample completion produced non-finite values", l);
      if (next <= current || attempt >= options.max_backtracks) {
        mom.swap(cand_mom);
        x.swap(cand);  // cand keeps the observed entries, which never change
        kx = std::move(kc);
        current = next;
        break;
      }
      tau *= 2.0;
    }
    result.loss_trace.push_back(current);

    double x_norm = 0.0;
    for (Index i : missing) x_norm += x(i) * x(i);
    if (mom.norm() <= options.tol * std::max(std::sqrt(x_norm), kFloor)) {
      result.converged = true;
      break;
    }
  }
  result.exhausted = result.iterations >= options.n_iter;

  z = chol_.solve(kx);
  result.loss = loss_from(x, kx, z);
  result.loss_trace.push_back(result.loss);
  result.x = std::move(x);
  result.z = std::move(z);
  return result;
}

std::size_t SampleCompleter::largest_buffer() const {
  return std::max({elements(kdd_), elements(chol_.matrixLLT()), static_cast<std::size_t>(D_.rows())});
}

OnlineModel init_online(Index m, const OnlineHyperparams& hp) {
  hp.validate();
  OnlineModel model;
  model.hp = hp;
  if (model.hp.r == 0) model.hp.r = m;
  const Index r = model.hp.r;
  std::mt19937_64 rng(hp.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  model.D.resize(m, r);
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < m; ++i) model.D(i, j) = normal(rng);
  model.momD = Matrix::Zero(m, r);
  model.note_buffer(elements(model.D));
  return model;
}

namespace {

InnerOptions inner_options(const OnlineHyperparams& hp) {
  return InnerOptions{hp.tau, hp.eta, hp.n_iter, hp.tol, hp.max_backtracks};
}

IndexList complement(const IndexList& observed, Index m) {
  std::vector<char> seen(static_cast<std::size_t>(m), 0);
  for (Index i : observed) {
    if (i < 0 || i >= m) throw ArgumentError("observed index out of range");
    seen[static_cast<std::size_t>(i)] = 1;
  }
  IndexList missing;
  for (Index i = 0; i < m; ++i)
    if (!seen[static_cast<std::size_t>(i)]) missing.push_back(i);
  return missing;
}

}  // namespace

SampleResult infer_sample(const OnlineModel& model, const Vector& x, const IndexList& observed,
                          const KernelSpec& spec, const OnlineHyperparams& hp) {
  const SampleCompleter completer(spec, model.D, hp.alpha, hp.beta);
  return completer.complete(x, complement(observed, x.size()), inner_options(hp));
}

Matrix online_gradient_D(const KernelSpec& spec, const Vector& x, const Matrix& D, const Vector& z,
                         double alpha) {
  if (spec.is_polynomial()) {
    const RowVector w1 = power_weights(spec, x.transpose() * D);
    const Matrix W2 = power_weights(spec, D.transpose() * D);
    Matrix H = (z * z.transpose()).cwiseProduct(W2);
    H.diagonal() += alpha * W2.diagonal();
    return -x * w1.cwiseProduct(z.transpose()) + D * H;
  }
  const RowVector kxd = kernel_row(spec, x, D);
  const RowVector q1 = -z.transpose().cwiseProduct(kxd);
  Matrix Q2 = 0.5 * z * z.transpose();
  Q2.diagonal().array() += 0.5 * alpha;
  Q2 = Q2.cwiseProduct(kernel_matrix(spec, D, D));
  const RowVector g2 = Q2.colwise().sum();
  const double s = rbf_scale(spec);
  return (x * q1 - D * q1.asDiagonal()) / s + (2.0 / s) * (D * Q2 - D * g2.asDiagonal());
}

double online_step_norm(const KernelSpec& spec, const Vector& x, const Matrix& D, const Vector& z,
                        double alpha) {
  if (spec.is_polynomial()) {
    const Matrix W2 = power_weights(spec, D.transpose() * D);
    Matrix H = (z * z.transpose()).cwiseProduct(W2);
    H.diagonal() += alpha * W2.diagonal();
    return spectral_norm_symmetric(H);
  }
  const RowVector q1 = -z.transpose().cwiseProduct(kernel_row(spec, x, D));
  Matrix Q2 = 0.5 * z * z.transpose();
  Q2.diagonal().array() += 0.5 * alpha;
  Q2 = Q2.cwiseProduct(kernel_matrix(spec, D, D));
  Matrix B = 2.0 * Q2;
  B.diagonal() -= q1.transpose() + 2.0 * Q2.colwise().sum().transpose();
  return spectral_norm_symmetric(B / rbf_scale(spec));
}

void update_dictionary(OnlineModel& model, const Vector& x, const Vector& z,
                       const KernelSpec& spec) {
  const Matrix grad = online_gradient_D(spec, x, model.D, z, model.hp.alpha);
  if (!grad.allFinite()) throw NumericalError("dictionary gradient is not finite");
  const double norm = std::max(online_step_norm(spec, x, model.D, z, model.hp.alpha), kFloor);
  model.momD = model.hp.eta * model.momD + grad / (model.hp.tau * norm);
  model.D -= model.momD;
  if (!model.D.allFinite()) throw NumericalError("dictionary update produced non-finite values");
  model.note_buffer(elements(grad));
  model.note_buffer(static_cast<std::size_t>(model.D.cols() * model.D.cols()));
}

StreamResult run_stream(const Matrix& data, const Mask& mask, const KernelSpec& spec,
                        const OnlineHyperparams& hp, const std::optional<Matrix>& ground_truth,
                        const OnlineModel* initial) {
  spec.validate();
  hp.validate();
  const Index m = data.rows();
  const Index n = data.cols();
  if (mask.rows() != m || mask.cols() != n) throw ArgumentError("mask shape does not match data");
  if (ground_truth && (ground_truth->rows() != m || ground_truth->cols() != n))
    throw ArgumentError("ground truth shape does not match data");

  StreamResult out;
  if (initial) {
    if (initial->D.rows() != m) throw ArgumentError("checkpoint dictionary has the wrong row count");
    out.model = *initial;
    const Index r = out.model.D.cols();
    out.model.hp = hp;
    out.model.hp.r = r;
    if (out.model.momD.rows() != m || out.model.momD.cols() != r)
      out.model.momD = Matrix::Zero(m, r);
  } else {
    out.model = init_online(m, hp);
  }
  OnlineModel& model = out.model;
  const InnerOptions options = inner_options(hp);

  // Stream-side storage: the completed columns and each column's latest
  // loss / error. The online core itself only holds O(mr + r^2) state.
  out.X = data;
  std::vector<double> last_loss(static_cast<std::size_t>(n), 0.0);
  std::vector<double> last_err(static_cast<std::size_t>(n), 0.0);
  std::vector<char> visited(static_cast<std::size_t>(n), 0);
  double loss_sum = 0.0;
  double err_sum = 0.0;
  long visited_count = 0;

  Vector row_sum = Vector::Zero(m);
  Eigen::VectorXi row_count = Eigen::VectorXi::Zero(m);

  for (int pass = 0; pass < hp.n_pass; ++pass) {
    model.converged_samples = 0;
    model.exhausted_samples = 0;
    for (Index j = 0; j < n; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      IndexList missing;
      for (Index i = 0; i < m; ++i) {
        if (mask.observed(i, j)) {
          if (pass == 0) {
            row_sum(i) += data(i, j);
            ++row_count(i);
          }
        } else {
          missing.push_back(i);
        }
      }

      Vector x = out.X.col(j);
      if (!visited[sj] && !missing.empty()) {
        // first visit: observed running row means, else the dictionary mean
        const Vector atom_mean = model.D.rowwise().mean();
        const bool empty_column = static_cast<Index>(missing.size()) == m;
        for (Index i : missing)
          x(i) = (!empty_column && row_count(i) > 0) ? row_sum(i) / row_count(i) : atom_mean(i);
      }

      SampleResult res;
      try {
        const SampleCompleter completer(spec, model.D, hp.alpha, hp.beta);
        model.note_buffer(completer.largest_buffer());
        res = completer.complete(std::move(x), missing, options);
        update_dictionary(model, res.x, res.z, spec);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at sample " + std::to_string(j) +
                             " of pass " + std::to_string(pass + 1));
      }
      model.note_buffer(static_cast<std::size_t>(m));
      ++model.samples_seen;
      if (res.converged) ++model.converged_samples;
      if (res.exhausted) ++model.exhausted_samples;

      out.X.col(j) = res.x;
      if (visited[sj]) {
        loss_sum -= last_loss[sj];
        err_sum -= last_err[sj];
      } else {
        visited[sj] = 1;
        ++visited_count;
      }
      last_loss[sj] = res.loss;
      loss_sum += res.loss;
      model.cost_trace.push_back(loss_sum / static_cast<double>(visited_count));

      if (ground_truth) {
        const double truth_norm = ground_truth->col(j).norm();
        const double diff = (ground_truth->col(j) - res.x).norm();
        last_err[sj] = truth_norm > 0.0 ? diff / truth_norm : diff;
        err_sum += last_err[sj];
        model.err_trace.push_back(err_sum / static_cast<double>(visited_count));
      }
    }
    model.pass_cost.push_back(model.cost_trace.back());
    if (ground_truth) model.pass_error.push_back(model.err_trace.back());
  }
  return out;
}

}  // namespace kfmc
