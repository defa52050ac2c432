#pragma once

#include "kfmc/kernel.hpp"
#include "kfmc/masked_matrix.hpp"
#include "kfmc/types.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace kfmc {

struct OnlineHyperparams {
  Index r = 0;  ///< 0 means "use m"
  double alpha = 0.01;
  double beta = 0.01;
  double tau = 2.0;
  double eta = 0.5;
  int n_iter = 30;  ///< inner iterations per sample
  int n_pass = 1;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  int max_backtracks = 1;

  void validate() const;
};

/// Settings of the per-sample completion loop.
struct InnerOptions {
  double tau = 2.0;
  double eta = 0.5;
  int n_iter = 30;
  double tol = 1e-6;
  int max_backtracks = 1;
};

struct SampleResult {
  Vector x;                 ///< completed sample
  Vector z;                 ///< coefficients for the final x
  double loss = 0.0;        ///< terminal per-sample objective
  int iterations = 0;
  bool converged = false;   ///< relative change in the missing entries fell below tol
  bool exhausted = false;   ///< n_iter ran out (both flags can be set)
  std::vector<double> loss_trace;
};

/// Frozen-dictionary completion of single columns. The factorization of
/// K_DD + beta I is computed once in the constructor and reused for every
/// z-step. complete() is const and may run concurrently.
class SampleCompleter {
 public:
  SampleCompleter(const KernelSpec& spec, const Matrix& D, double alpha, double beta);

  /// z = (K_DD + beta I)^{-1} k_xD'.
  Vector coefficients(const Vector& x) const;

  /// 1/2 k_xx - k_xD z + 1/2 z' K_DD z + beta/2 |z|^2 + alpha/2 Tr(K_DD).
  double loss(const Vector& x, const Vector& z) const;

  /// Relaxed Newton step for x with z held fixed (full length; callers mask).
  Vector x_step(const Vector& x, const Vector& z, double tau) const;

  /// Alternates z-steps and guarded x-steps on the `missing` rows of x.
  SampleResult complete(Vector x, const IndexList& missing, const InnerOptions& options) const;

  const Matrix& kernel_dd() const noexcept { return kdd_; }
  /// Largest dense buffer (in elements) held by this object.
  std::size_t largest_buffer() const;

 private:
  /// k(x, D)' from one product D'x and the cached column norms of D.
  Vector kernel_col(const Vector& x) const;
  double loss_from(const Vector& x, const Vector& kx, const Vector& z) const;
  /// Writes the unscaled x step to `num` and returns its divisor before tau.
  double step_direction(const Vector& x, const Vector& kx, const Vector& z, Vector& num) const;

  KernelSpec spec_;
  const Matrix& D_;
  double alpha_;
  double beta_;
  Matrix kdd_;
  Eigen::LLT<Matrix> chol_;
  Vector d_sqnorm_;
  double alpha_term_ = 0.0;
};

/// State of streaming completion. Nothing in here grows with the number of samples
/// except the scalar traces.
struct OnlineModel {
  OnlineHyperparams hp;
  Matrix D;
  Matrix momD;
  long samples_seen = 0;
  std::vector<double> cost_trace;   ///< g_t after each sample
  std::vector<double> err_trace;    ///< e_t after each sample (when truth is known)
  std::vector<double> pass_cost;    ///< g_t at the end of each pass
  std::vector<double> pass_error;   ///< e_t at the end of each pass
  long converged_samples = 0;       ///< in the last pass
  long exhausted_samples = 0;       ///< in the last pass
  std::size_t peak_buffer = 0;      ///< largest dense buffer touched by the online core

  void note_buffer(std::size_t elements) { peak_buffer = std::max(peak_buffer, elements); }
};

OnlineModel init_online(Index m, const OnlineHyperparams& hp);

/// Completes one sample against model.D. `observed` lists the known rows; the
/// remaining rows are filled starting from x's current values.
SampleResult infer_sample(const OnlineModel& model, const Vector& x, const IndexList& observed,
                          const KernelSpec& spec, const OnlineHyperparams& hp);

/// Gradient of the per-sample objective in D with the polynomial weights
/// frozen (polynomial) or exactly (RBF).
Matrix online_gradient_D(const KernelSpec& spec, const Vector& x, const Matrix& D, const Vector& z,
                         double alpha);
/// Normalizer of the stochastic D step: |z z' .* W2 + alpha W2 .* I|_2 for the
/// polynomial kernel, |(1/s)(2 Q2 - Gamma1 - 2 Gamma2)|_2 for RBF.
double online_step_norm(const KernelSpec& spec, const Vector& x, const Matrix& D, const Vector& z,
                        double alpha);

/// One momentum SGD step on D from a completed sample and its coefficients.
void update_dictionary(OnlineModel& model, const Vector& x, const Vector& z,
                       const KernelSpec& spec);

struct StreamResult {
  Matrix X;  ///< completed columns in stream order
  OnlineModel model;
};

/// Online KFMC over the columns of `data` (unobserved entries are ignored).
/// Each pass visits every column once: complete it, then update D. Later
/// passes warm-start each column from its previous completion. When `initial`
/// is given, training resumes from its dictionary and momentum.
StreamResult run_stream(const Matrix& data, const Mask& mask, const KernelSpec& spec,
                        const OnlineHyperparams& hp,
                        const std::optional<Matrix>& ground_truth = std::nullopt,
                        const OnlineModel* initial = nullptr);

}  // namespace kfmc
