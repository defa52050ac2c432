#include <doctest.h>

#include "kfmc/metrics.hpp"
#include "kfmc/offline.hpp"
#include "kfmc/ose.hpp"
#include "kfmc/synth.hpp"
#include "support.hpp"

#include <cmath>

using namespace kfmc;
using kfmc::test::random_matrix;

namespace {

double mean_pairwise_distance(const Matrix& X) {
  double total = 0.0;
  long count = 0;
  for (Index i = 0; i < X.cols(); ++i)
    for (Index j = i + 1; j < X.cols(); ++j, ++count) total += (X.col(i) - X.col(j)).norm();
  return total / static_cast<double>(count);
}

Mask hide(const Matrix& X, const Mask& mask, Matrix& masked) {
  masked = X;
  for (Index j = 0; j < X.cols(); ++j)
    for (Index i = 0; i < X.rows(); ++i)
      if (!mask.observed(i, j)) masked(i, j) = std::nan("");
  return mask;
}

}  // namespace

TEST_CASE("training at the exact solution is stationary") {
  const auto spec = KernelSpec::polynomial(1.0, 2);
  const Matrix X = random_matrix(3, 4, 1);
  const Matrix I = Matrix::Identity(4, 4);
  CHECK(std::abs(objective(spec, X, X, I, 0.0, 0.0)) < 1e-10);
  CHECK(newton_step_D(spec, X, X, I, 0.0, 2.0).norm() < 1e-10);
}

TEST_CASE("dictionary training without momentum is monotone and leaves the data alone") {
  const Matrix X = generate(preset("single-nonlinear", 1)).X.leftCols(60);
  OfflineHyperparams hp;
  hp.r = 20;
  hp.eta = 0.0;
  hp.t_max = 40;
  hp.tol = 0.0;
  const OfflineModel model = train_dictionary(X, KernelSpec::polynomial(1.0, 2), hp);
  CHECK(model.X() == X);
  CHECK(non_increasing(model.trace, 1e-9));
  Matrix bad = X;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(train_dictionary(bad, KernelSpec::rbf(1.0), hp), ArgumentError);
}

TEST_CASE("completion never mutates the dictionary and passes full columns through") {
  const Matrix D = random_matrix(6, 4, 2);
  const Matrix copy = D;
  const Matrix samples = random_matrix(6, 10, 3);
  Mask mask = random_mask(6, 10, 0.3, 4);
  for (Index i = 0; i < 6; ++i) mask.set(i, 0, true);
  const OseResult res = complete_new(KernelSpec::rbf(2.0), D, samples, mask, OseOptions{});
  CHECK(D == copy);
  CHECK(res.X.col(0) == samples.col(0));
  CHECK(res.samples.size() == 10);
  for (Index j = 0; j < 10; ++j)
    for (Index i = 0; i < 6; ++i)
      if (mask.observed(i, j)) CHECK(res.X(i, j) == samples(i, j));
}

TEST_CASE("completion of a column does not depend on the rest of the batch") {
  const Matrix D = random_matrix(5, 7, 5);
  const Matrix samples = random_matrix(5, 80, 6);
  const Mask mask = random_mask(5, 80, 0.3, 7);
  const auto spec = KernelSpec::polynomial(1.0, 2);
  const OseResult all = complete_new(spec, D, samples, mask, OseOptions{});

  std::vector<Index> order = {79, 3, 41, 0, 17};
  Matrix sub(5, static_cast<Index>(order.size()));
  Mask sub_mask(5, sub.cols());
  for (std::size_t k = 0; k < order.size(); ++k) {
    sub.col(static_cast<Index>(k)) = samples.col(order[k]);
    for (Index i = 0; i < 5; ++i) sub_mask.set(i, static_cast<Index>(k), mask.observed(i, order[k]));
  }
  const OseResult part = complete_new(spec, D, sub, sub_mask, OseOptions{});
  for (std::size_t k = 0; k < order.size(); ++k)
    CHECK(part.X.col(static_cast<Index>(k)) == all.X.col(order[k]));
}

TEST_CASE("training columns are recovered after re-masking") {
  const Matrix X = generate(preset("union-nonlinear", 3)).X;
  const double sigma = 3.0 * mean_pairwise_distance(X);
  const auto spec = KernelSpec::rbf(sigma);
  OfflineHyperparams hp;
  hp.r = 60;
  hp.beta = 1e-4;
  hp.alpha = 0.0;
  hp.t_max = 200;
  const OfflineModel model = train_dictionary(X, spec, hp);

  const Matrix held = X.leftCols(40);
  Matrix masked;
  const Mask mask = hide(held, random_mask(30, 40, 0.3, 4), masked);
  OseOptions opt;
  opt.beta = 1e-4;
  opt.inner.n_iter = 200;
  const OseResult res = complete_new(spec, model.D, masked, mask, opt);
  int good = 0;
  for (Index j = 0; j < 40; ++j)
    if (relative_error(res.X.col(j), held.col(j)) < 0.05) ++good;
  MESSAGE("columns recovered below 0.05: " << good << "/40");
  CHECK(relative_error(res.X, held) < 0.05);
}

TEST_CASE("held-out completion is competitive with the offline fit") {
  const Matrix X = generate(preset("single-nonlinear", 5)).X;
  const Mask mask = random_mask(30, 100, 0.3, 6);
  const double sigma = 3.0 * mean_pairwise_distance(X);
  const auto spec = KernelSpec::rbf(sigma);

  OfflineHyperparams hp;
  hp.r = 30;
  hp.beta = 1e-4;
  hp.t_max = 300;
  const OfflineModel full = fit(impute_init(X, mask), spec, hp);
  const double re_full = relative_error(full.X(), X);

  const OfflineModel trained = train_dictionary(X.leftCols(66), spec, hp);
  Mask held_mask(30, 34);
  for (Index j = 0; j < 34; ++j)
    for (Index i = 0; i < 30; ++i) held_mask.set(i, j, mask.observed(i, 66 + j));
  OseOptions opt;
  opt.beta = 1e-4;
  opt.inner.n_iter = 200;
  const OseResult res = complete_new(spec, trained.D, X.rightCols(34), held_mask, opt);
  const double re_ose = relative_error(res.X, X.rightCols(34));
  MESSAGE("offline RE " << re_full << ", OSE RE " << re_ose);
  CHECK(re_ose <= 1.5 * re_full);
}
