#include "kfmc/sampling.hpp"

#include "kfmc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace kfmc {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
    throw std::overflow_error("integer overflow in binomial coefficient");
  return a * b;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  if (b > std::numeric_limits<std::uint64_t>::max() - a)
    throw std::overflow_error("integer overflow in binomial coefficient");
  return a + b;
}

RateBound make_bound(double unclamped) {
  return RateBound{std::min(unclamped, 1.0), unclamped, unclamped >= 1.0};
}

}  // namespace

void ProblemShape::validate() const {
  if (m < 1 || n < 1 || d < 1 || p < 1 || q < 1 || u < 1)
    throw ArgumentError("all problem dimensions must be >= 1");
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // result * (n - k + i) / i stays integral; divide out the gcd first
    std::uint64_t num = n - k + i;
    std::uint64_t den = i;
    const std::uint64_t g1 = std::gcd(num, den);
    num /= g1;
    den /= g1;
    const std::uint64_t g2 = std::gcd(result, den);
    result = checked_mul(result / g2, num) / (den / g2);
  }
  return result;
}

std::uint64_t feature_dim(const ProblemShape& shape) {
  shape.validate();
  return binomial(checked_add(shape.m, shape.q), shape.q);
}

std::uint64_t expected_rank_X(const ProblemShape& shape) {
  shape.validate();
  const std::uint64_t latent = checked_mul(shape.u, binomial(checked_add(shape.d, shape.p), shape.p));
  return std::min({shape.m, shape.n, latent});
}

std::uint64_t expected_rank_phi(const ProblemShape& shape) {
  shape.validate();
  const std::uint64_t pq = checked_mul(shape.p, shape.q);
  const std::uint64_t latent = checked_mul(shape.u, binomial(checked_add(shape.d, pq), pq));
  return std::min({feature_dim(shape), shape.n, latent});
}

double dof_observed_per_column(double rho, double m, std::uint64_t q) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ArgumentError("rho must lie in [0, 1]");
  if (!(m >= 0.0)) throw ArgumentError("m must be >= 0");
  const double a = rho * m;
  double value = 1.0;
  for (std::uint64_t i = 1; i <= q; ++i) value *= (a + static_cast<double>(i)) / static_cast<double>(i);
  return value;
}

RateBound rho_kfmc(const ProblemShape& shape) {
  shape.validate();
  const std::uint64_t pq = checked_mul(shape.p, shape.q);
  const double mbar = static_cast<double>(feature_dim(shape));
  const double n = static_cast<double>(shape.n);
  // the rank of phi(X) cannot exceed either of its dimensions
  const double latent = static_cast<double>(checked_mul(shape.u, binomial(checked_add(shape.d, pq), pq)));
  const double r = std::min({latent, n, mbar});
  const double base = 1.0 - (1.0 - r / n) * (1.0 - r / mbar);
  const double unclamped = std::pow(std::max(base, 0.0), 1.0 / static_cast<double>(shape.q));
  return make_bound(unclamped);
}

RateBound rho_lrmc(const ProblemShape& shape) {
  const double r = static_cast<double>(expected_rank_X(shape));
  const double m = static_cast<double>(shape.m);
  const double n = static_cast<double>(shape.n);
  return make_bound(((m + n) * r - r * r) / (m * n));
}

double rbf_poly_truncation_error(double c_bound, std::uint64_t q) {
  if (!(c_bound > 0.0 && c_bound < 1.0)) throw ArgumentError("c_bound must lie in (0, 1)");
  // c^(q+1) / (q+1)! accumulated term by term to avoid overflow
  double term = 1.0;
  for (std::uint64_t i = 1; i <= q + 1; ++i) term *= c_bound / static_cast<double>(i);
  return std::sqrt(term);
}

}  // namespace kfmc
