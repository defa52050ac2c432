#pragma once

#include <cstdint>

namespace kfmc {

/// Data of u maps f: R^d -> R^m of degree p, n columns, kernel degree q.
struct ProblemShape {
  std::uint64_t m = 1;
  std::uint64_t n = 1;
  std::uint64_t d = 1;
  std::uint64_t p = 1;
  std::uint64_t q = 1;
  std::uint64_t u = 1;

  void validate() const;
};

/// C(n, k) in exact integer arithmetic; throws std::overflow_error when the
/// result does not fit in 64 bits.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// min{m, n, u C(d+p, p)}
std::uint64_t expected_rank_X(const ProblemShape& shape);
/// min{C(m+q, q), n, u C(d+pq, pq)}
std::uint64_t expected_rank_phi(const ProblemShape& shape);
/// C(m+q, q), the feature dimension of a degree-q polynomial kernel.
std::uint64_t feature_dim(const ProblemShape& shape);

/// C(rho m + q, q) through the product formula, so rho m may be fractional.
double dof_observed_per_column(double rho, double m, std::uint64_t q);

struct RateBound {
  double value = 0.0;       ///< clamped to at most 1
  double unclamped = 0.0;
  bool vacuous = false;     ///< unclamped >= 1: every entry would be needed
};

/// (r/n + r/mbar - r^2/(n mbar))^(1/q) with r = u C(d+pq, pq), mbar = C(m+q, q).
RateBound rho_kfmc(const ProblemShape& shape);
/// ((m+n) r_X - r_X^2) / (m n) with r_X = expected_rank_X.
RateBound rho_lrmc(const ProblemShape& shape);

/// sqrt(c^(q+1) / (q+1)!), requires 0 < c < 1.
double rbf_poly_truncation_error(double c_bound, std::uint64_t q);

}  // namespace kfmc
