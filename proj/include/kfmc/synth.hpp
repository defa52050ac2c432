#pragma once

#include "kfmc/masked_matrix.hpp"
#include "kfmc/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace kfmc {

/// Data x = P^(k) f(s) with s ~ U(0,1)^d and f the degree-p monomial map,
/// drawn from u independent maps P^(k) ~ N(0,1).
struct SyntheticSpec {
  int d = 3;
  int p = 3;
  int u = 1;
  Index m = 30;
  Index n_per = 100;
  std::uint64_t seed = 0;
  bool include_constant = false;

  void validate() const;
};

/// Named setups: "single-nonlinear" (u=1, p=3), "union-nonlinear" (u=3, p=3),
/// "union-linear" (u=10, p=1). All use d=3, m=30, 100 columns per subspace.
SyntheticSpec preset(const std::string& name, std::uint64_t seed = 0);

/// Monomials of total degree <= p in graded-lexicographic order.
Vector poly_features(const Eigen::Ref<const Vector>& s, int p, bool include_constant);
/// Number of entries poly_features() returns.
Index feature_count(int d, int p, bool include_constant);

struct SyntheticData {
  Matrix X;                 ///< m x (u * n_per), subspace blocks in order
  std::vector<int> labels;  ///< subspace of each column
};

SyntheticData generate(const SyntheticSpec& spec);

/// Columns (s, s^2, s^3) with s ~ U(-1, 1).
Matrix twisted_cubic(Index n, std::uint64_t seed);

/// Exactly floor(delta m n) missing entries drawn without replacement, or
/// exactly `per_column_exact` per column when given. Unless per_column_exact
/// is set, every column keeps at least one observed entry.
Mask random_mask(Index m, Index n, double delta, std::uint64_t seed,
                 std::optional<Index> per_column_exact = std::nullopt);

/// Each row loses n_seq non-overlapping runs of length round(delta n / n_seq)
/// at random positions.
Mask continuous_mask(Index m, Index n, double delta, Index n_seq, std::uint64_t seed);

}  // namespace kfmc
