#include "kfmc/synth.hpp"

#include "kfmc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace kfmc {

void SyntheticSpec::validate() const {
  if (d < 1) throw ArgumentError("d must be >= 1");
  if (p < 1) throw ArgumentError("p must be >= 1");
  if (u < 1) throw ArgumentError("u must be >= 1");
  if (m < 1) throw ArgumentError("m must be >= 1");
  if (n_per < 1) throw ArgumentError("n_per must be >= 1");
}

SyntheticSpec preset(const std::string& name, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  if (name == "single-nonlinear") {
    spec.u = 1;
  } else if (name == "union-nonlinear") {
    spec.u = 3;
  } else if (name == "union-linear") {
    spec.u = 10;
    spec.p = 1;
  } else {
    throw ArgumentError("unknown preset '" + name + "'");
  }
  return spec;
}

namespace {

// Exponent tuples of total degree `degree` over d variables, lexicographically
// descending (s1^2 before s1 s2 before s2^2).
void exponents_of_degree(int d, int degree, std::vector<int>& current,
                         std::vector<std::vector<int>>& out) {
  const int k = static_cast<int>(current.size());
  if (k == d - 1) {
    current.push_back(degree);
    out.push_back(current);
    current.pop_back();
    return;
  }
  for (int e = degree; e >= 0; --e) {
    current.push_back(e);
    exponents_of_degree(d, degree - e, current, out);
    current.pop_back();
  }
}

}  // namespace

Index feature_count(int d, int p, bool include_constant) {
  // C(d + p, p)
  double c = 1.0;
  for (int i = 1; i <= p; ++i) c = c * (d + i) / i;
  return static_cast<Index>(std::llround(c)) - (include_constant ? 0 : 1);
}

Vector poly_features(const Eigen::Ref<const Vector>& s, int p, bool include_constant) {
  const int d = static_cast<int>(s.size());
  if (d < 1) throw ArgumentError("feature input must be non-empty");
  if (p < 0) throw ArgumentError("p must be >= 0");
  std::vector<double> values;
  if (include_constant) values.push_back(1.0);
  std::vector<int> current;
  for (int degree = 1; degree <= p; ++degree) {
    std::vector<std::vector<int>> tuples;
    exponents_of_degree(d, degree, current, tuples);
    for (const auto& t : tuples) {
      double v = 1.0;
      for (int i = 0; i < d; ++i)
        for (int e = 0; e < t[static_cast<std::size_t>(i)]; ++e) v *= s(i);
      values.push_back(v);
    }
  }
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const Index features = feature_count(spec.d, spec.p, spec.include_constant);

  SyntheticData out;
  out.X.resize(spec.m, spec.u * spec.n_per);
  out.labels.reserve(static_cast<std::size_t>(spec.u * spec.n_per));
  Matrix P(spec.m, features);
  Vector s(spec.d);
  for (int k = 0; k < spec.u; ++k) {
    for (Index c = 0; c < features; ++c)
      for (Index i = 0; i < spec.m; ++i) P(i, c) = normal(rng);
    for (Index j = 0; j < spec.n_per; ++j) {
      for (int i = 0; i < spec.d; ++i) s(i) = uniform(rng);
      out.X.col(k * spec.n_per + j) = P * poly_features(s, spec.p, spec.include_constant);
      out.labels.push_back(k);
    }
  }
  return out;
}

Matrix twisted_cubic(Index n, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  Matrix X(3, n);
  for (Index j = 0; j < n; ++j) {
    const double s = uniform(rng);
    X(0, j) = s;
    X(1, j) = s * s;
    X(2, j) = s * s * s;
  }
  return X;
}

Mask random_mask(Index m, Index n, double delta, std::uint64_t seed,
                 std::optional<Index> per_column_exact) {
  if (m < 1 || n < 1) throw ArgumentError("mask dimensions must be positive");
  std::mt19937_64 rng(seed);
  Mask mask = Mask::full(m, n);

  if (per_column_exact) {
    const Index k = *per_column_exact;
    if (k < 0 || k >= m) throw ArgumentError("per-column missing count must lie in [0, m)");
    std::vector<Index> rows(static_cast<std::size_t>(m));
    for (Index j = 0; j < n; ++j) {
      std::iota(rows.begin(), rows.end(), Index{0});
      std::shuffle(rows.begin(), rows.end(), rng);
      for (Index t = 0; t < k; ++t) mask.set(rows[static_cast<std::size_t>(t)], j, false);
    }
    return mask;
  }

  if (!(delta >= 0.0 && delta < 1.0)) throw ArgumentError("missing rate must lie in [0, 1)");
  const auto total = static_cast<Index>(std::floor(delta * static_cast<double>(m * n)));
  if (total == 0) return mask;
  if (total > (m - 1) * n)
    throw ArgumentError("missing rate leaves no room for one observation per column");

  std::vector<Index> cells(static_cast<std::size_t>(m * n));
  std::iota(cells.begin(), cells.end(), Index{0});
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::shuffle(cells.begin(), cells.end(), rng);
    std::vector<Index> missing_per_col(static_cast<std::size_t>(n), 0);
    bool ok = true;
    for (Index t = 0; t < total && ok; ++t) {
      const Index j = cells[static_cast<std::size_t>(t)] / m;
      ok = ++missing_per_col[static_cast<std::size_t>(j)] < m;
    }
    if (!ok) continue;
    for (Index t = 0; t < total; ++t) {
      const Index cell = cells[static_cast<std::size_t>(t)];
      mask.set(cell % m, cell / m, false);
    }
    return mask;
  }

  // Dense masks rarely pass the redraw: keep one random entry per column and
  // draw the missing set from the rest.
  std::uniform_int_distribution<Index> pick_row(0, m - 1);
  std::vector<Index> free_cells;
  free_cells.reserve(static_cast<std::size_t>((m - 1) * n));
  for (Index j = 0; j < n; ++j) {
    const Index keep = pick_row(rng);
    for (Index i = 0; i < m; ++i)
      if (i != keep) free_cells.push_back(j * m + i);
  }
  std::shuffle(free_cells.begin(), free_cells.end(), rng);
  for (Index t = 0; t < total; ++t) {
    const Index cell = free_cells[static_cast<std::size_t>(t)];
    mask.set(cell % m, cell / m, false);
  }
  return mask;
}

Mask continuous_mask(Index m, Index n, double delta, Index n_seq, std::uint64_t seed) {
  if (m < 1 || n < 1) throw ArgumentError("mask dimensions must be positive");
  if (n_seq < 1 || n_seq > n) throw ArgumentError("n_seq must lie in [1, n]");
  if (!(delta >= 0.0 && delta < 1.0)) throw ArgumentError("missing rate must lie in [0, 1)");
  const auto run = static_cast<Index>(
      std::llround(delta * static_cast<double>(n) / static_cast<double>(n_seq)));
  if (n_seq * run > n) throw ArgumentError("requested missing runs exceed the row length");
  Mask mask = Mask::full(m, n);
  if (run == 0) return mask;

  // Non-overlapping runs placed uniformly: choose the run order among the
  // remaining free slots, i.e. n_seq positions out of n - n_seq * (run - 1).
  const Index slots = n - n_seq * (run - 1);
  std::mt19937_64 rng(seed);
  std::vector<Index> positions(static_cast<std::size_t>(slots));
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000)
      throw ArgumentError("could not place missing runs without emptying a column");
    mask = Mask::full(m, n);
    for (Index i = 0; i < m; ++i) {
      std::iota(positions.begin(), positions.end(), Index{0});
      std::shuffle(positions.begin(), positions.end(), rng);
      std::vector<Index> starts(positions.begin(), positions.begin() + n_seq);
      std::sort(starts.begin(), starts.end());
      for (Index k = 0; k < n_seq; ++k) {
        const Index start = starts[static_cast<std::size_t>(k)] + k * (run - 1);
        for (Index t = 0; t < run; ++t) mask.set(i, start + t, false);
      }
    }
    // redraw when a column lost every entry (impossible to avoid for m == 1)
    bool ok = true;
    for (Index j = 0; j < n && ok && m > 1; ++j) ok = mask.observed_in_column(j) > 0;
    if (ok) return mask;
  }
}

}  // namespace kfmc
