#pragma once

#include "kfmc/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace kfmc {

/// Observed-entry set of an m x n matrix, stored densely as a 0/1 grid.
class Mask {
 public:
  using Grid = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

  Mask() = default;
  /// All entries unobserved.
  Mask(Index rows, Index cols);

  static Mask full(Index rows, Index cols);
  /// Rejects out-of-range or duplicate pairs.
  static Mask from_pairs(Index rows, Index cols,
                         const std::vector<std::pair<Index, Index>>& observed);
  /// Nonzero entries of `grid` are observed.
  static Mask from_grid(Grid grid);
  /// Entries that are finite in `values` are observed.
  static Mask from_finite(const Matrix& values);

  Index rows() const noexcept { return grid_.rows(); }
  Index cols() const noexcept { return grid_.cols(); }
  bool observed(Index i, Index j) const { return grid_(i, j) != 0; }
  void set(Index i, Index j, bool value) { grid_(i, j) = value ? 1 : 0; }

  Index count() const;
  double observed_fraction() const;
  Index observed_in_column(Index j) const;

  IndexList observed_rows(Index j) const;
  IndexList missing_rows(Index j) const;

  const Grid& grid() const noexcept { return grid_; }

  friend bool operator==(const Mask& a, const Mask& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a.grid_ == b.grid_;
  }

 private:
  Grid grid_;
};

enum class InitStrategy { RowMean, Zero };

/// Partially observed data M with its mask and a working completion X.
/// After construction X agrees with M on the observed set; unobserved
/// entries of M are never read.
struct MaskedMatrix {
  Matrix M;
  Mask mask;
  Matrix X;

  Index rows() const noexcept { return M.rows(); }
  Index cols() const noexcept { return M.cols(); }
};

MaskedMatrix impute_init(const Matrix& M, const Mask& mask,
                         InitStrategy strategy = InitStrategy::RowMean);

/// X_ij := M_ij on the observed set. Idempotent.
MaskedMatrix& project_observed(MaskedMatrix& mm);

struct ColumnView {
  Vector x;
  IndexList observed;
  IndexList missing;
};

ColumnView column_view(const MaskedMatrix& mm, Index j);

/// Per-row mean of observed entries (0 for rows with none).
Vector observed_row_means(const Matrix& M, const Mask& mask);

}  // namespace kfmc
