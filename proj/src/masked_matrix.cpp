#include "kfmc/masked_matrix.hpp"

#include "kfmc/errors.hpp"

#include <cmath>
#include <string>

namespace kfmc {

Mask::Mask(Index rows, Index cols) : grid_(Grid::Zero(rows, cols)) {}

Mask Mask::full(Index rows, Index cols) {
  Mask mask;
  mask.grid_ = Grid::Ones(rows, cols);
  return mask;
}

Mask Mask::from_pairs(Index rows, Index cols,
                      const std::vector<std::pair<Index, Index>>& observed) {
  Mask mask(rows, cols);
  for (const auto& [i, j] : observed) {
    if (i < 0 || i >= rows || j < 0 || j >= cols)
      throw ArgumentError("mask index (" + std::to_string(i) + "," + std::to_string(j) +
                          ") out of range");
    if (mask.observed(i, j))
      throw ArgumentError("duplicate mask index (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");
    mask.set(i, j, true);
  }
  return mask;
}

Mask Mask::from_grid(Grid grid) {
  Mask mask;
  mask.grid_ = grid.unaryExpr([](std::uint8_t v) -> std::uint8_t { return v != 0 ? 1 : 0; });
  return mask;
}

Mask Mask::from_finite(const Matrix& values) {
  Mask mask(values.rows(), values.cols());
  for (Index j = 0; j < values.cols(); ++j)
    for (Index i = 0; i < values.rows(); ++i) mask.set(i, j, std::isfinite(values(i, j)));
  return mask;
}

Index Mask::count() const { return grid_.cast<Index>().sum(); }

double Mask::observed_fraction() const {
  const double total = static_cast<double>(rows()) * static_cast<double>(cols());
  return total > 0 ? static_cast<double>(count()) / total : 0.0;
}

Index Mask::observed_in_column(Index j) const { return grid_.col(j).cast<Index>().sum(); }

IndexList Mask::observed_rows(Index j) const {
  IndexList rows_out;
  for (Index i = 0; i < rows(); ++i)
    if (observed(i, j)) rows_out.push_back(i);
  return rows_out;
}

IndexList Mask::missing_rows(Index j) const {
  IndexList rows_out;
  for (Index i = 0; i < rows(); ++i)
    if (!observed(i, j)) rows_out.push_back(i);
  return rows_out;
}

Vector observed_row_means(const Matrix& M, const Mask& mask) {
  Vector means = Vector::Zero(M.rows());
  for (Index i = 0; i < M.rows(); ++i) {
    double sum = 0.0;
    Index n = 0;
    for (Index j = 0; j < M.cols(); ++j) {
      if (mask.observed(i, j)) {
        sum += M(i, j);
        ++n;
      }
    }
    if (n > 0) means(i) = sum / static_cast<double>(n);
  }
  return means;
}

MaskedMatrix impute_init(const Matrix& M, const Mask& mask, InitStrategy strategy) {
  if (M.rows() != mask.rows() || M.cols() != mask.cols())
    throw ArgumentError("impute_init: mask shape does not match data");

  MaskedMatrix mm{M, mask, Matrix::Zero(M.rows(), M.cols())};
  if (strategy == InitStrategy::RowMean) {
    const Vector means = observed_row_means(M, mask);
    mm.X = means.replicate(1, M.cols());
  }
  project_observed(mm);
  return mm;
}

MaskedMatrix& project_observed(MaskedMatrix& mm) {
  for (Index j = 0; j < mm.cols(); ++j)
    for (Index i = 0; i < mm.rows(); ++i)
      if (mm.mask.observed(i, j)) mm.X(i, j) = mm.M(i, j);
  return mm;
}

ColumnView column_view(const MaskedMatrix& mm, Index j) {
  if (j < 0 || j >= mm.cols())
    throw ArgumentError("column_view: column " + std::to_string(j) + " out of range");
  return ColumnView{mm.X.col(j), mm.mask.observed_rows(j), mm.mask.missing_rows(j)};
}

}  // namespace kfmc
