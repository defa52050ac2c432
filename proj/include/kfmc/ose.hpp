#pragma once

#include "kfmc/kernel.hpp"
#include "kfmc/masked_matrix.hpp"
#include "kfmc/offline.hpp"
#include "kfmc/online.hpp"
#include "kfmc/types.hpp"

#include <optional>
#include <vector>

namespace kfmc {

/// Learns D from fully observed columns: the offline loop with the X step and
/// the projection switched off.
OfflineModel train_dictionary(const Matrix& X_train, const KernelSpec& spec,
                              OfflineHyperparams hp);

struct OseOptions {
  double beta = 0.01;
  double alpha = 0.0;  ///< only shifts the reported loss
  InnerOptions inner;
  /// Starting values for missing entries. Defaults to the mean of D's columns.
  std::optional<Vector> fill;
};

struct OseResult {
  Matrix X;  ///< completed columns; observed entries are copied through
  std::vector<SampleResult> samples;
};

/// Completes each column of `samples` against a frozen D. One factorization
/// of K_DD + beta I serves the whole batch; columns run in parallel.
OseResult complete_new(const KernelSpec& spec, const Matrix& D, const Matrix& samples,
                       const Mask& mask, const OseOptions& options);

}  // namespace kfmc
