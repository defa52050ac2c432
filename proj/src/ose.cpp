#include "kfmc/ose.hpp"

#include "kfmc/errors.hpp"
#include "kfmc/parallel.hpp"

#include <exception>
#include <string>

namespace kfmc {

OfflineModel train_dictionary(const Matrix& X_train, const KernelSpec& spec,
                              OfflineHyperparams hp) {
  if (!X_train.allFinite()) throw ArgumentError("training data must be fully observed and finite");
  hp.update_x = false;
  const MaskedMatrix mm = impute_init(X_train, Mask::full(X_train.rows(), X_train.cols()));
  return fit(mm, spec, hp);
}

OseResult complete_new(const KernelSpec& spec, const Matrix& D, const Matrix& samples,
                       const Mask& mask, const OseOptions& options) {
  spec.validate();
  const Index m = D.rows();
  if (samples.rows() != m) throw ArgumentError("sample length does not match dictionary rows");
  if (mask.rows() != samples.rows() || mask.cols() != samples.cols())
    throw ArgumentError("mask shape does not match samples");
  if (options.fill && options.fill->size() != m)
    throw ArgumentError("fill vector length does not match dictionary rows");

  const Vector start = options.fill ? *options.fill : Vector(D.rowwise().mean());
  const SampleCompleter completer(spec, D, options.alpha, options.beta);

  const Index n = samples.cols();
  OseResult out;
  out.X.resize(m, n);
  out.samples.resize(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t k) {
    const auto j = static_cast<Index>(k);
    Vector x(m);
    IndexList missing;
    for (Index i = 0; i < m; ++i) {
      if (mask.observed(i, j)) {
        x(i) = samples(i, j);
      } else {
        x(i) = start(i);
        missing.push_back(i);
      }
    }
    try {
      out.samples[k] = completer.complete(std::move(x), missing, options.inner);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at sample " + std::to_string(j));
    }
    out.X.col(j) = out.samples[k].x;
  });
  return out;
}

}  // namespace kfmc
