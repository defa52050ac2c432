#pragma once

#include "kfmc/kernel.hpp"
#include "kfmc/masked_matrix.hpp"
#include "kfmc/types.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace kfmc {

/// Comma-separated numbers, one matrix row per line. Empty fields and
/// `NaN` (any case) read as quiet NaN.
Matrix read_csv(const std::string& path);
/// Values written with 17 significant digits; NaN as `NaN`.
void write_csv(const std::string& path, const Matrix& A);

/// 0/1 grid of the same shape as the data; nonzero means observed.
Mask read_mask_csv(const std::string& path);
void write_mask_csv(const std::string& path, const Mask& mask);

/// Copy of `values` with NaN at every unobserved entry.
Matrix apply_mask(const Matrix& values, const Mask& mask);

/// Dictionary checkpoint. File layout: the 8 bytes "KFMCCKPT", a uint32
/// version, a uint64 header length, a JSON header, then D (and momD when the
/// header says so) as row-major little-endian float64.
struct Checkpoint {
  KernelSpec kernel;
  std::string solver = "online";  ///< "online" or "offline"
  double alpha = 0.01;
  double beta = 0.01;
  double tau = 2.0;
  double eta = 0.5;
  int n_iter = 30;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  long samples_seen = 0;
  Matrix D;
  std::optional<Matrix> momD;
  std::optional<Vector> fill;  ///< starting values for missing entries

  Index m() const noexcept { return D.rows(); }
  Index r() const noexcept { return D.cols(); }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws ArgumentError on a malformed or unsupported file.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace kfmc
