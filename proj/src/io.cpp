#include "kfmc/io.hpp"

#include "kfmc/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

namespace kfmc {

namespace {

constexpr char kMagic[8] = {'K', 'F', 'M', 'C', 'C', 'K', 'P', 'T'};

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_field(const std::string& raw, const std::string& path, std::size_t line) {
  const std::string field = trim(raw);
  if (field.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::string lower(field);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != field.size() || !std::isfinite(value))
    throw ArgumentError(path + ":" + std::to_string(line) + ": cannot parse '" + field + "'");
  return value;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw ArgumentError("cannot write '" + path + "'");
  return out;
}

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw ArgumentError("'" + path + "' is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_matrix(std::ostream& out, const Matrix& A) {
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j) put_le<double>(out, A(i, j));
}

Matrix get_matrix(std::istream& in, Index rows, Index cols, const std::string& path) {
  Matrix A(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) A(i, j) = get_le<double>(in, path);
  return A;
}

}  // namespace

Matrix read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) row.push_back(parse_field(field, path, line_no));
    if (line.back() == ',') row.push_back(std::numeric_limits<double>::quiet_NaN());
    if (!rows.empty() && row.size() != rows.front().size())
      throw ArgumentError(path + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(rows.front().size()) + " fields, found " +
                          std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ArgumentError("'" + path + "' contains no data");
  Matrix A(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j)
      A(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return A;
}

void write_csv(const std::string& path, const Matrix& A) {
  std::ofstream out = open_out(path);
  char buf[40];
  for (Index i = 0; i < A.rows(); ++i) {
    for (Index j = 0; j < A.cols(); ++j) {
      if (j) out << ',';
      if (std::isnan(A(i, j))) {
        out << "NaN";
      } else {
        std::snprintf(buf, sizeof buf, "%.17g", A(i, j));
        out << buf;
      }
    }
    out << '\n';
  }
  if (!out) throw ArgumentError("failed writing '" + path + "'");
}

Mask read_mask_csv(const std::string& path) {
  const Matrix A = read_csv(path);
  Mask::Grid grid(A.rows(), A.cols());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j) {
      if (A(i, j) != 0.0 && A(i, j) != 1.0)
        throw ArgumentError("'" + path + "': mask entries must be 0 or 1");
      grid(i, j) = A(i, j) == 1.0 ? 1 : 0;
    }
  return Mask::from_grid(std::move(grid));
}

void write_mask_csv(const std::string& path, const Mask& mask) {
  std::ofstream out = open_out(path);
  for (Index i = 0; i < mask.rows(); ++i) {
    for (Index j = 0; j < mask.cols(); ++j) {
      if (j) out << ',';
      out << (mask.observed(i, j) ? '1' : '0');
    }
    out << '\n';
  }
  if (!out) throw ArgumentError("failed writing '" + path + "'");
}

Matrix apply_mask(const Matrix& values, const Mask& mask) {
  if (mask.rows() != values.rows() || mask.cols() != values.cols())
    throw ArgumentError("mask shape does not match data");
  Matrix out = values;
  for (Index j = 0; j < values.cols(); ++j)
    for (Index i = 0; i < values.rows(); ++i)
      if (!mask.observed(i, j)) out(i, j) = std::numeric_limits<double>::quiet_NaN();
  return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::ordered_json header;
  header["kernel"] = {{"type", ckpt.kernel.name()}};
  if (ckpt.kernel.is_polynomial()) {
    header["kernel"]["c"] = ckpt.kernel.c;
    header["kernel"]["q"] = ckpt.kernel.q;
  } else {
    header["kernel"]["sigma"] = ckpt.kernel.sigma;
  }
  header["solver"] = ckpt.solver;
  header["m"] = ckpt.m();
  header["r"] = ckpt.r();
  header["hyperparameters"] = {{"alpha", ckpt.alpha}, {"beta", ckpt.beta}, {"tau", ckpt.tau},
                               {"eta", ckpt.eta},     {"n_iter", ckpt.n_iter},
                               {"tol", ckpt.tol},     {"seed", ckpt.seed}};
  header["samples_seen"] = ckpt.samples_seen;
  header["momentum"] = ckpt.momD.has_value();
  if (ckpt.fill) header["fill"] = std::vector<double>(ckpt.fill->data(), ckpt.fill->data() + ckpt.fill->size());
  if (ckpt.momD && (ckpt.momD->rows() != ckpt.m() || ckpt.momD->cols() != ckpt.r()))
    throw ArgumentError("momentum buffer shape does not match the dictionary");
  if (ckpt.fill && ckpt.fill->size() != ckpt.m())
    throw ArgumentError("fill vector length does not match the dictionary");

  const std::string text = header.dump();
  std::ofstream out = open_out(path, std::ios::out | std::ios::binary | std::ios::trunc);
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_matrix(out, ckpt.D);
  if (ckpt.momD) put_matrix(out, *ckpt.momD);
  if (!out) throw ArgumentError("failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw ArgumentError("'" + path + "' is not a KFMC checkpoint");
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw ArgumentError("'" + path + "' has unsupported checkpoint version " + std::to_string(version));
  const auto length = get_le<std::uint64_t>(in, path);
  if (length > (1ull << 30)) throw ArgumentError("'" + path + "' has an implausible header length");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length)))
    throw ArgumentError("'" + path + "' is truncated");

  Checkpoint ckpt;
  Index m = 0;
  Index r = 0;
  bool momentum = false;
  try {
    const auto header = nlohmann::json::parse(text);
    const auto& k = header.at("kernel");
    const std::string type = k.at("type").get<std::string>();
    if (type == "poly") {
      ckpt.kernel = KernelSpec::polynomial(k.at("c").get<double>(), k.at("q").get<int>());
    } else if (type == "rbf") {
      ckpt.kernel = KernelSpec::rbf(k.at("sigma").get<double>());
    } else {
      throw ArgumentError("unknown kernel type '" + type + "'");
    }
    ckpt.solver = header.value("solver", std::string("online"));
    m = header.at("m").get<Index>();
    r = header.at("r").get<Index>();
    const auto& hp = header.at("hyperparameters");
    ckpt.alpha = hp.at("alpha").get<double>();
    ckpt.beta = hp.at("beta").get<double>();
    ckpt.tau = hp.at("tau").get<double>();
    ckpt.eta = hp.at("eta").get<double>();
    ckpt.n_iter = hp.at("n_iter").get<int>();
    ckpt.tol = hp.at("tol").get<double>();
    ckpt.seed = hp.at("seed").get<std::uint64_t>();
    ckpt.samples_seen = header.at("samples_seen").get<long>();
    momentum = header.value("momentum", false);
    if (header.contains("fill")) {
      const auto fill = header.at("fill").get<std::vector<double>>();
      if (static_cast<Index>(fill.size()) != m) throw ArgumentError("fill length does not match m");
      ckpt.fill = Eigen::Map<const Vector>(fill.data(), m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("'" + path + "': bad checkpoint header: " + e.what());
  }
  if (m < 1 || r < 1) throw ArgumentError("'" + path + "': dictionary dimensions must be positive");
  ckpt.kernel.validate();
  ckpt.D = get_matrix(in, m, r, path);
  if (momentum) ckpt.momD = get_matrix(in, m, r, path);
  if (in.peek() != std::char_traits<char>::eof())
    throw ArgumentError("'" + path + "' has trailing bytes");
  return ckpt;
}

}  // namespace kfmc
