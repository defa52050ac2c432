#include <doctest.h>

#include "kfmc/errors.hpp"
#include "kfmc/io.hpp"
#include "kfmc/synth.hpp"
#include "support.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace kfmc;
using kfmc::test::random_matrix;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "kfmc_test_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("csv round trip is exact and keeps NaN") {
  Matrix A = random_matrix(4, 5, 1);
  A(1, 2) = std::nan("");
  A(3, 0) = 1e-300;
  A(0, 4) = -12345.678901234567;
  const auto path = scratch("a.csv");
  write_csv(path.string(), A);
  const Matrix B = read_csv(path.string());
  REQUIRE(B.rows() == 4);
  REQUIRE(B.cols() == 5);
  for (Index j = 0; j < 5; ++j)
    for (Index i = 0; i < 4; ++i)
      CHECK(((std::isnan(A(i, j)) && std::isnan(B(i, j))) || A(i, j) == B(i, j)));
}

TEST_CASE("csv sentinels and malformed files") {
  const auto path = scratch("b.csv");
  write_text(path, "1,,3\nnan,NaN,nAn\n");
  const Matrix A = read_csv(path.string());
  CHECK(A(0, 0) == 1.0);
  CHECK(std::isnan(A(0, 1)));
  CHECK(std::isnan(A(1, 0)));
  CHECK(std::isnan(A(1, 2)));

  write_text(path, "1,2\n3\n");
  CHECK_THROWS_AS(read_csv(path.string()), ArgumentError);
  write_text(path, "1,abc\n");
  CHECK_THROWS_AS(read_csv(path.string()), ArgumentError);
  CHECK_THROWS_AS(read_csv(scratch("missing.csv").string()), ArgumentError);
}

TEST_CASE("mask files") {
  const Mask mask = random_mask(6, 9, 0.3, 2);
  const auto path = scratch("m.csv");
  write_mask_csv(path.string(), mask);
  CHECK(read_mask_csv(path.string()) == mask);
  write_text(path, "1,0\n2,1\n");
  CHECK_THROWS_AS(read_mask_csv(path.string()), ArgumentError);

  const Matrix A = random_matrix(6, 9, 3);
  const Matrix masked = apply_mask(A, mask);
  for (Index j = 0; j < 9; ++j)
    for (Index i = 0; i < 6; ++i)
      CHECK((mask.observed(i, j) ? masked(i, j) == A(i, j) : std::isnan(masked(i, j))));
}

TEST_CASE("checkpoint round trip") {
  Checkpoint ck;
  ck.kernel = KernelSpec::polynomial(0.5, 3);
  ck.solver = "offline";
  ck.alpha = 0.1;
  ck.beta = 0.02;
  ck.tau = 3.0;
  ck.eta = 0.25;
  ck.n_iter = 12;
  ck.tol = 1e-7;
  ck.seed = 99;
  ck.samples_seen = 1234;
  ck.D = random_matrix(5, 3, 4);
  ck.momD = random_matrix(5, 3, 5);
  ck.fill = kfmc::test::random_vector(5, 6);
  const auto path = scratch("a.ckpt");
  save_checkpoint(path.string(), ck);
  const Checkpoint back = load_checkpoint(path.string());
  CHECK(back.kernel.is_polynomial());
  CHECK(back.kernel.c == 0.5);
  CHECK(back.kernel.q == 3);
  CHECK(back.solver == "offline");
  CHECK(back.alpha == 0.1);
  CHECK(back.beta == 0.02);
  CHECK(back.tau == 3.0);
  CHECK(back.eta == 0.25);
  CHECK(back.n_iter == 12);
  CHECK(back.tol == 1e-7);
  CHECK(back.seed == 99);
  CHECK(back.samples_seen == 1234);
  CHECK(back.D == ck.D);
  REQUIRE(back.momD);
  CHECK(*back.momD == *ck.momD);
  REQUIRE(back.fill);
  CHECK(*back.fill == *ck.fill);

  // saving the loaded checkpoint reproduces the file byte for byte
  const auto again = scratch("b.ckpt");
  save_checkpoint(again.string(), back);
  CHECK(read_bytes(path) == read_bytes(again));

  const std::string bytes = read_bytes(path);
  CHECK(bytes.substr(0, 8) == "KFMCCKPT");
}

TEST_CASE("checkpoint stores D row-major after the header") {
  Checkpoint ck;
  ck.kernel = KernelSpec::rbf(2.5);
  ck.D.resize(2, 2);
  ck.D << 1, 2, 3, 4;
  const auto path = scratch("c.ckpt");
  save_checkpoint(path.string(), ck);
  const std::string bytes = read_bytes(path);
  double tail[4];
  std::memcpy(tail, bytes.data() + bytes.size() - sizeof(tail), sizeof(tail));
  CHECK(tail[0] == 1.0);
  CHECK(tail[1] == 2.0);
  CHECK(tail[2] == 3.0);
  CHECK(tail[3] == 4.0);
  const Checkpoint back = load_checkpoint(path.string());
  CHECK(back.kernel.is_rbf());
  CHECK(back.kernel.sigma == 2.5);
  CHECK_FALSE(back.momD);
  CHECK_FALSE(back.fill);
}

TEST_CASE("malformed checkpoints are rejected") {
  Checkpoint ck;
  ck.kernel = KernelSpec::rbf(1.0);
  ck.D = random_matrix(3, 2, 7);
  const auto path = scratch("d.ckpt");
  save_checkpoint(path.string(), ck);
  const std::string good = read_bytes(path);

  const auto bad = scratch("bad.ckpt");
  write_text(bad, "NOTACKPT" + good.substr(8));
  CHECK_THROWS_AS(load_checkpoint(bad.string()), ArgumentError);
  write_text(bad, good.substr(0, good.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(bad.string()), ArgumentError);
  write_text(bad, good + "x");
  CHECK_THROWS_AS(load_checkpoint(bad.string()), ArgumentError);
  std::string wrong_version = good;
  wrong_version[8] = 7;
  write_text(bad, wrong_version);
  CHECK_THROWS_AS(load_checkpoint(bad.string()), ArgumentError);
}
