#include "cli.hpp"

#include "kfmc/baselines.hpp"
#include "kfmc/errors.hpp"
#include "kfmc/io.hpp"
#include "kfmc/metrics.hpp"
#include "kfmc/offline.hpp"
#include "kfmc/online.hpp"
#include "kfmc/ose.hpp"
#include "kfmc/sampling.hpp"
#include "kfmc/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kfmc::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ArgumentError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

json kernel_json(const KernelSpec& spec) {
  json k = {{"type", spec.name()}};
  if (spec.is_polynomial()) {
    k["c"] = spec.c;
    k["q"] = spec.q;
  } else {
    k["sigma"] = spec.sigma;
  }
  return k;
}

json offline_hp_json(const OfflineHyperparams& hp) {
  return {{"r", hp.r},       {"alpha", hp.alpha},   {"beta", hp.beta},
          {"tau", hp.tau},   {"eta", hp.eta},       {"t_max", hp.t_max},
          {"tol", hp.tol},   {"seed", hp.seed},     {"max_backtracks", hp.max_backtracks}};
}

json online_hp_json(const OnlineHyperparams& hp) {
  return {{"r", hp.r},         {"alpha", hp.alpha}, {"beta", hp.beta},
          {"tau", hp.tau},     {"eta", hp.eta},     {"n_iter", hp.n_iter},
          {"n_pass", hp.n_pass}, {"tol", hp.tol},   {"seed", hp.seed},
          {"max_backtracks", hp.max_backtracks}};
}

/// Observed data, the mask actually used and (when known) the ground truth.
struct Inputs {
  Matrix data;
  Mask mask;
  std::optional<Matrix> truth;
};

Inputs load_inputs(const std::string& data_path, const std::string& mask_path,
                   const std::string& truth_path) {
  Inputs in;
  in.data = read_csv(data_path);
  const Mask finite = Mask::from_finite(in.data);
  in.mask = finite;
  if (!mask_path.empty()) {
    Mask given = read_mask_csv(mask_path);
    if (given.rows() != in.data.rows() || given.cols() != in.data.cols())
      throw ArgumentError("mask shape does not match the data");
    for (Index j = 0; j < in.data.cols(); ++j)
      for (Index i = 0; i < in.data.rows(); ++i)
        if (!finite.observed(i, j)) given.set(i, j, false);
    in.mask = std::move(given);
  }
  if (!truth_path.empty()) {
    Matrix truth = read_csv(truth_path);
    if (truth.rows() != in.data.rows() || truth.cols() != in.data.cols())
      throw ArgumentError("truth shape does not match the data");
    if (!truth.allFinite()) throw ArgumentError("truth must be fully observed");
    in.truth = std::move(truth);
  } else if (finite.count() == in.data.size() && in.mask.count() < in.data.size()) {
    // complete data plus a mask: the data itself is the ground truth
    in.truth = in.data;
  }
  return in;
}

void add_error_metrics(json& report, const Matrix& X, const Inputs& in) {
  if (!in.truth) return;
  report["relative_error"] = relative_error(X, *in.truth);
  if (in.mask.count() < in.mask.rows() * in.mask.cols())
    report["relative_error_missing"] =
        masked_relative_error(X, *in.truth, in.mask, ErrorScope::MissingOnly);
}

/// Mean Euclidean distance over all column pairs, or over 1000 random pairs
/// when there are more.
double mean_pair_distance(const Matrix& X, std::uint64_t seed) {
  const Index n = X.cols();
  if (n < 2) return 1.0;
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  double sum = 0.0;
  long count = 0;
  if (pairs <= 1000.0) {
    for (Index a = 0; a < n; ++a)
      for (Index b = a + 1; b < n; ++b, ++count) sum += (X.col(a) - X.col(b)).norm();
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> pick(0, n - 1);
    while (count < 1000) {
      const Index a = pick(rng);
      const Index b = pick(rng);
      if (a == b) continue;
      sum += (X.col(a) - X.col(b)).norm();
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  return mean > 0.0 ? mean : 1.0;
}

double imputed_pair_distance(const Inputs& in, std::uint64_t seed) {
  return mean_pair_distance(impute_init(in.data, in.mask, InitStrategy::RowMean).X, seed);
}

Index resolve_r(Index r, double factor, Index m) {
  if (r > 0) return r;
  if (!(factor > 0.0)) throw ArgumentError("--r-factor must be positive");
  return std::max<Index>(1, static_cast<Index>(std::llround(factor * static_cast<double>(m))));
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find(',', start);
    const std::string item = text.substr(start, end == std::string::npos ? end : end - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ArgumentError("cannot parse list entry '" + item + "'");
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

void write_objective_trace(const fs::path& path, const char* index_name,
                           const std::vector<double>& trace) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write '" + path.string() + "'");
  out << index_name << ",objective\n";
  char buf[40];
  for (std::size_t k = 0; k < trace.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", trace[k]);
    out << k + 1 << ',' << buf << '\n';
  }
}

Checkpoint make_checkpoint(const KernelSpec& spec, const char* solver, const Matrix& D,
                           const Matrix& momD, double alpha, double beta, double tau, double eta,
                           int n_iter, double tol, std::uint64_t seed, long samples,
                           const Vector& fill) {
  Checkpoint ckpt;
  ckpt.kernel = spec;
  ckpt.solver = solver;
  ckpt.alpha = alpha;
  ckpt.beta = beta;
  ckpt.tau = tau;
  ckpt.eta = eta;
  ckpt.n_iter = n_iter;
  ckpt.tol = tol;
  ckpt.seed = seed;
  ckpt.samples_seen = samples;
  ckpt.D = D;
  ckpt.momD = momD;
  ckpt.fill = fill;
  return ckpt;
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  std::string preset;
  int d = 3;
  int p = 3;
  int u = 1;
  Index m = 30;
  Index n_per = 100;
  Index n = 100;  // twisted cubic
  bool include_constant = false;
  double missing = 0.0;
  Index per_column = -1;
  Index runs = 0;
  std::uint64_t seed = 0;
  std::string out = ".";
};

void setup_gen(CLI::App& app, GenArgs& a) {
  auto* preset = app.add_option("--preset", a.preset, "Named dataset")
                     ->check(CLI::IsMember({"single-nonlinear", "union-nonlinear", "union-linear",
                                            "twisted-cubic"}));
  auto* d = app.add_option("--d", a.d, "Latent dimension")->check(CLI::PositiveNumber);
  auto* p = app.add_option("--p", a.p, "Polynomial order of the map")->check(CLI::PositiveNumber);
  auto* u = app.add_option("--u", a.u, "Number of subspaces")->check(CLI::PositiveNumber);
  auto* m = app.add_option("--m", a.m, "Ambient dimension")->check(CLI::PositiveNumber);
  auto* n_per = app.add_option("--n-per", a.n_per, "Columns per subspace")->check(CLI::PositiveNumber);
  for (auto* opt : {d, p, u, m, n_per}) opt->excludes(preset);
  app.add_option("--n", a.n, "Columns of the twisted cubic")->check(CLI::PositiveNumber);
  app.add_flag("--include-constant", a.include_constant, "Keep the constant monomial");
  auto* missing = app.add_option("--missing", a.missing, "Fraction of missing entries")
                      ->check(CLI::Range(0.0, 1.0));
  auto* per_col = app.add_option("--per-column-missing", a.per_column,
                                 "Exact number of missing entries per column")
                      ->check(CLI::NonNegativeNumber);
  per_col->excludes(missing);
  app.add_option("--runs", a.runs, "Missing runs per row (continuous pattern)")
      ->check(CLI::PositiveNumber)
      ->needs(missing)
      ->excludes(per_col);
  app.add_option("--seed", a.seed, "Random seed");
  app.add_option("--out", a.out, "Output directory");
}

int cmd_gen(const GenArgs& a) {
  const fs::path dir = prepare_out_dir(a.out);
  Matrix X;
  json manifest;
  json spec_json;
  std::vector<int> labels;
  if (a.preset == "twisted-cubic") {
    X = twisted_cubic(a.n, a.seed);
    spec_json = {{"n", a.n}};
  } else {
    SyntheticSpec spec;
    if (!a.preset.empty()) {
      spec = preset(a.preset, a.seed);
    } else {
      spec.d = a.d;
      spec.p = a.p;
      spec.u = a.u;
      spec.m = a.m;
      spec.n_per = a.n_per;
      spec.seed = a.seed;
    }
    spec.include_constant = a.include_constant;
    SyntheticData data = generate(spec);
    X = std::move(data.X);
    labels = std::move(data.labels);
    spec_json = {{"d", spec.d},         {"p", spec.p},
                 {"u", spec.u},         {"m", spec.m},
                 {"n_per", spec.n_per}, {"include_constant", spec.include_constant}};
    const Index features = feature_count(spec.d, spec.p, spec.include_constant);
    manifest["expected_rank"] = std::min({spec.m, spec.u * spec.n_per, spec.u * features});
  }

  // the mask stream is decoupled from the data stream
  const std::uint64_t mask_seed = a.seed ^ 0x9E3779B97F4A7C15ull;
  Mask mask;
  json mask_json;
  if (a.per_column >= 0) {
    mask = random_mask(X.rows(), X.cols(), 0.0, mask_seed, a.per_column);
    mask_json = {{"pattern", "per-column"}, {"per_column_missing", a.per_column}};
  } else if (a.runs > 0) {
    mask = continuous_mask(X.rows(), X.cols(), a.missing, a.runs, mask_seed);
    mask_json = {{"pattern", "continuous"}, {"missing", a.missing}, {"runs", a.runs}};
  } else {
    mask = random_mask(X.rows(), X.cols(), a.missing, mask_seed);
    mask_json = {{"pattern", "random"}, {"missing", a.missing}};
  }
  mask_json["observed_fraction"] = mask.observed_fraction();

  write_csv((dir / "data.csv").string(), X);
  write_mask_csv((dir / "mask.csv").string(), mask);
  manifest["preset"] = a.preset.empty() ? "custom" : a.preset;
  manifest["seed"] = a.seed;
  manifest["shape"] = {X.rows(), X.cols()};
  manifest["spec"] = spec_json;
  manifest["true_rank"] = numerical_rank(X);
  manifest["mask"] = mask_json;
  if (!labels.empty()) manifest["labels"] = labels;
  write_json(dir / "manifest.json", manifest);
  return kExitOk;
}

// ---------------------------------------------------------------- complete

struct SolverArgs {
  Index r = 0;
  double r_factor = 1.0;
  double alpha = 0.01;
  std::optional<double> beta;
  double tau = 2.0;
  double eta = 0.5;
  double tol = 1e-6;
  double c = 1.0;
  int q = 2;
  std::optional<double> sigma;
  double sigma_mult = 1.0;
  int max_backtracks = 1;
  std::uint64_t seed = 0;
};

void add_solver_options(CLI::App& app, SolverArgs& s) {
  auto* r = app.add_option("--r", s.r, "Dictionary size")->check(CLI::PositiveNumber);
  app.add_option("--r-factor", s.r_factor, "Dictionary size as a multiple of m")
      ->check(CLI::PositiveNumber)
      ->excludes(r);
  app.add_option("--alpha", s.alpha, "Dictionary regularization")->check(CLI::NonNegativeNumber);
  app.add_option("--beta", s.beta, "Coefficient regularization")->check(CLI::PositiveNumber);
  app.add_option("--tau", s.tau, "Newton relaxation (> 1)");
  app.add_option("--eta", s.eta, "Momentum in [0, 1)");
  app.add_option("--tol", s.tol, "Stopping tolerance")->check(CLI::NonNegativeNumber);
  app.add_option("--c", s.c, "Polynomial kernel offset")->check(CLI::NonNegativeNumber);
  app.add_option("--q", s.q, "Polynomial kernel degree")->check(CLI::PositiveNumber);
  auto* sigma = app.add_option("--sigma", s.sigma, "RBF bandwidth")->check(CLI::PositiveNumber);
  app.add_option("--sigma-mult", s.sigma_mult,
                 "RBF bandwidth as a multiple of the mean pairwise distance")
      ->check(CLI::PositiveNumber)
      ->excludes(sigma);
  app.add_option("--max-backtracks", s.max_backtracks, "Retries of a step that raises the objective")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--seed", s.seed, "Random seed");
}

KernelSpec make_kernel(const std::string& kind, const SolverArgs& s, double mean_distance) {
  if (kind == "poly") return KernelSpec::polynomial(s.c, s.q);
  return KernelSpec::rbf(s.sigma ? *s.sigma : s.sigma_mult * mean_distance);
}

struct CompleteArgs {
  std::string data;
  std::string mask;
  std::string truth;
  std::string out = ".";
  std::string method = "kfmc-rbf";
  SolverArgs solver;
  int t_max = 500;
  bool grid = false;
  std::string save_model;
  Index rank = 10;
  std::string ranks = "5,10,19,30";
  double lambda = 0.01;
  int lrf_iters = 100;
};

void setup_complete(CLI::App& app, CompleteArgs& a) {
  app.add_option("--data", a.data, "Data CSV (NaN or empty = missing)")->required();
  app.add_option("--mask", a.mask, "0/1 mask CSV");
  app.add_option("--truth", a.truth, "Ground-truth CSV");
  app.add_option("--out", a.out, "Output directory");
  app.add_option("--method", a.method, "Solver")
      ->check(CLI::IsMember({"kfmc-poly", "kfmc-rbf", "lrf"}));
  add_solver_options(app, a.solver);
  app.add_option("--max-iter", a.t_max, "Maximum outer iterations")->check(CLI::NonNegativeNumber);
  app.add_flag("--grid", a.grid, "Search the standard hyperparameter grid (needs truth)");
  app.add_option("--save-model", a.save_model, "Write the learned dictionary to this checkpoint");
  app.add_option("--rank", a.rank, "LRF rank")->check(CLI::PositiveNumber);
  app.add_option("--ranks", a.ranks, "LRF ranks searched by --grid");
  app.add_option("--lambda", a.lambda, "LRF ridge")->check(CLI::NonNegativeNumber);
  app.add_option("--lrf-iters", a.lrf_iters, "LRF alternating sweeps")->check(CLI::NonNegativeNumber);
}

struct KfmcCandidate {
  KernelSpec spec;
  OfflineHyperparams hp;
  double sigma_mult = 0.0;
};

std::vector<KfmcCandidate> kfmc_grid(const CompleteArgs& a, Index m, double dbar) {
  std::vector<KfmcCandidate> out;
  const double r_factors[] = {0.5, 1.0, 2.0};
  auto base = [&](double factor) {
    OfflineHyperparams hp;
    hp.r = resolve_r(0, factor, m);
    hp.tau = a.solver.tau;
    hp.eta = a.solver.eta;
    hp.t_max = a.t_max;
    hp.tol = a.solver.tol;
    hp.seed = a.solver.seed;
    hp.max_backtracks = a.solver.max_backtracks;
    return hp;
  };
  if (a.method == "kfmc-poly") {
    for (double factor : r_factors)
      for (double alpha : {0.01, 0.1})
        for (double beta : {0.01, 0.1}) {
          KfmcCandidate c{KernelSpec::polynomial(a.solver.c, a.solver.q), base(factor), 0.0};
          c.hp.alpha = alpha;
          c.hp.beta = beta;
          out.push_back(c);
        }
  } else {
    for (double factor : r_factors)
      for (double mult : {0.5, 1.0, 3.0})
        for (double beta : {0.001, 0.0001}) {
          KfmcCandidate c{KernelSpec::rbf(mult * dbar), base(factor), mult};
          c.hp.alpha = a.solver.alpha;
          c.hp.beta = beta;
          out.push_back(c);
        }
  }
  return out;
}

int cmd_complete(const CompleteArgs& a) {
  const auto start = Clock::now();
  const Inputs in = load_inputs(a.data, a.mask, a.truth);
  if (a.grid && !in.truth) throw ArgumentError("--grid needs ground truth (--truth or complete data)");
  if (in.mask.count() == 0) throw ArgumentError("no observed entries");
  const fs::path dir = prepare_out_dir(a.out);
  const Index m = in.data.rows();
  const bool complete_data = in.mask.count() == in.data.size();

  json report;
  report["command"] = "complete";
  report["method"] = a.method;
  report["shape"] = {m, in.data.cols()};
  report["observed_fraction"] = in.mask.observed_fraction();
  const MaskedMatrix mm = impute_init(in.data, in.mask);

  if (a.method == "lrf") {
    if (!a.save_model.empty()) throw ArgumentError("--save-model is only available for KFMC");
    std::vector<Index> ranks;
    if (a.grid) {
      for (double r : parse_list(a.ranks)) {
        const auto rank = static_cast<Index>(std::llround(r));
        if (rank >= 1 && rank <= std::min(m, in.data.cols())) ranks.push_back(rank);
      }
      if (ranks.empty()) throw ArgumentError("no usable rank in --ranks");
    } else {
      ranks.push_back(a.rank);
    }
    std::optional<LrfResult> best;
    Index best_rank = 0;
    double best_re = std::numeric_limits<double>::infinity();
    json grid = json::array();
    for (Index rank : ranks) {
      LrfResult res = lrf_complete(mm, rank, a.lambda, a.lrf_iters);
      const double re = in.truth ? relative_error(res.X, *in.truth) : 0.0;
      if (a.grid) grid.push_back({{"rank", rank}, {"relative_error", re}});
      if (!best || re < best_re) {
        best_re = re;
        best_rank = rank;
        best = std::move(res);
      }
    }
    report["hyperparameters"] = {{"rank", best_rank}, {"lambda", a.lambda}, {"iters", a.lrf_iters}};
    if (a.grid) report["grid"] = grid;
    report["iterations"] = a.lrf_iters;
    report["objective_trace"] = best->objective_trace;
    add_error_metrics(report, best->X, in);
    write_csv((dir / "completed.csv").string(), best->X);
    write_objective_trace(dir / "trace.csv", "half_sweep", best->objective_trace);
    report["wall_time_s"] = seconds_since(start);
    write_json(dir / "report.json", report);
    return kExitOk;
  }

  const std::string kind = a.method == "kfmc-poly" ? "poly" : "rbf";
  const double dbar = kind == "rbf" ? imputed_pair_distance(in, a.solver.seed) : 0.0;
  std::vector<KfmcCandidate> candidates;
  if (a.grid) {
    candidates = kfmc_grid(a, m, dbar);
  } else {
    KfmcCandidate c{make_kernel(kind, a.solver, dbar), {}, a.solver.sigma ? 0.0 : a.solver.sigma_mult};
    c.hp.r = resolve_r(a.solver.r, a.solver.r_factor, m);
    c.hp.alpha = a.solver.alpha;
    c.hp.beta = a.solver.beta ? *a.solver.beta : (kind == "poly" ? 0.01 : 0.001);
    c.hp.tau = a.solver.tau;
    c.hp.eta = a.solver.eta;
    c.hp.t_max = a.t_max;
    c.hp.tol = a.solver.tol;
    c.hp.seed = a.solver.seed;
    c.hp.max_backtracks = a.solver.max_backtracks;
    candidates.push_back(c);
  }
  if (kind == "rbf") report["mean_pair_distance"] = dbar;

  std::optional<OfflineModel> best;
  std::optional<KfmcCandidate> best_candidate;
  double best_re = std::numeric_limits<double>::infinity();
  json grid = json::array();
  for (const KfmcCandidate& cand : candidates) {
    OfflineModel model;
    try {
      if (complete_data) {
        model = train_dictionary(in.data, cand.spec, cand.hp);
      } else {
        model = fit(mm, cand.spec, cand.hp);
      }
    } catch (const FitError& e) {
      if (a.grid) {
        grid.push_back({{"kernel", kernel_json(cand.spec)},
                        {"hyperparameters", offline_hp_json(cand.hp)},
                        {"error", e.what()}});
        continue;
      }
      write_objective_trace(dir / "trace.csv", "iteration", e.partial().trace);
      report["status"] = "numerical_failure";
      report["error"] = e.what();
      report["kernel"] = kernel_json(cand.spec);
      report["hyperparameters"] = offline_hp_json(cand.hp);
      report["iterations"] = e.partial().iterations;
      report["objective_trace"] = e.partial().trace;
      report["wall_time_s"] = seconds_since(start);
      write_json(dir / "report.json", report);
      std::cerr << "kfmc: " << e.what() << '\n';
      return kExitNumerical;
    }
    const double re = in.truth ? relative_error(model.X(), *in.truth) : 0.0;
    if (a.grid) {
      json entry = {{"kernel", kernel_json(cand.spec)},
                    {"hyperparameters", offline_hp_json(cand.hp)},
                    {"relative_error", re},
                    {"iterations", model.iterations}};
      if (kind == "rbf") entry["sigma_multiplier"] = cand.sigma_mult;
      grid.push_back(entry);
    }
    if (!best || re < best_re) {
      best_re = re;
      best = std::move(model);
      best_candidate = cand;
    }
  }
  if (!best) {
    report["status"] = "numerical_failure";
    report["grid"] = grid;
    report["wall_time_s"] = seconds_since(start);
    write_json(dir / "report.json", report);
    std::cerr << "kfmc: every grid point failed\n";
    return kExitNumerical;
  }

  report["status"] = "ok";
  report["mode"] = complete_data ? "train_dictionary" : "fit";
  report["kernel"] = kernel_json(best_candidate->spec);
  if (kind == "rbf" && best_candidate->sigma_mult > 0.0)
    report["sigma_multiplier"] = best_candidate->sigma_mult;
  report["hyperparameters"] = offline_hp_json(best->hp);
  if (a.grid) report["grid"] = grid;
  report["iterations"] = best->iterations;
  report["converged"] = best->converged;
  report["objective"] = best->trace.empty() ? 0.0 : best->trace.back();
  report["objective_trace"] = best->trace;
  add_error_metrics(report, best->X(), in);

  write_csv((dir / "completed.csv").string(), best->X());
  write_objective_trace(dir / "trace.csv", "iteration", best->trace);
  if (!a.save_model.empty()) {
    const OfflineHyperparams& hp = best->hp;
    save_checkpoint(a.save_model,
                    make_checkpoint(best_candidate->spec, "offline", best->D, best->momD, hp.alpha,
                                    hp.beta, hp.tau, hp.eta, OnlineHyperparams{}.n_iter, hp.tol,
                                    hp.seed, static_cast<long>(in.data.cols()),
                                    observed_row_means(in.data, in.mask)));
    report["model"] = a.save_model;
  }
  report["wall_time_s"] = seconds_since(start);
  write_json(dir / "report.json", report);
  return kExitOk;
}

// ---------------------------------------------------------------- stream

struct StreamArgs {
  std::string data;
  std::string mask;
  std::string truth;
  std::string out = ".";
  std::string kernel = "rbf";
  SolverArgs solver;
  int passes = 1;
  int n_iter = 30;
  std::string resume;
};

void setup_stream(CLI::App& app, StreamArgs& a) {
  app.add_option("--data", a.data, "Data CSV (NaN or empty = missing)")->required();
  app.add_option("--mask", a.mask, "0/1 mask CSV");
  app.add_option("--truth", a.truth, "Ground-truth CSV");
  app.add_option("--out", a.out, "Output directory");
  app.add_option("--kernel", a.kernel, "Kernel")->check(CLI::IsMember({"poly", "rbf"}));
  add_solver_options(app, a.solver);
  app.add_option("--passes", a.passes, "Passes over the stream")->check(CLI::NonNegativeNumber);
  app.add_option("--n-iter", a.n_iter, "Inner iterations per sample")->check(CLI::PositiveNumber);
  app.add_option("--resume", a.resume, "Continue from this checkpoint");
}

void write_stream_trace(const fs::path& path, const OnlineModel& model, long first_t, Index n) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write '" + path.string() + "'");
  out << "t,pass,g_t,e_t\n";
  char buf[40];
  for (std::size_t k = 0; k < model.cost_trace.size(); ++k) {
    out << first_t + static_cast<long>(k) + 1 << ',' << static_cast<Index>(k) / n + 1 << ',';
    std::snprintf(buf, sizeof buf, "%.17g", model.cost_trace[k]);
    out << buf << ',';
    if (k < model.err_trace.size()) {
      std::snprintf(buf, sizeof buf, "%.17g", model.err_trace[k]);
      out << buf;
    }
    out << '\n';
  }
}

int cmd_stream(const StreamArgs& a, bool kernel_given) {
  const auto start = Clock::now();
  const Inputs in = load_inputs(a.data, a.mask, a.truth);
  const fs::path dir = prepare_out_dir(a.out);
  const Index m = in.data.rows();
  const Index n = in.data.cols();
  const fs::path ckpt_path = dir / "model.ckpt";

  json report;
  report["command"] = "stream";
  report["shape"] = {m, n};
  report["observed_fraction"] = in.mask.observed_fraction();

  std::optional<Checkpoint> resumed;
  KernelSpec spec;
  OnlineHyperparams hp;
  if (!a.resume.empty()) {
    resumed = load_checkpoint(a.resume);
    if (kernel_given && a.kernel != resumed->kernel.name())
      throw ArgumentError("checkpoint kernel is '" + resumed->kernel.name() + "', not '" + a.kernel + "'");
    if (resumed->m() != m)
      throw ArgumentError("checkpoint expects " + std::to_string(resumed->m()) + " rows, data has " +
                          std::to_string(m));
    spec = resumed->kernel;
    hp.r = resumed->r();
    hp.alpha = resumed->alpha;
    hp.beta = resumed->beta;
    hp.tau = resumed->tau;
    hp.eta = resumed->eta;
    hp.n_iter = resumed->n_iter;
    hp.tol = resumed->tol;
    hp.seed = resumed->seed;
    report["resumed_from"] = a.resume;
  } else {
    if (a.passes < 1) throw ArgumentError("--passes must be >= 1 without --resume");
    const double dbar = a.kernel == "rbf" ? imputed_pair_distance(in, a.solver.seed) : 0.0;
    spec = make_kernel(a.kernel, a.solver, dbar);
    if (a.kernel == "rbf") report["mean_pair_distance"] = dbar;
    hp.r = resolve_r(a.solver.r, a.solver.r_factor, m);
    hp.alpha = a.solver.alpha;
    hp.beta = a.solver.beta ? *a.solver.beta : (a.kernel == "poly" ? 0.01 : 0.001);
    hp.tau = a.solver.tau;
    hp.eta = a.solver.eta;
    hp.n_iter = a.n_iter;
    hp.tol = a.solver.tol;
    hp.seed = a.solver.seed;
  }
  hp.max_backtracks = a.solver.max_backtracks;
  report["kernel"] = kernel_json(spec);

  if (resumed && a.passes == 0) {
    // no training: complete against the stored dictionary, leave it untouched
    OseOptions options;
    options.alpha = hp.alpha;
    options.beta = hp.beta;
    options.inner = InnerOptions{hp.tau, hp.eta, hp.n_iter, hp.tol, hp.max_backtracks};
    options.fill = resumed->fill;
    OseResult res;
    try {
      res = complete_new(spec, resumed->D, in.data, in.mask, options);
    } catch (const NumericalError& e) {
      report["status"] = "numerical_failure";
      report["error"] = e.what();
      report["wall_time_s"] = seconds_since(start);
      write_json(dir / "report.json", report);
      std::cerr << "kfmc: " << e.what() << '\n';
      return kExitNumerical;
    }
    hp.n_pass = 0;
    report["status"] = "ok";
    report["hyperparameters"] = online_hp_json(hp);
    report["passes"] = 0;
    report["samples_seen"] = resumed->samples_seen;
    add_error_metrics(report, res.X, in);
    write_csv((dir / "completed.csv").string(), res.X);
    write_stream_trace(dir / "trace.csv", OnlineModel{}, resumed->samples_seen, n);
    std::error_code ec;
    if (!fs::equivalent(a.resume, ckpt_path, ec))
      fs::copy_file(a.resume, ckpt_path, fs::copy_options::overwrite_existing);
    report["wall_time_s"] = seconds_since(start);
    write_json(dir / "report.json", report);
    return kExitOk;
  }

  hp.n_pass = a.passes;
  std::optional<OnlineModel> initial;
  if (resumed) {
    OnlineModel model;
    model.hp = hp;
    model.D = resumed->D;
    model.momD = resumed->momD ? *resumed->momD : Matrix::Zero(m, resumed->r());
    model.samples_seen = resumed->samples_seen;
    initial = std::move(model);
  }
  const long first_t = resumed ? resumed->samples_seen : 0;
  StreamResult res;
  try {
    res = run_stream(in.data, in.mask, spec, hp, in.truth, initial ? &*initial : nullptr);
  } catch (const NumericalError& e) {
    report["status"] = "numerical_failure";
    report["error"] = e.what();
    report["hyperparameters"] = online_hp_json(hp);
    report["wall_time_s"] = seconds_since(start);
    write_json(dir / "report.json", report);
    std::cerr << "kfmc: " << e.what() << '\n';
    return kExitNumerical;
  }
  const OnlineModel& model = res.model;
  report["status"] = "ok";
  report["hyperparameters"] = online_hp_json(model.hp);
  report["passes"] = a.passes;
  report["iterations"] = a.passes;
  report["samples_seen"] = model.samples_seen;
  report["pass_cost"] = model.pass_cost;
  if (!model.pass_error.empty()) report["pass_error"] = model.pass_error;
  report["converged_samples_last_pass"] = model.converged_samples;
  report["exhausted_samples_last_pass"] = model.exhausted_samples;
  report["peak_buffer_elements"] = model.peak_buffer;
  add_error_metrics(report, res.X, in);

  write_csv((dir / "completed.csv").string(), res.X);
  write_stream_trace(dir / "trace.csv", model, first_t, n);
  save_checkpoint(ckpt_path.string(),
                  make_checkpoint(spec, "online", model.D, model.momD, model.hp.alpha,
                                  model.hp.beta, model.hp.tau, model.hp.eta, model.hp.n_iter,
                                  model.hp.tol, model.hp.seed, model.samples_seen,
                                  observed_row_means(in.data, in.mask)));
  report["model"] = ckpt_path.string();
  report["wall_time_s"] = seconds_since(start);
  write_json(dir / "report.json", report);
  return kExitOk;
}

// ---------------------------------------------------------------- ose

struct OseArgs {
  std::string model;
  std::string input;
  std::string mask;
  std::string truth;
  std::string out = ".";
  std::string kernel;
  std::optional<int> n_iter;
  std::optional<double> tol;
  std::optional<double> eta;
  std::optional<double> tau;
  int max_backtracks = 1;
  std::string baseline = "none";
  std::string train;
  Index rank = 10;
  double lambda = 0.01;
};

void setup_ose(CLI::App& app, OseArgs& a) {
  app.add_option("--model", a.model, "Dictionary checkpoint");
  app.add_option("--input", a.input, "New columns (NaN or empty = missing)")->required();
  app.add_option("--mask", a.mask, "0/1 mask CSV");
  app.add_option("--truth", a.truth, "Ground-truth CSV");
  app.add_option("--out", a.out, "Output directory");
  app.add_option("--kernel", a.kernel, "Expected kernel of the checkpoint")
      ->check(CLI::IsMember({"poly", "rbf"}));
  app.add_option("--n-iter", a.n_iter, "Inner iterations per sample")->check(CLI::PositiveNumber);
  app.add_option("--tol", a.tol, "Inner stopping tolerance")->check(CLI::NonNegativeNumber);
  app.add_option("--eta", a.eta, "Momentum in [0, 1)");
  app.add_option("--tau", a.tau, "Newton relaxation (> 1)");
  app.add_option("--max-backtracks", a.max_backtracks, "Retries of a step that raises the loss")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--baseline", a.baseline, "Run a baseline instead of KFMC")
      ->check(CLI::IsMember({"none", "ose-lrf"}));
  app.add_option("--train", a.train, "Complete training data for ose-lrf");
  app.add_option("--rank", a.rank, "ose-lrf rank")->check(CLI::PositiveNumber);
  app.add_option("--lambda", a.lambda, "ose-lrf ridge")->check(CLI::NonNegativeNumber);
}

int cmd_ose(const OseArgs& a) {
  const auto start = Clock::now();
  const Inputs in = load_inputs(a.input, a.mask, a.truth);
  const fs::path dir = prepare_out_dir(a.out);
  const Index m = in.data.rows();
  json report;
  report["command"] = "ose";
  report["method"] = a.baseline == "ose-lrf" ? "ose-lrf" : "ose-kfmc";
  report["shape"] = {m, in.data.cols()};
  report["observed_fraction"] = in.mask.observed_fraction();

  Matrix X;
  if (a.baseline == "ose-lrf") {
    if (a.train.empty()) throw ArgumentError("--baseline ose-lrf needs --train");
    const Matrix train = read_csv(a.train);
    if (!train.allFinite()) throw ArgumentError("training data must be fully observed");
    if (train.rows() != m) throw ArgumentError("training data and input have different row counts");
    const Matrix U = lrf_basis(train, a.rank);
    X = in.data;
    for (Index j = 0; j < X.cols(); ++j) {
      const IndexList observed = in.mask.observed_rows(j);
      X.col(j) = ose_lrf(U, in.data.col(j).unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; }),
                         observed, a.lambda);
    }
    report["hyperparameters"] = {{"rank", a.rank}, {"lambda", a.lambda}};
  } else {
    if (a.model.empty()) throw ArgumentError("--model is required");
    const Checkpoint ckpt = load_checkpoint(a.model);
    if (!a.kernel.empty() && a.kernel != ckpt.kernel.name())
      throw ArgumentError("checkpoint kernel is '" + ckpt.kernel.name() + "', not '" + a.kernel + "'");
    if (ckpt.m() != m)
      throw ArgumentError("checkpoint expects " + std::to_string(ckpt.m()) + " rows, input has " +
                          std::to_string(m));
    OseOptions options;
    options.alpha = ckpt.alpha;
    options.beta = ckpt.beta;
    options.inner = InnerOptions{a.tau.value_or(ckpt.tau), a.eta.value_or(ckpt.eta),
                                 a.n_iter.value_or(ckpt.n_iter), a.tol.value_or(ckpt.tol),
                                 a.max_backtracks};
    options.fill = ckpt.fill;
    OseResult res;
    try {
      res = complete_new(ckpt.kernel, ckpt.D, in.data, in.mask, options);
    } catch (const NumericalError& e) {
      report["status"] = "numerical_failure";
      report["error"] = e.what();
      report["wall_time_s"] = seconds_since(start);
      write_json(dir / "report.json", report);
      std::cerr << "kfmc: " << e.what() << '\n';
      return kExitNumerical;
    }
    X = std::move(res.X);
    long converged = 0;
    long exhausted = 0;
    long inner = 0;
    for (const SampleResult& s : res.samples) {
      inner += s.iterations;
      converged += s.converged;
      exhausted += s.exhausted;
    }
    report["kernel"] = kernel_json(ckpt.kernel);
    report["hyperparameters"] = {{"r", ckpt.r()},
                                 {"alpha", options.alpha},
                                 {"beta", options.beta},
                                 {"tau", options.inner.tau},
                                 {"eta", options.inner.eta},
                                 {"n_iter", options.inner.n_iter},
                                 {"tol", options.inner.tol},
                                 {"max_backtracks", options.inner.max_backtracks}};
    report["model"] = a.model;
    report["converged_samples"] = converged;
    report["exhausted_samples"] = exhausted;
    report["iterations"] = inner;
  }
  report["status"] = "ok";
  if (!report.contains("iterations")) report["iterations"] = 0;
  add_error_metrics(report, X, in);
  write_csv((dir / "completed.csv").string(), X);
  report["wall_time_s"] = seconds_since(start);
  write_json(dir / "report.json", report);
  return kExitOk;
}

// ---------------------------------------------------------------- bounds

struct BoundsArgs {
  ProblemShape shape{20, 300, 2, 2, 2, 3};
  std::optional<double> rho;
  std::optional<double> c_bound;
};

void setup_bounds(CLI::App& app, BoundsArgs& a) {
  app.add_option("--m", a.shape.m, "Ambient dimension")->check(CLI::PositiveNumber);
  app.add_option("--n", a.shape.n, "Number of columns")->check(CLI::PositiveNumber);
  app.add_option("--d", a.shape.d, "Latent dimension")->check(CLI::PositiveNumber);
  app.add_option("--p", a.shape.p, "Polynomial order of the data map")->check(CLI::PositiveNumber);
  app.add_option("--q", a.shape.q, "Polynomial kernel degree")->check(CLI::PositiveNumber);
  app.add_option("--u", a.shape.u, "Number of subspaces")->check(CLI::PositiveNumber);
  app.add_option("--rho", a.rho, "Sampling rate for the per-column dof count")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--c-bound", a.c_bound, "Bound c in (0,1) for the RBF truncation error");
}

json bound_json(const RateBound& b) {
  return {{"rho", b.value}, {"unclamped", b.unclamped}, {"vacuous", b.vacuous}};
}

int cmd_bounds(const BoundsArgs& a) {
  const ProblemShape& s = a.shape;
  const std::uint64_t rx = expected_rank_X(s);
  const std::uint64_t rphi = expected_rank_phi(s);
  const std::uint64_t mbar = feature_dim(s);
  const RateBound kfmc = rho_kfmc(s);
  const RateBound lrmc = rho_lrmc(s);
  json out;
  out["shape"] = {{"m", s.m}, {"n", s.n}, {"d", s.d}, {"p", s.p}, {"q", s.q}, {"u", s.u}};
  out["rho_kfmc"] = kfmc.value;
  out["rho_lrmc"] = lrmc.value;
  out["kfmc"] = bound_json(kfmc);
  out["lrmc"] = bound_json(lrmc);
  out["expected_rank_X"] = rx;
  out["expected_rank_phi"] = rphi;
  out["feature_dim"] = mbar;
  out["rank_ratio_X"] = static_cast<double>(rx) / static_cast<double>(std::min(s.m, s.n));
  out["rank_ratio_phi"] = static_cast<double>(rphi) / static_cast<double>(std::min(mbar, s.n));
  if (a.rho) out["dof_observed_per_column"] = dof_observed_per_column(*a.rho, static_cast<double>(s.m), s.q);
  if (a.c_bound) out["rbf_poly_truncation_error"] = rbf_poly_truncation_error(*a.c_bound, s.q);
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Kernelized factorization matrix completion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "kfmc 1.0");

  GenArgs gen;
  CompleteArgs complete;
  StreamArgs stream;
  OseArgs ose;
  BoundsArgs bounds;
  auto* gen_cmd = app.add_subcommand("gen", "Generate synthetic data and a mask");
  setup_gen(*gen_cmd, gen);
  auto* complete_cmd = app.add_subcommand("complete", "Batch completion");
  setup_complete(*complete_cmd, complete);
  auto* stream_cmd = app.add_subcommand("stream", "Online completion over the columns");
  setup_stream(*stream_cmd, stream);
  auto* ose_cmd = app.add_subcommand("ose", "Complete new columns against a stored dictionary");
  setup_ose(*ose_cmd, ose);
  auto* bounds_cmd = app.add_subcommand("bounds", "Rank predictions and sampling-rate bounds");
  setup_bounds(*bounds_cmd, bounds);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*complete_cmd) return cmd_complete(complete);
    if (*stream_cmd) return cmd_stream(stream, stream_cmd->count("--kernel") > 0);
    if (*ose_cmd) return cmd_ose(ose);
    if (*bounds_cmd) return cmd_bounds(bounds);
  } catch (const ArgumentError& e) {
    std::cerr << "kfmc: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::overflow_error& e) {
    std::cerr << "kfmc: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "kfmc: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "kfmc: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "kfmc: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}

}  // namespace kfmc::cli
