// Monte Carlo comparison of exact and expansion-based MLE on the bivariate
// OU model (table 1) and its exponential transform (table 2).
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "difflik/estimate.hpp"

namespace difflik {

struct BenchmarkConfig {
  int table = 1;  // 1: OU, 2: exp-OU
  int reps = 100;
  int n = 500;
  double delta = 1.0 / 52;
  std::vector<double> theta_true{0, 0, 5, 1, 10};
  double start_scale = 1.1;  // theta0 = start_scale * theta_true
  std::uint64_t seed = 1;
  int K = 2;
  int workers = 1;
  MaximizeOptions options;
};

struct Replication {
  int index = 0;
  bool ok = false;
  std::string error;
  std::vector<double> mle, reducible, irreducible;  // irreducible: table 2 only
  bool converged = false;                           // all fits
};

struct ColumnSummary {
  std::vector<double> mean, stdev;
  int count = 0;
};

struct BenchmarkResult {
  BenchmarkConfig config;
  std::vector<std::string> names;
  std::vector<Replication> reps;
  int failed = 0;
  ColumnSummary mle_truth, mle_reducible, mle_irreducible;
};

// `model` is the OU model (table 1) or the exp-OU model (table 2), with
// parameters (eta1, eta2, k11, k12, k22).  Replication r draws from stream r;
// the result does not depend on `workers`.
BenchmarkResult run_ou_benchmark(const BenchmarkConfig& config, std::shared_ptr<const DiffusionModel> model,
                                 const std::function<void(const Replication&)>& progress = {});

ColumnSummary summarize(const std::vector<std::vector<double>>& rows);

// parameter,truth,<column>_mean,<column>_stdev,...
void write_benchmark_summary(std::ostream& out, const BenchmarkResult& r);
// one row per replication and parameter
void write_benchmark_replications(std::ostream& out, const BenchmarkResult& r);

}  // namespace difflik
