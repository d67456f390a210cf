#include "difflik/benchmark.hpp"

#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace difflik {

namespace {

const std::vector<Bound> kBounds{{}, {}, {0.0}, {}, {0.0}};

Path stationary_path(const OUSpec& spec, double delta, int n, RngStream& rng) {
  const Eigen::MatrixXd L = stationary_cov(spec).llt().matrixL();
  Eigen::VectorXd z(spec.dim());
  for (auto& v : z) v = rng.normal();
  const Eigen::VectorXd x0 = spec.alpha + L * z;
  return ou_path(spec, std::vector<double>(x0.data(), x0.data() + x0.size()), delta, n, rng);
}

std::string sanitized(std::string s) {
  for (char& ch : s)
    if (ch == '"' || ch == '\n') ch = '\'';
  return s;
}

std::vector<double> minus(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

Replication replicate(const BenchmarkConfig& c, const std::shared_ptr<const DiffusionModel>& model, int r) {
  Replication out;
  out.index = r;
  try {
    const OUSpec spec = ou_from_theta(c.theta_true);
    RngStream rng(c.seed, static_cast<std::uint64_t>(r));
    const Path y = stationary_path(spec, c.delta, c.n, rng);
    std::vector<double> t0(c.theta_true);
    for (double& v : t0) v *= c.start_scale;

    // the Jacobian of x = exp(y) carries no parameters, so the table 2 exact
    // MLE is the OU MLE on the log data
    const Objective exact = [&](std::span<const double> th) { return ou_exact_path_loglik(ou_from_theta(th), y, c.delta); };
    const FitResult mle = maximize(exact, t0, kBounds, c.options);
    out.mle = mle.theta;
    out.converged = mle.converged;

    Path data = y;
    if (c.table == 2)
      for (auto& row : data)
        for (double& v : row) v = std::exp(v);

    LikelihoodEvaluator red(model, c.K, PathKind::Reducible, c.theta_true);
    const FitResult fr = maximize([&](std::span<const double> th) { return red.path_loglik(data, c.delta, th); }, t0,
                                  kBounds, c.options);
    out.reducible = fr.theta;
    out.converged = out.converged && fr.converged;

    if (c.table == 2) {
      LikelihoodEvaluator irr(model, c.K, PathKind::Irreducible);
      const FitResult fi = maximize([&](std::span<const double> th) { return irr.path_loglik(data, c.delta, th); },
                                    t0, kBounds, c.options);
      out.irreducible = fi.theta;
      out.converged = out.converged && fi.converged;
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

}  // namespace

ColumnSummary summarize(const std::vector<std::vector<double>>& rows) {
  ColumnSummary s;
  s.count = static_cast<int>(rows.size());
  if (rows.empty()) return s;
  const std::size_t p = rows[0].size();
  s.mean.assign(p, 0.0);
  s.stdev.assign(p, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < p; ++i) s.mean[i] += r[i];
  for (double& m : s.mean) m /= s.count;
  if (s.count > 1) {
    for (const auto& r : rows)
      for (std::size_t i = 0; i < p; ++i) s.stdev[i] += (r[i] - s.mean[i]) * (r[i] - s.mean[i]);
    for (double& v : s.stdev) v = std::sqrt(v / (s.count - 1));
  }
  return s;
}

BenchmarkResult run_ou_benchmark(const BenchmarkConfig& config, std::shared_ptr<const DiffusionModel> model,
                                 const std::function<void(const Replication&)>& progress) {
  if (config.table != 1 && config.table != 2) throw Error("benchmark table must be 1 or 2");
  if (config.reps < 1 || config.n < 1 || !(config.delta > 0)) throw Error("benchmark: reps, n and delta must be positive");
  if (config.theta_true.size() != 5 || model->num_params() != 5)
    throw Error("benchmark: expects parameters (eta1, eta2, k11, k12, k22)");

  BenchmarkResult res;
  res.config = config;
  res.names = model->symbols.params;
  res.reps.resize(config.reps);

  std::atomic<int> next{0};
  std::mutex report;
  auto worker = [&] {
    for (int r; (r = next++) < config.reps;) {
      res.reps[r] = replicate(config, model, r);
      if (progress) {
        std::lock_guard lock(report);
        progress(res.reps[r]);
      }
    }
  };
  const int w = std::max(1, std::min(config.workers, config.reps));
  if (w == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < w; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<std::vector<double>> a, b, c;
  for (const auto& r : res.reps) {
    if (!r.ok) {
      ++res.failed;
      continue;
    }
    a.push_back(minus(r.mle, config.theta_true));
    b.push_back(minus(r.mle, r.reducible));
    if (config.table == 2) c.push_back(minus(r.mle, r.irreducible));
  }
  res.mle_truth = summarize(a);
  res.mle_reducible = summarize(b);
  if (config.table == 2) res.mle_irreducible = summarize(c);
  return res;
}

void write_benchmark_summary(std::ostream& out, const BenchmarkResult& r) {
  const auto& c = r.config;
  out << "# table=" << c.table << " reps=" << c.reps << " n=" << c.n << " delta=" << std::setprecision(17) << c.delta
      << " K=" << c.K << " seed=" << c.seed << " theta0=" << c.start_scale << "*theta_true"
      << " failed=" << r.failed << "\n";
  out << "parameter,truth,mle_truth_mean,mle_truth_stdev,mle_reducible_mean,mle_reducible_stdev";
  if (c.table == 2) out << ",mle_irreducible_mean,mle_irreducible_stdev";
  out << "\n";
  out << std::setprecision(10);
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    auto col = [&](const ColumnSummary& s) {
      if (s.count == 0) return std::string(",,");
      std::ostringstream o;
      o << std::setprecision(10) << "," << s.mean[i] << "," << s.stdev[i];
      return o.str();
    };
    out << r.names[i] << "," << c.theta_true[i] << col(r.mle_truth) << col(r.mle_reducible);
    if (c.table == 2) out << col(r.mle_irreducible);
    out << "\n";
  }
}

void write_benchmark_replications(std::ostream& out, const BenchmarkResult& r) {
  out << "rep,parameter,mle,reducible" << (r.config.table == 2 ? ",irreducible" : "") << ",converged,error\n";
  out << std::setprecision(17);
  for (const auto& rep : r.reps) {
    if (!rep.ok) {
      out << rep.index << ",,,,," << (r.config.table == 2 ? "," : "") << "\"" << sanitized(rep.error) << "\"\n";
      continue;
    }
    for (std::size_t i = 0; i < r.names.size(); ++i) {
      out << rep.index << "," << r.names[i] << "," << rep.mle[i] << "," << rep.reducible[i];
      if (r.config.table == 2) out << "," << rep.irreducible[i];
      out << "," << (rep.converged ? 1 : 0) << ",\n";
    }
  }
}

}  // namespace difflik
