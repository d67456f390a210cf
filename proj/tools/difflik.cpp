// difflik command line: check | expand | fit | simulate | benchmark-ou | residual
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "difflik/benchmark.hpp"
#include "difflik/expansion_json.hpp"

using namespace difflik;
using nlohmann::json;

namespace {

struct RunConfig {
  std::string model;
  int K = 2;
  double delta = 1.0 / 52;
  std::string data;
  std::string theta0, theta_true, x0, x, bounds;
  std::uint64_t seed = 1;
  int reps = 100;
  int n = 500;
  int table = 1;
  int workers = 1;
  int substeps = 20;
  std::string method = "euler";
  std::string mode = "auto";
  std::string out;
  std::string format;
  std::string replications;
  std::vector<double> deltas{1e-1, 1e-2, 1e-3};
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

double number(const std::string& s) {
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error("not a number: '" + s + "'");
  }
  if (used != s.size()) throw Error("not a number: '" + s + "'");
  return v;
}

// "k11=5,k22=10" or "0,0,5,1,10" (declared order)
std::vector<double> parse_theta(const std::string& s, const DiffusionModel& m, const char* flag) {
  if (m.num_params() == 0 && s.empty()) return {};
  if (s.empty()) throw Error(std::string(flag) + " is required");
  const auto items = split(s, ',');
  if (s.find('=') == std::string::npos) {
    if (static_cast<int>(items.size()) != m.num_params())
      throw Error(std::string(flag) + ": expected " + std::to_string(m.num_params()) + " values");
    std::vector<double> v;
    for (const auto& i : items) v.push_back(number(i));
    return v;
  }
  std::map<std::string, double> named;
  for (const auto& i : items) {
    const auto eq = i.find('=');
    if (eq == std::string::npos) throw Error(std::string(flag) + ": expected name=value, got '" + i + "'");
    named[split(i.substr(0, eq), ',').at(0)] = number(i.substr(eq + 1));
  }
  return m.theta_from(named);
}

std::vector<double> parse_point(const std::string& s, int dim, const char* flag) {
  if (s.empty()) throw Error(std::string(flag) + " is required");
  std::vector<double> v;
  for (const auto& i : split(s, ',')) v.push_back(number(i));
  if (static_cast<int>(v.size()) != dim) throw Error(std::string(flag) + ": expected " + std::to_string(dim) + " values");
  return v;
}

// "k11>0,k22>0,r<1"
std::vector<Bound> parse_bounds(const std::string& s, const DiffusionModel& m) {
  std::vector<Bound> b(m.num_params());
  for (const auto& item : split(s, ',')) {
    const auto op = item.find_first_of("<>");
    if (op == std::string::npos) throw Error("--bounds: expected name>value or name<value, got '" + item + "'");
    const std::string name = split(item.substr(0, op), ' ').at(0);
    const auto idx = m.symbols.param_index(name);
    if (!idx) throw Error("--bounds: unknown parameter '" + name + "'");
    const double v = number(item.substr(op + 1));
    (item[op] == '>' ? b[*idx].lo : b[*idx].hi) = v;
  }
  return b;
}

std::shared_ptr<const DiffusionModel> load(const RunConfig& c) {
  if (c.model.empty()) throw Error("--model is required");
  return std::make_shared<const DiffusionModel>(load_model(c.model));
}

// writes to --out or stdout
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw Error("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string source_name(ReductionSource s) {
  switch (s) {
    case ReductionSource::UserSupplied: return "user-supplied map";
    case ReductionSource::ConstantSigma: return "constant sigma";
    case ReductionSource::Lamperti: return "Lamperti transform";
  }
  return "?";
}

int cmd_check(const RunConfig& c) {
  auto m = load(c);
  const std::vector<double> th =
      c.theta0.empty() ? std::vector<double>(m->num_params(), 1.0) : parse_theta(c.theta0, *m, "--theta0");
  const ValidationReport v = validate_model(*m, th);
  const ReducibilityReport r = check_reducibility(*m, th);
  std::string classification = "irreducible";
  std::string why;
  if (r.reducible) {
    try {
      const ReducedModel red = derive_reduced_model(*m, th);
      classification = "reducible (" + source_name(red.source) + "), gamma available";
    } catch (const Error& e) {
      classification = "reducible, no gamma constructed";
      why = e.what();
    }
  }
  Output out(c.out);
  if (c.format == "json") {
    json j;
    j["classification"] = classification;
    j["reducibility_residual"] = r.max_residual;
    j["probes"] = r.probes;
    j["validation_passed"] = v.passed();
    j["issues"] = json::array();
    for (const auto& i : v.issues)
      j["issues"].push_back({{"check", i.check}, {"detail", i.detail}, {"hard", i.hard}, {"point", i.point}});
    j["unchecked"] = v.unchecked;
    if (!why.empty()) j["note"] = why;
    out.stream() << j.dump(2) << "\n";
  } else {
    auto& o = out.stream();
    o << classification << "\n";
    o << "reducibility residual: " << std::setprecision(6) << r.max_residual << " over " << r.probes << " probes\n";
    if (!why.empty()) o << "note: " << why << "\n";
    o << "validation: " << (v.passed() ? "passed" : "FAILED") << " (" << v.probes << " probes)\n";
    for (const auto& i : v.issues) o << "  " << (i.hard ? "error" : "warning") << " [" << i.check << "] " << i.detail << "\n";
    for (const auto& u : v.unchecked) o << "  unchecked: " << u << "\n";
  }
  return v.passed() ? 0 : 2;
}

int cmd_expand(const RunConfig& c) {
  auto m = load(c);
  const PathKind kind = parse_path_kind(c.mode);
  json j;
  bool reducible = false;
  if (kind != PathKind::Irreducible) {
    const std::vector<double> th =
        c.theta0.empty() ? std::vector<double>(m->num_params(), 1.0) : parse_theta(c.theta0, *m, "--theta0");
    const bool ok = check_reducibility(*m, th).reducible;
    if (!ok && kind == PathKind::Reducible) throw Error("model is not reducible");
    if (ok) {
      auto red = std::make_shared<const ReducedModel>(derive_reduced_model(*m, th));
      reducible = true;
      ReducibleEvaluator ev(red, c.K);
      if (ev.polynomial_drift()) {
        j = to_json(build_reducible_symbolic(*red, c.K), red->symbols);
      } else {
        const auto x0 = parse_point(c.x0, m->dim(), "--x0 (non-polynomial reduced drift)");
        const auto tv = parse_theta(c.theta0, *m, "--theta0");
        j = to_json(build_reducible_numeric(*red, c.K, ev.to_y(x0, tv), tv), red->symbols);
      }
    }
  }
  if (!reducible) {
    const auto x0 = parse_point(c.x0, m->dim(), "--x0");
    const auto th = parse_theta(c.theta0, *m, "--theta0");
    IrreducibleBuilder b(m, c.K);
    j = to_json(b.build(x0, th), m->symbols);
  }
  Output out(c.out);
  out.stream() << j.dump(2) << "\n";
  return 0;
}

Path read_data(const RunConfig& c, const DiffusionModel& m) {
  if (c.data.empty()) throw Error("--data is required");
  std::ifstream in(c.data);
  if (!in) throw Error("cannot read '" + c.data + "'");
  return read_csv(in, m.symbols.states);
}

int cmd_fit(const RunConfig& c) {
  auto m = load(c);
  const Path data = read_data(c, *m);
  const auto t0 = parse_theta(c.theta0, *m, "--theta0");
  const auto bounds = parse_bounds(c.bounds, *m);
  LikelihoodEvaluator ev(m, c.K, parse_path_kind(c.mode), t0);
  const FitResult r = fit(ev, data, c.delta, t0, bounds);
  Output out(c.out);
  auto& o = out.stream();
  if (c.format == "csv") {
    o << "parameter,estimate,stderr\n" << std::setprecision(17);
    for (std::size_t i = 0; i < r.theta.size(); ++i) {
      o << r.names[i] << "," << r.theta[i] << ",";
      if (r.std_errors) o << (*r.std_errors)[i];
      o << "\n";
    }
    return r.converged ? 0 : 3;
  }
  json j;
  j["path"] = to_string(ev.kind());
  j["K"] = c.K;
  j["delta"] = c.delta;
  j["observations"] = data.size();
  j["loglik"] = r.loglik;
  j["converged"] = r.converged;
  j["message"] = r.message;
  j["iterations"] = r.iterations;
  j["evaluations"] = r.evaluations;
  for (std::size_t i = 0; i < r.theta.size(); ++i) {
    j["estimates"][r.names[i]] = r.theta[i];
    if (r.std_errors) j["std_errors"][r.names[i]] = (*r.std_errors)[i];
  }
  if (!r.std_errors) j["std_errors"] = nullptr;
  o << j.dump(2) << "\n";
  return r.converged ? 0 : 3;
}

int cmd_simulate(const RunConfig& c) {
  auto m = load(c);
  const auto th = parse_theta(c.theta_true, *m, "--theta-true");
  RngStream rng(c.seed, 0);
  Path p;
  if (c.method == "euler") {
    p = euler_path(*m, th, parse_point(c.x0, m->dim(), "--x0"), c.delta, c.substeps, c.n, rng);
  } else if (c.method == "ou" || c.method == "exp-ou") {
    if (th.size() != 5 || m->dim() != 2) throw Error("exact OU sampling expects (eta1, eta2, k11, k12, k22) and dim 2");
    const OUSpec spec = ou_from_theta(th);
    const auto x0 = parse_point(c.x0, 2, "--x0");
    p = c.method == "ou" ? ou_path(spec, x0, c.delta, c.n, rng) : exp_ou_path(spec, x0, c.delta, c.n, rng);
  } else {
    throw Error("--method must be euler, ou or exp-ou");
  }
  Output out(c.out);
  write_csv(out.stream(), m->symbols.states, p);
  return 0;
}

int cmd_benchmark(const RunConfig& c) {
  auto m = load(c);
  BenchmarkConfig b;
  b.table = c.table;
  b.reps = c.reps;
  b.n = c.n;
  b.delta = c.delta;
  b.seed = c.seed;
  b.K = c.K;
  b.workers = c.workers;
  if (!c.theta_true.empty()) b.theta_true = parse_theta(c.theta_true, *m, "--theta-true");
  const BenchmarkResult r = run_ou_benchmark(b, m, [](const Replication& rep) {
    std::cerr << "replication " << rep.index << (rep.ok ? "" : " failed: " + rep.error) << "\n";
  });
  Output out(c.out);
  write_benchmark_summary(out.stream(), r);
  if (!c.replications.empty()) {
    Output reps(c.replications);
    write_benchmark_replications(reps.stream(), r);
  }
  return r.failed == 0 ? 0 : 4;
}

int cmd_residual(const RunConfig& c) {
  auto m = load(c);
  const auto th = parse_theta(c.theta0, *m, "--theta0");
  const auto x0 = parse_point(c.x0, m->dim(), "--x0");
  const auto x = parse_point(c.x, m->dim(), "--x");
  LikelihoodEvaluator ev(m, c.K, PathKind::Irreducible);
  Output out(c.out);
  auto& o = out.stream();
  o << "delta,residual\n" << std::setprecision(10);
  std::vector<double> lx, ly;
  for (double d : c.deltas) {
    const double r = ev.pde_residual(x, x0, d, th);
    o << d << "," << r << "\n";
    if (r != 0.0) lx.push_back(std::log(d)), ly.push_back(std::log(std::abs(r)));
  }
  if (lx.size() >= 2) {
    const double n = static_cast<double>(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) sx += lx[i], sy += ly[i], sxx += lx[i] * lx[i], sxy += lx[i] * ly[i];
    o << "# slope " << (n * sxy - sx * sy) / (n * sxx - sx * sx) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-form likelihood expansions for multivariate diffusions"};
  app.require_subcommand(1);
  RunConfig c;

  auto model = [&](CLI::App* s) { s->add_option("--model", c.model, "model file")->required()->check(CLI::ExistingFile); };
  auto order = [&](CLI::App* s) { s->add_option("--K", c.K, "expansion order")->capture_default_str(); };
  auto mode = [&](CLI::App* s) {
    s->add_option("--mode", c.mode, "reducible | irreducible | auto")
        ->check(CLI::IsMember({"reducible", "irreducible", "auto"}))
        ->capture_default_str();
  };
  auto output = [&](CLI::App* s) { s->add_option("--out", c.out, "output file (default stdout)"); };

  auto* check = app.add_subcommand("check", "validate a model and classify reducibility");
  model(check);
  check->add_option("--theta0", c.theta0, "parameter values for probing (default all ones)");
  check->add_option("--format", c.format, "text | json")->check(CLI::IsMember({"text", "json"}));
  output(check);

  auto* expand = app.add_subcommand("expand", "write expansion coefficients as JSON");
  model(expand);
  order(expand);
  mode(expand);
  expand->add_option("--x0", c.x0, "expansion center, comma separated");
  expand->add_option("--theta0", c.theta0, "parameters: name=value,... or values in declared order");
  expand->add_option("--format", c.format, "json")->check(CLI::IsMember({"json"}));
  output(expand);

  auto* fitc = app.add_subcommand("fit", "maximum likelihood on a CSV path");
  model(fitc);
  order(fitc);
  mode(fitc);
  fitc->add_option("--data", c.data, "CSV with a header of state names")->required();
  fitc->add_option("--delta", c.delta, "sampling interval")->required();
  fitc->add_option("--theta0", c.theta0, "starting values")->required();
  fitc->add_option("--bounds", c.bounds, "open bounds, e.g. k11>0,k22>0");
  fitc->add_option("--format", c.format, "json | csv")->check(CLI::IsMember({"json", "csv"}));
  output(fitc);

  auto* sim = app.add_subcommand("simulate", "simulate a path to CSV");
  model(sim);
  sim->add_option("--theta-true", c.theta_true, "parameters")->required();
  sim->add_option("--x0", c.x0, "starting point")->required();
  sim->add_option("--delta", c.delta, "sampling interval")->capture_default_str();
  sim->add_option("--n", c.n, "number of steps")->capture_default_str();
  sim->add_option("--seed", c.seed, "seed")->capture_default_str();
  sim->add_option("--method", c.method, "euler | ou | exp-ou")->capture_default_str();
  sim->add_option("--substeps", c.substeps, "Euler substeps per interval")->capture_default_str();
  sim->add_option("--format", c.format, "csv")->check(CLI::IsMember({"csv"}));
  output(sim);

  auto* bench = app.add_subcommand("benchmark-ou", "Monte Carlo study of exact vs expansion MLE");
  model(bench);
  order(bench);
  bench->add_option("--table", c.table, "1: OU model, 2: exponential OU")->check(CLI::IsMember({1, 2}))->capture_default_str();
  bench->add_option("--reps", c.reps, "replications")->capture_default_str();
  bench->add_option("--n", c.n, "observations per replication")->capture_default_str();
  bench->add_option("--delta", c.delta, "sampling interval")->capture_default_str();
  bench->add_option("--seed", c.seed, "seed")->capture_default_str();
  bench->add_option("--theta-true", c.theta_true, "true parameters (default 0,0,5,1,10)");
  bench->add_option("--workers", c.workers, "threads")->capture_default_str();
  bench->add_option("--replications", c.replications, "per-replication CSV");
  bench->add_option("--format", c.format, "csv")->check(CLI::IsMember({"csv"}));
  output(bench);

  auto* res = app.add_subcommand("residual", "forward-equation residual of the irreducible expansion");
  model(res);
  order(res);
  res->add_option("--theta0", c.theta0, "parameters")->required();
  res->add_option("--x0", c.x0, "conditioning point")->required();
  res->add_option("--x", c.x, "evaluation point")->required();
  res->add_option("--delta", c.deltas, "time steps")->capture_default_str();
  output(res);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*check) return cmd_check(c);
    if (*expand) return cmd_expand(c);
    if (*fitc) return cmd_fit(c);
    if (*sim) return cmd_simulate(c);
    if (*bench) return cmd_benchmark(c);
    if (*res) return cmd_residual(c);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 1;
}
