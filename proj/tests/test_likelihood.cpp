#include <cmath>
#include <numbers>

#include "doctest.h"
#include "difflik/likelihood.hpp"

using namespace difflik;

namespace {

std::shared_ptr<const DiffusionModel> load(const std::string& name) {
  return std::make_shared<const DiffusionModel>(load_model(std::string(DIFFLIK_MODEL_DIR) + "/" + name));
}

std::shared_ptr<const DiffusionModel> from_text(const std::string& text) {
  return std::make_shared<const DiffusionModel>(parse_model(text));
}

const std::vector<double> kTheta{0, 0, 5, 1, 10};

// (x0, x) pairs: x0 stationary, x one exact step later
std::vector<std::pair<std::vector<double>, std::vector<double>>> ou_pairs(int n, double delta, std::uint64_t seed) {
  const OUSpec spec = ou_from_theta(kTheta);
  const Eigen::MatrixXd L = stationary_cov(spec).llt().matrixL();
  RngStream rng(seed, 0);
  std::vector<std::pair<std::vector<double>, std::vector<double>>> out;
  for (int i = 0; i < n; ++i) {
    Eigen::Vector2d z(rng.normal(), rng.normal());
    Eigen::VectorXd x0 = spec.alpha + L * z;
    std::vector<double> a(x0.data(), x0.data() + 2);
    Eigen::VectorXd x = ou_exact_step(spec, a, delta, rng);
    out.emplace_back(a, std::vector<double>(x.data(), x.data() + 2));
  }
  return out;
}

double slope(const std::vector<double>& deltas, const std::vector<double>& r) {
  // least squares of log|r| on log delta
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double a = std::log(deltas[i]), b = std::log(std::abs(r[i]));
    sx += a, sy += b, sxx += a * a, sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

const char* kScalarOU = "dim = 1\nparams = k, a, s\nmu.1 = k*(a - x1)\nsigma.1.1 = s";

// swapping x1 <-> x2 maps the model to itself; no reduction
const char* kSymmetric =
    "dim = 2\nparams = a\n"
    "mu.1 = a*(x2 - x1)\nmu.2 = a*(x1 - x2)\n"
    "sigma.1.1 = 1 + 0.1*x2^2\nsigma.1.2 = 0.2\nsigma.2.1 = 0.2\nsigma.2.2 = 1 + 0.1*x1^2";

}  // namespace

TEST_CASE("path selection") {
  CHECK(LikelihoodEvaluator(load("ou.model"), 2).kind() == PathKind::Reducible);
  CHECK(LikelihoodEvaluator(load("exp_ou.model"), 2).kind() == PathKind::Reducible);
  CHECK(LikelihoodEvaluator(load("stochvol.model"), 2).kind() == PathKind::Irreducible);
  CHECK(LikelihoodEvaluator(load("ou.model"), 2, PathKind::Irreducible).kind() == PathKind::Irreducible);
  CHECK_THROWS_AS(LikelihoodEvaluator(load("stochvol.model"), 2, PathKind::Reducible), Error);
  CHECK(parse_path_kind("auto") == PathKind::Auto);
  CHECK_THROWS_AS(parse_path_kind("fast"), Error);
  // deterministic
  CHECK(LikelihoodEvaluator(load("stochvol.model"), 2).selection_note() ==
        LikelihoodEvaluator(load("stochvol.model"), 2).selection_note());
}

TEST_CASE("Brownian peak") {
  for (PathKind k : {PathKind::Reducible, PathKind::Irreducible}) {
    LikelihoodEvaluator ev(load("brownian1.model"), 2, k);
    const std::vector<double> x{0.3};
    CHECK(ev.log_transition(x, x, 1.0, {}) == doctest::Approx(-0.9189385332046727).epsilon(1e-14));
  }
  LikelihoodEvaluator ev(load("brownian1.model"), 2);
  CHECK_THROWS_AS(ev.log_transition(std::vector<double>{0}, std::vector<double>{0}, 0.0, {}), Error);
}

TEST_CASE("OU against exact density") {
  const OUSpec spec = ou_from_theta(kTheta);
  const double delta = 1.0 / 52;
  for (PathKind k : {PathKind::Reducible, PathKind::Irreducible}) {
    LikelihoodEvaluator ev(load("ou.model"), 2, k);
    double worst = 0.0;
    for (const auto& [x0, x] : ou_pairs(50, delta, 3))
      worst = std::max(worst, std::abs(ev.log_transition(x, x0, delta, kTheta) - ou_exact_logdensity(spec, x, x0, delta)));
    INFO(to_string(k));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("OU error is the third-order remainder") {
  // err / D^3 settles to a pair-dependent constant
  const OUSpec spec = ou_from_theta(kTheta);
  LikelihoodEvaluator ev(load("ou.model"), 2);
  for (const auto& [x0, x] : ou_pairs(10, 1.0 / 52, 3)) {
    auto scaled = [&](double D) { return (ev.log_transition(x, x0, D, kTheta) - ou_exact_logdensity(spec, x, x0, D)) / (D * D * D); };
    const double a = scaled(1.0 / 250), b = scaled(1.0 / 1000);
    CHECK(std::abs(a - b) < 0.05 * std::abs(b));
  }
}

TEST_CASE("reducible and irreducible paths agree on OU") {
  LikelihoodEvaluator red(load("ou.model"), 2, PathKind::Reducible);
  LikelihoodEvaluator irr(load("ou.model"), 2, PathKind::Irreducible);
  RngStream rng(11, 0);
  double worst = 0.0;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> x0{rng.normal() * 0.3, rng.normal() * 0.3};
    std::vector<double> x{x0[0] + 0.07 * rng.normal(), x0[1] + 0.07 * rng.normal()};
    worst = std::max(worst, std::abs(red.log_transition(x, x0, 1.0 / 52, kTheta) -
                                     irr.log_transition(x, x0, 1.0 / 52, kTheta)));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("exp-OU lift through ln") {
  LikelihoodEvaluator x_ev(load("exp_ou.model"), 2, PathKind::Reducible);
  LikelihoodEvaluator y_ev(load("ou.model"), 2, PathKind::Reducible);
  const std::vector<double> th{0.1, -0.2, 5, 1, 10};
  RngStream rng(5, 0);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x0{std::exp(0.3 * rng.normal()), std::exp(0.3 * rng.normal())};
    std::vector<double> x{x0[0] * std::exp(0.1 * rng.normal()), x0[1] * std::exp(0.1 * rng.normal())};
    std::vector<double> y{std::log(x[0]), std::log(x[1])}, y0{std::log(x0[0]), std::log(x0[1])};
    const double want = -std::log(x[0] * x[1]) + y_ev.log_transition(y, y0, 0.02, th);
    CHECK(x_ev.log_transition(x, x0, 0.02, th) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("irreducible cache") {
  LikelihoodEvaluator ev(load("exp_ou.model"), 2, PathKind::Irreducible);
  LikelihoodEvaluator fresh(load("exp_ou.model"), 2, PathKind::Irreducible);
  const std::vector<double> x0{1.1, 0.9}, x{1.15, 0.87};
  const std::vector<double> t1{0, 0, 5, 1, 10}, t2{0.1, 0, 4, 1, 9};
  const double a = ev.log_transition(x, x0, 0.02, t1);
  CHECK(ev.irreducible_at(x0, t1) == ev.irreducible_at(x0, t1));
  CHECK(ev.log_transition(x, x0, 0.02, t1) == a);
  // leading term reused across theta; result must match an uncached build
  CHECK(ev.log_transition(x, x0, 0.02, t2) == fresh.log_transition(x, x0, 0.02, t2));
  CHECK(ev.log_transition(x, x0, 0.02, t2) != a);
  CHECK(ev.irreducible_at(x0, t2)->max_residual < 1e-9);
}

TEST_CASE("path log-likelihood") {
  LikelihoodEvaluator ev(load("ou.model"), 2);
  const OUSpec spec = ou_from_theta(kTheta);
  const double delta = 1.0 / 52;
  RngStream rng(7, 0);
  const Path path = ou_path(spec, std::vector<double>{0, 0}, delta, 500, rng);

  const Path one{path[0], path[1]};
  CHECK(ev.path_loglik(one, delta, kTheta) == ev.log_transition(path[1], path[0], delta, kTheta));

  Path twice = path;
  twice.insert(twice.end(), path.begin(), path.end());
  // the seam pair (last -> first) is not a transition of the original path
  const double seam = ev.log_transition(path[0], path.back(), delta, kTheta);
  CHECK(ev.path_loglik(twice, delta, kTheta) - seam ==
        doctest::Approx(2 * ev.path_loglik(path, delta, kTheta)).epsilon(1e-13));

  double exact = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) exact += ou_exact_logdensity(spec, path[i], path[i - 1], delta);
  const double approx = ev.path_loglik(path, delta, kTheta);
  CHECK(std::abs(approx - exact) / std::abs(exact) < 1e-3);

  CHECK_THROWS_AS(ev.path_loglik(Path{path[0]}, delta, kTheta), Error);
}

TEST_CASE("path failure reports the transition index") {
  LikelihoodEvaluator ev(load("exp_ou.model"), 2, PathKind::Irreducible);
  const Path bad{{1.0, 1.0}, {1.1, 0.9}, {-0.5, 1.0}, {1.0, 1.0}};
  try {
    ev.path_loglik(bad, 0.02, kTheta);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("transition 2") != std::string::npos);
  }
}

TEST_CASE("scalar OU normalization") {
  auto model = from_text(kScalarOU);
  const std::vector<double> th{5, 0.2, 1.0};
  const double delta = 1.0 / 52;
  const double x0 = 0.6;
  const OUSpec spec{Eigen::VectorXd::Constant(1, 0.2), Eigen::MatrixXd::Constant(1, 1, 5),
                    Eigen::MatrixXd::Identity(1, 1)};
  const GaussianLaw law = ou_transition(spec, std::vector<double>{x0}, delta);
  const double sd = std::sqrt(law.cov(0, 0));
  for (PathKind k : {PathKind::Reducible, PathKind::Irreducible}) {
    LikelihoodEvaluator ev(model, 2, k);
    const int n = 4000;
    const double lo = law.mean[0] - 8 * sd, h = 16 * sd / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double p = std::exp(ev.log_transition(std::vector<double>{lo + i * h}, std::vector<double>{x0}, delta, th));
      CHECK(p >= 0.0);
      sum += (i == 0 || i == n ? 0.5 : 1.0) * p;
    }
    INFO(to_string(k));
    CHECK(sum * h > 0.99);
    CHECK(sum * h < 1.01);
  }
}

TEST_CASE("positivity far in the tails") {
  LikelihoodEvaluator ev(load("stochvol.model"), 2);
  const std::vector<double> th(ev.model().num_params(), 1.0);
  const double l = ev.log_transition(std::vector<double>{0.4, 0.3}, std::vector<double>{0.1, 0.1}, 0.01, th);
  CHECK(std::isfinite(l));
  CHECK(std::exp(l) >= 0.0);
}

TEST_CASE("small-step Gaussian limit") {
  // l + (m/2) ln(2 pi D) + 1/2 d' v0^-1 d / D + D_v(x) along d = z sqrt(D)
  LikelihoodEvaluator ev(load("stochvol.model"), 2, PathKind::Irreducible);
  const std::vector<double> th(ev.model().num_params(), 1.0);
  const std::vector<double> x0{0.2, -0.1};
  const auto e = ev.irreducible_at(x0, th);
  const NumericPoly& c1 = e->C[0];
  double prev = 0.0, last_change = 0.0;
  for (double D : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    const double s = std::sqrt(D);
    const std::vector<double> d{0.8 * s, -0.6 * s}, x{x0[0] + d[0], x0[1] + d[1]};
    // quadratic part of C^(-1) is -1/2 d' v0^-1 d
    double quad = 0.0;
    for (int i = 0; i < c1.size(); ++i)
      if (c1.basis().order_of(i) == 2) {
        double t = c1[i];
        for (int j = 0; j < 2; ++j)
          for (int p = 0; p < c1.basis().monomial(i)[j]; ++p) t *= d[j];
        quad += t;
      }
    const double r = ev.log_transition(x, x0, D, th) + std::log(2 * std::numbers::pi * D) - quad / D +
                     ev.irreducible_builder().Dv(x, th);
    CHECK(std::abs(r) < 10.0);
    if (D < 1e-2) last_change = std::abs(r - prev);
    prev = r;
  }
  CHECK(last_change < 1e-2);
}

TEST_CASE("forward residual vanishes for Brownian motion") {
  for (const char* name : {"brownian1.model", "brownian2.model"}) {
    LikelihoodEvaluator ev(load(name), 2, PathKind::Irreducible);
    const int m = ev.model().dim();
    for (double D : {0.1, 1.0, 10.0}) {
      std::vector<double> x0(m, 0.2), x(m, 0.2);
      x[0] += 0.7;
      CHECK(std::abs(ev.pde_residual(x, x0, D, {})) < 1e-12 * (1 + 1 / (D * D)));
    }
  }
}

TEST_CASE("forward residual order") {
  const std::vector<double> deltas{1e-1, 1e-2, 1e-3};
  struct Case {
    const char* model;
    std::vector<double> x0, x;
  };
  for (const Case& c : {Case{"ou.model", {0.1, -0.2}, {0.17, -0.25}}, Case{"exp_ou.model", {1.1, 0.9}, {1.17, 0.85}}})
    for (int K : {1, 2}) {
      LikelihoodEvaluator ev(load(c.model), K, PathKind::Irreducible);
      std::vector<double> r;
      for (double D : deltas) r.push_back(ev.pde_residual(c.x, c.x0, D, kTheta));
      INFO(c.model << " K=" << K << " slope " << slope(deltas, r));
      CHECK(slope(deltas, r) > K - 0.3);
    }
}

TEST_CASE("forward residual symmetry") {
  LikelihoodEvaluator ev(from_text(kSymmetric), 2);
  CHECK(ev.kind() == PathKind::Irreducible);
  const std::vector<double> th{0.7};
  const std::vector<double> x0{0.3, -0.4}, x{0.36, -0.47};
  const std::vector<double> x0s{-0.4, 0.3}, xs{-0.47, 0.36};
  for (double D : {0.1, 0.01}) {
    const double a = ev.pde_residual(x, x0, D, th), b = ev.pde_residual(xs, x0s, D, th);
    CHECK(a == doctest::Approx(b).epsilon(1e-10));
    CHECK(ev.log_transition(x, x0, D, th) == doctest::Approx(ev.log_transition(xs, x0s, D, th)).epsilon(1e-12));
  }
}
