#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "difflik/irreducible.hpp"
#include "difflik/taylor.hpp"
#include "support/taylor_oracle.hpp"

using namespace difflik;

namespace {

std::string model_path(const std::string& name) { return std::string(DIFFLIK_MODEL_DIR) + "/" + name; }

std::shared_ptr<const DiffusionModel> load(const std::string& name) {
  return std::make_shared<const DiffusionModel>(load_model(model_path(name)));
}

std::shared_ptr<const DiffusionModel> from_text(const std::string& text) {
  return std::make_shared<const DiffusionModel>(parse_model(text));
}

double coeff(const NumericPoly& p, MultiIndex i) { return p.coefficient(i); }

double max_abs_coefficient(const NumericPoly& p) {
  double s = 0.0;
  for (int i = 0; i < p.size(); ++i) s = std::max(s, std::abs(p[i]));
  return s;
}

double max_diff(const NumericPoly& a, const NumericPoly& b) {
  double s = 0.0;
  const int n = std::max(a.size(), b.size());
  for (int i = 0; i < n; ++i) {
    const double x = i < a.size() ? a[i] : 0.0, y = i < b.size() ? b[i] : 0.0;
    s = std::max(s, std::abs(x - y));
  }
  return s;
}

// Correlated, state-dependent diffusion with no reduction available.
const char* kCoupled =
    "dim = 2\nparams = a, b, s, r\n"
    "mu.1 = a - x1\nmu.2 = b*(1 - x2)\n"
    "sigma.1.1 = exp(x2/2)\nsigma.2.1 = r*s\nsigma.2.2 = s*(1 + 0.1*x1^2)";

}  // namespace

TEST_CASE("order schedule") {
  CHECK(order_schedule(2) == std::vector<int>{8, 6, 4, 2});
  CHECK(order_schedule(0) == std::vector<int>{4, 2});
  CHECK(order_schedule(1) == std::vector<int>{6, 4, 2});
  CHECK_THROWS_AS(order_schedule(-1), Error);
}

TEST_CASE("leading quadratic") {
  Eigen::MatrixXd v(2, 2);
  v << 1, 0, 0, 1;
  auto c = leading_quadratic(v, 2);
  CHECK(coeff(c, {2, 0}) == -0.5);
  CHECK(coeff(c, {0, 2}) == -0.5);
  CHECK(coeff(c, {1, 1}) == 0.0);
  v << 4, 0, 0, 1;
  c = leading_quadratic(v, 2);
  CHECK(coeff(c, {2, 0}) == doctest::Approx(-0.125));
  CHECK(coeff(c, {0, 2}) == doctest::Approx(-0.5));
  v << 2, 1, 1, 1;
  c = leading_quadratic(v, 2);
  CHECK(coeff(c, {2, 0}) == doctest::Approx(-0.5));
  CHECK(coeff(c, {1, 1}) == doctest::Approx(1.0));
  CHECK(coeff(c, {0, 2}) == doctest::Approx(-1.0));
  CHECK(coeff(c, {0, 0}) == 0.0);
  v << 1, 1, 1, 1;
  CHECK_THROWS_AS(leading_quadratic(v, 2), Error);
}

TEST_CASE("ingredient Taylor polynomials") {
  IrreducibleBuilder ou(load("ou.model"), 2);
  const std::vector<double> th{0.0, 0.0, 5.0, 1.0, 10.0};
  const double x0[] = {0.3, -0.2};
  const Ingredients a = ou.ingredients(x0, th);
  CHECK(a.J == 8);
  for (const auto& p : a.v) CHECK(p.effective_degree() <= 0);

  IrreducibleBuilder eo(load("exp_ou.model"), 0);
  const double one[] = {1.0, 1.0};
  const Ingredients b = eo.ingredients(one, th);
  CHECK(coeff(b.v[0], {0, 0}) == doctest::Approx(1.0));
  CHECK(coeff(b.v[0], {1, 0}) == doctest::Approx(2.0));
  CHECK(coeff(b.v[0], {2, 0}) == doctest::Approx(1.0));
  CHECK(coeff(b.v[0], {3, 0}) == 0.0);
  CHECK(coeff(b.v[1], {1, 0}) == 0.0);
  const double x12[] = {1.0, 2.0};
  const Ingredients c = eo.ingredients(x12, th);
  CHECK(coeff(c.Dv, {0, 0}) == doctest::Approx(std::log(2.0)));
  CHECK(coeff(c.Dv, {1, 0}) == doctest::Approx(1.0));
  CHECK(coeff(c.Dv, {0, 1}) == doctest::Approx(0.5));
}

TEST_CASE("Brownian motion is reproduced exactly") {
  IrreducibleBuilder bm(load("brownian2.model"), 2);
  const double x0[] = {0.4, -1.0};
  const auto e = bm.build(x0, {});
  for (int i = 0; i < e.C[0].size(); ++i) {
    const auto& mi = e.C[0].basis().monomial(i);
    const double expect = (order(mi) == 2 && (mi[0] == 2 || mi[1] == 2)) ? -0.5 : 0.0;
    CHECK(e.C[0][i] == doctest::Approx(expect));
  }
  for (int k = 0; k <= 2; ++k) CHECK(max_abs_coefficient(e.C[k + 1]) == 0.0);
  const double x[] = {0.9, -0.7};
  for (double D : {0.01, 0.1, 1.0, 10.0}) {
    const double exact = -std::log(2 * std::numbers::pi * D) - (0.25 + 0.09) / (2 * D);
    CHECK(bm.log_density(x, x0, D, {}) == doctest::Approx(exact).epsilon(1e-13));
  }
}

TEST_CASE("constant diffusion leaves C^(-1) quadratic") {
  IrreducibleBuilder ou(load("ou.model"), 2);
  const std::vector<double> th{0.1, -0.2, 5.0, 1.0, 10.0};
  const double x0[] = {0.3, -0.2};
  const Ingredients ing = ou.ingredients(x0, th);
  const NumericPoly c = ou.solve_leading(ing, LevelSolver::Probing);
  for (int i = 0; i < c.size(); ++i)
    if (c.basis().order_of(i) != 2) CHECK(c[i] == 0.0);
}

TEST_CASE("level-2 block of f^(-2) vanishes at the closed form") {
  IrreducibleBuilder b(from_text(kCoupled), 1);
  const std::vector<double> th{0.3, 0.5, 0.8, 0.4};
  const double x0[] = {0.2, -0.3};
  const Ingredients ing = b.ingredients(x0, th);
  Eigen::MatrixXd v0(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) v0(i, j) = ing.v[i * 2 + j][0];
  std::vector<NumericPoly> C{leading_quadratic(v0, ing.J, ing.Dv.center())};
  const NumericPoly f = assemble_f(-1, C, ing, 1);
  for (int i = 0; i < f.basis().level_end(2); ++i) CHECK(std::abs(f[i]) < 1e-14);
}

TEST_CASE("trace identity: constant term of f^(-1) at C^(0) = 0") {
  IrreducibleBuilder b(from_text(kCoupled), 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    const std::vector<double> th{u(rng), u(rng), 1.0 + 0.5 * u(rng), 0.5 * u(rng)};
    const double x0[] = {u(rng), u(rng)};
    const Ingredients ing = b.ingredients(x0, th);
    std::vector<NumericPoly> C{b.solve_leading(ing), NumericPoly(2, 6, ing.Dv.center())};
    CHECK(std::abs(assemble_f(0, C, ing, 2)[0]) < 1e-13);
  }
}

TEST_CASE("direct and probing level solvers agree") {
  IrreducibleBuilder b(from_text(kCoupled), 2);
  const std::vector<double> th{0.3, 0.5, 0.8, 0.4};
  const double x0[] = {0.2, -0.3};
  const auto d = b.build(x0, th, LevelSolver::Direct);
  const auto p = b.build(x0, th, LevelSolver::Probing);
  for (int k = -1; k <= 2; ++k) {
    INFO("k = " << k);
    CHECK(max_diff(d.C[k + 1], p.C[k + 1]) < 1e-9 * (1.0 + max_abs_coefficient(p.C[k + 1])));
  }
}

TEST_CASE("structural zeros and residual nullity") {
  for (const char* name : {"stochvol.model", "exp_ou.model", "stochvol_triangular.model"}) {
    auto model = load(name);
    IrreducibleBuilder b(model, 2);
    DomainSampler s(model->domain, 11);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (int t = 0; t < 5; ++t) {
      std::vector<double> th(model->num_params());
      for (auto& v : th) v = u(rng);
      const auto x0 = s.next();
      const auto e = b.build(x0, th);
      INFO(name << " at " << x0[0] << ", " << x0[1]);
      CHECK(e.max_residual < 1e-9);
      const auto& B = e.C[0].basis();
      for (int i = 0; i < B.level_end(1); ++i) CHECK(e.C[0][i] == 0.0);
      CHECK(e.C[1][0] == 0.0);
      CHECK(e.C.size() == 4);
      for (int k = -1; k <= 2; ++k) CHECK(e.C[k + 1].degree() == e.j[k + 1]);
    }
  }
}

TEST_CASE("C^(-1) does not depend on the drift") {
  const std::string base =
      "dim = 2\nparams = a, b\nsigma.1.1 = exp(x2/2)\nsigma.2.2 = 0.7\nsigma.1.2 = 0.2*x1\n";
  IrreducibleBuilder b1(from_text(base + "mu.1 = a\nmu.2 = b*(1 - x2)"), 2);
  IrreducibleBuilder b2(from_text(base + "mu.1 = sin(x1)*a\nmu.2 = -x2^3 + exp(b*x1)"), 2);
  const double x0[] = {0.3, -0.4};
  const std::vector<double> th{0.6, 1.7};
  const auto e1 = b1.build(x0, th);
  const auto e2 = b2.build(x0, th);
  CHECK(max_diff(e1.C[0], e2.C[0]) == 0.0);
  CHECK(max_diff(e1.C[1], e2.C[1]) > 1e-3);
}

TEST_CASE("OU: irreducible equals the reducible polynomials") {
  auto model = load("ou.model");
  IrreducibleBuilder b(model, 2);
  const std::vector<double> th{0.1, -0.2, 5.0, 1.0, 10.0};
  auto r = std::make_shared<const ReducedModel>(derive_reduced_model(*model, th));
  ReducibleEvaluator ev(r, 2);
  const double x0[] = {0.3, -0.25};
  const auto e = b.build(x0, th);
  const auto blocks = oracle::reducible_taylor_blocks(ev, x0, th);
  for (int k = -1; k <= 2; ++k) {
    INFO("k = " << k);
    CHECK(max_diff(e.C[k + 1], blocks[k + 1]) < 1e-10);
  }
}

TEST_CASE("exponential OU: irreducible coefficients are Taylor blocks of the reducible ones") {
  auto model = load("exp_ou.model");
  IrreducibleBuilder b(model, 2);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const std::vector<double> th{0.4 * u(rng) - 0.2, 0.4 * u(rng) - 0.2, 3.0 + 4.0 * u(rng), 2.0 * u(rng) - 1.0,
                                 7.0 + 6.0 * u(rng)};
    const double x0[] = {0.6 + 0.8 * u(rng), 0.6 + 0.8 * u(rng)};
    auto r = std::make_shared<const ReducedModel>(derive_reduced_model(*model, th));
    ReducibleEvaluator ev(r, 2);
    const auto e = b.build(x0, th);
    const auto blocks = oracle::reducible_taylor_blocks(ev, x0, th);
    for (int k = -1; k <= 2; ++k) worst = std::max(worst, max_diff(e.C[k + 1], blocks[k + 1]));
  }
  CHECK(worst < 1e-8);

  // level 3 of C^(-1) at x0 = (1, 1): Taylor of -1/2 |ln x|^2 gives +1/2 on d_i^3
  const double one[] = {1.0, 1.0};
  const auto e = b.build(one, std::vector<double>{0, 0, 5, 1, 10});
  CHECK(coeff(e.C[0], {3, 0}) == doctest::Approx(0.5));
  CHECK(coeff(e.C[0], {0, 3}) == doctest::Approx(0.5));
  CHECK(coeff(e.C[0], {2, 1}) == doctest::Approx(0.0));
}

TEST_CASE("memoized series match direct propagation") {
  auto model = load("exp_ou.model");
  IrreducibleBuilder b(model, 2);
  const std::vector<double> x0{1.2, 0.8};
  TaylorMemo memo(x0, order_schedule(2)[0], 2);
  for (const std::vector<double>& th : {std::vector<double>{0, 0, 5, 1, 10}, std::vector<double>{0.2, -0.1, 3, 2, 7}}) {
    const IrreducibleExpansion plain = b.build(x0, th);
    const IrreducibleExpansion memoized = b.build(x0, th, LevelSolver::Direct, nullptr, &memo);
    for (std::size_t k = 0; k < plain.C.size(); ++k) CHECK(max_diff(plain.C[k], memoized.C[k]) == 0.0);
  }
  CHECK(memo.size() > 0);
  CHECK_THROWS_AS(b.build(std::vector<double>{1.0, 1.0}, std::vector<double>{0, 0, 5, 1, 10}, LevelSolver::Direct,
                          nullptr, &memo),
                  Error);
}
