#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "difflik/simulate.hpp"

using namespace difflik;

namespace {

const std::vector<double> kTable1{0.0, 0.0, 5.0, 1.0, 10.0};

double Phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("Philox known-answer vectors") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        std::array<std::uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and distinct") {
  RngStream a(42, 3), b(42, 3), c(42, 4), d(43, 3);
  bool differ_c = false, differ_d = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x > 0.0);
    CHECK(x < 1.0);
    differ_c |= x != c.uniform();
    differ_d |= x != d.uniform();
  }
  CHECK(differ_c);
  CHECK(differ_d);
  CHECK(a.position() == 200);
}

TEST_CASE("uniform and normal moments") {
  RngStream r(7, 0);
  const int n = 200000;
  double s = 0, s2 = 0, u = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
    u += r.uniform();
  }
  CHECK(std::abs(s / n) < 4 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1) < 4 * std::sqrt(2.0 / n));
  CHECK(std::abs(u / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
}

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-15));
  CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-14));
  for (double p = 1e-12; p < 1; p = p < 0.01 ? p * 7 : p + 0.0137) {
    if (1 - (1 - p) == p) CHECK(normal_quantile(p) == doctest::Approx(-normal_quantile(1 - p)).epsilon(1e-12));
    CHECK(Phi(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-13));
  }
}

TEST_CASE("stationary covariance") {
  OUSpec s;
  s.alpha = Eigen::Vector2d::Zero();
  s.beta = Eigen::Vector2d(5, 10).asDiagonal();
  s.sigma = Eigen::Matrix2d::Identity();
  Eigen::MatrixXd L = stationary_cov(s);
  CHECK(L(0, 0) == doctest::Approx(0.1));
  CHECK(L(1, 1) == doctest::Approx(0.05));
  CHECK(L(0, 1) == 0.0);

  OUSpec one;
  one.alpha = Eigen::VectorXd::Zero(1);
  one.beta = Eigen::MatrixXd::Constant(1, 1, 3.0);
  one.sigma = Eigen::MatrixXd::Constant(1, 1, 0.5);
  CHECK(stationary_cov(one)(0, 0) == doctest::Approx(0.25 / 6));

  const OUSpec t = ou_from_theta(kTable1);
  L = stationary_cov(t);
  CHECK((L - stationary_cov_2d(t)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((t.beta * L + L * t.beta.transpose() - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(t.stationary());

  OUSpec g;
  g.alpha = Eigen::Vector3d::Zero();
  g.beta = Eigen::Matrix3d{{2, 0.5, 0}, {-0.3, 1, 0.2}, {0.1, 0, 3}};
  g.sigma = Eigen::Matrix3d{{1, 0, 0}, {0.4, 0.7, 0}, {0, -0.2, 1.3}};
  L = stationary_cov(g);
  CHECK((g.beta * L + L * g.beta.transpose() - g.sigma * g.sigma.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((L - L.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("matrix exponential") {
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(2, 2);
  CHECK((matrix_exp(Z, 3.0) - Eigen::MatrixXd::Identity(2, 2)).norm() == 0.0);
  Eigen::MatrixXd D = Eigen::Vector2d(0.3, -2.0).asDiagonal();
  const Eigen::MatrixXd E = matrix_exp(D, 1.5);
  CHECK(E(0, 0) == doctest::Approx(std::exp(0.45)).epsilon(1e-14));
  CHECK(E(1, 1) == doctest::Approx(std::exp(-3.0)).epsilon(1e-14));
  Eigen::MatrixXd A(2, 2);
  A << -5, -1, 0, -10;
  const double t = 1.0 / 52;
  const Eigen::MatrixXd F = matrix_exp(A, t);
  CHECK(std::abs(F(0, 1) - (-(std::exp(-5 * t) - std::exp(-10 * t)) / 5)) < 1e-13);
  CHECK(std::abs(F(0, 0) - std::exp(-5 * t)) < 1e-13);
  CHECK(F(1, 0) == 0.0);
}

TEST_CASE("exact OU transition") {
  const OUSpec t = ou_from_theta(kTable1);
  const double x0[] = {0.7, -0.4};
  const GaussianLaw far = ou_transition(t, x0, 50.0 / 5.0);
  CHECK(far.mean.norm() < 1e-10);
  CHECK((far.cov - stationary_cov(t)).cwiseAbs().maxCoeff() < 1e-10);

  OUSpec one;
  one.alpha = Eigen::VectorXd::Zero(1);
  one.beta = Eigen::MatrixXd::Constant(1, 1, 1.0);
  one.sigma = Eigen::MatrixXd::Constant(1, 1, 1.0);
  const double a0[] = {1.0}, a[] = {0.5};
  const GaussianLaw g = ou_transition(one, a0, std::log(2.0));
  CHECK(g.mean(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(g.cov(0, 0) == doctest::Approx(0.375).epsilon(1e-14));
  CHECK(ou_exact_logdensity(one, a, a0, std::log(2.0)) ==
        doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * 0.375)).epsilon(1e-14));

  // Omega increases to Lambda in the PSD order
  Eigen::MatrixXd prev = Eigen::MatrixXd::Zero(2, 2);
  for (double D : {0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0}) {
    const Eigen::MatrixXd om = ou_transition(t, x0, D).cov;
    CHECK((om - om.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(om - prev);
    CHECK(es.eigenvalues().minCoeff() > -1e-14);
    prev = om;
  }
}

TEST_CASE("exact OU draws match the transition moments") {
  const OUSpec t = ou_from_theta(kTable1);
  const double x0[] = {0.3, -0.1}, D = 1.0 / 52;
  const GaussianLaw g = ou_transition(t, x0, D);
  RngStream rng(2024, 0);
  const int n = 100000;
  Eigen::Vector2d s = Eigen::Vector2d::Zero();
  Eigen::Matrix2d ss = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d x = ou_exact_step(t, x0, D, rng) - g.mean;
    s += x;
    ss += x * x.transpose();
  }
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(s(i) / n) < 4 * std::sqrt(g.cov(i, i) / n));
    for (int j = 0; j < 2; ++j) {
      const double se = std::sqrt((g.cov(i, i) * g.cov(j, j) + g.cov(i, j) * g.cov(i, j)) / n);
      CHECK(std::abs(ss(i, j) / n - g.cov(i, j)) < 4 * se);
    }
  }
}

TEST_CASE("exact OU density integrates to one") {
  const OUSpec t = ou_from_theta(kTable1);
  const double x0[] = {0.3, -0.1}, D = 1.0 / 52;
  const GaussianLaw g = ou_transition(t, x0, D);
  const double s1 = std::sqrt(g.cov(0, 0)), s2 = std::sqrt(g.cov(1, 1));
  const int N = 200;
  const double h1 = 16 * s1 / N, h2 = 16 * s2 / N;
  double total = 0.0;
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= N; ++j) {
      const double x[] = {g.mean(0) - 8 * s1 + i * h1, g.mean(1) - 8 * s2 + j * h2};
      const double w = (i == 0 || i == N ? 0.5 : 1.0) * (j == 0 || j == N ? 0.5 : 1.0);
      total += w * std::exp(ou_exact_logdensity(t, x, x0, D));
    }
  CHECK(std::abs(total * h1 * h2 - 1.0) < 1e-3);
}

TEST_CASE("paths") {
  const OUSpec t = ou_from_theta(kTable1);
  const double x0[] = {1.0, 1.0};
  RngStream r1(5, 1), r2(5, 1);
  const Path p = exp_ou_path(t, x0, 1.0 / 52, 300, r1);
  CHECK(p.size() == 301);
  for (const auto& row : p) {
    CHECK(row[0] > 0.0);
    CHECK(row[1] > 0.0);
  }
  CHECK(p == exp_ou_path(t, x0, 1.0 / 52, 300, r2));

  // deterministic limit: Euler error shrinks like 1/substeps
  const DiffusionModel decay = parse_model("dim = 1\nparams = k\nmu.1 = -k*x1\nsigma.1.1 = 0");
  const std::vector<double> th{2.0};
  const double z0[] = {1.0};
  double prev = 0.0;
  for (int sub : {8, 16, 32}) {
    RngStream r(1, 0);
    const Path e = euler_path(decay, th, z0, 0.1, sub, 10, r);
    const double err = std::abs(e.back()[0] - std::exp(-2.0));
    if (prev > 0) CHECK(prev / err == doctest::Approx(2.0).epsilon(0.05));
    prev = err;
  }

  const DiffusionModel walk = parse_model("dim = 1\nmu.1 = -1\nsigma.1.1 = 1\ndomain.1 = (0, inf)");
  RngStream r(1, 0);
  CHECK_THROWS_AS(euler_path(walk, {}, z0, 1.0, 4, 100, r), Error);
}

TEST_CASE("Euler with fine substeps agrees with the exact OU sampler") {
  const OUSpec t = ou_from_theta(kTable1);
  const DiffusionModel ou = parse_model(
      "dim = 2\nparams = eta1, eta2, k11, k12, k22\n"
      "mu.1 = k11*(eta1 - x1) + k12*(eta2 - x2)\nmu.2 = k22*(eta2 - x2)\nsigma.1.1 = 1\nsigma.2.2 = 1");
  const double x0[] = {0.3, -0.1}, D = 1.0 / 52;
  const GaussianLaw g = ou_transition(t, x0, D);
  const int n = 20000;
  RngStream rng(99, 0);
  Eigen::Vector2d s = Eigen::Vector2d::Zero();
  Eigen::Matrix2d ss = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Path p = euler_path(ou, kTable1, x0, D, 64, 1, rng);
    const Eigen::Vector2d x(p[1][0] - g.mean(0), p[1][1] - g.mean(1));
    s += x;
    ss += x * x.transpose();
  }
  const double bias = D / 64 * 10;
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(s(i) / n) < 4 * std::sqrt(g.cov(i, i) / n) + bias);
    CHECK(std::abs(ss(i, i) / n - g.cov(i, i)) < 4 * g.cov(i, i) * std::sqrt(2.0 / n) + bias * g.cov(i, i));
  }
}

TEST_CASE("CSV round trip") {
  const Path p{{1.0, 0.1}, {std::nextafter(1.0, 2.0), -1e-300}, {3.25, 1.0 / 3}};
  std::stringstream ss;
  write_csv(ss, {"x1", "x2"}, p);
  CHECK(read_csv(ss, {"x1", "x2"}) == p);
  std::stringstream swapped("b, a\n1, 2\n3, 4\n");
  CHECK(read_csv(swapped, {"a", "b"}) == Path{{2, 1}, {4, 3}});
  std::stringstream bad("a\n1x\n");
  CHECK_THROWS_AS(read_csv(bad, {"a"}), Error);
  std::stringstream missing("a\n1\n");
  CHECK_THROWS_AS(read_csv(missing, {"b"}), Error);
}
