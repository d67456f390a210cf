// Hand-coded closed forms for the reduced bivariate OU model
//   dY = kappa (eta - Y) dt + dW
// typed in directly from the published coefficient display (with the eta
// misprint in C^(0) and the k21^2 sign in the d1 d2 term of C^(2) corrected;
// the latter checked against the exact Gaussian transition).  Independent of the library recursion.
#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace ouref {

struct Params {
  double eta1, eta2, k11, k12, k21, k22;
};

inline double c_minus1(const double y[2], const double y0[2]) {
  return -0.5 * (y[0] - y0[0]) * (y[0] - y0[0]) - 0.5 * (y[1] - y0[1]) * (y[1] - y0[1]);
}

inline double c0(const double y[2], const double y0[2], const Params& p) {
  const double a = y[0] + y0[0] - 2 * p.eta1;
  const double b = y[1] + y0[1] - 2 * p.eta2;
  return -0.5 * (y[0] - y0[0]) * (a * p.k11 + b * p.k12) - 0.5 * (y[1] - y0[1]) * (a * p.k21 + b * p.k22);
}

inline double c1(const double y[2], const double y0[2], const Params& p) {
  const double d1 = y[0] - y0[0], d2 = y[1] - y0[1];
  const double e1 = y0[0] - p.eta1, e2 = y0[1] - p.eta2;
  const double k11 = p.k11, k12 = p.k12, k21 = p.k21, k22 = p.k22;
  const double s1 = e1 * k11 + e2 * k12, s2 = e1 * k21 + e2 * k22;
  return 0.5 * (k11 - s1 * s1) + 0.5 * (k22 - s2 * s2) -
         0.5 * d1 * (e1 * (k11 * k11 + k21 * k21) + e2 * (k11 * k12 + k21 * k22)) +
         (1.0 / 24) * d1 * d1 * (-4 * k11 * k11 + k12 * k12 - 2 * k12 * k21 - 3 * k21 * k21) -
         0.5 * d2 * (e1 * (k11 * k12 + k21 * k22) + e2 * (k12 * k12 + k22 * k22)) +
         (1.0 / 24) * d2 * d2 * (-4 * k22 * k22 + k21 * k21 - 2 * k12 * k21 - 3 * k12 * k12) -
         (1.0 / 3) * d1 * d2 * (k11 * k12 + k21 * k22);
}

inline double c2(const double y[2], const double y0[2], const Params& p) {
  const double d1 = y[0] - y0[0], d2 = y[1] - y0[1];
  const double e1 = y0[0] - p.eta1, e2 = y0[1] - p.eta2;
  const double k11 = p.k11, k12 = p.k12, k21 = p.k21, k22 = p.k22;
  const double q = k11 * k12 + k21 * k22;
  return -(1.0 / 12) * (2 * k11 * k11 + 2 * k22 * k22 + (k12 + k21) * (k12 + k21)) +
         (1.0 / 6) * d1 * (k12 - k21) * (e1 * q + e2 * (k12 * k12 + k22 * k22)) +
         (1.0 / 12) * d1 * d1 * (k12 - k21) * q + (1.0 / 12) * d2 * d2 * (k21 - k12) * q +
         (1.0 / 6) * d2 * (k21 - k12) * (e1 * (k11 * k11 + k21 * k21) + e2 * q) +
         (1.0 / 12) * d1 * d2 * (k12 - k21) * (k22 * k22 + k12 * k12 - k11 * k11 - k21 * k21);
}

// K = 2 expansion of l_Y assembled from the closed forms.
inline double log_density_k2(const double y[2], const double y0[2], double delta, const Params& p) {
  return -std::log(2 * std::numbers::pi * delta) + c_minus1(y, y0) / delta + c0(y, y0, p) + c1(y, y0, p) * delta +
         c2(y, y0, p) * delta * delta / 2;
}

}  // namespace ouref
