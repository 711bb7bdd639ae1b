#pragma once

// Closed forms and quadrature oracles used by the tests. Everything here is
// independent of the estimators under test.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracles {

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double norm_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.141592653589793238462643383279502884);
}

// Black-Scholes with r = 0; tau is the remaining maturity.
inline double bs_d1(double x, double strike, double sigma, double tau) {
  return (std::log(x / strike) + 0.5 * sigma * sigma * tau) / (sigma * std::sqrt(tau));
}

inline double bs_call_price(double x, double strike, double sigma, double tau) {
  const double d1 = bs_d1(x, strike, sigma, tau);
  return x * norm_cdf(d1) - strike * norm_cdf(d1 - sigma * std::sqrt(tau));
}

inline double bs_call_delta(double x, double strike, double sigma, double tau) {
  return norm_cdf(bs_d1(x, strike, sigma, tau));
}

inline double bs_call_gamma(double x, double strike, double sigma, double tau) {
  return norm_pdf(bs_d1(x, strike, sigma, tau)) / (x * sigma * std::sqrt(tau));
}

// Sensitivity to the squared lognormal volatility sigma^2.
inline double bs_call_variance_vega(double x, double strike, double sigma, double tau) {
  return x * norm_pdf(bs_d1(x, strike, sigma, tau)) * std::sqrt(tau) / (2.0 * sigma);
}

// Gauss-Hermite nodes and weights (physicists' convention, exp(-x^2)
// weight), by Newton iteration on the orthonormal recurrence.
inline void gauss_hermite(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const int m = (n + 1) / 2;
  double z = 0.0, pp = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[i - 2];
    }
    for (int it = 0; it < 200; ++it) {
      double p1 = 0.7511255444649425;  // pi^(-1/4)
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 - std::sqrt(j / (j + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-14) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (pp * pp);
    w[n - 1 - i] = w[i];
  }
}

// E[(0.5 (x_{t1} + x_T) - K)^+] under Black-Scholes with r = 0, by 2-D
// Gauss-Hermite quadrature over the two lognormal factors.
inline double two_date_average_call_quadrature(double x0, double strike, double sigma, double t1,
                                               double maturity, int n_nodes = 64) {
  std::vector<double> x, w;
  gauss_hermite(n_nodes, x, w);
  const double sqrt_pi = std::sqrt(3.141592653589793238462643383279502884);
  const double s1 = sigma * std::sqrt(t1);
  const double s2 = sigma * std::sqrt(maturity - t1);
  double total = 0.0;
  for (int i = 0; i < n_nodes; ++i) {
    const double z1 = std::sqrt(2.0) * x[i];
    const double x_t1 = x0 * std::exp(s1 * z1 - 0.5 * s1 * s1);
    double inner = 0.0;
    for (int j = 0; j < n_nodes; ++j) {
      const double z2 = std::sqrt(2.0) * x[j];
      const double x_T = x_t1 * std::exp(s2 * z2 - 0.5 * s2 * s2);
      const double payoff = std::max(0.5 * (x_t1 + x_T) - strike, 0.0);
      inner += w[j] * payoff;
    }
    total += w[i] * inner / sqrt_pi;
  }
  return total / sqrt_pi;
}

}  // namespace oracles
