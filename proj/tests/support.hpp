#pragma once

#include <cmath>
#include <vector>

#include "lis/common.hpp"
#include "lis/rng.hpp"

namespace lis::testing {

inline Mat random_orthonormal(int rows, int cols, Rng& rng) {
  Mat gauss(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) gauss(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(gauss);
  return qr.householderQ() * Mat::Identity(rows, cols);
}

inline Mat random_psd(int dim, Rng& rng, double scale = 1.0) {
  const Mat q = random_orthonormal(dim, dim, rng);
  Vec eigs(dim);
  for (int i = 0; i < dim; ++i) eigs[i] = scale * rng.uniform();
  return q * eigs.asDiagonal() * q.transpose();
}

// Integrated-autocorrelation-time estimate for a scalar chain; used to turn
// correlated-chain moments into honest standard errors.
inline double integrated_autocorr_time(const std::vector<double>& chain) {
  const std::size_t n = chain.size();
  double mean = 0.0;
  for (double v : chain) mean += v / static_cast<double>(n);
  double var = 0.0;
  for (double v : chain) var += (v - mean) * (v - mean) / static_cast<double>(n);
  if (var <= 0.0) return 1.0;
  double tau = 1.0;
  for (std::size_t lag = 1; lag < n / 2; ++lag) {
    double acov = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      acov += (chain[i] - mean) * (chain[i + lag] - mean);
    }
    acov /= static_cast<double>(n - lag);
    const double rho = acov / var;
    if (rho < 0.02) break;
    tau += 2.0 * rho;
  }
  return tau;
}

// mean and its standard error for a possibly correlated scalar chain
struct ChainMoment {
  double mean = 0.0;
  double std_err = 0.0;
};

inline ChainMoment chain_mean(const std::vector<double>& chain) {
  const double n = static_cast<double>(chain.size());
  ChainMoment out;
  for (double v : chain) out.mean += v / n;
  double var = 0.0;
  for (double v : chain) var += (v - out.mean) * (v - out.mean) / n;
  out.std_err = std::sqrt(var * integrated_autocorr_time(chain) / n);
  return out;
}

inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / sxx;
}

}  // namespace lis::testing
