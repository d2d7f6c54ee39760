#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>

namespace purelab {

using Vec = Eigen::VectorXd;
// Row-major so that per-example / per-neuron rows are contiguous.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Config or CLI input that cannot be acted on.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Training produced non-finite state or exceeded the weight-norm ceiling.
struct divergence_error : std::runtime_error {
  explicit divergence_error(const std::string& what) : std::runtime_error(what) {}
};

// A documented operation contract was violated (e.g. attack budget).
struct contract_violation : std::runtime_error {
  explicit contract_violation(const std::string& what) : std::runtime_error(what) {}
};

// Standard normal pdf.
inline double norm_pdf(double u) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * u * u);
}

// Standard normal cdf.
inline double norm_cdf(double u) {
  static const double inv_sqrt_2 = 0.7071067811865475244;
  return 0.5 * std::erfc(-u * inv_sqrt_2);
}

// sign with sign(0) = +1, used for labels and predictions.
inline double sign_pos(double v) { return v >= 0.0 ? 1.0 : -1.0; }

// sign with sign(0) = 0, used for l-inf attack directions.
inline double sign_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// log(1 + exp(-u)) without overflow for large |u|.
inline double logistic_loss(double u) {
  if (u >= 0.0) return std::log1p(std::exp(-u));
  return -u + std::log1p(std::exp(u));
}

// d/df log(1 + exp(-y f)) has magnitude lprime = 1 / (1 + exp(y f)).
inline double logistic_lprime(double u) {
  if (u >= 0.0) {
    double e = std::exp(-u);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(u));
}

}  // namespace purelab
