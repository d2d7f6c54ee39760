#include "purelab/sparse_coding.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace purelab {

Dictionary make_dictionary(int d, DictKind kind, Rng& rng) {
  if (d < 2) throw config_error("dictionary dimension must be >= 2");
  Dictionary dict;
  dict.d = d;
  dict.kind = kind;
  if (kind == DictKind::identity) {
    dict.M = Mat::Identity(d, d);
    return dict;
  }
  Mat G(d, d);
  rng.fill_normal(G, 1.0);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd R = qr.matrixQR();
  // Fix the gauge so Q is unique given G: make diag(R) nonnegative.
  for (int j = 0; j < d; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  dict.M = Q;
  double max_dev = (dict.M.transpose() * dict.M - Mat::Identity(d, d))
                       .cwiseAbs()
                       .maxCoeff();
  if (max_dev > 1e-10)
    throw contract_violation("dictionary failed orthonormality check");
  return dict;
}

HiddenCodeLaw HiddenCodeLaw::standard(int d, int k) {
  HiddenCodeLaw law;
  law.d = d;
  law.k = k;
  law.p_max = 1.0 / d;
  law.p_nz = static_cast<double>(k) / d;
  law.v_small = 1.0 / std::sqrt(static_cast<double>(k));
  law.validate();
  return law;
}

void HiddenCodeLaw::validate() const {
  if (d < 2 || k < 1 || k > d)
    throw config_error("hidden-code law requires 2 <= d and 1 <= k <= d");
  if (!(p_max >= 0.0 && p_max <= p_nz && p_nz <= 1.0))
    throw config_error("hidden-code law requires 0 <= p_max <= p_nz <= 1");
  double lo = 1.0 / std::sqrt(static_cast<double>(k));
  if (!(v_small >= lo - 1e-12 && v_small <= 1.0 + 1e-12))
    throw config_error("hidden-code law requires v_small in [1/sqrt(k), 1]");
}

NoiseModel NoiseModel::standard(int d, int k, double sigma_x) {
  NoiseModel noise;
  noise.sigma_x = sigma_x;
  noise.spike_mag = std::pow(static_cast<double>(k), -0.501);
  double s2 = noise.spike_mag * noise.spike_mag;
  noise.spike_prob =
      sigma_x > 0.0 ? std::min(1.0, sigma_x * sigma_x / (s2 * d)) : 0.0;
  noise.validate();
  return noise;
}

void NoiseModel::validate() const {
  if (sigma_x < 0.0) throw config_error("sigma_x must be >= 0");
  if (spike_mag < 0.0) throw config_error("spike_mag must be >= 0");
  if (!(spike_prob >= 0.0 && spike_prob <= 1.0))
    throw config_error("spike_prob must be in [0, 1]");
}

Vec sample_hidden(const HiddenCodeLaw& law, Rng& rng) {
  Vec z(law.d);
  for (int i = 0; i < law.d; ++i) {
    // Fixed stream consumption: one magnitude draw and one sign draw per
    // coordinate regardless of outcome.
    double u = rng.uniform();
    double s = rng.rademacher();
    double mag = 0.0;
    if (u < law.p_max)
      mag = 1.0;
    else if (u < law.p_nz)
      mag = law.v_small;
    z[i] = s * mag;
  }
  return z;
}

Vec sample_noise(const NoiseModel& noise, const Dictionary& dict, Rng& rng) {
  int d = dict.d;
  Vec xi = Vec::Zero(d);
  if (noise.sigma_x <= 0.0) return xi;
  if (noise.gaussian_enabled) {
    double sd = noise.sigma_x / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < d; ++i) xi[i] = rng.normal(0.0, sd);
  }
  if (noise.spike_prob > 0.0 && noise.spike_mag > 0.0) {
    Vec spike = Vec::Zero(d);
    bool any = false;
    double half = 0.5 * noise.spike_prob;
    for (int i = 0; i < d; ++i) {
      double u = rng.uniform();
      if (u < half)
        spike[i] = noise.spike_mag, any = true;
      else if (u < noise.spike_prob)
        spike[i] = -noise.spike_mag, any = true;
    }
    if (any) {
      if (dict.is_identity())
        xi += spike;
      else
        xi += dict.M * spike;
    }
  }
  return xi;
}

LabeledExample sample_example(const SparseCodingTask& task, Rng& rng) {
  LabeledExample ex;
  ex.z = sample_hidden(task.law, rng);
  ex.xi = sample_noise(task.noise, task.dict, rng);
  if (task.dict.is_identity())
    ex.x = ex.z + ex.xi;
  else
    ex.x = task.dict.M * ex.z + ex.xi;
  ex.y = label_of(task.w_star, ex.z);
  return ex;
}

Dataset sample_dataset(const SparseCodingTask& task, std::int64_t n, Rng& rng) {
  if (n < 0) throw config_error("dataset size must be >= 0");
  int d = task.d();
  Dataset ds;
  ds.X.resize(n, d);
  ds.Z.resize(n, d);
  ds.y.resize(n);
  for (std::int64_t i = 0; i < n; ++i) {
    LabeledExample ex = sample_example(task, rng);
    ds.X.row(i) = ex.x.transpose();
    ds.Z.row(i) = ex.z.transpose();
    ds.y[i] = ex.y;
  }
  return ds;
}

}  // namespace purelab
