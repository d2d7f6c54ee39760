#pragma once

#include <cstdint>
#include <string>

#include "purelab/common.hpp"
#include "purelab/rng.hpp"

namespace purelab {

enum class DictKind { identity, random_orthonormal };

// Orthonormal d x d dictionary; columns are the atoms M_j.
struct Dictionary {
  int d = 0;
  DictKind kind = DictKind::identity;
  Mat M;

  bool is_identity() const { return kind == DictKind::identity; }
};

Dictionary make_dictionary(int d, DictKind kind, Rng& rng);

// Two-level hidden-code law: per coordinate independently
//   |z_i| = 1        with prob p_max,
//   |z_i| = v_small  with prob p_nz - p_max,
//   z_i   = 0        otherwise,
// with an independent uniform sign. Defaults: p_max = 1/d, p_nz = k/d,
// v_small = 1/sqrt(k).
struct HiddenCodeLaw {
  int d = 0;
  int k = 0;
  double p_max = 0.0;
  double p_nz = 0.0;
  double v_small = 0.0;

  static HiddenCodeLaw standard(int d, int k);
  void validate() const;

  // E[z_i^2] = p_max + (p_nz - p_max) v_small^2; (2k-1)/(dk) at defaults.
  double coord_second_moment() const {
    return p_max + (p_nz - p_max) * v_small * v_small;
  }
  // E[#nonzeros] = d p_nz; k at defaults.
  double expected_l0() const { return d * p_nz; }
};

// Noise xi = xi' + M xi'': xi' ~ N(0, (sigma_x^2/d) I), and xi''_i is
// +-spike_mag with prob spike_prob/2 each. spike_prob defaults to
// min(1, sigma_x^2 spike_mag^-2 / d), saturating E[(xi''_i)^2] = sigma_x^2/d.
struct NoiseModel {
  double sigma_x = 0.0;
  double spike_mag = 0.0;
  double spike_prob = 0.0;
  bool gaussian_enabled = true;

  static NoiseModel standard(int d, int k, double sigma_x);
  void validate() const;

  // E||xi||^2 = sigma_x^2 [gaussian] + d spike_prob spike_mag^2 [spikes].
  double expected_sq_norm(int d) const {
    double g = gaussian_enabled ? sigma_x * sigma_x : 0.0;
    return g + d * spike_prob * spike_mag * spike_mag;
  }
};

struct SparseCodingTask {
  Dictionary dict;
  Vec w_star;  // length d, entries in {-1,+1} by default
  HiddenCodeLaw law;
  NoiseModel noise;

  int d() const { return dict.d; }
};

struct LabeledExample {
  Vec x;
  Vec z;
  Vec xi;
  double y = 1.0;
};

// Batch form used by training and evaluation; rows are examples.
struct Dataset {
  Mat X;
  Vec y;
  Mat Z;

  std::int64_t n() const { return X.rows(); }
};

// Label y = sign(<w*, z>) with sign(0) = +1.
inline double label_of(const Vec& w_star, const Vec& z) {
  return sign_pos(w_star.dot(z));
}

Vec sample_hidden(const HiddenCodeLaw& law, Rng& rng);
Vec sample_noise(const NoiseModel& noise, const Dictionary& dict, Rng& rng);
LabeledExample sample_example(const SparseCodingTask& task, Rng& rng);
Dataset sample_dataset(const SparseCodingTask& task, std::int64_t n, Rng& rng);

}  // namespace purelab
