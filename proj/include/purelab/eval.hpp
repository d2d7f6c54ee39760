#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "purelab/perturb.hpp"
#include "purelab/predictor.hpp"
#include "purelab/sparse_coding.hpp"

namespace purelab {

// Histogram of y * f over the eval stream, fixed bins so runs are comparable.
struct MarginStats {
  static constexpr int kBins = 40;
  static constexpr double kLo = -10.0;
  static constexpr double kHi = 10.0;

  std::array<std::int64_t, kBins> counts{};  // outliers clamp into end bins
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double frac_positive = 0.0;  // strictly positive margins
  std::int64_t n = 0;
};

struct AttackEvalResult {
  AttackSpec spec;
  // A sample counts as a robust error if the clean prediction or the
  // attacked prediction (same per-sample noise draw) is wrong; delta = 0 is
  // always an admissible perturbation, so this dominates the clean error.
  double robust_error = 0.0;
  double se = 0.0;
  std::int64_t fallback_count = 0;  // attack failures that fell back to delta=0
};

struct EvalReport {
  std::int64_t n = 0;
  double clean_error = 0.0;
  double clean_se = 0.0;
  double mean_loss = 0.0;  // mean logistic loss on the stream
  std::vector<AttackEvalResult> attacks;
  MarginStats margins;

  double clean_accuracy() const { return 1.0 - clean_error; }
  double robust_accuracy(std::size_t i) const {
    return 1.0 - attacks[i].robust_error;
  }
};

inline double binomial_se(double p, std::int64_t n) {
  return n > 0 ? std::sqrt(p * (1.0 - p) / static_cast<double>(n)) : 0.0;
}

// Draws n fresh examples from rng and scores the predictor clean and under
// each attack. Stream consumption per sample does not depend on the attack
// list, so the clean numbers are attack-set invariant.
EvalReport evaluate(const Predictor& pred, const SparseCodingTask& task,
                    const std::vector<AttackSpec>& attacks, std::int64_t n,
                    Rng& rng);

double clean_error(const Predictor& pred, const SparseCodingTask& task,
                   std::int64_t n, Rng& rng);

}  // namespace purelab
