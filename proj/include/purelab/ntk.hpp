#pragma once

#include <cstdint>
#include <vector>

#include "purelab/common.hpp"
#include "purelab/predictor.hpp"
#include "purelab/rng.hpp"
#include "purelab/sparse_coding.hpp"

namespace purelab {

// Linearized (random-feature) baseline
//   p(x) = sum_i [ <v_i+, x> Phi((<w_i,x> - b_i)/sigma_i)
//                + <v_i-, x> Phi((-<w_i,x> - b_i)/sigma_i) ]
// with frozen gaussian rows w_i ~ N(0, I). Only (V+, V-) train, so the
// objective is convex. sigma_i = 0 turns Phi into the indicator 1[. >= 0].
struct NtkModel {
  Mat W;          // m x d, frozen
  Vec b_vec;      // length m
  Vec sigma_vec;  // length m
  Mat Vp, Vm;     // m x d, trained
  bool single_v = false;  // v+ = v- tied (Vm mirrors Vp)

  int m() const { return static_cast<int>(W.rows()); }
  int d() const { return static_cast<int>(W.cols()); }
};

struct NtkConfig {
  int m = 512;
  double sigma_rho = 1.0;  // uniform sigma_i
  double b = 0.0;          // uniform b_i
  bool single_v = false;
  double eta = 0.05;
  double lambda = 0.0;  // ridge on V
  std::int64_t iters = 400;
  std::int64_t n_train = 4096;
  std::int64_t eval_every = 50;
  int threads = 1;
};

NtkModel init_ntk(int d, const NtkConfig& cfg, Rng& rng);

double ntk_predict(const NtkModel& model, const Vec& x);
Vec ntk_input_grad(const NtkModel& model, const Vec& x);

struct NtkPredictor final : Predictor {
  const NtkModel* model;
  explicit NtkPredictor(const NtkModel& m) : model(&m) {}
  double value(const Vec& x, const Vec&) const override {
    return ntk_predict(*model, x);
  }
  Vec smoothed_grad(const Vec& x) const override {
    return ntk_input_grad(*model, x);
  }
};

struct NtkMetricsRow {
  std::int64_t t = 0;
  double train_loss = 0.0;
  double clean_err = 0.0;
};

struct NtkTrainResult {
  NtkModel model;
  std::vector<NtkMetricsRow> metrics;
  double final_loss = 0.0;
};

// Full-batch gradient descent on the mean logistic loss over a fresh
// training set; the feature weights W never move.
NtkTrainResult train_ntk(const SparseCodingTask& task, const NtkConfig& cfg,
                         std::uint64_t seed);

}  // namespace purelab
