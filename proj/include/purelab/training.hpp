#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "purelab/eval.hpp"
#include "purelab/network.hpp"
#include "purelab/perturb.hpp"
#include "purelab/sparse_coding.hpp"

namespace purelab {

// Gradient-descent schedule. All values are fully resolved numbers; the
// config layer owns the defaults that depend on d and k.
struct TrainSchedule {
  double eta = 0.01;
  double lambda = 0.0;
  std::int64_t n_train = 0;    // training-set size (informational here)
  int m = 0;                   // network width
  double sigma0 = 0.0;         // init scale for W
  double b0 = 0.0;             // initial bias
  double bias_rate = 0.0;      // per-step bias drift; b += eta * bias_rate
  double b_cap = 0.0;          // bias stops growing here
  double kappa_rho = 1.0;      // sigma_rho = kappa_rho * b / sqrt(ln d) early,
                               // kappa_rho * b / ln d late
  std::int64_t t_a = -1;       // early->late switch; -1 = when b reaches b_cap
  std::int64_t t_f = 0;        // clean iterations
  std::int64_t t_g = 0;        // adversarial iterations
  std::int64_t eval_every = 50;
  std::int64_t batch = 0;      // 0 = full batch, else SGD minibatch size
  double max_row_norm = 10.0;  // divergence ceiling on ||w_i||
  int threads = 1;
};

double sigma_rho_value(const TrainSchedule& s, double b, bool late, int d);

// One gradient update on (X, y) with pre-drawn noise rows Rho: weights get
// the mean loss gradient plus lambda (1+||w_i||) w_i, the bias drifts up by
// eta * bias_rate (clamped at b_cap). Returns the pre-step mean loss.
double clean_step(SymmetricNet& net, const Mat& X, const Vec& y,
                  const Mat& Rho, const TrainSchedule& s);

// Same update evaluated at x + A(f_t, x, y); the bias is frozen.
// The perturbations are recomputed against the current net each call.
double adv_step(SymmetricNet& net, const SparseCodingTask& task, const Mat& X,
                const Vec& y, const Mat& Rho, const AttackSpec& attack,
                const TrainSchedule& s);

// A (neuron, atom) pair flagged at initialization, plus the orientation of
// the matched branch (+1 when <w_i, M_j> already points along sign(w*_j)).
struct SurePair {
  int neuron = 0;
  int atom = 0;
  double orient = 1.0;
};

struct MetricsRow {
  std::int64_t t = 0;
  std::string stage;  // "clean" or "adv"
  double b = 0.0;
  double sigma_rho = 0.0;
  double train_obj = 0.0;   // mean loss under the step's rho + lambda Reg
  double train_loss = 0.0;  // loss part only
  double clean_err = 0.0;
  std::vector<double> robust_err;  // aligned with MetricsOptions::attacks
  double dense_projection = 0.0;   // oriented mean <w_i, Mw*/||Mw*||> on sure pairs
  double median_theta_vs_ref = 0.0;
  double activation_sparsity = 0.0;
  double max_row_norm = 0.0;
};

struct LotteryPoint {
  std::int64_t t = 0;
  std::vector<double> proj;  // <w_i, M_j> aligned with the sure pairs
};

struct MetricsOptions {
  std::vector<AttackSpec> attacks;
  std::int64_t n_samples = 1000;
  std::int64_t sparsity_samples = 256;
  // Called at every metrics point and on the final iterate with the current
  // net and its global iteration; the harness uses it to persist mid-run
  // checkpoints without owning the loop.
  std::function<void(const SymmetricNet&, std::int64_t)> snapshot;
};

// Hook that classifies the freshly initialized weights; the training module
// only consumes the resulting pairs (for the dense-projection metric and the
// lottery trace), the thresholds live with the diagnostics.
using SureClassifier = std::function<std::vector<SurePair>(const Mat& W_init)>;

struct CleanTrainResult {
  SymmetricNet init_net;
  SymmetricNet net;
  std::vector<MetricsRow> metrics;
  std::vector<SurePair> sure_pairs;
  std::vector<LotteryPoint> lottery;
  bool late_phase = false;  // sigma_rho regime at exit
};

CleanTrainResult clean_train(const SparseCodingTask& task, const Dataset& data,
                             const TrainSchedule& sched, std::uint64_t seed,
                             const MetricsOptions& opts,
                             const SureClassifier& classify = {});

struct AdvTrainResult {
  SymmetricNet net;
  std::vector<MetricsRow> metrics;
  std::vector<LotteryPoint> lottery;
};

// Continues from a clean-trained net at global iteration t0; W_ref and
// sure_pairs come from the clean stage so the reported theta and projection
// series stay comparable across stages.
AdvTrainResult adv_train(const SparseCodingTask& task, const Dataset& data,
                         const SymmetricNet& start, const TrainSchedule& sched,
                         std::uint64_t seed, const AttackSpec& attack,
                         const MetricsOptions& opts, const Mat& W_ref,
                         const std::vector<SurePair>& sure_pairs,
                         std::int64_t t0, bool late_phase);

}  // namespace purelab
