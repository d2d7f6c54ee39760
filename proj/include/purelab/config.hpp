#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "purelab/diagnostics.hpp"
#include "purelab/ntk.hpp"
#include "purelab/perturb.hpp"
#include "purelab/sparse_coding.hpp"
#include "purelab/training.hpp"

namespace purelab {

// Experiment configuration, read from a line-oriented `key = value` file
// with dotted section keys and `#` comments. Unknown keys are rejected.
// Negative / empty sentinels mean "derive the default from d and k"; after
// resolve_defaults every field is a concrete value and emit_config /
// load_config is a fixpoint.
struct ExperimentConfig {
  // task
  int d = 128;
  int k = 8;
  double sigma_x = 0.5;
  std::string dict = "random_orthonormal";  // or "identity"
  std::string w_star = "signs";             // or "ones"
  double p_max = -1.0;    // default 1/d
  double p_nz = -1.0;     // default k/d
  double v_small = -1.0;  // default 1/sqrt(k)

  // net
  int m = 512;
  double sigma0 = -1.0;  // default d^-1.01
  double kappa_rho = 0.5;

  // sched
  double eta = 0.5;
  double lambda = -1.0;     // default 0.1/d
  std::int64_t n_train = 4096;
  double bias_rate = -1.0;  // default 0.04/d
  double b_cap = -1.0;      // default k^-0.5001
  std::int64_t t_a = -1;    // -1 = switch when b reaches b_cap
  std::int64_t t_f = 3000;
  std::int64_t t_g = 1400;
  std::int64_t eval_every = 100;
  std::int64_t batch = 0;
  double max_row_norm = 10.0;
  std::int64_t metrics_samples = 500;
  std::string metrics_attacks;  // ;-separated specs; default from adv/eval

  // adv
  std::string adv_attack;  // default fgm:l2:<0.5/sqrt(k)>

  // eval
  std::int64_t eval_samples = 2000;
  std::string eval_attacks;  // default fgm/dense/ifgm set
  std::string rho_mode = "fresh";  // or "zero"

  // diag
  double c1 = 1.40;
  double c2 = 0.02;
  double beta = -1.0;  // default 1/sqrt(k)
  bool strict_sign = false;
  int ept_large_cap = 8;
  double ept_small_frac = 0.3;
  int support_cap = 4;
  double lasso_lambda1 = 0.1;
  std::int64_t lasso_max_iter = 2000;
  double lasso_tol = 1e-12;
  std::string recon_lambdas = "0.05,0.1,0.2,0.4";
  std::int64_t recon_inputs = 32;

  // ntk
  int ntk_m = 512;
  double ntk_eta = 0.5;
  double ntk_lambda = 0.0;
  std::int64_t ntk_iters = 300;
  std::int64_t ntk_n_train = 4096;
  std::int64_t ntk_eval_every = 50;
  double ntk_sigma_rho = 1.0;
  double ntk_b = 0.0;
  bool ntk_single_v = false;

  // run
  std::uint64_t seed = 0;
  std::string out = "runs/out";
  int threads = 1;
  std::string retain = "boundaries";  // or "all"
  bool reconstruct = false;
};

// Parse + resolve + validate. Errors are config_error naming line and key.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

void resolve_defaults(ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);

// Canonical `key = value` emission in schema order; parse(emit(c)) == c for
// any resolved config.
std::string emit_config(const ExperimentConfig& cfg);

// fnv1a64 over the canonical emission, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// ;-separated attack specs.
std::vector<AttackSpec> parse_attack_list(const std::string& text);

// Factories (cfg must be resolved).
SparseCodingTask make_task(const ExperimentConfig& cfg);
TrainSchedule make_schedule(const ExperimentConfig& cfg);
NtkConfig make_ntk_config(const ExperimentConfig& cfg);
MetricsOptions make_metrics_options(const ExperimentConfig& cfg);
// Threshold parameters at bias level b; sigma_w = b / sqrt(c1 ln d).
NeuronSetParams make_neuron_params(const ExperimentConfig& cfg, double b);
LassoParams make_lasso_params(const ExperimentConfig& cfg);

double initial_bias(const ExperimentConfig& cfg);  // sigma0 sqrt(c1 ln d)

}  // namespace purelab
