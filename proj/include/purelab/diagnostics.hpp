#pragma once

#include <cstdint>
#include <vector>

#include "purelab/common.hpp"
#include "purelab/network.hpp"
#include "purelab/rng.hpp"
#include "purelab/sparse_coding.hpp"

namespace purelab {

// cos-angle magnitude |<u,v>| / (||u|| ||v||); 0 when either vector is zero.
double theta(const Vec& u, const Vec& v);

double median_value(std::vector<double> v);

// Thresholds for the neuron-set classification, all in units of the running
// weight scale sigma_w (sigma0 at initialization, b/(sqrt(c1 ln d)) once the
// bias schedule is driving).
struct NeuronSetParams {
  double c1 = 1.40;
  double c2 = 0.02;
  double sigma_w = 0.0;
  int k = 0;          // hidden-code sparsity, for pot+ / sure+ thresholds
  double beta = 0.0;  // ept++ / pot+ scale, surrogate default 1/sqrt(k)
  double b = 0.0;     // current bias, for pot+ / sure+
  // Sign handling for sure/sure+: the symmetric pair (w_i, -w_i) always
  // contains a branch whose projection matches sign(w*_j), so by default
  // membership is decided by magnitudes and the matching orientation is
  // recorded. strict_sign instead requires <w_i, M_j> itself to match.
  bool strict_sign = false;
  // Desk-scale stand-ins for the order-of-magnitude count bounds in the
  // epsilon-tail ("ept") definitions.
  int ept_large_cap = 8;        // "O(1) many large coordinates"
  double ept_small_frac = 0.3;  // need >= frac * d/ln d small coordinates
};

struct SureEntry {
  int neuron = 0;
  double orient = 1.0;  // sign making <orient w_i, M_j> agree with w*_j
};

struct NeuronSets {
  int m = 0;
  int d = 0;
  std::vector<std::vector<SureEntry>> sure;       // indexed by atom j
  std::vector<std::vector<int>> pot;              // indexed by atom j
  std::vector<std::vector<SureEntry>> sure_plus;  // indexed by atom j
  std::vector<std::vector<int>> pot_plus;         // indexed by atom j
  std::vector<int> ept, ept_plus, ept_pp;

  // Flattened (neuron, atom, orient) triples of the sure sets.
  struct SurePairRef {
    int neuron;
    int atom;
    double orient;
  };
  std::vector<SurePairRef> sure_union() const;
};

NeuronSets classify_neurons(const Mat& W, const Dictionary& dict,
                            const Vec& w_star, const NeuronSetParams& params);

// Per-neuron angles between three checkpoints of the same width.
struct PurityReport {
  std::vector<double> theta_init_clean;
  std::vector<double> theta_init_robust;
  std::vector<double> theta_clean_robust;
  double median_init_clean = 0.0;
  double median_init_robust = 0.0;
  double median_clean_robust = 0.0;
  double cross_neuron_median = 0.0;  // median off-diagonal theta of W_clean
};

PurityReport purity_report(const Mat& W_init, const Mat& W_clean,
                           const Mat& W_robust);

struct DenseProjectionReport {
  std::vector<double> per_neuron;  // oriented <w_i, M w*/||M w*||>
  double mean = 0.0;
  double median = 0.0;
};

DenseProjectionReport dense_projection(const Mat& W, const Dictionary& dict,
                                       const Vec& w_star,
                                       const std::vector<SureEntry>& subset);

// Sparse-support reading of each row: N_i = {j : |<w_i, M_j>| >= threshold},
// the matching coefficients, the largest off-support projection, and the
// dense component <w_i, Mw*>/||Mw*||.
struct NeuronDecomposition {
  std::vector<int> support;
  std::vector<double> coeff;
  double off_support_max = 0.0;
  double dense_component = 0.0;
};

struct DecompositionReport {
  std::vector<NeuronDecomposition> neurons;
  int support_cap = 4;
  bool cap_exceeded = false;
};

DecompositionReport decompose_neurons(const Mat& W, const Dictionary& dict,
                                      const Vec& w_star,
                                      double coeff_threshold,
                                      int support_cap = 4);

// Mean fraction of the 2m relu branches active on fresh task samples.
double activation_sparsity(const SymmetricNet& net, const SparseCodingTask& task,
                           std::int64_t n_samples, Rng& rng);

// Fraction of initialization-sure (i, j) pairs whose final weights still put
// their largest squared projection on atom j.
struct LotteryReport {
  std::int64_t pairs = 0;
  std::int64_t winners = 0;
  std::vector<int> winner_flags;  // aligned with the provided pairs
  double winner_fraction() const {
    return pairs ? static_cast<double>(winners) / static_cast<double>(pairs)
                 : 0.0;
  }
};

LotteryReport lottery_winners(const std::vector<NeuronSets::SurePairRef>& pairs,
                              const Mat& W_final, const Dictionary& dict);

// ---- l1 sparse reconstruction ----
// minimize_y ||A y - x||^2 + lambda1 ||y||_1 by ISTA with step 1/L,
// L = sigma_max(A)^2 from power iteration. With A = I the minimizer is the
// soft threshold y_j = sign(x_j) max(|x_j| - lambda1/2, 0).
struct LassoParams {
  double lambda1 = 0.1;
  int max_iter = 2000;
  double tol = 1e-12;  // stop when the objective decrease falls below tol
};

struct LassoResult {
  Vec code;
  double objective = 0.0;
  double residual = 0.0;  // ||A y - x||
  int iterations = 0;
  bool converged = false;
  double nonzero_frac = 0.0;  // fraction with |y_j| > 1e-6
  std::int64_t nonzeros = 0;
};

LassoResult lasso_reconstruct(const Mat& A, const Vec& x,
                              const LassoParams& params);

// max KKT violation of the lasso objective at y: for active coordinates
// |2 g_j + lambda1 sign(y_j)|, for inactive max(0, |2 g_j| - lambda1),
// with g = A^T (A y - x).
double lasso_kkt_violation(const Mat& A, const Vec& x, const Vec& y,
                           double lambda1);

// Rows of W as a dictionary (optionally unit-normalized) for reconstruction.
Mat weight_atoms(const Mat& W, bool normalize = true);

// Fraction of inputs where the robust-basis code is no denser than every
// clean-basis code of at most the same residual, sweeping lambda over a grid.
double reconstruction_sparsity_ordering(const Mat& A_clean, const Mat& A_robust,
                                        const Mat& inputs,
                                        const std::vector<double>& lambda_grid,
                                        int max_iter = 2000);

}  // namespace purelab
