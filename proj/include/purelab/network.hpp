#pragma once

#include "purelab/common.hpp"
#include "purelab/rng.hpp"

namespace purelab {

// Width-m symmetric pair network on R^d:
//   f(x; rho) = sum_i [ relu(<w_i,x> + rho_i - b) - relu(-<w_i,x> + rho_i - b) ]
// with output weights fixed to 1, a single shared bias b >= 0, and per-neuron
// pre-activation noise rho_i ~ N(0, sigma_rho^2) drawn fresh per example.
struct SymmetricNet {
  Mat W;  // m x d, row i is w_i
  double b = 0.0;
  double sigma_rho = 0.0;

  int m() const { return static_cast<int>(W.rows()); }
  int d() const { return static_cast<int>(W.cols()); }
};

SymmetricNet init_symmetric_net(int m, int d, double sigma0, double b0,
                                double sigma_rho, Rng& rng);

// E_{rho~N(0,sigma^2)} relu(a + rho) = a Phi(a/sigma) + sigma phi(a/sigma);
// plain relu at sigma = 0.
double smoothed_relu(double a, double sigma);

// f(x; rho) for one example; rho has length m.
double forward(const SymmetricNet& net, const Vec& x, const Vec& rho);

// Noise-averaged output f~(x) = sum_i [ h(g_i - b) - h(-g_i - b) ],
// h = smoothed_relu at sigma_rho, g_i = <w_i, x>.
double forward_smoothed(const SymmetricNet& net, const Vec& x);

// grad_x f~(x) = sum_i w_i [ Phi((g_i-b)/sigma) + Phi((-g_i-b)/sigma) ];
// indicators at sigma_rho = 0.
Vec grad_input_smoothed(const SymmetricNet& net, const Vec& x);

// Per-row gradient of log(1+exp(-y f(x;rho))) in the weights:
//   -y lprime (1[<w_i,x>+rho_i >= b] + 1[-<w_i,x>+rho_i >= b]) x,
// with the indicator equal to 1 at exactly 0.
Mat loss_grad_weights(const SymmetricNet& net, const Vec& x, double y,
                      const Vec& rho);

// Reg(w) = ||w||^2/2 + ||w||^3/3 summed over rows; gradient rows are
// (1 + ||w_i||) w_i. The caller applies the lambda factor.
double regularizer_value(const Mat& W);
Mat regularizer_grad(const Mat& W);

// ---- batched forms (rows of X are examples) ----
// All batched operations split work over a fixed chunk grid, so results are
// bitwise identical for every thread count.

// G = X W^T (n x m pre-activations).
Mat batch_preacts(const SymmetricNet& net, const Mat& X, int threads = 1);

// f per example with explicit noise matrix Rho (n x m).
Vec batch_forward(const SymmetricNet& net, const Mat& G, const Mat& Rho,
                  int threads = 1);

// Noise-averaged f~ per example.
Vec batch_forward_smoothed(const SymmetricNet& net, const Mat& G,
                           int threads = 1);

// Rows are grad_x f~(x_n).
Mat batch_input_grads_smoothed(const SymmetricNet& net, const Mat& X,
                               const Mat& G, int threads = 1);

struct BatchLossGrad {
  Mat grad;         // m x d, mean over examples of the loss gradient
  double mean_loss = 0.0;
  Vec f;            // per-example outputs under the supplied rho draws
};

// Mean logistic-loss gradient in the weights over a batch, with one rho row
// per example.
BatchLossGrad batch_loss_grad(const SymmetricNet& net, const Mat& X,
                              const Vec& y, const Mat& Rho, int threads = 1);

// Mean logistic loss under Rho plus lambda * Reg(W).
double objective(const SymmetricNet& net, const Mat& X, const Vec& y,
                 const Mat& Rho, double lambda, int threads = 1);

}  // namespace purelab
