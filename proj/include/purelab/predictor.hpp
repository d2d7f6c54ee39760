#pragma once

#include "purelab/common.hpp"
#include "purelab/network.hpp"

namespace purelab {

// Anything that scores an input and exposes a noise-averaged input gradient.
// Gradient-based attacks and the evaluator only see this interface.
struct Predictor {
  virtual ~Predictor() = default;

  // Score; sign_pos(value) is the predicted label. rho_std carries
  // noise_dim() standard normal draws (scaled internally); it may be empty
  // when noise_dim() == 0.
  virtual double value(const Vec& x, const Vec& rho_std) const = 0;

  // Gradient of the noise-averaged score at x.
  virtual Vec smoothed_grad(const Vec& x) const = 0;

  // Standard normal draws consumed per value() call.
  virtual int noise_dim() const { return 0; }
};

enum class RhoMode { fresh, zero };

// fresh: score with a fresh rho draw per example (the population quantity
// the training analysis speaks about); zero: score at rho = 0.
struct SymmetricNetPredictor final : Predictor {
  const SymmetricNet* net;
  RhoMode mode;

  SymmetricNetPredictor(const SymmetricNet& n, RhoMode m = RhoMode::fresh)
      : net(&n), mode(m) {}

  double value(const Vec& x, const Vec& rho_std) const override {
    if (mode == RhoMode::fresh && net->sigma_rho > 0.0) {
      Vec rho = net->sigma_rho * rho_std;
      return forward(*net, x, rho);
    }
    Vec zero = Vec::Zero(net->m());
    return forward(*net, x, zero);
  }

  Vec smoothed_grad(const Vec& x) const override {
    return grad_input_smoothed(*net, x);
  }

  int noise_dim() const override {
    return (mode == RhoMode::fresh && net->sigma_rho > 0.0) ? net->m() : 0;
  }
};

}  // namespace purelab
