#pragma once

#include <string>

#include "purelab/common.hpp"
#include "purelab/predictor.hpp"
#include "purelab/rng.hpp"
#include "purelab/sparse_coding.hpp"

namespace purelab {

enum class NormKind { l2, linf };

struct PerturbationBudget {
  NormKind norm = NormKind::l2;
  double tau = 0.0;
};

enum class AttackKind { null, fgm, dense, iterated_fgm };

// Attack budgets are hard contracts: every built-in returns
// ||delta||_p <= tau + 1e-9, and check_budget enforces it.
inline constexpr double kBudgetSlack = 1e-9;

// Gradient dual norms below this floor make the step direction zero.
inline constexpr double kDefaultGradFloor = 1e-8;

struct AttackSpec {
  AttackKind kind = AttackKind::null;
  PerturbationBudget budget;
  int steps = 1;                         // iterated_fgm only
  double grad_floor = kDefaultGradFloor;

  // Grammar: kind:norm:tau[:steps], e.g. "fgm:l2:0.1767766952966369".
  static AttackSpec parse(const std::string& text);
  std::string format() const;
  // Stable column-name-safe identifier, e.g. "ifgm8_l2_t0.18".
  std::string name() const;
};

double norm_of(const Vec& v, NormKind norm);

// Scale (l2) or clamp (linf) into the tau ball; no-op inside it.
Vec project_ball(Vec v, const PerturbationBudget& budget);

void check_budget(const Vec& delta, const PerturbationBudget& budget);

// Unit-dual-norm descent direction of y * value at x: for l2, -y g/||g||_2;
// for linf, -y sign(g) with sign(0) = 0. Zero when the dual norm of g is
// below grad_floor.
Vec fgm_direction(const Predictor& pred, const Vec& x, double y,
                  NormKind norm, double grad_floor = kDefaultGradFloor);

// Single gradient step: delta = tau * fgm_direction.
Vec fgm_attack(const Predictor& pred, const Vec& x, double y,
               const PerturbationBudget& budget,
               double grad_floor = kDefaultGradFloor);

// Model-independent direction u = M w*: for l2, -tau y u/||u||_2;
// for linf, -tau y u/||u||_inf.
Vec dense_attack(const Dictionary& dict, const Vec& w_star, double y,
                 const PerturbationBudget& budget);

// steps equal increments of tau/steps along the local fgm direction with
// re-projection; steps = 1 reproduces fgm_attack bit for bit.
Vec iterated_fgm_attack(const Predictor& pred, const Vec& x, double y,
                        const PerturbationBudget& budget, int steps,
                        double grad_floor = kDefaultGradFloor);

// Dispatch on spec.kind. The task supplies the dense direction; r is the
// attack randomness slot from the attack-map interface (accepted for custom
// attacks; no built-in consumes it).
Vec apply_attack(const AttackSpec& spec, const Predictor& pred,
                 const SparseCodingTask& task, const Vec& x, double y,
                 Rng* r = nullptr);

// Row-per-example attack against a symmetric net, used inside adversarial
// training. Matches apply_attack row by row (same smoothed gradients, same
// floor and projection rules) and enforces the budget on every row.
Mat batch_attack_deltas(const SymmetricNet& net, const SparseCodingTask& task,
                        const Mat& X, const Vec& y, const AttackSpec& spec,
                        int threads = 1);

}  // namespace purelab
