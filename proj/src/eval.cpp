#include "purelab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace purelab {

EvalReport evaluate(const Predictor& pred, const SparseCodingTask& task,
                    const std::vector<AttackSpec>& attacks, std::int64_t n,
                    Rng& rng) {
  if (n < 1) throw config_error("evaluation needs n >= 1 samples");
  EvalReport report;
  report.n = n;
  report.attacks.resize(attacks.size());
  for (std::size_t a = 0; a < attacks.size(); ++a)
    report.attacks[a].spec = attacks[a];

  std::vector<std::int64_t> robust_wrong(attacks.size(), 0);
  std::int64_t clean_wrong = 0;
  double loss_sum = 0.0;
  MarginStats& ms = report.margins;
  ms.min = std::numeric_limits<double>::infinity();
  ms.max = -std::numeric_limits<double>::infinity();
  double margin_sum = 0.0;
  std::int64_t positive = 0;

  Vec rho_std(pred.noise_dim());
  for (std::int64_t i = 0; i < n; ++i) {
    LabeledExample ex = sample_example(task, rng);
    for (Eigen::Index j = 0; j < rho_std.size(); ++j) rho_std[j] = rng.normal();

    double f = pred.value(ex.x, rho_std);
    double margin = ex.y * f;
    bool clean_ok = sign_pos(f) == ex.y;
    if (!clean_ok) ++clean_wrong;
    loss_sum += logistic_loss(margin);

    margin_sum += margin;
    ms.min = std::min(ms.min, margin);
    ms.max = std::max(ms.max, margin);
    if (margin > 0.0) ++positive;
    double w = (MarginStats::kHi - MarginStats::kLo) / MarginStats::kBins;
    int bin = static_cast<int>(std::floor((margin - MarginStats::kLo) / w));
    bin = std::clamp(bin, 0, MarginStats::kBins - 1);
    ++ms.counts[static_cast<std::size_t>(bin)];

    for (std::size_t a = 0; a < attacks.size(); ++a) {
      Vec delta;
      try {
        delta = apply_attack(attacks[a], pred, task, ex.x, ex.y);
        check_budget(delta, attacks[a].budget);
      } catch (const contract_violation&) {
        throw;  // a built-in attack overrunning its budget is a bug
      } catch (const std::exception&) {
        delta = Vec::Zero(ex.x.size());
        ++report.attacks[a].fallback_count;
      }
      bool adv_ok = clean_ok;
      if (adv_ok) {
        double fa = pred.value(ex.x + delta, rho_std);
        adv_ok = sign_pos(fa) == ex.y;
      }
      if (!adv_ok) ++robust_wrong[a];
    }
  }

  double dn = static_cast<double>(n);
  report.clean_error = static_cast<double>(clean_wrong) / dn;
  report.clean_se = binomial_se(report.clean_error, n);
  report.mean_loss = loss_sum / dn;
  ms.n = n;
  ms.mean = margin_sum / dn;
  ms.frac_positive = static_cast<double>(positive) / dn;
  if (n == 0) ms.min = ms.max = 0.0;
  for (std::size_t a = 0; a < attacks.size(); ++a) {
    report.attacks[a].robust_error = static_cast<double>(robust_wrong[a]) / dn;
    report.attacks[a].se = binomial_se(report.attacks[a].robust_error, n);
  }
  return report;
}

double clean_error(const Predictor& pred, const SparseCodingTask& task,
                   std::int64_t n, Rng& rng) {
  return evaluate(pred, task, {}, n, rng).clean_error;
}

}  // namespace purelab
