#include <cmath>
#include <numeric>
#include <stdexcept>

#include "doctest.h"
#include "purelab/eval.hpp"

using namespace purelab;

namespace {

struct ConstantPredictor final : Predictor {
  double c;
  explicit ConstantPredictor(double v) : c(v) {}
  double value(const Vec&, const Vec&) const override { return c; }
  Vec smoothed_grad(const Vec& x) const override { return Vec::Zero(x.size()); }
};

struct LinearPredictor final : Predictor {
  Vec v;
  explicit LinearPredictor(Vec w) : v(std::move(w)) {}
  double value(const Vec& x, const Vec&) const override { return v.dot(x); }
  Vec smoothed_grad(const Vec&) const override { return v; }
};

struct BrokenGradPredictor final : Predictor {
  double value(const Vec&, const Vec&) const override { return 1.0; }
  Vec smoothed_grad(const Vec&) const override {
    throw std::runtime_error("no gradient available");
  }
};

SparseCodingTask make_task(int d, int k, double sigma_x, DictKind kind,
                           std::uint64_t seed) {
  SparseCodingTask task;
  Rng rng(seed);
  task.dict = make_dictionary(d, kind, rng);
  task.w_star = Vec::Ones(d);
  task.law = HiddenCodeLaw::standard(d, k);
  task.noise = NoiseModel::standard(d, k, sigma_x);
  return task;
}

SymmetricNet random_net(int m, int d, std::uint64_t seed) {
  SymmetricNet net;
  net.W.resize(m, d);
  Rng rng(seed);
  rng.fill_normal(net.W, 0.6);
  net.b = 0.2;
  net.sigma_rho = 0.1;
  return net;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("constant predictor error equals the label frequency") {
    auto task = make_task(32, 4, 0.5, DictKind::random_orthonormal, 1);
    ConstantPredictor pred(1.0);
    const std::int64_t n = 2000;
    Rng eval_rng(314);
    double err = clean_error(pred, task, n, eval_rng);

    Rng replay(314);
    std::int64_t minus = 0;
    for (std::int64_t i = 0; i < n; ++i)
      if (sample_example(task, replay).y == -1.0) ++minus;
    CHECK(err == static_cast<double>(minus) / n);
    // Labels are roughly balanced under the symmetric sign law.
    CHECK(err > 0.4);
    CHECK(err < 0.6);
  }

  TEST_CASE("the planted linear rule is exact without noise") {
    auto task = make_task(64, 8, 0.0, DictKind::identity, 2);
    LinearPredictor pred(task.w_star);
    Rng eval_rng(99);
    EvalReport rep = evaluate(pred, task, {}, 3000, eval_rng);
    CHECK(rep.clean_error == 0.0);
    CHECK(rep.clean_se == 0.0);
    CHECK(rep.clean_accuracy() == 1.0);
    CHECK(rep.margins.min >= 0.0);
  }

  TEST_CASE("attacked error dominates clean error") {
    auto task = make_task(24, 3, 0.5, DictKind::random_orthonormal, 3);
    auto net = random_net(16, 24, 4);
    SymmetricNetPredictor pred(net);
    std::vector<AttackSpec> attacks = {AttackSpec::parse("fgm:l2:0.3"),
                                       AttackSpec::parse("dense:l2:0.5"),
                                       AttackSpec::parse("ifgm:linf:0.05:4")};
    Rng eval_rng(500);
    EvalReport rep = evaluate(pred, task, attacks, 800, eval_rng);
    for (std::size_t a = 0; a < attacks.size(); ++a) {
      CHECK(rep.attacks[a].robust_error >= rep.clean_error);
      CHECK(rep.attacks[a].fallback_count == 0);
      CHECK(rep.robust_accuracy(a) == 1.0 - rep.attacks[a].robust_error);
    }
  }

  TEST_CASE("a zero-budget attack reproduces the clean error exactly") {
    auto task = make_task(24, 3, 0.5, DictKind::random_orthonormal, 5);
    auto net = random_net(16, 24, 6);
    SymmetricNetPredictor pred(net);
    Rng eval_rng(123);
    EvalReport rep =
        evaluate(pred, task, {AttackSpec::parse("fgm:l2:0")}, 500, eval_rng);
    CHECK(rep.attacks[0].robust_error == rep.clean_error);
  }

  TEST_CASE("clean numbers do not depend on the attack list") {
    auto task = make_task(24, 3, 0.5, DictKind::random_orthonormal, 7);
    auto net = random_net(16, 24, 8);
    SymmetricNetPredictor pred(net);
    Rng r1(2718), r2(2718);
    EvalReport bare = evaluate(pred, task, {}, 400, r1);
    EvalReport full = evaluate(
        pred, task,
        {AttackSpec::parse("fgm:l2:0.3"), AttackSpec::parse("dense:l2:0.5")},
        400, r2);
    CHECK(bare.clean_error == full.clean_error);
    CHECK(bare.mean_loss == full.mean_loss);
    CHECK(bare.margins.mean == full.margins.mean);
    CHECK(bare.margins.counts == full.margins.counts);
  }

  TEST_CASE("margin histogram is an exact partition of the stream") {
    auto task = make_task(24, 3, 0.5, DictKind::random_orthonormal, 9);
    auto net = random_net(16, 24, 10);
    SymmetricNetPredictor pred(net);
    Rng eval_rng(55);
    const std::int64_t n = 700;
    EvalReport rep = evaluate(pred, task, {}, n, eval_rng);
    std::int64_t total = std::accumulate(rep.margins.counts.begin(),
                                         rep.margins.counts.end(),
                                         std::int64_t{0});
    CHECK(total == n);
    CHECK(rep.margins.n == n);
    CHECK(rep.margins.min <= rep.margins.mean);
    CHECK(rep.margins.mean <= rep.margins.max);
    CHECK(rep.margins.frac_positive >= 0.0);
    CHECK(rep.margins.frac_positive <= 1.0);
  }

  TEST_CASE("gradient failures fall back to the clean input") {
    auto task = make_task(24, 3, 0.5, DictKind::random_orthonormal, 11);
    BrokenGradPredictor pred;
    Rng eval_rng(77);
    const std::int64_t n = 300;
    EvalReport rep =
        evaluate(pred, task, {AttackSpec::parse("fgm:l2:0.3")}, n, eval_rng);
    CHECK(rep.attacks[0].fallback_count == n);
    CHECK(rep.attacks[0].robust_error == rep.clean_error);
  }

  TEST_CASE("binomial standard errors follow the closed form") {
    CHECK(binomial_se(0.5, 100) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(binomial_se(0.0, 100) == 0.0);
    CHECK(binomial_se(1.0, 100) == 0.0);
    CHECK(binomial_se(0.5, 400) == doctest::Approx(0.025).epsilon(1e-15));
    CHECK(binomial_se(0.5, 0) == 0.0);
  }

  TEST_CASE("evaluation rejects empty streams and is seed-stable") {
    auto task = make_task(24, 3, 0.5, DictKind::random_orthonormal, 13);
    auto net = random_net(16, 24, 14);
    SymmetricNetPredictor pred(net);
    Rng bad(1);
    CHECK_THROWS_AS(evaluate(pred, task, {}, 0, bad), config_error);
    Rng r1(31), r2(31);
    EvalReport a = evaluate(pred, task, {AttackSpec::parse("fgm:l2:0.3")}, 200, r1);
    EvalReport b = evaluate(pred, task, {AttackSpec::parse("fgm:l2:0.3")}, 200, r2);
    CHECK(a.clean_error == b.clean_error);
    CHECK(a.attacks[0].robust_error == b.attacks[0].robust_error);
    CHECK(a.mean_loss == b.mean_loss);
  }
}
