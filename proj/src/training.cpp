#include "purelab/training.hpp"

#include <algorithm>
#include <cmath>

#include "purelab/parallel.hpp"

namespace purelab {

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + h, v.end());
  double hi = v[h];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + h - 1, v.end());
  return 0.5 * (v[h - 1] + hi);
}

double row_theta(const Mat& A, const Mat& B, Eigen::Index i) {
  double na = A.row(i).norm(), nb = B.row(i).norm();
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return std::fabs(A.row(i).dot(B.row(i))) / (na * nb);
}

// Weight update shared by both stages: w_i <- w_i - eta (g_i + lambda
// (1+||w_i||) w_i) with the norm taken before the update, then divergence
// checks.
void apply_weight_update(SymmetricNet& net, const Mat& loss_grad,
                         const TrainSchedule& s) {
  parallel_chunks(net.m(), s.threads, [&](int, std::int64_t a, std::int64_t b) {
    for (std::int64_t i = a; i < b; ++i) {
      double norm = net.W.row(i).norm();
      double keep = 1.0 - s.eta * s.lambda * (1.0 + norm);
      net.W.row(i) = keep * net.W.row(i) - s.eta * loss_grad.row(i);
    }
  });
  double worst = net.W.rowwise().norm().maxCoeff();
  if (!std::isfinite(worst) || worst > s.max_row_norm)
    throw divergence_error("row norm " + std::to_string(worst) +
                           " exceeded the ceiling " +
                           std::to_string(s.max_row_norm));
}

Vec dense_unit(const SparseCodingTask& task) {
  Vec u = task.dict.is_identity() ? task.w_star : Vec(task.dict.M * task.w_star);
  double n = u.norm();
  return n > 0.0 ? Vec(u / n) : Vec(Vec::Zero(u.size()));
}

struct MetricsInputs {
  const SparseCodingTask* task;
  const MetricsOptions* opts;
  std::uint64_t seed;
  const Mat* w_ref;
  const std::vector<SurePair>* sure_pairs;
  Vec u_hat;
  int threads;
};

MetricsRow measure(const SymmetricNet& net, std::int64_t t,
                   const std::string& stage, const MetricsInputs& in) {
  MetricsRow row;
  row.t = t;
  row.stage = stage;
  row.b = net.b;
  row.sigma_rho = net.sigma_rho;
  row.max_row_norm = net.W.rows() ? net.W.rowwise().norm().maxCoeff() : 0.0;

  Rng eval_rng = Rng::substream(in.seed, stream::kEval,
                                static_cast<std::uint64_t>(t));
  SymmetricNetPredictor pred(net, RhoMode::fresh);
  EvalReport rep = evaluate(pred, *in.task, in.opts->attacks,
                            in.opts->n_samples, eval_rng);
  row.clean_err = rep.clean_error;
  row.robust_err.reserve(rep.attacks.size());
  for (const auto& a : rep.attacks) row.robust_err.push_back(a.robust_error);

  if (!in.sure_pairs->empty() && in.u_hat.size() == net.d()) {
    double acc = 0.0;
    for (const SurePair& p : *in.sure_pairs)
      acc += p.orient * net.W.row(p.neuron).dot(in.u_hat);
    row.dense_projection = acc / static_cast<double>(in.sure_pairs->size());
  }

  {
    std::vector<double> thetas(static_cast<std::size_t>(net.m()));
    for (int i = 0; i < net.m(); ++i)
      thetas[static_cast<std::size_t>(i)] = row_theta(*in.w_ref, net.W, i);
    row.median_theta_vs_ref = median_of(std::move(thetas));
  }

  if (in.opts->sparsity_samples > 0) {
    Rng srng = Rng::substream(in.seed, "sparsity",
                              static_cast<std::uint64_t>(t));
    std::int64_t active = 0;
    for (std::int64_t s = 0; s < in.opts->sparsity_samples; ++s) {
      LabeledExample ex = sample_example(*in.task, srng);
      Vec g = net.W * ex.x;
      for (int i = 0; i < net.m(); ++i) {
        double rho = srng.normal(0.0, net.sigma_rho);
        if (g[i] + rho - net.b >= 0.0) ++active;
        if (-g[i] + rho - net.b >= 0.0) ++active;
      }
    }
    row.activation_sparsity =
        static_cast<double>(active) /
        (static_cast<double>(in.opts->sparsity_samples) * 2.0 * net.m());
  }
  return row;
}

void record_lottery(std::vector<LotteryPoint>& trace, const SymmetricNet& net,
                    const SparseCodingTask& task,
                    const std::vector<SurePair>& pairs, std::int64_t t) {
  if (pairs.empty()) return;
  LotteryPoint pt;
  pt.t = t;
  pt.proj.reserve(pairs.size());
  for (const SurePair& p : pairs) {
    double v = task.dict.is_identity()
                   ? net.W(p.neuron, p.atom)
                   : net.W.row(p.neuron).dot(task.dict.M.col(p.atom));
    pt.proj.push_back(v);
  }
  trace.push_back(std::move(pt));
}

double fresh_mean_loss(const SymmetricNet& net, const Mat& X, const Vec& y,
                       Rng& rho_rng, int threads) {
  Mat Rho(X.rows(), net.m());
  rho_rng.fill_normal(Rho, net.sigma_rho, threads);
  Mat G = batch_preacts(net, X, threads);
  Vec f = batch_forward(net, G, Rho, threads);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i)
    acc += logistic_loss(y[i] * f[i]);
  return X.rows() ? acc / static_cast<double>(X.rows()) : 0.0;
}

}  // namespace

double sigma_rho_value(const TrainSchedule& s, double b, bool late, int d) {
  double ln_d = std::log(static_cast<double>(d));
  return late ? s.kappa_rho * b / ln_d : s.kappa_rho * b / std::sqrt(ln_d);
}

double clean_step(SymmetricNet& net, const Mat& X, const Vec& y,
                  const Mat& Rho, const TrainSchedule& s) {
  BatchLossGrad lg = batch_loss_grad(net, X, y, Rho, s.threads);
  if (!std::isfinite(lg.mean_loss))
    throw divergence_error("non-finite training loss");
  apply_weight_update(net, lg.grad, s);
  net.b = std::min(net.b + s.eta * s.bias_rate, s.b_cap);
  return lg.mean_loss;
}

double adv_step(SymmetricNet& net, const SparseCodingTask& task, const Mat& X,
                const Vec& y, const Mat& Rho, const AttackSpec& attack,
                const TrainSchedule& s) {
  Mat delta = batch_attack_deltas(net, task, X, y, attack, s.threads);
  Mat Xa = X + delta;
  BatchLossGrad lg = batch_loss_grad(net, Xa, y, Rho, s.threads);
  if (!std::isfinite(lg.mean_loss))
    throw divergence_error("non-finite adversarial training loss");
  apply_weight_update(net, lg.grad, s);
  return lg.mean_loss;
}

CleanTrainResult clean_train(const SparseCodingTask& task, const Dataset& data,
                             const TrainSchedule& sched, std::uint64_t seed,
                             const MetricsOptions& opts,
                             const SureClassifier& classify) {
  const int d = task.d();
  if (sched.t_f < 0) throw config_error("t_f must be >= 0");
  if (sched.b0 >= sched.b_cap)
    throw config_error("initial bias must sit below b_cap");

  CleanTrainResult out;
  Rng init_rng = Rng::substream(seed, stream::kInit);
  SymmetricNet net =
      init_symmetric_net(sched.m, d, sched.sigma0, sched.b0, 0.0, init_rng);
  bool late = sched.t_a >= 0 ? (0 > sched.t_a) : false;
  net.sigma_rho = sigma_rho_value(sched, net.b, late, d);
  out.init_net = net;
  if (classify) out.sure_pairs = classify(net.W);

  MetricsInputs mi{&task, &opts, seed, &out.init_net.W, &out.sure_pairs,
                   dense_unit(task), sched.threads};

  Rng rho_rng = Rng::substream(seed, stream::kTrainRho);
  const std::int64_t n_full = data.n();
  const bool sgd = sched.batch > 0 && sched.batch < n_full;
  Mat Rho(sgd ? sched.batch : n_full, sched.m);
  Mat Xb;
  Vec yb;

  for (std::int64_t t = 0; t < sched.t_f; ++t) {
    const Mat* X = &data.X;
    const Vec* y = &data.y;
    if (sgd) {
      Rng brng = Rng::substream(seed, "batch", static_cast<std::uint64_t>(t));
      Xb.resize(sched.batch, d);
      yb.resize(sched.batch);
      for (std::int64_t r = 0; r < sched.batch; ++r) {
        auto idx = static_cast<std::int64_t>(brng.uniform() *
                                             static_cast<double>(n_full));
        idx = std::min(idx, n_full - 1);
        Xb.row(r) = data.X.row(idx);
        yb[r] = data.y[idx];
      }
      X = &Xb;
      y = &yb;
    }
    rho_rng.fill_normal(Rho, net.sigma_rho, sched.threads);

    bool metrics_now = sched.eval_every > 0 && t % sched.eval_every == 0;
    double reg_pre = metrics_now ? regularizer_value(net.W) : 0.0;
    MetricsRow row;
    if (metrics_now) {
      row = measure(net, t, "clean", mi);
      record_lottery(out.lottery, net, task, out.sure_pairs, t);
      if (opts.snapshot) opts.snapshot(net, t);
    }

    double loss;
    try {
      loss = clean_step(net, *X, *y, Rho, sched);
    } catch (const divergence_error& e) {
      throw divergence_error("clean iteration " + std::to_string(t) + ": " +
                             e.what());
    }
    if (metrics_now) {
      row.train_loss = loss;
      row.train_obj = loss + sched.lambda * reg_pre;
      out.metrics.push_back(std::move(row));
    }

    if (!late) {
      late = sched.t_a >= 0 ? (t + 1 > sched.t_a)
                            : (net.b >= sched.b_cap - 1e-15);
    }
    net.sigma_rho = sigma_rho_value(sched, net.b, late, d);
  }

  MetricsRow last = measure(net, sched.t_f, "clean", mi);
  last.train_loss = fresh_mean_loss(net, data.X, data.y, rho_rng, sched.threads);
  last.train_obj = last.train_loss + sched.lambda * regularizer_value(net.W);
  out.metrics.push_back(std::move(last));
  record_lottery(out.lottery, net, task, out.sure_pairs, sched.t_f);
  if (opts.snapshot) opts.snapshot(net, sched.t_f);

  out.net = std::move(net);
  out.late_phase = late;
  return out;
}

AdvTrainResult adv_train(const SparseCodingTask& task, const Dataset& data,
                         const SymmetricNet& start, const TrainSchedule& sched,
                         std::uint64_t seed, const AttackSpec& attack,
                         const MetricsOptions& opts, const Mat& W_ref,
                         const std::vector<SurePair>& sure_pairs,
                         std::int64_t t0, bool late_phase) {
  if (sched.t_g < 0) throw config_error("t_g must be >= 0");
  AdvTrainResult out;
  SymmetricNet net = start;
  // Bias and sigma_rho stay frozen throughout the adversarial stage.
  net.sigma_rho = sigma_rho_value(sched, net.b, late_phase, task.d());

  MetricsInputs mi{&task, &opts, seed, &W_ref, &sure_pairs, dense_unit(task),
                   sched.threads};
  Rng rho_rng = Rng::substream(seed, "adv-rho");
  Mat Rho(data.n(), sched.m);

  for (std::int64_t t = 0; t < sched.t_g; ++t) {
    rho_rng.fill_normal(Rho, net.sigma_rho, sched.threads);
    std::int64_t gt = t0 + t;
    bool metrics_now = sched.eval_every > 0 && t % sched.eval_every == 0;
    double reg_pre = metrics_now ? regularizer_value(net.W) : 0.0;
    MetricsRow row;
    if (metrics_now) {
      row = measure(net, gt, "adv", mi);
      record_lottery(out.lottery, net, task, sure_pairs, gt);
      if (opts.snapshot) opts.snapshot(net, gt);
    }
    double loss;
    try {
      loss = adv_step(net, task, data.X, data.y, Rho, attack, sched);
    } catch (const divergence_error& e) {
      throw divergence_error("adversarial iteration " + std::to_string(t) +
                             ": " + e.what());
    }
    if (metrics_now) {
      row.train_loss = loss;
      row.train_obj = loss + sched.lambda * reg_pre;
      out.metrics.push_back(std::move(row));
    }
  }

  MetricsRow last = measure(net, t0 + sched.t_g, "adv", mi);
  last.train_loss = fresh_mean_loss(net, data.X, data.y, rho_rng, sched.threads);
  last.train_obj = last.train_loss + sched.lambda * regularizer_value(net.W);
  out.metrics.push_back(std::move(last));
  record_lottery(out.lottery, net, task, sure_pairs, t0 + sched.t_g);
  if (opts.snapshot) opts.snapshot(net, t0 + sched.t_g);

  out.net = std::move(net);
  return out;
}

}  // namespace purelab
