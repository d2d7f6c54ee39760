#include "purelab/ntk.hpp"

#include <cmath>
#include <cstdint>

#include "purelab/eval.hpp"
#include "purelab/parallel.hpp"

namespace purelab {

namespace {

double feature_of(double u, double b, double sigma) {
  if (sigma == 0.0) return u - b >= 0.0 ? 1.0 : 0.0;
  return norm_cdf((u - b) / sigma);
}

// Fp(n,i) = Phi((<w_i,x_n> - b_i)/sigma_i), Fm with the sign of the
// preactivation flipped. sigma_i = 0 degrades Phi to 1[. >= 0].
void fill_features(const Mat& U, const Vec& b, const Vec& sig, Mat& Fp,
                   Mat& Fm, int threads) {
  const std::int64_t n = U.rows();
  const std::int64_t m = U.cols();
  Fp.resize(n, m);
  Fm.resize(n, m);
  parallel_chunks(n, threads,
                  [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
                    for (std::int64_t r = lo; r < hi; ++r)
                      for (std::int64_t i = 0; i < m; ++i) {
                        Fp(r, i) = feature_of(U(r, i), b[i], sig[i]);
                        Fm(r, i) = feature_of(-U(r, i), b[i], sig[i]);
                      }
                  });
}

// A (n x k) times B^T (k x r), chunked over output rows so the result is
// bitwise identical for every thread count.
Mat gemm_bt(const Mat& A, const Mat& B, int threads) {
  Mat out(A.rows(), B.rows());
  parallel_chunks(A.rows(), threads,
                  [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
                    out.middleRows(lo, hi - lo).noalias() =
                        A.middleRows(lo, hi - lo) * B.transpose();
                  });
  return out;
}

// C^T (m x n) times X (n x d), chunked over output rows (columns of C).
Mat gemm_ct(const Mat& C, const Mat& X, int threads) {
  Mat out(C.cols(), X.cols());
  parallel_chunks(C.cols(), threads,
                  [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
                    out.middleRows(lo, hi - lo).noalias() =
                        C.middleCols(lo, hi - lo).transpose() * X;
                  });
  return out;
}

Vec batch_predict(const Mat& Gp, const Mat& Gm, const Mat& Fp, const Mat& Fm) {
  return ((Gp.array() * Fp.array()).rowwise().sum() +
          (Gm.array() * Fm.array()).rowwise().sum())
      .matrix();
}

double error_rate(const Vec& preds, const Vec& y) {
  std::int64_t wrong = 0;
  for (std::int64_t n = 0; n < preds.size(); ++n)
    if (sign_pos(preds[n]) != y[n]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(preds.size());
}

}  // namespace

NtkModel init_ntk(int d, const NtkConfig& cfg, Rng& rng) {
  if (cfg.m < 1 || d < 1) throw config_error("ntk: m and d must be >= 1");
  if (cfg.sigma_rho < 0.0) throw config_error("ntk: sigma_rho must be >= 0");
  NtkModel model;
  model.W.resize(cfg.m, d);
  rng.fill_normal(model.W.data(), static_cast<std::int64_t>(cfg.m) * d, 1.0,
                  cfg.threads);
  model.b_vec = Vec::Constant(cfg.m, cfg.b);
  model.sigma_vec = Vec::Constant(cfg.m, cfg.sigma_rho);
  model.Vp = Mat::Zero(cfg.m, d);
  model.Vm = Mat::Zero(cfg.m, d);
  model.single_v = cfg.single_v;
  return model;
}

double ntk_predict(const NtkModel& model, const Vec& x) {
  const Vec u = model.W * x;
  double out = 0.0;
  for (int i = 0; i < model.m(); ++i) {
    const double fp = feature_of(u[i], model.b_vec[i], model.sigma_vec[i]);
    const double fm = feature_of(-u[i], model.b_vec[i], model.sigma_vec[i]);
    out += model.Vp.row(i).dot(x) * fp + model.Vm.row(i).dot(x) * fm;
  }
  return out;
}

Vec ntk_input_grad(const NtkModel& model, const Vec& x) {
  const Vec u = model.W * x;
  Vec g = Vec::Zero(model.d());
  for (int i = 0; i < model.m(); ++i) {
    const double b = model.b_vec[i];
    const double sig = model.sigma_vec[i];
    const double fp = feature_of(u[i], b, sig);
    const double fm = feature_of(-u[i], b, sig);
    const double vpx = model.Vp.row(i).dot(x);
    const double vmx = model.Vm.row(i).dot(x);
    g += fp * model.Vp.row(i).transpose() + fm * model.Vm.row(i).transpose();
    if (sig > 0.0) {
      // d/dx of the Phi factors; zero when sigma = 0 (a.e.).
      const double c = (vpx * norm_pdf((u[i] - b) / sig) -
                        vmx * norm_pdf((-u[i] - b) / sig)) /
                       sig;
      g += c * model.W.row(i).transpose();
    }
  }
  return g;
}

NtkTrainResult train_ntk(const SparseCodingTask& task, const NtkConfig& cfg,
                         std::uint64_t seed) {
  if (cfg.eta <= 0.0) throw config_error("ntk: eta must be positive");
  if (cfg.iters < 0) throw config_error("ntk: iters must be >= 0");
  if (cfg.n_train < 1) throw config_error("ntk: n_train must be >= 1");

  Rng init_rng(derive_seed(seed, stream::kNtk));
  NtkTrainResult res;
  res.model = init_ntk(task.d(), cfg, init_rng);
  NtkModel& model = res.model;

  Rng data_rng(derive_seed(seed, "ntk-data"));
  const Dataset train = sample_dataset(task, cfg.n_train, data_rng);
  Rng hold_rng(derive_seed(seed, "ntk-eval"));
  const Dataset held = sample_dataset(task, 1000, hold_rng);

  const int threads = cfg.threads;
  Mat Fp, Fm, Hp, Hm;
  {
    const Mat U = gemm_bt(train.X, model.W, threads);
    fill_features(U, model.b_vec, model.sigma_vec, Fp, Fm, threads);
    const Mat Uh = gemm_bt(held.X, model.W, threads);
    fill_features(Uh, model.b_vec, model.sigma_vec, Hp, Hm, threads);
  }
  if (model.single_v) {
    Fp += Fm;  // tied coefficients see the summed feature pair
    Hp += Hm;
  }

  const auto n = static_cast<double>(train.n());
  const std::int64_t every = cfg.eval_every > 0 ? cfg.eval_every : 1;

  auto held_error = [&]() {
    const Mat Gp = gemm_bt(held.X, model.Vp, threads);
    Vec p;
    if (model.single_v) {
      p = (Gp.array() * Hp.array()).rowwise().sum().matrix();
    } else {
      const Mat Gm = gemm_bt(held.X, model.Vm, threads);
      p = batch_predict(Gp, Gm, Hp, Hm);
    }
    return error_rate(p, held.y);
  };

  double last_loss = std::log(2.0);
  for (std::int64_t t = 0; t <= cfg.iters; ++t) {
    const Mat Gp = gemm_bt(train.X, model.Vp, threads);
    Vec preds;
    Mat Gm;
    if (model.single_v) {
      preds = (Gp.array() * Fp.array()).rowwise().sum().matrix();
    } else {
      Gm = gemm_bt(train.X, model.Vm, threads);
      preds = batch_predict(Gp, Gm, Fp, Fm);
    }

    double loss = 0.0;
    Vec coef(train.n());
    for (std::int64_t r = 0; r < train.n(); ++r) {
      const double yf = train.y[r] * preds[r];
      loss += logistic_loss(yf);
      coef[r] = -train.y[r] * logistic_lprime(yf) / n;
    }
    loss /= n;
    if (!std::isfinite(loss))
      throw divergence_error("ntk: non-finite training loss");
    last_loss = loss;

    if (t % every == 0 || t == cfg.iters)
      res.metrics.push_back({t, loss, held_error()});
    if (t == cfg.iters) break;

    const Mat Cp = coef.asDiagonal() * Fp;
    const Mat Gradp = gemm_ct(Cp, train.X, threads);
    model.Vp -= cfg.eta * (Gradp + cfg.lambda * model.Vp);
    if (!model.single_v) {
      const Mat Cm = coef.asDiagonal() * Fm;
      const Mat Gradm = gemm_ct(Cm, train.X, threads);
      model.Vm -= cfg.eta * (Gradm + cfg.lambda * model.Vm);
    }
    if (!model.Vp.allFinite())
      throw divergence_error("ntk: non-finite coefficients");
  }
  if (model.single_v) model.Vm = model.Vp;
  res.final_loss = last_loss;
  return res;
}

}  // namespace purelab
