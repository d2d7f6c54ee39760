#include "purelab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace purelab {

double theta(const Vec& u, const Vec& v) {
  double nu = u.norm(), nv = v.norm();
  if (nu <= 0.0 || nv <= 0.0) return 0.0;
  return std::fabs(u.dot(v)) / (nu * nv);
}

double median_value(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + h, v.end());
  double hi = v[h];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + h - 1, v.end());
  return 0.5 * (v[h - 1] + hi);
}

std::vector<NeuronSets::SurePairRef> NeuronSets::sure_union() const {
  std::vector<SurePairRef> out;
  for (int j = 0; j < d; ++j)
    for (const SureEntry& e : sure[static_cast<std::size_t>(j)])
      out.push_back({e.neuron, j, e.orient});
  return out;
}

NeuronSets classify_neurons(const Mat& W, const Dictionary& dict,
                            const Vec& w_star, const NeuronSetParams& params) {
  const int m = static_cast<int>(W.rows());
  const int d = dict.d;
  if (W.cols() != d) throw config_error("weight/dictionary size mismatch");
  if (params.sigma_w <= 0.0) throw config_error("sigma_w must be positive");
  if (!(params.c1 > params.c2 && params.c2 > 0.0))
    throw config_error("neuron-set thresholds need c1 > c2 > 0");

  const double ln_d = std::log(static_cast<double>(d));
  const double sw2 = params.sigma_w * params.sigma_w;
  const double thr_sure = (params.c1 + params.c2) * sw2 * ln_d;
  const double thr_pot = (params.c1 - params.c2) * sw2 * ln_d;
  // Desk-scale count bounds for the epsilon-tail sets.
  const double thr_mid = 2.0 * sw2 * std::sqrt(ln_d);
  const auto mid_cap = static_cast<std::int64_t>(
      std::floor(std::pow(2.0, -std::sqrt(ln_d)) * d));
  const double small_abs = params.sigma_w / ln_d;
  const auto small_min = static_cast<std::int64_t>(
      std::ceil(params.ept_small_frac * d / ln_d));
  // Bias-scale thresholds.
  const double b = params.b;
  const double k = static_cast<double>(params.k);
  const double thr_sure_plus = 4.0 * k * b * b;
  const double thr_pot_plus =
      params.beta > 0.0 ? (k / (d * params.beta)) * b
                        : std::numeric_limits<double>::infinity();

  Mat P = dict.is_identity() ? W : Mat(W * dict.M);  // P(i,j) = <w_i, M_j>

  NeuronSets sets;
  sets.m = m;
  sets.d = d;
  sets.sure.resize(static_cast<std::size_t>(d));
  sets.pot.resize(static_cast<std::size_t>(d));
  sets.sure_plus.resize(static_cast<std::size_t>(d));
  sets.pot_plus.resize(static_cast<std::size_t>(d));

  for (int i = 0; i < m; ++i) {
    const double row_sq = W.row(i).squaredNorm();
    std::int64_t n_pot = 0, n_mid = 0, n_small = 0, n_above_small = 0;
    int sure_candidate = -1;
    bool exclusive = true;
    for (int j = 0; j < d; ++j) {
      const double p = P(i, j);
      const double p2 = p * p;
      if (p2 >= thr_pot) {
        ++n_pot;
        sets.pot[static_cast<std::size_t>(j)].push_back(i);
        if (p2 >= thr_sure && sure_candidate < 0)
          sure_candidate = j;
        else
          exclusive = false;  // a second pot-level coordinate
      }
      if (p2 > thr_mid) ++n_mid;
      if (std::fabs(p) <= small_abs)
        ++n_small;
      else
        ++n_above_small;
      if (b > 0.0) {
        if (std::fabs(p) >= thr_pot_plus)
          sets.pot_plus[static_cast<std::size_t>(j)].push_back(i);
        if (p2 >= thr_sure_plus && thr_sure_plus > 0.0) {
          double orient = sign_pos(p) * sign_pos(w_star[j]);
          if (!params.strict_sign || orient > 0.0)
            sets.sure_plus[static_cast<std::size_t>(j)].push_back(
                {i, params.strict_sign ? 1.0 : orient});
        }
      }
    }
    if (sure_candidate >= 0 && exclusive) {
      const double p = P(i, sure_candidate);
      double orient = sign_pos(p) * sign_pos(w_star[sure_candidate]);
      if (!params.strict_sign || orient > 0.0)
        sets.sure[static_cast<std::size_t>(sure_candidate)].push_back(
            {i, params.strict_sign ? 1.0 : orient});
    }
    // Epsilon-tail memberships.
    if (row_sq <= 2.0 * sw2 * d && n_pot <= params.ept_large_cap &&
        n_mid <= mid_cap && n_small >= small_min)
      sets.ept.push_back(i);
    if (row_sq <= sw2 * d / (ln_d * ln_d) &&
        n_above_small <= params.ept_large_cap)
      sets.ept_plus.push_back(i);
    if (params.beta > 0.0 && row_sq <= sw2 / (params.beta * params.beta))
      sets.ept_pp.push_back(i);
  }
  return sets;
}

PurityReport purity_report(const Mat& W_init, const Mat& W_clean,
                           const Mat& W_robust) {
  const auto m = W_init.rows();
  if (W_clean.rows() != m || W_robust.rows() != m ||
      W_clean.cols() != W_init.cols() || W_robust.cols() != W_init.cols())
    throw config_error("purity report needs three same-shape checkpoints");
  PurityReport rep;
  rep.theta_init_clean.reserve(static_cast<std::size_t>(m));
  rep.theta_init_robust.reserve(static_cast<std::size_t>(m));
  rep.theta_clean_robust.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    rep.theta_init_clean.push_back(theta(W_init.row(i), W_clean.row(i)));
    rep.theta_init_robust.push_back(theta(W_init.row(i), W_robust.row(i)));
    rep.theta_clean_robust.push_back(theta(W_clean.row(i), W_robust.row(i)));
  }
  rep.median_init_clean = median_value(rep.theta_init_clean);
  rep.median_init_robust = median_value(rep.theta_init_robust);
  rep.median_clean_robust = median_value(rep.theta_clean_robust);

  Mat N = W_clean;
  for (Eigen::Index i = 0; i < m; ++i) {
    double norm = N.row(i).norm();
    if (norm > 0.0) N.row(i) /= norm;
  }
  Mat G = N * N.transpose();
  std::vector<double> off;
  off.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j)
      off.push_back(std::fabs(G(i, j)));
  rep.cross_neuron_median = median_value(std::move(off));
  return rep;
}

DenseProjectionReport dense_projection(const Mat& W, const Dictionary& dict,
                                       const Vec& w_star,
                                       const std::vector<SureEntry>& subset) {
  Vec u = dict.is_identity() ? w_star : Vec(dict.M * w_star);
  double nu = u.norm();
  if (nu <= 0.0) throw std::invalid_argument("dense projection needs M w* != 0");
  u /= nu;
  DenseProjectionReport rep;
  rep.per_neuron.reserve(subset.size());
  double acc = 0.0;
  for (const SureEntry& e : subset) {
    double v = e.orient * W.row(e.neuron).dot(u);
    rep.per_neuron.push_back(v);
    acc += v;
  }
  if (!rep.per_neuron.empty()) {
    rep.mean = acc / static_cast<double>(rep.per_neuron.size());
    rep.median = median_value(rep.per_neuron);
  }
  return rep;
}

DecompositionReport decompose_neurons(const Mat& W, const Dictionary& dict,
                                      const Vec& w_star, double coeff_threshold,
                                      int support_cap) {
  const int m = static_cast<int>(W.rows());
  const int d = dict.d;
  Mat P = dict.is_identity() ? W : Mat(W * dict.M);
  Vec u = dict.is_identity() ? w_star : Vec(dict.M * w_star);
  double nu = u.norm();
  DecompositionReport rep;
  rep.support_cap = support_cap;
  rep.neurons.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    NeuronDecomposition& nd = rep.neurons[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j) {
      double p = P(i, j);
      if (std::fabs(p) >= coeff_threshold) {
        nd.support.push_back(j);
        nd.coeff.push_back(p);
      } else {
        nd.off_support_max = std::max(nd.off_support_max, std::fabs(p));
      }
    }
    nd.dense_component = nu > 0.0 ? W.row(i).dot(u) / nu : 0.0;
    if (static_cast<int>(nd.support.size()) > support_cap)
      rep.cap_exceeded = true;
  }
  return rep;
}

double activation_sparsity(const SymmetricNet& net, const SparseCodingTask& task,
                           std::int64_t n_samples, Rng& rng) {
  if (n_samples < 1) throw config_error("activation sparsity needs n >= 1");
  std::int64_t active = 0;
  for (std::int64_t s = 0; s < n_samples; ++s) {
    LabeledExample ex = sample_example(task, rng);
    Vec g = net.W * ex.x;
    for (int i = 0; i < net.m(); ++i) {
      double rho = rng.normal(0.0, net.sigma_rho);
      if (g[i] + rho - net.b >= 0.0) ++active;
      if (-g[i] + rho - net.b >= 0.0) ++active;
    }
  }
  return static_cast<double>(active) /
         (static_cast<double>(n_samples) * 2.0 * net.m());
}

LotteryReport lottery_winners(const std::vector<NeuronSets::SurePairRef>& pairs,
                              const Mat& W_final, const Dictionary& dict) {
  Mat P = dict.is_identity() ? W_final : Mat(W_final * dict.M);
  LotteryReport rep;
  rep.pairs = static_cast<std::int64_t>(pairs.size());
  rep.winner_flags.reserve(pairs.size());
  for (const auto& pr : pairs) {
    Eigen::Index argmax = 0;
    P.row(pr.neuron).cwiseAbs2().maxCoeff(&argmax);
    int won = argmax == pr.atom ? 1 : 0;
    rep.winners += won;
    rep.winner_flags.push_back(won);
  }
  return rep;
}

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

double top_singular_value_sq(const Mat& A) {
  // Power iteration on A^T A with a fixed deterministic start.
  Vec v = Vec::Ones(A.cols());
  v /= v.norm();
  double lam = 0.0;
  for (int it = 0; it < 200; ++it) {
    Vec w = A.transpose() * (A * v);
    double n = w.norm();
    if (n <= 0.0) return 0.0;
    w /= n;
    double lam_new = (A * w).squaredNorm();
    if (it > 10 && std::fabs(lam_new - lam) <= 1e-13 * std::max(1.0, lam_new)) {
      return lam_new;
    }
    lam = lam_new;
    v = std::move(w);
  }
  return lam;
}

}  // namespace

LassoResult lasso_reconstruct(const Mat& A, const Vec& x,
                              const LassoParams& params) {
  if (A.rows() != x.size()) throw config_error("lasso dimension mismatch");
  if (params.lambda1 < 0.0) throw config_error("lambda1 must be >= 0");
  LassoResult res;
  res.code = Vec::Zero(A.cols());
  double L = top_singular_value_sq(A);
  if (L <= 0.0) {  // zero dictionary: code stays zero
    res.converged = true;
    res.residual = x.norm();
    res.objective = res.residual * res.residual;
    return res;
  }
  const double step = 1.0 / L;
  const double shrink = 0.5 * params.lambda1 * step;
  Vec r = A * res.code - x;
  double obj = r.squaredNorm() + params.lambda1 * res.code.lpNorm<1>();
  for (int it = 0; it < params.max_iter; ++it) {
    Vec g = A.transpose() * r;
    for (Eigen::Index j = 0; j < res.code.size(); ++j)
      res.code[j] = soft_threshold(res.code[j] - step * g[j], shrink);
    r = A * res.code - x;
    double obj_new = r.squaredNorm() + params.lambda1 * res.code.lpNorm<1>();
    res.iterations = it + 1;
    if (obj - obj_new <= params.tol * std::max(1.0, std::fabs(obj_new)) &&
        obj_new <= obj + 1e-12) {
      obj = obj_new;
      res.converged = true;
      break;
    }
    obj = obj_new;
  }
  res.objective = obj;
  res.residual = r.norm();
  for (Eigen::Index j = 0; j < res.code.size(); ++j)
    if (std::fabs(res.code[j]) > 1e-6) ++res.nonzeros;
  res.nonzero_frac = res.code.size()
                         ? static_cast<double>(res.nonzeros) /
                               static_cast<double>(res.code.size())
                         : 0.0;
  return res;
}

double lasso_kkt_violation(const Mat& A, const Vec& x, const Vec& y,
                           double lambda1) {
  Vec g = A.transpose() * (A * y - x);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    double v;
    if (y[j] != 0.0)
      v = std::fabs(2.0 * g[j] + lambda1 * sign_zero(y[j]));
    else
      v = std::max(0.0, std::fabs(2.0 * g[j]) - lambda1);
    worst = std::max(worst, v);
  }
  return worst;
}

Mat weight_atoms(const Mat& W, bool normalize) {
  Mat A = W.transpose();
  if (normalize) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      double n = A.col(j).norm();
      if (n > 0.0) A.col(j) /= n;
    }
  }
  return A;
}

double reconstruction_sparsity_ordering(const Mat& A_clean, const Mat& A_robust,
                                        const Mat& inputs,
                                        const std::vector<double>& lambda_grid,
                                        int max_iter) {
  if (lambda_grid.empty()) throw config_error("need a lambda grid");
  std::int64_t favorable = 0;
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    Vec x = inputs.row(r).transpose();
    // Residual/sparsity curves on both dictionaries.
    std::vector<std::pair<double, std::int64_t>> clean, robust;
    for (double lam : lambda_grid) {
      LassoParams p;
      p.lambda1 = lam;
      p.max_iter = max_iter;
      LassoResult rc = lasso_reconstruct(A_clean, x, p);
      LassoResult rr = lasso_reconstruct(A_robust, x, p);
      clean.emplace_back(rc.residual, rc.nonzeros);
      robust.emplace_back(rr.residual, rr.nonzeros);
    }
    // Robust wins if each of its codes is no denser than every clean code
    // that achieves at most the same residual.
    bool ok = true;
    for (const auto& [res_r, nnz_r] : robust) {
      std::int64_t best_clean = std::numeric_limits<std::int64_t>::max();
      for (const auto& [res_c, nnz_c] : clean)
        if (res_c <= res_r) best_clean = std::min(best_clean, nnz_c);
      if (best_clean != std::numeric_limits<std::int64_t>::max() &&
          nnz_r > best_clean) {
        ok = false;
        break;
      }
    }
    if (ok) ++favorable;
  }
  return inputs.rows() ? static_cast<double>(favorable) /
                             static_cast<double>(inputs.rows())
                       : 0.0;
}

}  // namespace purelab
