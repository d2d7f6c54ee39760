#include "purelab/network.hpp"

#include <cmath>

#include "purelab/parallel.hpp"

namespace purelab {

SymmetricNet init_symmetric_net(int m, int d, double sigma0, double b0,
                                double sigma_rho, Rng& rng) {
  if (m < 1 || d < 1) throw config_error("network sizes must be positive");
  if (sigma0 < 0.0 || b0 < 0.0 || sigma_rho < 0.0)
    throw config_error("sigma0, b0, sigma_rho must be >= 0");
  SymmetricNet net;
  net.W.resize(m, d);
  rng.fill_normal(net.W, sigma0);
  net.b = b0;
  net.sigma_rho = sigma_rho;
  return net;
}

double smoothed_relu(double a, double sigma) {
  if (sigma <= 0.0) return a > 0.0 ? a : 0.0;
  double u = a / sigma;
  return a * norm_cdf(u) + sigma * norm_pdf(u);
}

double forward(const SymmetricNet& net, const Vec& x, const Vec& rho) {
  Vec g = net.W * x;
  double f = 0.0;
  for (int i = 0; i < net.m(); ++i) {
    double p = g[i] + rho[i] - net.b;
    double q = -g[i] + rho[i] - net.b;
    if (p > 0.0) f += p;
    if (q > 0.0) f -= q;
  }
  return f;
}

double forward_smoothed(const SymmetricNet& net, const Vec& x) {
  Vec g = net.W * x;
  double f = 0.0;
  for (int i = 0; i < net.m(); ++i)
    f += smoothed_relu(g[i] - net.b, net.sigma_rho) -
         smoothed_relu(-g[i] - net.b, net.sigma_rho);
  return f;
}

Vec grad_input_smoothed(const SymmetricNet& net, const Vec& x) {
  Vec g = net.W * x;
  Vec coef(net.m());
  double sigma = net.sigma_rho;
  for (int i = 0; i < net.m(); ++i) {
    if (sigma > 0.0) {
      coef[i] = norm_cdf((g[i] - net.b) / sigma) +
                norm_cdf((-g[i] - net.b) / sigma);
    } else {
      coef[i] = (g[i] - net.b >= 0.0 ? 1.0 : 0.0) +
                (-g[i] - net.b >= 0.0 ? 1.0 : 0.0);
    }
  }
  return net.W.transpose() * coef;
}

Mat loss_grad_weights(const SymmetricNet& net, const Vec& x, double y,
                      const Vec& rho) {
  Vec g = net.W * x;
  double f = forward(net, x, rho);
  double lp = logistic_lprime(y * f);
  Mat grad(net.m(), net.d());
  for (int i = 0; i < net.m(); ++i) {
    double ind = (g[i] + rho[i] - net.b >= 0.0 ? 1.0 : 0.0) +
                 (-g[i] + rho[i] - net.b >= 0.0 ? 1.0 : 0.0);
    grad.row(i) = (-y * lp * ind) * x.transpose();
  }
  return grad;
}

double regularizer_value(const Mat& W) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    double n = W.row(i).norm();
    total += 0.5 * n * n + n * n * n / 3.0;
  }
  return total;
}

Mat regularizer_grad(const Mat& W) {
  Mat grad(W.rows(), W.cols());
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    grad.row(i) = (1.0 + W.row(i).norm()) * W.row(i);
  return grad;
}

Mat batch_preacts(const SymmetricNet& net, const Mat& X, int threads) {
  Mat G(X.rows(), net.m());
  parallel_chunks(X.rows(), threads, [&](int, std::int64_t a, std::int64_t b) {
    G.middleRows(a, b - a).noalias() =
        X.middleRows(a, b - a) * net.W.transpose();
  });
  return G;
}

Vec batch_forward(const SymmetricNet& net, const Mat& G, const Mat& Rho,
                  int threads) {
  Vec f(G.rows());
  int m = net.m();
  double bb = net.b;
  parallel_chunks(G.rows(), threads, [&](int, std::int64_t a, std::int64_t b) {
    for (std::int64_t n = a; n < b; ++n) {
      const double* g = G.row(n).data();
      const double* r = Rho.row(n).data();
      double acc = 0.0;
      for (int i = 0; i < m; ++i) {
        double p = g[i] + r[i] - bb;
        double q = -g[i] + r[i] - bb;
        if (p > 0.0) acc += p;
        if (q > 0.0) acc -= q;
      }
      f[n] = acc;
    }
  });
  return f;
}

Vec batch_forward_smoothed(const SymmetricNet& net, const Mat& G, int threads) {
  Vec f(G.rows());
  int m = net.m();
  double bb = net.b, sigma = net.sigma_rho;
  parallel_chunks(G.rows(), threads, [&](int, std::int64_t a, std::int64_t b) {
    for (std::int64_t n = a; n < b; ++n) {
      const double* g = G.row(n).data();
      double acc = 0.0;
      for (int i = 0; i < m; ++i)
        acc += smoothed_relu(g[i] - bb, sigma) -
               smoothed_relu(-g[i] - bb, sigma);
      f[n] = acc;
    }
  });
  return f;
}

Mat batch_input_grads_smoothed(const SymmetricNet& net, const Mat& X,
                               const Mat& G, int threads) {
  Mat C(G.rows(), net.m());
  int m = net.m();
  double bb = net.b, sigma = net.sigma_rho;
  parallel_chunks(G.rows(), threads, [&](int, std::int64_t a, std::int64_t b) {
    for (std::int64_t n = a; n < b; ++n) {
      const double* g = G.row(n).data();
      double* c = C.row(n).data();
      for (int i = 0; i < m; ++i) {
        if (sigma > 0.0) {
          c[i] = norm_cdf((g[i] - bb) / sigma) + norm_cdf((-g[i] - bb) / sigma);
        } else {
          c[i] = (g[i] - bb >= 0.0 ? 1.0 : 0.0) +
                 (-g[i] - bb >= 0.0 ? 1.0 : 0.0);
        }
      }
    }
  });
  Mat D(X.rows(), net.d());
  parallel_chunks(X.rows(), threads, [&](int, std::int64_t a, std::int64_t b) {
    D.middleRows(a, b - a).noalias() = C.middleRows(a, b - a) * net.W;
  });
  return D;
}

BatchLossGrad batch_loss_grad(const SymmetricNet& net, const Mat& X,
                              const Vec& y, const Mat& Rho, int threads) {
  std::int64_t n = X.rows();
  int m = net.m();
  double bb = net.b;
  Mat G = batch_preacts(net, X, threads);
  BatchLossGrad out;
  out.f.resize(n);
  Mat C(n, m);  // C[n,i] = -y lprime (1_+ + 1_-) / n
  std::vector<double> loss_partial(static_cast<size_t>(kChunkGrid), 0.0);
  double invn = 1.0 / static_cast<double>(n);
  parallel_chunks(n, threads, [&](int c, std::int64_t a, std::int64_t b) {
    double acc_loss = 0.0;
    for (std::int64_t r = a; r < b; ++r) {
      const double* g = G.row(r).data();
      const double* rho = Rho.row(r).data();
      double* cr = C.row(r).data();
      double f = 0.0;
      for (int i = 0; i < m; ++i) {
        double p = g[i] + rho[i] - bb;
        double q = -g[i] + rho[i] - bb;
        if (p > 0.0) f += p;
        if (q > 0.0) f -= q;
        cr[i] = (p >= 0.0 ? 1.0 : 0.0) + (q >= 0.0 ? 1.0 : 0.0);
      }
      out.f[r] = f;
      double u = y[r] * f;
      acc_loss += logistic_loss(u);
      double scale = -y[r] * logistic_lprime(u) * invn;
      for (int i = 0; i < m; ++i) cr[i] *= scale;
    }
    loss_partial[static_cast<size_t>(c)] = acc_loss;
  });
  double loss = 0.0;
  for (double v : loss_partial) loss += v;
  out.mean_loss = loss * invn;
  // grad row i = sum_n C[n,i] x_n; chunk over output rows (no cross-chunk
  // reduction, so totals do not depend on the thread count).
  out.grad.resize(m, net.d());
  parallel_chunks(m, threads, [&](int, std::int64_t a, std::int64_t b) {
    out.grad.middleRows(a, b - a).noalias() =
        C.middleCols(a, b - a).transpose() * X;
  });
  return out;
}

double objective(const SymmetricNet& net, const Mat& X, const Vec& y,
                 const Mat& Rho, double lambda, int threads) {
  Mat G = batch_preacts(net, X, threads);
  Vec f = batch_forward(net, G, Rho, threads);
  std::vector<double> partial(static_cast<size_t>(kChunkGrid), 0.0);
  parallel_chunks(X.rows(), threads, [&](int c, std::int64_t a, std::int64_t b) {
    double acc = 0.0;
    for (std::int64_t r = a; r < b; ++r) acc += logistic_loss(y[r] * f[r]);
    partial[static_cast<size_t>(c)] = acc;
  });
  double loss = 0.0;
  for (double v : partial) loss += v;
  double n = static_cast<double>(X.rows());
  return (n > 0 ? loss / n : 0.0) + lambda * regularizer_value(net.W);
}

}  // namespace purelab
