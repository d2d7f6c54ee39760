#include <cmath>

#include "doctest.h"
#include "purelab/network.hpp"

using namespace purelab;

namespace {

SymmetricNet random_net(int m, int d, double scale, double b, double sigma_rho,
                        std::uint64_t seed) {
  SymmetricNet net;
  net.W.resize(m, d);
  Rng rng(seed);
  rng.fill_normal(net.W, scale);
  net.b = b;
  net.sigma_rho = sigma_rho;
  return net;
}

double rho_margin(const SymmetricNet& net, const Vec& x, const Vec& rho) {
  double margin = 1e300;
  for (int i = 0; i < net.m(); ++i) {
    double g = net.W.row(i).dot(x);
    margin = std::min(margin, std::fabs(g + rho[i] - net.b));
    margin = std::min(margin, std::fabs(-g + rho[i] - net.b));
  }
  return margin;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("outputs are odd in the input for shared activation noise") {
    Rng rng(404);
    for (int rep = 0; rep < 1000; ++rep) {
      auto net = random_net(6, 5, 0.8, 0.3, 0.4, 1000 + rep);
      Vec x(5), rho(6);
      rng.fill_normal(x, 1.0);
      rng.fill_normal(rho, 0.4);
      CHECK(std::fabs(forward(net, x, rho) + forward(net, -x, rho)) <= 1e-12);
      CHECK(std::fabs(forward_smoothed(net, x) + forward_smoothed(net, -x)) <=
            1e-12);
    }
  }

  TEST_CASE("smoothed relu closed values and limits") {
    // Frozen against an independent evaluation of a Phi(a/s) + s phi(a/s).
    CHECK(smoothed_relu(0.0, 1.0) == doctest::Approx(0.3989422804014327).epsilon(1e-15));
    CHECK(smoothed_relu(0.7, 0.3) == doctest::Approx(0.7009958366880611).epsilon(1e-15));
    CHECK(smoothed_relu(2.0, 0.0) == 2.0);
    CHECK(smoothed_relu(-2.0, 0.0) == 0.0);
    CHECK(smoothed_relu(0.0, 0.0) == 0.0);
    // Deep tails collapse to relu.
    CHECK(smoothed_relu(50.0, 1.0) == doctest::Approx(50.0).epsilon(1e-15));
    CHECK(std::fabs(smoothed_relu(-50.0, 1.0)) <= 1e-300);
  }

  TEST_CASE("smoothed relu equals the noise average of relu") {
    Rng rng(88);
    for (double a : {-0.8, -0.1, 0.0, 0.2, 1.3}) {
      const double sigma = 0.5;
      const int n = 200000;
      double sum = 0.0, sumsq = 0.0;
      for (int i = 0; i < n; ++i) {
        double v = std::max(0.0, a + sigma * rng.normal());
        sum += v;
        sumsq += v * v;
      }
      double mean = sum / n;
      double se = std::sqrt(std::max(1e-30, sumsq / n - mean * mean) / n);
      CHECK(std::fabs(mean - smoothed_relu(a, sigma)) <= 4.0 * se + 1e-12);
    }
  }

  TEST_CASE("weight gradient matches central differences") {
    const int m = 4, d = 5;
    Rng rng(777);
    int accepted = 0;
    while (accepted < 20) {
      auto net = random_net(m, d, 1.0, 0.4, 0.3, 5000 + accepted * 7919);
      Vec x(d), rho(m);
      rng.fill_normal(x, 1.0);
      rng.fill_normal(rho, 0.3);
      double y = rng.rademacher();
      if (rho_margin(net, x, rho) < 1e-3) continue;  // keep clear of kinks
      ++accepted;
      Mat an = loss_grad_weights(net, x, y, rho);
      const double h = 1e-6;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) {
          auto up = net, dn = net;
          up.W(i, j) += h;
          dn.W(i, j) -= h;
          double fd = (logistic_loss(y * forward(up, x, rho)) -
                       logistic_loss(y * forward(dn, x, rho))) /
                      (2.0 * h);
          CHECK(std::fabs(fd - an(i, j)) <=
                1e-6 * std::max(1.0, std::fabs(an(i, j))));
        }
    }
  }

  TEST_CASE("weight gradient at zero weights has the closed form") {
    const int m = 3, d = 4;
    SymmetricNet net;
    net.W = Mat::Zero(m, d);
    net.b = 0.2;
    net.sigma_rho = 0.1;
    Vec x(d);
    x << 0.5, -1.0, 2.0, 0.0;
    Vec rho(m);
    rho << 0.3, 0.1, 0.2;  // rho_1 < b, others >= b ... check each
    for (double y : {1.0, -1.0}) {
      CHECK(forward(net, x, rho) == 0.0);
      Mat g = loss_grad_weights(net, x, y, rho);
      for (int i = 0; i < m; ++i) {
        double ind = rho[i] >= net.b ? 1.0 : 0.0;
        for (int j = 0; j < d; ++j)
          CHECK(g(i, j) == doctest::Approx(-y * ind * x[j]).epsilon(1e-15));
      }
    }
  }

  TEST_CASE("smoothed input gradient matches central differences") {
    const int m = 8, d = 6;
    Rng rng(31337);
    for (int rep = 0; rep < 20; ++rep) {
      auto net = random_net(m, d, 0.7, 0.35, 0.25, 9000 + rep);
      Vec x(d);
      rng.fill_normal(x, 1.0);
      Vec an = grad_input_smoothed(net, x);
      const double h = 1e-5;
      for (int j = 0; j < d; ++j) {
        Vec up = x, dn = x;
        up[j] += h;
        dn[j] -= h;
        double fd = (forward_smoothed(net, up) - forward_smoothed(net, dn)) /
                    (2.0 * h);
        CHECK(std::fabs(fd - an[j]) <= 1e-8 * std::max(1.0, std::fabs(an[j])));
      }
    }
  }

  TEST_CASE("input gradient at zero smoothing uses indicators") {
    SymmetricNet net;
    net.W.resize(2, 2);
    net.W << 1.0, 0.0, 0.0, 1.0;
    net.b = 0.5;
    net.sigma_rho = 0.0;
    Vec x(2);
    x << 2.0, -0.1;  // g = (2, -0.1): row 0 fires positively, row 1 neither
    Vec g = grad_input_smoothed(net, x);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 0.0);
    x << -2.0, 0.6;  // row 0 fires on the mirrored side, row 1 positively
    g = grad_input_smoothed(net, x);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 1.0);
  }

  TEST_CASE("regularizer value and gradient agree") {
    Mat W(3, 4);
    Rng rng(22);
    rng.fill_normal(W, 1.0);
    double val = 0.0;
    for (int i = 0; i < 3; ++i) {
      double nrm = W.row(i).norm();
      val += nrm * nrm / 2.0 + nrm * nrm * nrm / 3.0;
    }
    CHECK(regularizer_value(W) == doctest::Approx(val).epsilon(1e-14));
    Mat an = regularizer_grad(W);
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) {
        Mat up = W, dn = W;
        up(i, j) += h;
        dn(i, j) -= h;
        double fd = (regularizer_value(up) - regularizer_value(dn)) / (2.0 * h);
        CHECK(std::fabs(fd - an(i, j)) <= 1e-8 * std::max(1.0, std::fabs(fd)));
      }
  }

  TEST_CASE("batched paths agree with the scalar path") {
    const int m = 10, d = 7, n = 33;
    auto net = random_net(m, d, 0.6, 0.3, 0.2, 606);
    Rng rng(607);
    Mat X(n, d), Rho(n, m);
    rng.fill_normal(X, 1.0);
    rng.fill_normal(Rho, net.sigma_rho);
    Vec y(n);
    for (int i = 0; i < n; ++i) y[i] = rng.rademacher();

    Mat G = batch_preacts(net, X);
    Vec f = batch_forward(net, G, Rho);
    Vec fs = batch_forward_smoothed(net, G);
    Mat Gin = batch_input_grads_smoothed(net, X, G);
    for (int i = 0; i < n; ++i) {
      Vec x = X.row(i).transpose(), rho = Rho.row(i).transpose();
      CHECK((G.row(i).transpose() - net.W * x).cwiseAbs().maxCoeff() <= 1e-13);
      CHECK(std::fabs(f[i] - forward(net, x, rho)) <= 1e-12);
      CHECK(std::fabs(fs[i] - forward_smoothed(net, x)) <= 1e-12);
      CHECK((Gin.row(i).transpose() - grad_input_smoothed(net, x))
                .cwiseAbs()
                .maxCoeff() <= 1e-12);
    }

    auto blg = batch_loss_grad(net, X, y, Rho);
    Mat mean_grad = Mat::Zero(m, d);
    double mean_loss = 0.0;
    for (int i = 0; i < n; ++i) {
      Vec x = X.row(i).transpose(), rho = Rho.row(i).transpose();
      mean_grad += loss_grad_weights(net, x, y[i], rho);
      mean_loss += logistic_loss(y[i] * forward(net, x, rho));
    }
    mean_grad /= n;
    mean_loss /= n;
    CHECK((blg.grad - mean_grad).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::fabs(blg.mean_loss - mean_loss) <= 1e-12);
    CHECK(std::fabs(objective(net, X, y, Rho, 0.25) -
                    (mean_loss + 0.25 * regularizer_value(net.W))) <= 1e-12);
  }

  TEST_CASE("batched paths are bitwise invariant to the thread count") {
    const int m = 12, d = 9, n = 101;
    auto net = random_net(m, d, 0.6, 0.3, 0.2, 4242);
    Rng rng(4243);
    Mat X(n, d), Rho(n, m);
    rng.fill_normal(X, 1.0);
    rng.fill_normal(Rho, net.sigma_rho);
    Vec y(n);
    for (int i = 0; i < n; ++i) y[i] = rng.rademacher();

    Mat G1 = batch_preacts(net, X, 1), G4 = batch_preacts(net, X, 4);
    CHECK(G1 == G4);
    CHECK(batch_forward(net, G1, Rho, 1) == batch_forward(net, G4, Rho, 4));
    CHECK(batch_forward_smoothed(net, G1, 1) ==
          batch_forward_smoothed(net, G4, 4));
    CHECK(batch_input_grads_smoothed(net, X, G1, 1) ==
          batch_input_grads_smoothed(net, X, G4, 4));
    auto a = batch_loss_grad(net, X, y, Rho, 1);
    auto b = batch_loss_grad(net, X, y, Rho, 4);
    CHECK(a.grad == b.grad);
    CHECK(a.mean_loss == b.mean_loss);
    CHECK(a.f == b.f);
    CHECK(objective(net, X, y, Rho, 0.1, 1) == objective(net, X, y, Rho, 0.1, 4));
  }

  TEST_CASE("initialization is seed-stable with the requested shape") {
    Rng r1(5), r2(5), r3(6);
    auto a = init_symmetric_net(16, 8, 0.01, 0.2, 0.05, r1);
    auto b = init_symmetric_net(16, 8, 0.01, 0.2, 0.05, r2);
    auto c = init_symmetric_net(16, 8, 0.01, 0.2, 0.05, r3);
    CHECK(a.W.rows() == 16);
    CHECK(a.W.cols() == 8);
    CHECK(a.b == 0.2);
    CHECK(a.sigma_rho == 0.05);
    CHECK(a.W == b.W);
    CHECK(a.W != c.W);
    // Entry scale follows sigma0.
    double rms = std::sqrt(a.W.array().square().mean());
    CHECK(rms == doctest::Approx(0.01).epsilon(0.25));
  }
}
