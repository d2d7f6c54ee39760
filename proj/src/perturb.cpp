#include "purelab/perturb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <vector>

#include "purelab/parallel.hpp"

namespace purelab {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw config_error("bad " + what + ": '" + s + "'");
  return v;
}

std::string format_double(double v, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

AttackSpec AttackSpec::parse(const std::string& text) {
  AttackSpec spec;
  auto parts = split(text, ':');
  const std::string& kind = parts[0];
  if (kind == "null") {
    if (parts.size() != 1) throw config_error("null attack takes no arguments");
    return spec;
  }
  if (parts.size() < 3)
    throw config_error("attack spec needs kind:norm:tau, got '" + text + "'");
  if (kind == "fgm")
    spec.kind = AttackKind::fgm;
  else if (kind == "dense")
    spec.kind = AttackKind::dense;
  else if (kind == "ifgm")
    spec.kind = AttackKind::iterated_fgm;
  else
    throw config_error("unknown attack kind '" + kind + "'");
  if (parts[1] == "l2")
    spec.budget.norm = NormKind::l2;
  else if (parts[1] == "linf")
    spec.budget.norm = NormKind::linf;
  else
    throw config_error("unknown attack norm '" + parts[1] + "'");
  spec.budget.tau = parse_double(parts[2], "attack tau");
  if (spec.budget.tau < 0.0) throw config_error("attack tau must be >= 0");
  if (spec.kind == AttackKind::iterated_fgm) {
    if (parts.size() != 4)
      throw config_error("ifgm spec needs kind:norm:tau:steps");
    spec.steps = static_cast<int>(parse_double(parts[3], "ifgm steps"));
    if (spec.steps < 1) throw config_error("ifgm steps must be >= 1");
  } else if (parts.size() != 3) {
    throw config_error("attack spec '" + text + "' has extra fields");
  }
  return spec;
}

std::string AttackSpec::format() const {
  switch (kind) {
    case AttackKind::null:
      return "null";
    case AttackKind::fgm:
      return std::string("fgm:") + (budget.norm == NormKind::l2 ? "l2" : "linf") +
             ":" + format_double(budget.tau);
    case AttackKind::dense:
      return std::string("dense:") +
             (budget.norm == NormKind::l2 ? "l2" : "linf") + ":" +
             format_double(budget.tau);
    case AttackKind::iterated_fgm:
      return std::string("ifgm:") + (budget.norm == NormKind::l2 ? "l2" : "linf") +
             ":" + format_double(budget.tau) + ":" + std::to_string(steps);
  }
  return "null";
}

std::string AttackSpec::name() const {
  if (kind == AttackKind::null) return "null";
  std::string base;
  switch (kind) {
    case AttackKind::fgm: base = "fgm"; break;
    case AttackKind::dense: base = "dense"; break;
    case AttackKind::iterated_fgm: base = "ifgm" + std::to_string(steps); break;
    default: base = "null"; break;
  }
  base += budget.norm == NormKind::l2 ? "_l2" : "_linf";
  base += "_t" + format_double(budget.tau, "%.4g");
  return base;
}

double norm_of(const Vec& v, NormKind norm) {
  return norm == NormKind::l2 ? v.norm()
                              : (v.size() ? v.cwiseAbs().maxCoeff() : 0.0);
}

Vec project_ball(Vec v, const PerturbationBudget& budget) {
  if (budget.norm == NormKind::l2) {
    double n = v.norm();
    if (n > budget.tau && n > 0.0) v *= budget.tau / n;
  } else {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v[i] = std::clamp(v[i], -budget.tau, budget.tau);
  }
  return v;
}

void check_budget(const Vec& delta, const PerturbationBudget& budget) {
  double n = norm_of(delta, budget.norm);
  if (!(n <= budget.tau + kBudgetSlack))
    throw contract_violation("attack exceeded its budget: ||delta|| = " +
                             std::to_string(n) + " > tau = " +
                             std::to_string(budget.tau));
}

Vec fgm_direction(const Predictor& pred, const Vec& x, double y,
                  NormKind norm, double grad_floor) {
  Vec g = pred.smoothed_grad(x);
  if (norm == NormKind::l2) {
    double n = g.norm();
    if (n < grad_floor) return Vec::Zero(x.size());
    return g * (-y / n);
  }
  double n = g.size() ? g.cwiseAbs().sum() : 0.0;  // dual of l-inf is l1
  if (n < grad_floor) return Vec::Zero(x.size());
  Vec dir(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) dir[i] = -y * sign_zero(g[i]);
  return dir;
}

Vec fgm_attack(const Predictor& pred, const Vec& x, double y,
               const PerturbationBudget& budget, double grad_floor) {
  Vec dir = fgm_direction(pred, x, y, budget.norm, grad_floor);
  return dir * budget.tau;
}

Vec dense_attack(const Dictionary& dict, const Vec& w_star, double y,
                 const PerturbationBudget& budget) {
  Vec u = dict.is_identity() ? w_star : Vec(dict.M * w_star);
  double n = norm_of(u, budget.norm);
  if (n <= 0.0)
    throw std::invalid_argument("dense attack needs a nonzero M w*");
  return u * (-budget.tau * y / n);
}

Vec iterated_fgm_attack(const Predictor& pred, const Vec& x, double y,
                        const PerturbationBudget& budget, int steps,
                        double grad_floor) {
  if (steps < 1) throw config_error("iterated fgm needs steps >= 1");
  double step = budget.tau / steps;
  Vec dir = fgm_direction(pred, x, y, budget.norm, grad_floor);
  // First increment from delta = 0 stays inside the ball up to rounding;
  // skipping the projection keeps steps = 1 bit-identical to fgm_attack.
  Vec delta = dir * step;
  for (int s = 1; s < steps; ++s) {
    dir = fgm_direction(pred, x + delta, y, budget.norm, grad_floor);
    delta = project_ball(delta + dir * step, budget);
  }
  return delta;
}

Vec apply_attack(const AttackSpec& spec, const Predictor& pred,
                 const SparseCodingTask& task, const Vec& x, double y,
                 Rng* /*r*/) {
  switch (spec.kind) {
    case AttackKind::null:
      return Vec::Zero(x.size());
    case AttackKind::fgm:
      return fgm_attack(pred, x, y, spec.budget, spec.grad_floor);
    case AttackKind::dense:
      return dense_attack(task.dict, task.w_star, y, spec.budget);
    case AttackKind::iterated_fgm:
      return iterated_fgm_attack(pred, x, y, spec.budget, spec.steps,
                                 spec.grad_floor);
  }
  return Vec::Zero(x.size());
}

namespace {

// In-place rows of D become unit dual-norm descent directions.
void rows_to_directions(Mat& D, const Vec& y, NormKind norm,
                        double grad_floor, int threads) {
  parallel_chunks(D.rows(), threads, [&](int, std::int64_t a, std::int64_t b) {
    for (std::int64_t r = a; r < b; ++r) {
      if (norm == NormKind::l2) {
        double n = D.row(r).norm();
        if (n < grad_floor)
          D.row(r).setZero();
        else
          D.row(r) *= -y[r] / n;
      } else {
        double n = D.row(r).cwiseAbs().sum();
        if (n < grad_floor) {
          D.row(r).setZero();
        } else {
          for (Eigen::Index j = 0; j < D.cols(); ++j)
            D(r, j) = -y[r] * sign_zero(D(r, j));
        }
      }
    }
  });
}

}  // namespace

Mat batch_attack_deltas(const SymmetricNet& net, const SparseCodingTask& task,
                        const Mat& X, const Vec& y, const AttackSpec& spec,
                        int threads) {
  std::int64_t n = X.rows();
  Mat delta = Mat::Zero(n, X.cols());
  switch (spec.kind) {
    case AttackKind::null:
      return delta;
    case AttackKind::dense: {
      Vec u = task.dict.is_identity() ? task.w_star : Vec(task.dict.M * task.w_star);
      double nu = norm_of(u, spec.budget.norm);
      if (nu <= 0.0)
        throw std::invalid_argument("dense attack needs a nonzero M w*");
      Vec base = u * (spec.budget.tau / nu);
      for (std::int64_t r = 0; r < n; ++r)
        delta.row(r) = (-y[r]) * base.transpose();
      break;
    }
    case AttackKind::fgm: {
      Mat G = batch_preacts(net, X, threads);
      Mat D = batch_input_grads_smoothed(net, X, G, threads);
      rows_to_directions(D, y, spec.budget.norm, spec.grad_floor, threads);
      delta = D * spec.budget.tau;
      break;
    }
    case AttackKind::iterated_fgm: {
      double step = spec.budget.tau / spec.steps;
      for (int s = 0; s < spec.steps; ++s) {
        Mat Xa = X + delta;
        Mat G = batch_preacts(net, Xa, threads);
        Mat D = batch_input_grads_smoothed(net, Xa, G, threads);
        rows_to_directions(D, y, spec.budget.norm, spec.grad_floor, threads);
        delta += D * step;
        if (s > 0) {
          parallel_chunks(n, threads, [&](int, std::int64_t a, std::int64_t b) {
            for (std::int64_t r = a; r < b; ++r) {
              if (spec.budget.norm == NormKind::l2) {
                double nr = delta.row(r).norm();
                if (nr > spec.budget.tau && nr > 0.0)
                  delta.row(r) *= spec.budget.tau / nr;
              } else {
                for (Eigen::Index j = 0; j < delta.cols(); ++j)
                  delta(r, j) = std::clamp(delta(r, j), -spec.budget.tau,
                                           spec.budget.tau);
              }
            }
          });
        }
      }
      break;
    }
  }
  for (std::int64_t r = 0; r < n; ++r) {
    double nr = spec.budget.norm == NormKind::l2
                    ? delta.row(r).norm()
                    : delta.row(r).cwiseAbs().maxCoeff();
    if (!(nr <= spec.budget.tau + kBudgetSlack))
      throw contract_violation("batched attack exceeded its budget");
  }
  return delta;
}

}  // namespace purelab
