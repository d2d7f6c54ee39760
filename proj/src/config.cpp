#include "purelab/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <variant>

#include "purelab/csv.hpp"
#include "purelab/rng.hpp"

namespace purelab {

namespace {

using EC = ExperimentConfig;

using Member =
    std::variant<int EC::*, std::int64_t EC::*, std::uint64_t EC::*,
                 double EC::*, bool EC::*, std::string EC::*>;

struct Entry {
  const char* key;
  Member member;
};

const std::vector<Entry>& schema() {
  static const std::vector<Entry> s = {
      {"task.d", &EC::d},
      {"task.k", &EC::k},
      {"task.sigma_x", &EC::sigma_x},
      {"task.dict", &EC::dict},
      {"task.w_star", &EC::w_star},
      {"task.p_max", &EC::p_max},
      {"task.p_nz", &EC::p_nz},
      {"task.v_small", &EC::v_small},
      {"net.m", &EC::m},
      {"net.sigma0", &EC::sigma0},
      {"net.kappa_rho", &EC::kappa_rho},
      {"sched.eta", &EC::eta},
      {"sched.lambda", &EC::lambda},
      {"sched.n_train", &EC::n_train},
      {"sched.bias_rate", &EC::bias_rate},
      {"sched.b_cap", &EC::b_cap},
      {"sched.t_a", &EC::t_a},
      {"sched.t_f", &EC::t_f},
      {"sched.t_g", &EC::t_g},
      {"sched.eval_every", &EC::eval_every},
      {"sched.batch", &EC::batch},
      {"sched.max_row_norm", &EC::max_row_norm},
      {"sched.metrics_samples", &EC::metrics_samples},
      {"sched.metrics_attacks", &EC::metrics_attacks},
      {"adv.attack", &EC::adv_attack},
      {"eval.n_samples", &EC::eval_samples},
      {"eval.attacks", &EC::eval_attacks},
      {"eval.rho_mode", &EC::rho_mode},
      {"diag.c1", &EC::c1},
      {"diag.c2", &EC::c2},
      {"diag.beta", &EC::beta},
      {"diag.strict_sign", &EC::strict_sign},
      {"diag.ept_large_cap", &EC::ept_large_cap},
      {"diag.ept_small_frac", &EC::ept_small_frac},
      {"diag.support_cap", &EC::support_cap},
      {"diag.lasso_lambda1", &EC::lasso_lambda1},
      {"diag.lasso_max_iter", &EC::lasso_max_iter},
      {"diag.lasso_tol", &EC::lasso_tol},
      {"diag.recon_lambdas", &EC::recon_lambdas},
      {"diag.recon_inputs", &EC::recon_inputs},
      {"ntk.m", &EC::ntk_m},
      {"ntk.eta", &EC::ntk_eta},
      {"ntk.lambda", &EC::ntk_lambda},
      {"ntk.iters", &EC::ntk_iters},
      {"ntk.n_train", &EC::ntk_n_train},
      {"ntk.eval_every", &EC::ntk_eval_every},
      {"ntk.sigma_rho", &EC::ntk_sigma_rho},
      {"ntk.b", &EC::ntk_b},
      {"ntk.single_v", &EC::ntk_single_v},
      {"run.seed", &EC::seed},
      {"run.out", &EC::out},
      {"run.threads", &EC::threads},
      {"run.retain", &EC::retain},
      {"run.reconstruct", &EC::reconstruct},
  };
  return s;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(std::int64_t line, const std::string& key,
                       const std::string& what) {
  throw config_error("config line " + fmt_int(line) + ", key '" + key +
                     "': " + what);
}

template <class T>
T parse_number(const std::string& v, std::int64_t line,
               const std::string& key, const char* kind) {
  T out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    fail(line, key, std::string("expected ") + kind + ", got '" + v + "'");
  return out;
}

void assign(EC& cfg, const Entry& e, const std::string& value,
            std::int64_t line) {
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          cfg.*member = value;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1")
            cfg.*member = true;
          else if (value == "false" || value == "0")
            cfg.*member = false;
          else
            fail(line, e.key, "expected boolean, got '" + value + "'");
        } else if constexpr (std::is_same_v<T, double>) {
          cfg.*member = parse_number<double>(value, line, e.key, "number");
        } else {
          cfg.*member = parse_number<T>(value, line, e.key, "integer");
        }
      },
      e.member);
}

std::string field_text(const EC& cfg, const Entry& e) {
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cv_t<std::remove_reference_t<decltype(cfg.*member)>>;
        if constexpr (std::is_same_v<T, std::string>) {
          return cfg.*member;
        } else if constexpr (std::is_same_v<T, bool>) {
          return (cfg.*member) ? "true" : "false";
        } else if constexpr (std::is_same_v<T, double>) {
          return fmt_double(cfg.*member);
        } else {
          return fmt_int(static_cast<std::int64_t>(cfg.*member));
        }
      },
      e.member);
}

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw config_error("config key '" + key + "': " + what);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  EC cfg;
  std::istringstream in(text);
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + fmt_int(lineno) +
                         ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Entry* entry = nullptr;
    for (const auto& e : schema())
      if (key == e.key) {
        entry = &e;
        break;
      }
    if (!entry) fail(lineno, key, "unknown key");
    assign(cfg, *entry, value, lineno);
  }
  resolve_defaults(cfg);
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void resolve_defaults(ExperimentConfig& cfg) {
  const double d = cfg.d;
  const double k = cfg.k;
  if (cfg.p_max < 0.0) cfg.p_max = 1.0 / d;
  if (cfg.p_nz < 0.0) cfg.p_nz = k / d;
  if (cfg.v_small < 0.0) cfg.v_small = 1.0 / std::sqrt(k);
  if (cfg.sigma0 < 0.0) cfg.sigma0 = std::pow(d, -1.01);
  if (cfg.lambda < 0.0) cfg.lambda = 0.1 / d;
  if (cfg.bias_rate < 0.0) cfg.bias_rate = 0.04 / d;
  if (cfg.b_cap < 0.0) cfg.b_cap = std::pow(k, -0.5001);
  if (cfg.beta < 0.0) cfg.beta = 1.0 / std::sqrt(k);
  const std::string tau_adv = fmt_double(0.5 / std::sqrt(k));
  const std::string tau_dense = fmt_double(2.0 / std::sqrt(k));
  if (cfg.adv_attack.empty()) cfg.adv_attack = "fgm:l2:" + tau_adv;
  if (cfg.eval_attacks.empty())
    cfg.eval_attacks = "fgm:l2:" + tau_adv + ";ifgm:l2:" + tau_adv +
                       ":8;dense:l2:" + tau_adv + ";dense:l2:" + tau_dense;
  if (cfg.metrics_attacks.empty())
    cfg.metrics_attacks = cfg.adv_attack + ";dense:l2:" + tau_dense;
}

void validate_config(const ExperimentConfig& cfg) {
  check(cfg.d >= 2, "task.d", "must be >= 2");
  check(cfg.k >= 1 && cfg.k <= cfg.d, "task.k", "must be in [1, d]");
  check(cfg.sigma_x >= 0.0, "task.sigma_x", "must be >= 0");
  check(cfg.dict == "identity" || cfg.dict == "random_orthonormal",
        "task.dict", "must be identity or random_orthonormal");
  check(cfg.w_star == "ones" || cfg.w_star == "signs", "task.w_star",
        "must be ones or signs");
  {
    HiddenCodeLaw law{cfg.d, cfg.k, cfg.p_max, cfg.p_nz, cfg.v_small};
    law.validate();  // throws config_error on bad law values
  }
  check(cfg.m >= 1, "net.m", "must be >= 1");
  check(cfg.sigma0 > 0.0, "net.sigma0", "must be > 0");
  check(cfg.kappa_rho >= 0.0, "net.kappa_rho", "must be >= 0");
  check(cfg.eta > 0.0, "sched.eta", "must be > 0");
  check(cfg.lambda >= 0.0, "sched.lambda", "must be >= 0");
  check(cfg.n_train >= 1, "sched.n_train", "must be >= 1");
  check(cfg.bias_rate >= 0.0, "sched.bias_rate", "must be >= 0");
  check(cfg.b_cap > 0.0, "sched.b_cap", "must be > 0");
  check(cfg.t_a >= -1, "sched.t_a", "must be >= -1");
  check(cfg.t_f >= 0, "sched.t_f", "must be >= 0");
  check(cfg.t_g >= 0, "sched.t_g", "must be >= 0");
  check(cfg.eval_every >= 1, "sched.eval_every", "must be >= 1");
  check(cfg.batch >= 0, "sched.batch", "must be >= 0");
  check(cfg.max_row_norm > 0.0, "sched.max_row_norm", "must be > 0");
  check(cfg.metrics_samples >= 1, "sched.metrics_samples", "must be >= 1");
  check(cfg.eval_samples >= 1, "eval.n_samples", "must be >= 1");
  check(cfg.rho_mode == "fresh" || cfg.rho_mode == "zero", "eval.rho_mode",
        "must be fresh or zero");
  try {
    (void)AttackSpec::parse(cfg.adv_attack);
  } catch (const std::exception& e) {
    check(false, "adv.attack", e.what());
  }
  try {
    (void)parse_attack_list(cfg.eval_attacks);
    (void)parse_attack_list(cfg.metrics_attacks);
  } catch (const std::exception& e) {
    check(false, "eval.attacks / sched.metrics_attacks", e.what());
  }
  check(cfg.c2 >= 0.0 && cfg.c1 > cfg.c2, "diag.c1", "need c1 > c2 >= 0");
  check(cfg.beta > 0.0, "diag.beta", "must be > 0");
  check(cfg.ept_large_cap >= 0, "diag.ept_large_cap", "must be >= 0");
  check(cfg.ept_small_frac >= 0.0 && cfg.ept_small_frac <= 1.0,
        "diag.ept_small_frac", "must be in [0, 1]");
  check(cfg.support_cap >= 1, "diag.support_cap", "must be >= 1");
  check(cfg.lasso_lambda1 > 0.0, "diag.lasso_lambda1", "must be > 0");
  check(cfg.lasso_max_iter >= 1, "diag.lasso_max_iter", "must be >= 1");
  check(cfg.lasso_tol > 0.0, "diag.lasso_tol", "must be > 0");
  check(cfg.recon_inputs >= 1, "diag.recon_inputs", "must be >= 1");
  check(cfg.ntk_m >= 1, "ntk.m", "must be >= 1");
  check(cfg.ntk_eta > 0.0, "ntk.eta", "must be > 0");
  check(cfg.ntk_lambda >= 0.0, "ntk.lambda", "must be >= 0");
  check(cfg.ntk_iters >= 0, "ntk.iters", "must be >= 0");
  check(cfg.ntk_n_train >= 1, "ntk.n_train", "must be >= 1");
  check(cfg.ntk_eval_every >= 1, "ntk.eval_every", "must be >= 1");
  check(cfg.ntk_sigma_rho >= 0.0, "ntk.sigma_rho", "must be >= 0");
  check(cfg.threads >= 1, "run.threads", "must be >= 1");
  check(cfg.retain == "boundaries" || cfg.retain == "all", "run.retain",
        "must be boundaries or all");
}

std::string emit_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& e : schema()) {
    out += e.key;
    out += " = ";
    out += field_text(cfg, e);
    out += '\n';
  }
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  // Operational keys (output dir, thread count, retention, optional stages)
  // do not change any emitted numbers, so they stay out of the hash; the
  // seed is part of the experiment identity.
  std::string canon;
  for (const auto& e : schema()) {
    const std::string_view key = e.key;
    if (key.rfind("run.", 0) == 0 && key != "run.seed") continue;
    canon += e.key;
    canon += " = ";
    canon += field_text(cfg, e);
    canon += '\n';
  }
  const std::uint64_t h = fnv1a64(canon);
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 0; i < 16; ++i)
    buf[i] = digits[(h >> (60 - 4 * i)) & 0xf];
  buf[16] = '\0';
  return std::string(buf);
}

std::vector<AttackSpec> parse_attack_list(const std::string& text) {
  std::vector<AttackSpec> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t pos = text.find(';', start);
    std::string piece = pos == std::string::npos
                            ? text.substr(start)
                            : text.substr(start, pos - start);
    piece = trim(piece);
    if (!piece.empty()) out.push_back(AttackSpec::parse(piece));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

SparseCodingTask make_task(const ExperimentConfig& cfg) {
  SparseCodingTask task;
  {
    Rng rng = Rng::substream(cfg.seed, stream::kDict);
    const DictKind kind = cfg.dict == "identity" ? DictKind::identity
                                                 : DictKind::random_orthonormal;
    task.dict = make_dictionary(cfg.d, kind, rng);
  }
  if (cfg.w_star == "ones") {
    task.w_star = Vec::Ones(cfg.d);
  } else {
    Rng rng = Rng::substream(cfg.seed, stream::kWStar);
    task.w_star.resize(cfg.d);
    for (int j = 0; j < cfg.d; ++j) task.w_star[j] = rng.rademacher();
  }
  task.law = HiddenCodeLaw{cfg.d, cfg.k, cfg.p_max, cfg.p_nz, cfg.v_small};
  task.law.validate();
  task.noise = NoiseModel::standard(cfg.d, cfg.k, cfg.sigma_x);
  return task;
}

double initial_bias(const ExperimentConfig& cfg) {
  return cfg.sigma0 * std::sqrt(cfg.c1 * std::log(cfg.d));
}

TrainSchedule make_schedule(const ExperimentConfig& cfg) {
  TrainSchedule s;
  s.eta = cfg.eta;
  s.lambda = cfg.lambda;
  s.n_train = cfg.n_train;
  s.m = cfg.m;
  s.sigma0 = cfg.sigma0;
  s.b0 = initial_bias(cfg);
  s.bias_rate = cfg.bias_rate;
  s.b_cap = cfg.b_cap;
  s.kappa_rho = cfg.kappa_rho;
  s.t_a = cfg.t_a;
  s.t_f = cfg.t_f;
  s.t_g = cfg.t_g;
  s.eval_every = cfg.eval_every;
  s.batch = cfg.batch;
  s.max_row_norm = cfg.max_row_norm;
  s.threads = cfg.threads;
  return s;
}

NtkConfig make_ntk_config(const ExperimentConfig& cfg) {
  NtkConfig n;
  n.m = cfg.ntk_m;
  n.sigma_rho = cfg.ntk_sigma_rho;
  n.b = cfg.ntk_b;
  n.single_v = cfg.ntk_single_v;
  n.eta = cfg.ntk_eta;
  n.lambda = cfg.ntk_lambda;
  n.iters = cfg.ntk_iters;
  n.n_train = cfg.ntk_n_train;
  n.eval_every = cfg.ntk_eval_every;
  n.threads = cfg.threads;
  return n;
}

MetricsOptions make_metrics_options(const ExperimentConfig& cfg) {
  MetricsOptions opts;
  opts.attacks = parse_attack_list(cfg.metrics_attacks);
  opts.n_samples = cfg.metrics_samples;
  return opts;
}

NeuronSetParams make_neuron_params(const ExperimentConfig& cfg, double b) {
  NeuronSetParams p;
  p.c1 = cfg.c1;
  p.c2 = cfg.c2;
  p.sigma_w = b / std::sqrt(cfg.c1 * std::log(cfg.d));
  p.k = cfg.k;
  p.beta = cfg.beta;
  p.b = b;
  p.strict_sign = cfg.strict_sign;
  p.ept_large_cap = cfg.ept_large_cap;
  p.ept_small_frac = cfg.ept_small_frac;
  return p;
}

LassoParams make_lasso_params(const ExperimentConfig& cfg) {
  LassoParams p;
  p.lambda1 = cfg.lasso_lambda1;
  p.max_iter = static_cast<int>(cfg.lasso_max_iter);
  p.tol = cfg.lasso_tol;
  return p;
}

}  // namespace purelab
