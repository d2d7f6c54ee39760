// Python surface over the core operations: data sampling, the symmetric
// network, training stages, attacks, evaluation, diagnostics, the
// random-feature baseline, and the file-writing pipelines. Configs travel as
// text in the same key = value format the CLI reads.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include "purelab/checkpoint.hpp"
#include "purelab/config.hpp"
#include "purelab/diagnostics.hpp"
#include "purelab/eval.hpp"
#include "purelab/network.hpp"
#include "purelab/ntk.hpp"
#include "purelab/perturb.hpp"
#include "purelab/pipeline.hpp"
#include "purelab/predictor.hpp"
#include "purelab/sparse_coding.hpp"
#include "purelab/training.hpp"

namespace py = pybind11;
using namespace purelab;

namespace {

SymmetricNet make_net(const Mat& W, double b, double sigma_rho) {
  SymmetricNet net;
  net.W = W;
  net.b = b;
  net.sigma_rho = sigma_rho;
  return net;
}

py::dict metrics_to_dict(const std::vector<MetricsRow>& rows,
                         const std::vector<AttackSpec>& attacks) {
  std::vector<std::int64_t> t;
  std::vector<std::string> stage;
  std::vector<double> b, sigma_rho, train_obj, train_loss, clean_err,
      dense_projection, median_theta, act, row_norm;
  for (const auto& r : rows) {
    t.push_back(r.t);
    stage.push_back(r.stage);
    b.push_back(r.b);
    sigma_rho.push_back(r.sigma_rho);
    train_obj.push_back(r.train_obj);
    train_loss.push_back(r.train_loss);
    clean_err.push_back(r.clean_err);
    dense_projection.push_back(r.dense_projection);
    median_theta.push_back(r.median_theta_vs_ref);
    act.push_back(r.activation_sparsity);
    row_norm.push_back(r.max_row_norm);
  }
  py::dict out;
  out["t"] = t;
  out["stage"] = stage;
  out["b"] = b;
  out["sigma_rho"] = sigma_rho;
  out["train_obj"] = train_obj;
  out["train_loss"] = train_loss;
  out["clean_err"] = clean_err;
  out["dense_projection"] = dense_projection;
  out["median_theta_vs_ref"] = median_theta;
  out["activation_sparsity"] = act;
  out["max_row_norm"] = row_norm;
  py::dict robust;
  for (std::size_t a = 0; a < attacks.size(); ++a) {
    std::vector<double> col;
    for (const auto& r : rows)
      if (a < r.robust_err.size()) col.push_back(r.robust_err[a]);
    robust[py::str(attacks[a].name())] = col;
  }
  out["robust_err"] = robust;
  return out;
}

py::dict manifest_to_dict(const RunManifest& man) {
  py::dict out;
  out["config_hash"] = man.config_hash;
  out["version"] = man.version;
  out["status"] = man.status;
  out["wall_clock_sec"] = man.wall_clock_sec;
  out["dir"] = man.dir;
  py::dict stages;
  for (const auto& s : man.stages) stages[py::str(s.name)] = s.status;
  out["stages"] = stages;
  return out;
}

py::dict eval_to_dict(const EvalReport& rep) {
  py::dict out;
  out["n"] = rep.n;
  out["clean_error"] = rep.clean_error;
  out["clean_se"] = rep.clean_se;
  out["mean_loss"] = rep.mean_loss;
  py::dict robust, fallbacks;
  for (const auto& a : rep.attacks) {
    robust[py::str(a.spec.name())] = a.robust_error;
    fallbacks[py::str(a.spec.name())] = a.fallback_count;
  }
  out["robust_error"] = robust;
  out["fallbacks"] = fallbacks;
  return out;
}

std::vector<AttackSpec> parse_attacks(const std::vector<std::string>& texts) {
  std::vector<AttackSpec> specs;
  for (const auto& t : texts) specs.push_back(AttackSpec::parse(t));
  return specs;
}

}  // namespace

PYBIND11_MODULE(_purelab, mod) {
  mod.doc() =
      "Sparse-coding feature-purification laboratory: data generation, "
      "two-layer symmetric network training, attacks, diagnostics.";

  // ---- config ----
  mod.def("default_config_text",
          [] { return emit_config(parse_config_text("")); },
          "Full key = value listing of the built-in defaults.");
  mod.def("config_hash",
          [](const std::string& text) {
            return config_hash(parse_config_text(text));
          },
          py::arg("text"),
          "16-hex-digit hash of the science-relevant keys (run.* ignored "
          "except run.seed).");
  mod.def("normalize_config",
          [](const std::string& text) {
            return emit_config(parse_config_text(text));
          },
          py::arg("text"), "Parse overrides and emit the resolved config.");

  // ---- rng ----
  mod.def("derive_seed", &derive_seed, py::arg("root"), py::arg("tag"),
          py::arg("index") = 0,
          "Deterministic substream seed from (root, tag, index).");

  // ---- data ----
  mod.def(
      "sample_dataset",
      [](const std::string& cfg_text, std::int64_t n, std::uint64_t seed) {
        auto cfg = parse_config_text(cfg_text);
        cfg.seed = seed;
        auto task = make_task(cfg);
        Rng rng = Rng::substream(seed, stream::kData);
        Dataset data = sample_dataset(task, n, rng);
        return py::make_tuple(data.X, data.y, data.Z);
      },
      py::arg("config") = "", py::arg("n") = 1024, py::arg("seed") = 0,
      "Draw (X, y, Z) from the task's data substream.");
  mod.def(
      "dictionary",
      [](const std::string& cfg_text, std::uint64_t seed) {
        auto cfg = parse_config_text(cfg_text);
        cfg.seed = seed;
        return make_task(cfg).dict.M;
      },
      py::arg("config") = "", py::arg("seed") = 0,
      "The task's orthonormal dictionary M.");
  mod.def(
      "planted_direction",
      [](const std::string& cfg_text, std::uint64_t seed) {
        auto cfg = parse_config_text(cfg_text);
        cfg.seed = seed;
        return make_task(cfg).w_star;
      },
      py::arg("config") = "", py::arg("seed") = 0,
      "The hidden labeling direction w*.");

  // ---- network ----
  mod.def(
      "forward",
      [](const Mat& W, double b, double sigma_rho, const Vec& x,
         const Vec& rho) { return forward(make_net(W, b, sigma_rho), x, rho); },
      py::arg("W"), py::arg("b"), py::arg("sigma_rho"), py::arg("x"),
      py::arg("rho"), "f(x; rho) with explicit pre-activation noise.");
  mod.def(
      "forward_smoothed",
      [](const Mat& W, double b, double sigma_rho, const Vec& x) {
        return forward_smoothed(make_net(W, b, sigma_rho), x);
      },
      py::arg("W"), py::arg("b"), py::arg("sigma_rho"), py::arg("x"),
      "Noise-averaged output E_rho f(x; rho).");
  mod.def(
      "grad_input",
      [](const Mat& W, double b, double sigma_rho, const Vec& x) {
        return grad_input_smoothed(make_net(W, b, sigma_rho), x);
      },
      py::arg("W"), py::arg("b"), py::arg("sigma_rho"), py::arg("x"),
      "Input gradient of the noise-averaged output.");

  // ---- attacks ----
  mod.def(
      "attack",
      [](const std::string& spec_text, const std::string& cfg_text,
         const Mat& W, double b, double sigma_rho, const Vec& x, double y,
         std::uint64_t seed) {
        auto cfg = parse_config_text(cfg_text);
        cfg.seed = seed;
        auto task = make_task(cfg);
        auto net = make_net(W, b, sigma_rho);
        SymmetricNetPredictor pred(net, RhoMode::zero);
        return apply_attack(AttackSpec::parse(spec_text), pred, task, x, y);
      },
      py::arg("spec"), py::arg("config"), py::arg("W"), py::arg("b"),
      py::arg("sigma_rho"), py::arg("x"), py::arg("y"), py::arg("seed") = 0,
      "Perturbation delta for one example under 'kind:norm:tau[:steps]'.");

  // ---- training ----
  mod.def(
      "train_clean",
      [](const std::string& cfg_text, std::uint64_t seed) {
        auto cfg = parse_config_text(cfg_text);
        cfg.seed = seed;
        auto task = make_task(cfg);
        Rng data_rng = Rng::substream(seed, stream::kData);
        Dataset data = sample_dataset(task, cfg.n_train, data_rng);
        auto sched = make_schedule(cfg);
        MetricsOptions opts;
        opts.attacks = parse_attack_list(cfg.metrics_attacks);
        opts.n_samples = cfg.metrics_samples;
        auto res = clean_train(task, data, sched, seed, opts);
        py::dict out;
        out["W_init"] = res.init_net.W;
        out["W"] = res.net.W;
        out["b"] = res.net.b;
        out["sigma_rho"] = res.net.sigma_rho;
        out["late_phase"] = res.late_phase;
        out["metrics"] = metrics_to_dict(res.metrics, opts.attacks);
        return out;
      },
      py::arg("config") = "", py::arg("seed") = 0,
      "Clean gradient-descent stage; returns weights and the metrics table.");
  mod.def(
      "train_adv",
      [](const std::string& cfg_text, std::uint64_t seed, const Mat& W,
         double b, double sigma_rho, bool late_phase, std::int64_t t0) {
        auto cfg = parse_config_text(cfg_text);
        cfg.seed = seed;
        auto task = make_task(cfg);
        Rng data_rng = Rng::substream(seed, stream::kData);
        Dataset data = sample_dataset(task, cfg.n_train, data_rng);
        auto sched = make_schedule(cfg);
        MetricsOptions opts;
        opts.attacks = parse_attack_list(cfg.metrics_attacks);
        opts.n_samples = cfg.metrics_samples;
        auto start = make_net(W, b, sigma_rho);
        auto res = adv_train(task, data, start, sched, seed,
                             AttackSpec::parse(cfg.adv_attack), opts, W, {},
                             t0 < 0 ? sched.t_f : t0, late_phase);
        py::dict out;
        out["W"] = res.net.W;
        out["b"] = res.net.b;
        out["sigma_rho"] = res.net.sigma_rho;
        out["metrics"] = metrics_to_dict(res.metrics, opts.attacks);
        return out;
      },
      py::arg("config"), py::arg("seed"), py::arg("W"), py::arg("b"),
      py::arg("sigma_rho"), py::arg("late_phase") = true, py::arg("t0") = -1,
      "Adversarial stage continuing from given weights (bias frozen).");

  // ---- evaluation ----
  mod.def(
      "evaluate",
      [](const std::string& cfg_text, const Mat& W, double b, double sigma_rho,
         const std::vector<std::string>& attacks, std::int64_t n,
         std::uint64_t seed, std::uint64_t slot) {
        auto cfg = parse_config_text(cfg_text);
        cfg.seed = seed;
        auto task = make_task(cfg);
        auto net = make_net(W, b, sigma_rho);
        SymmetricNetPredictor pred(net, RhoMode::fresh);
        auto specs = parse_attacks(attacks);
        Rng rng = Rng::substream(seed, stream::kEval, slot);
        return eval_to_dict(evaluate(pred, task, specs, n, rng));
      },
      py::arg("config"), py::arg("W"), py::arg("b"), py::arg("sigma_rho"),
      py::arg("attacks") = std::vector<std::string>{}, py::arg("n") = 1000,
      py::arg("seed") = 0, py::arg("slot") = 0,
      "Clean and attacked error on fresh samples.");

  // ---- diagnostics ----
  mod.def("theta",
          [](const Vec& u, const Vec& v) { return theta(u, v); },
          py::arg("u"), py::arg("v"),
          "|<u, v>| / (||u|| ||v||), 0 if either is zero.");
  mod.def(
      "classify_neurons",
      [](const std::string& cfg_text, const Mat& W, double b,
         std::uint64_t seed) {
        auto cfg = parse_config_text(cfg_text);
        cfg.seed = seed;
        auto task = make_task(cfg);
        auto sets = classify_neurons(W, task.dict, task.w_star,
                                     make_neuron_params(cfg, b));
        py::dict out;
        std::vector<std::tuple<int, int, double>> pairs;
        for (const auto& p : sets.sure_union())
          pairs.emplace_back(p.neuron, p.atom, p.orient);
        out["sure_pairs"] = pairs;
        std::int64_t pot = 0, sure_plus = 0, pot_plus = 0;
        for (const auto& v : sets.pot) pot += static_cast<std::int64_t>(v.size());
        for (const auto& v : sets.sure_plus)
          sure_plus += static_cast<std::int64_t>(v.size());
        for (const auto& v : sets.pot_plus)
          pot_plus += static_cast<std::int64_t>(v.size());
        out["pot_total"] = pot;
        out["sure_plus_total"] = sure_plus;
        out["pot_plus_total"] = pot_plus;
        out["ept"] = sets.ept;
        out["ept_plus"] = sets.ept_plus;
        out["ept_pp"] = sets.ept_pp;
        return out;
      },
      py::arg("config"), py::arg("W"), py::arg("b"), py::arg("seed") = 0,
      "Threshold classification of rows against the dictionary at bias b.");
  mod.def(
      "dense_projection",
      [](const std::string& cfg_text, const Mat& W,
         const std::vector<std::tuple<int, double>>& subset,
         std::uint64_t seed) {
        auto cfg = parse_config_text(cfg_text);
        cfg.seed = seed;
        auto task = make_task(cfg);
        std::vector<SureEntry> entries;
        for (const auto& [neuron, orient] : subset)
          entries.push_back({neuron, orient});
        auto rep = dense_projection(W, task.dict, task.w_star, entries);
        return py::make_tuple(rep.mean, rep.median, rep.per_neuron);
      },
      py::arg("config"), py::arg("W"), py::arg("subset"), py::arg("seed") = 0,
      "Oriented projections onto the normalized dense direction M w*.");
  mod.def(
      "lasso",
      [](const Mat& A, const Vec& x, double lambda1, int max_iter,
         double tol) {
        LassoParams p;
        p.lambda1 = lambda1;
        p.max_iter = max_iter;
        p.tol = tol;
        auto res = lasso_reconstruct(A, x, p);
        py::dict out;
        out["code"] = res.code;
        out["objective"] = res.objective;
        out["residual"] = res.residual;
        out["iterations"] = res.iterations;
        out["converged"] = res.converged;
        out["nonzeros"] = res.nonzeros;
        out["kkt"] = lasso_kkt_violation(A, x, res.code, lambda1);
        return out;
      },
      py::arg("A"), py::arg("x"), py::arg("lambda1") = 0.1,
      py::arg("max_iter") = 2000, py::arg("tol") = 1e-12,
      "ISTA for min ||A y - x||^2 + lambda1 ||y||_1.");

  // ---- random-feature baseline ----
  mod.def(
      "train_ntk",
      [](const std::string& cfg_text, std::uint64_t seed) {
        auto cfg = parse_config_text(cfg_text);
        cfg.seed = seed;
        auto task = make_task(cfg);
        auto res = train_ntk(task, make_ntk_config(cfg), seed);
        py::dict out;
        out["W"] = res.model.W;
        out["V_plus"] = res.model.Vp;
        out["V_minus"] = res.model.Vm;
        out["final_loss"] = res.final_loss;
        std::vector<std::int64_t> t;
        std::vector<double> loss, err;
        for (const auto& r : res.metrics) {
          t.push_back(r.t);
          loss.push_back(r.train_loss);
          err.push_back(r.clean_err);
        }
        py::dict metrics;
        metrics["t"] = t;
        metrics["train_loss"] = loss;
        metrics["clean_err"] = err;
        out["metrics"] = metrics;
        return out;
      },
      py::arg("config") = "", py::arg("seed") = 0,
      "Train the frozen-feature linear model; returns weights and loss curve.");

  // ---- pipelines (file-writing, same outputs as the CLI) ----
  mod.def(
      "run_pipeline",
      [](const std::string& cfg_text) {
        return manifest_to_dict(run_pipeline(parse_config_text(cfg_text)));
      },
      py::arg("config"),
      "Full clean + adversarial + diagnostics pipeline into run.out.");
  mod.def(
      "load_checkpoint",
      [](const std::string& path) {
        CheckpointMeta meta;
        SymmetricNet net = load_net_checkpoint(path, &meta);
        py::dict out;
        out["W"] = net.W;
        out["b"] = net.b;
        out["sigma_rho"] = net.sigma_rho;
        out["schema"] = meta.schema;
        out["iteration"] = meta.iteration;
        out["seed"] = meta.seed;
        return out;
      },
      py::arg("path"), "Read a net1 checkpoint written by the harness.");
}
