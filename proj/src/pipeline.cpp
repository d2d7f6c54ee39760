#include "purelab/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "purelab/csv.hpp"
#include "purelab/eval.hpp"
#include "purelab/ntk.hpp"

namespace purelab {

namespace fs = std::filesystem;

namespace {

// Final eval sweeps index the eval substream far above the training metrics
// indices (which use the global iteration).
constexpr std::uint64_t kEvalSweepBase = 0x100000000ull;

struct Ctx {
  ExperimentConfig cfg;
  std::string dir;
  std::string hash;
  RunManifest manifest;
  std::chrono::steady_clock::time_point t0;

  explicit Ctx(const ExperimentConfig& c)
      : cfg(c), dir(c.out), hash(config_hash(c)),
        t0(std::chrono::steady_clock::now()) {
    fs::create_directories(dir);
    manifest.config_hash = hash;
    manifest.dir = dir;
    std::ofstream eff(path("effective.cfg"), std::ios::binary);
    if (!eff) throw config_error("cannot write " + path("effective.cfg"));
    eff << "# config=" << hash << "\n" << emit_config(cfg);
    manifest.add("config", {"effective.cfg"});
  }

  std::string path(const std::string& rel) const { return dir + "/" + rel; }

  void finalize() {
    auto dt = std::chrono::steady_clock::now() - t0;
    manifest.wall_clock_sec =
        std::chrono::duration_cast<std::chrono::duration<double>>(dt).count();
    manifest.save();
  }
};

template <class F>
auto guarded(Ctx& ctx, const std::string& stage, F&& fn) {
  try {
    return fn();
  } catch (...) {
    ctx.manifest.status = "failed:" + stage;
    ctx.finalize();
    throw;
  }
}

std::string attack_norm_name(const AttackSpec& s) {
  return s.budget.norm == NormKind::l2 ? "l2" : "linf";
}

// ---- writers ----

std::vector<std::string> metrics_columns(const std::vector<AttackSpec>& atks) {
  std::vector<std::string> cols = {"t",         "stage",      "b",
                                   "sigma_rho", "train_obj",  "train_loss",
                                   "clean_err"};
  for (const auto& a : atks) cols.push_back("err_" + a.name());
  cols.insert(cols.end(), {"dense_projection", "median_theta_vs_ref",
                           "activation_sparsity", "max_row_norm"});
  return cols;
}

void write_metrics_csv(const Ctx& ctx, const std::string& rel,
                       const std::vector<AttackSpec>& atks,
                       const std::vector<const std::vector<MetricsRow>*>& parts) {
  CsvWriter w(ctx.path(rel), ctx.hash, metrics_columns(atks));
  for (const auto* rows : parts)
    for (const MetricsRow& r : *rows) {
      std::vector<std::string> f = {fmt_int(r.t),
                                    r.stage,
                                    fmt_double(r.b),
                                    fmt_double(r.sigma_rho),
                                    fmt_double(r.train_obj),
                                    fmt_double(r.train_loss),
                                    fmt_double(r.clean_err)};
      for (double e : r.robust_err) f.push_back(fmt_double(e));
      f.push_back(fmt_double(r.dense_projection));
      f.push_back(fmt_double(r.median_theta_vs_ref));
      f.push_back(fmt_double(r.activation_sparsity));
      f.push_back(fmt_double(r.max_row_norm));
      w.write_row(f);
    }
}

void write_sure_pairs_csv(const Ctx& ctx, const std::string& rel,
                          const std::vector<SurePair>& pairs) {
  CsvWriter w(ctx.path(rel), ctx.hash, {"pair", "neuron", "atom", "orient"});
  for (std::size_t p = 0; p < pairs.size(); ++p)
    w.write_row({fmt_int(static_cast<std::int64_t>(p)),
                 fmt_int(pairs[p].neuron), fmt_int(pairs[p].atom),
                 fmt_double(pairs[p].orient)});
}

void write_lottery_csv(const Ctx& ctx, const std::string& rel,
                       const std::vector<SurePair>& pairs,
                       const std::vector<const std::vector<LotteryPoint>*>& parts) {
  CsvWriter w(ctx.path(rel), ctx.hash, {"t", "pair", "neuron", "atom", "proj"});
  for (const auto* trace : parts)
    for (const LotteryPoint& pt : *trace)
      for (std::size_t p = 0; p < pt.proj.size(); ++p)
        w.write_row({fmt_int(pt.t), fmt_int(static_cast<std::int64_t>(p)),
                     fmt_int(pairs[p].neuron), fmt_int(pairs[p].atom),
                     fmt_double(pt.proj[p])});
}

void write_neuron_sets_csv(const Ctx& ctx, const std::string& rel,
                           const NeuronSets& sets) {
  CsvWriter w(ctx.path(rel), ctx.hash,
              {"atom", "sure", "pot", "sure_plus", "pot_plus"});
  for (int j = 0; j < sets.d; ++j)
    w.write_row({fmt_int(j),
                 fmt_int(static_cast<std::int64_t>(sets.sure[j].size())),
                 fmt_int(static_cast<std::int64_t>(sets.pot[j].size())),
                 fmt_int(static_cast<std::int64_t>(sets.sure_plus[j].size())),
                 fmt_int(static_cast<std::int64_t>(sets.pot_plus[j].size()))});
}

void write_decomp_csv(const Ctx& ctx, const std::string& rel,
                      const DecompositionReport& rep) {
  CsvWriter w(ctx.path(rel), ctx.hash,
              {"neuron", "support_size", "support", "coeff",
               "off_support_max", "dense_component"});
  for (std::size_t i = 0; i < rep.neurons.size(); ++i) {
    const NeuronDecomposition& n = rep.neurons[i];
    std::string sup, coef;
    for (std::size_t s = 0; s < n.support.size(); ++s) {
      if (s) {
        sup += '|';
        coef += '|';
      }
      sup += fmt_int(n.support[s]);
      coef += fmt_double(n.coeff[s]);
    }
    w.write_row({fmt_int(static_cast<std::int64_t>(i)),
                 fmt_int(static_cast<std::int64_t>(n.support.size())), sup,
                 coef, fmt_double(n.off_support_max),
                 fmt_double(n.dense_component)});
  }
}

struct DiagSummaryRow {
  std::string model;
  NeuronSets sets;
  bool cap_exceeded = false;
  DenseProjectionReport dense;
};

void write_diag_summary_csv(const Ctx& ctx, const std::string& rel,
                            const std::vector<DiagSummaryRow>& rows) {
  CsvWriter w(ctx.path(rel), ctx.hash,
              {"model", "sure_total", "pot_total", "sure_plus_total",
               "pot_plus_total", "ept", "ept_plus", "ept_pp",
               "support_cap_exceeded", "dense_proj_mean", "dense_proj_median"});
  for (const auto& r : rows) {
    std::int64_t sure = 0, pot = 0, sure_p = 0, pot_p = 0;
    for (int j = 0; j < r.sets.d; ++j) {
      sure += static_cast<std::int64_t>(r.sets.sure[j].size());
      pot += static_cast<std::int64_t>(r.sets.pot[j].size());
      sure_p += static_cast<std::int64_t>(r.sets.sure_plus[j].size());
      pot_p += static_cast<std::int64_t>(r.sets.pot_plus[j].size());
    }
    w.write_row({r.model, fmt_int(sure), fmt_int(pot), fmt_int(sure_p),
                 fmt_int(pot_p),
                 fmt_int(static_cast<std::int64_t>(r.sets.ept.size())),
                 fmt_int(static_cast<std::int64_t>(r.sets.ept_plus.size())),
                 fmt_int(static_cast<std::int64_t>(r.sets.ept_pp.size())),
                 r.cap_exceeded ? "1" : "0", fmt_double(r.dense.mean),
                 fmt_double(r.dense.median)});
  }
}

void write_purity_csv(const Ctx& ctx, const std::string& rel,
                      const PurityReport& rep,
                      const std::vector<int>& union_flags) {
  CsvWriter w(ctx.path(rel), ctx.hash,
              {"neuron", "in_sure_union", "theta_init_clean",
               "theta_init_robust", "theta_clean_robust"});
  for (std::size_t i = 0; i < rep.theta_init_clean.size(); ++i)
    w.write_row({fmt_int(static_cast<std::int64_t>(i)),
                 fmt_int(union_flags[i]),
                 fmt_double(rep.theta_init_clean[i]),
                 fmt_double(rep.theta_init_robust[i]),
                 fmt_double(rep.theta_clean_robust[i])});
}

void write_purity_summary_csv(const Ctx& ctx, const std::string& rel,
                              const PurityReport& rep,
                              const std::vector<int>& union_neurons) {
  auto sub_median = [&](const std::vector<double>& v) {
    std::vector<double> sel;
    sel.reserve(union_neurons.size());
    for (int i : union_neurons) sel.push_back(v[static_cast<std::size_t>(i)]);
    return median_value(std::move(sel));
  };
  CsvWriter w(ctx.path(rel), ctx.hash,
              {"scope", "n_neurons", "median_init_clean", "median_init_robust",
               "median_clean_robust", "cross_neuron_median_clean"});
  w.write_row({"all",
               fmt_int(static_cast<std::int64_t>(rep.theta_init_clean.size())),
               fmt_double(rep.median_init_clean),
               fmt_double(rep.median_init_robust),
               fmt_double(rep.median_clean_robust),
               fmt_double(rep.cross_neuron_median)});
  w.write_row({"sure_union",
               fmt_int(static_cast<std::int64_t>(union_neurons.size())),
               fmt_double(sub_median(rep.theta_init_clean)),
               fmt_double(sub_median(rep.theta_init_robust)),
               fmt_double(sub_median(rep.theta_clean_robust)),
               fmt_double(rep.cross_neuron_median)});
}

void write_dense_projection_csv(const Ctx& ctx, const std::string& rel,
                                const std::vector<std::pair<std::string,
                                                            DenseProjectionReport>>&
                                    rows) {
  CsvWriter w(ctx.path(rel), ctx.hash, {"model", "n", "mean", "median"});
  for (const auto& [model, rep] : rows)
    w.write_row({model,
                 fmt_int(static_cast<std::int64_t>(rep.per_neuron.size())),
                 fmt_double(rep.mean), fmt_double(rep.median)});
}

void write_eval_csv(const Ctx& ctx, const std::string& rel,
                    const std::vector<std::pair<std::string, EvalReport>>&
                        reports) {
  CsvWriter w(ctx.path(rel), ctx.hash,
              {"model", "attack", "norm", "tau", "steps", "error", "se",
               "fallbacks", "n", "mean_loss"});
  for (const auto& [model, rep] : reports) {
    w.write_row({model, "none", "-", fmt_double(0.0), fmt_int(0),
                 fmt_double(rep.clean_error), fmt_double(rep.clean_se),
                 fmt_int(0), fmt_int(rep.n), fmt_double(rep.mean_loss)});
    for (const auto& a : rep.attacks)
      w.write_row({model, a.spec.name(), attack_norm_name(a.spec),
                   fmt_double(a.spec.budget.tau), fmt_int(a.spec.steps),
                   fmt_double(a.robust_error), fmt_double(a.se),
                   fmt_int(a.fallback_count), fmt_int(rep.n),
                   fmt_double(rep.mean_loss)});
  }
}

void write_margins_csv(const Ctx& ctx, const std::string& rel,
                       const std::vector<std::pair<std::string, EvalReport>>&
                           reports) {
  CsvWriter w(ctx.path(rel), ctx.hash,
              {"model", "bin", "lo", "hi", "count", "mean", "frac_positive",
               "n"});
  const double width =
      (MarginStats::kHi - MarginStats::kLo) / MarginStats::kBins;
  for (const auto& [model, rep] : reports) {
    const MarginStats& ms = rep.margins;
    for (int b = 0; b < MarginStats::kBins; ++b)
      w.write_row({model, fmt_int(b),
                   fmt_double(MarginStats::kLo + b * width),
                   fmt_double(MarginStats::kLo + (b + 1) * width),
                   fmt_int(ms.counts[static_cast<std::size_t>(b)]),
                   fmt_double(ms.mean), fmt_double(ms.frac_positive),
                   fmt_int(ms.n)});
  }
}

// ---- stage helpers ----

CheckpointMeta base_meta(const Ctx& ctx) {
  CheckpointMeta meta;
  meta.k = ctx.cfg.k;
  meta.lambda = ctx.cfg.lambda;
  meta.seed = ctx.cfg.seed;
  return meta;
}

void save_net(const Ctx& ctx, const std::string& rel, const SymmetricNet& net,
              std::int64_t iteration) {
  CheckpointMeta meta = base_meta(ctx);
  meta.iteration = iteration;
  save_net_checkpoint(ctx.path(rel), net, meta);
}

std::string snapshot_name(const std::string& stage, std::int64_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_t%06lld.bin",
                static_cast<long long>(t));
  return "ckpt_" + stage + buf;
}

// Attaches the retain=all snapshot writer for one training stage.
void attach_snapshots(Ctx& ctx, MetricsOptions& opts, const std::string& stage,
                      std::vector<std::string>& outputs) {
  if (ctx.cfg.retain != "all") return;
  auto* ctx_p = &ctx;
  auto* out_p = &outputs;
  std::string st = stage;
  opts.snapshot = [ctx_p, out_p, st](const SymmetricNet& net, std::int64_t t) {
    std::string rel = snapshot_name(st, t);
    save_net(*ctx_p, rel, net, t);
    out_p->push_back(rel);
  };
}

std::vector<SurePair> to_sure_pairs(const NeuronSets& sets) {
  std::vector<SurePair> pairs;
  for (const auto& ref : sets.sure_union())
    pairs.push_back({ref.neuron, ref.atom, ref.orient});
  return pairs;
}

std::vector<SureEntry> to_entries(const std::vector<SurePair>& pairs) {
  std::vector<SureEntry> es;
  es.reserve(pairs.size());
  for (const auto& p : pairs) es.push_back({p.neuron, p.orient});
  return es;
}

std::vector<int> union_neuron_list(const std::vector<SurePair>& pairs, int m) {
  std::vector<char> seen(static_cast<std::size_t>(m), 0);
  std::vector<int> out;
  for (const auto& p : pairs)
    if (!seen[static_cast<std::size_t>(p.neuron)]) {
      seen[static_cast<std::size_t>(p.neuron)] = 1;
      out.push_back(p.neuron);
    }
  return out;
}

RhoMode rho_mode_of(const Ctx& ctx) {
  return ctx.cfg.rho_mode == "zero" ? RhoMode::zero : RhoMode::fresh;
}

EvalReport sweep_eval(const Ctx& ctx, const Predictor& pred,
                      const SparseCodingTask& task, std::uint64_t slot) {
  Rng rng = Rng::substream(ctx.cfg.seed, stream::kEval, kEvalSweepBase + slot);
  return evaluate(pred, task, parse_attack_list(ctx.cfg.eval_attacks),
                  ctx.cfg.eval_samples, rng);
}

struct CleanStage {
  CleanTrainResult result;
  std::vector<SurePair> sure_pairs;
};

CleanStage stage_clean(Ctx& ctx, const SparseCodingTask& task,
                       const Dataset& data) {
  TrainSchedule sched = make_schedule(ctx.cfg);
  MetricsOptions opts = make_metrics_options(ctx.cfg);
  std::vector<std::string> outputs;
  attach_snapshots(ctx, opts, "clean", outputs);

  NeuronSetParams init_params =
      make_neuron_params(ctx.cfg, initial_bias(ctx.cfg));
  SureClassifier classify = [&](const Mat& W) {
    return to_sure_pairs(classify_neurons(W, task.dict, task.w_star,
                                          init_params));
  };

  CleanStage out;
  out.result = clean_train(task, data, sched, ctx.cfg.seed, opts, classify);
  out.sure_pairs = out.result.sure_pairs;

  save_net(ctx, "ckpt_init.bin", out.result.init_net, 0);
  save_net(ctx, "ckpt_clean.bin", out.result.net, sched.t_f);
  write_sure_pairs_csv(ctx, "sure_pairs.csv", out.sure_pairs);
  outputs.insert(outputs.begin(),
                 {"ckpt_init.bin", "ckpt_clean.bin", "sure_pairs.csv"});
  ctx.manifest.add("clean-train", outputs);
  return out;
}

AdvTrainResult stage_adv(Ctx& ctx, const SparseCodingTask& task,
                         const Dataset& data, const SymmetricNet& start,
                         const Mat& W_ref,
                         const std::vector<SurePair>& sure_pairs,
                         std::int64_t t0, bool late_phase) {
  TrainSchedule sched = make_schedule(ctx.cfg);
  MetricsOptions opts = make_metrics_options(ctx.cfg);
  std::vector<std::string> outputs;
  attach_snapshots(ctx, opts, "adv", outputs);

  AttackSpec attack = AttackSpec::parse(ctx.cfg.adv_attack);
  AdvTrainResult res = adv_train(task, data, start, sched, ctx.cfg.seed,
                                 attack, opts, W_ref, sure_pairs, t0,
                                 late_phase);
  save_net(ctx, "ckpt_adv.bin", res.net, t0 + sched.t_g);
  outputs.insert(outputs.begin(), "ckpt_adv.bin");
  ctx.manifest.add("adv-train", outputs);
  return res;
}

NeuronSets stage_diag(Ctx& ctx, const SparseCodingTask& task,
                      const SymmetricNet& net, const std::string& label,
                      std::vector<DiagSummaryRow>& summary,
                      const std::vector<SurePair>& union_pairs) {
  NeuronSetParams params = make_neuron_params(ctx.cfg, net.b);
  NeuronSets sets = classify_neurons(net.W, task.dict, task.w_star, params);
  write_neuron_sets_csv(ctx, "neuron_sets_" + label + ".csv", sets);

  const double coeff_threshold =
      params.sigma_w * std::sqrt((params.c1 + params.c2) *
                                 std::log(static_cast<double>(ctx.cfg.d)));
  DecompositionReport decomp = decompose_neurons(
      net.W, task.dict, task.w_star, coeff_threshold, ctx.cfg.support_cap);
  write_decomp_csv(ctx, "decomp_" + label + ".csv", decomp);

  DiagSummaryRow row;
  row.model = label;
  row.sets = sets;
  row.cap_exceeded = decomp.cap_exceeded;
  row.dense =
      dense_projection(net.W, task.dict, task.w_star, to_entries(union_pairs));
  summary.push_back(std::move(row));
  ctx.manifest.add("diagnostics-" + label,
                   {"neuron_sets_" + label + ".csv",
                    "decomp_" + label + ".csv"});
  return sets;
}

void stage_purity(Ctx& ctx, const SymmetricNet& init, const SymmetricNet& clean,
                  const SymmetricNet& adv,
                  const std::vector<SurePair>& union_pairs) {
  PurityReport rep = purity_report(init.W, clean.W, adv.W);
  std::vector<int> flags(static_cast<std::size_t>(init.m()), 0);
  for (const auto& p : union_pairs)
    flags[static_cast<std::size_t>(p.neuron)] = 1;
  write_purity_csv(ctx, "purity.csv", rep, flags);
  write_purity_summary_csv(ctx, "purity_summary.csv", rep,
                           union_neuron_list(union_pairs, init.m()));
  ctx.manifest.add("purity", {"purity.csv", "purity_summary.csv"});
}

void stage_eval_sweep(Ctx& ctx, const SparseCodingTask& task,
                      const std::vector<std::pair<std::string,
                                                  const SymmetricNet*>>& nets) {
  std::vector<std::pair<std::string, EvalReport>> reports;
  std::uint64_t slot = 0;
  for (const auto& [name, net] : nets) {
    SymmetricNetPredictor pred(*net, rho_mode_of(ctx));
    reports.emplace_back(name, sweep_eval(ctx, pred, task, slot++));
  }
  write_eval_csv(ctx, "eval.csv", reports);
  write_margins_csv(ctx, "margins.csv", reports);
  ctx.manifest.add("eval", {"eval.csv", "margins.csv"});
}

void stage_recon(Ctx& ctx, const SparseCodingTask& task, const Mat& W_clean,
                 const Mat& W_adv) {
  Mat A_clean = weight_atoms(W_clean);
  Mat A_robust = weight_atoms(W_adv);
  Rng rng = Rng::substream(ctx.cfg.seed, "recon");
  Dataset inputs = sample_dataset(task, ctx.cfg.recon_inputs, rng);

  std::vector<double> grid;
  {
    std::string cur;
    auto flush = [&] {
      if (cur.empty()) return;
      double v = 0.0;
      auto res = std::from_chars(cur.data(), cur.data() + cur.size(), v);
      if (res.ec != std::errc{} || res.ptr != cur.data() + cur.size() ||
          v <= 0.0)
        throw config_error("diag.recon_lambdas: bad value '" + cur + "'");
      grid.push_back(v);
      cur.clear();
    };
    for (char c : ctx.cfg.recon_lambdas) {
      if (c == ',')
        flush();
      else if (c != ' ')
        cur += c;
    }
    flush();
  }
  if (grid.empty()) throw config_error("diag.recon_lambdas is empty");

  LassoParams base = make_lasso_params(ctx.cfg);
  CsvWriter w(ctx.path("recon.csv"), ctx.hash,
              {"input", "basis", "lambda", "residual", "nonzeros", "nnz_frac",
               "iterations", "converged"});
  for (Eigen::Index r = 0; r < inputs.X.rows(); ++r) {
    Vec x = inputs.X.row(r).transpose();
    for (int which = 0; which < 2; ++which) {
      const Mat& A = which == 0 ? A_clean : A_robust;
      for (double lam : grid) {
        LassoParams p = base;
        p.lambda1 = lam;
        LassoResult res = lasso_reconstruct(A, x, p);
        w.write_row({fmt_int(r), which == 0 ? "clean" : "robust",
                     fmt_double(lam), fmt_double(res.residual),
                     fmt_int(res.nonzeros), fmt_double(res.nonzero_frac),
                     fmt_int(res.iterations), res.converged ? "1" : "0"});
      }
    }
  }
  w.close();

  const double frac = reconstruction_sparsity_ordering(
      A_clean, A_robust, inputs.X, grid, base.max_iter);
  CsvWriter s(ctx.path("recon_summary.csv"), ctx.hash,
              {"n_inputs", "robust_no_denser_frac"});
  s.write_row({fmt_int(inputs.X.rows()), fmt_double(frac)});
  ctx.manifest.add("reconstruct", {"recon.csv", "recon_summary.csv"});
}

void stage_plots(Ctx& ctx, bool with_purity) {
  auto outs = emit_plot_data(ctx.path("metrics.csv"),
                             with_purity ? ctx.path("purity.csv") : "",
                             ctx.path("plots"));
  std::vector<std::string> rels;
  for (auto& o : outs) rels.push_back("plots/" + fs::path(o).filename().string());
  ctx.manifest.add("plot-data", rels);
}

// Re-derives the deterministic initialization for this config.
SymmetricNet rebuild_init(const Ctx& ctx) {
  TrainSchedule sched = make_schedule(ctx.cfg);
  Rng rng = Rng::substream(ctx.cfg.seed, stream::kInit);
  SymmetricNet net = init_symmetric_net(sched.m, ctx.cfg.d, sched.sigma0,
                                        sched.b0, 0.0, rng);
  net.sigma_rho = sigma_rho_value(sched, net.b, false, ctx.cfg.d);
  return net;
}

void run_ntk_stage(Ctx& ctx, const SparseCodingTask& task) {
  NtkConfig ncfg = make_ntk_config(ctx.cfg);
  NtkTrainResult res = train_ntk(task, ncfg, ctx.cfg.seed);

  {
    CsvWriter w(ctx.path("ntk.csv"), ctx.hash, {"t", "train_loss",
                                                "clean_err"});
    for (const auto& r : res.metrics)
      w.write_row({fmt_int(r.t), fmt_double(r.train_loss),
                   fmt_double(r.clean_err)});
  }
  CheckpointMeta meta = base_meta(ctx);
  meta.iteration = ncfg.iters;
  meta.b = ncfg.b;
  meta.sigma_rho = ncfg.sigma_rho;
  meta.lambda = ncfg.lambda;
  save_ntk_checkpoint(ctx.path("ckpt_ntk.bin"), res.model, meta);

  NtkPredictor pred(res.model);
  std::vector<std::pair<std::string, EvalReport>> reports;
  reports.emplace_back("ntk", sweep_eval(ctx, pred, task, 3));
  write_eval_csv(ctx, "ntk_eval.csv", reports);
  ctx.manifest.add("ntk", {"ntk.csv", "ckpt_ntk.bin", "ntk_eval.csv"});
}

}  // namespace

void RunManifest::add(const std::string& stage,
                      std::vector<std::string> outputs) {
  stages.push_back({stage, "ok", std::move(outputs)});
}

void RunManifest::save() const {
  const std::string path = dir + "/manifest.txt";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write manifest: " + path);
  out << "version = " << version << "\n";
  out << "config_hash = " << config_hash << "\n";
  out << "status = " << status << "\n";
  out << "wall_clock_sec = " << fmt_double(wall_clock_sec) << "\n";
  for (const auto& s : stages) {
    out << "stage." << s.name << " = " << s.status;
    for (const auto& o : s.outputs) out << ' ' << o;
    out << "\n";
  }
}

RunManifest run_pipeline(const ExperimentConfig& cfg) {
  Ctx ctx(cfg);
  SparseCodingTask task = guarded(ctx, "task", [&] { return make_task(cfg); });
  Dataset data = guarded(ctx, "sample-data", [&] {
    Rng rng = Rng::substream(cfg.seed, stream::kData);
    Dataset d = sample_dataset(task, cfg.n_train, rng);
    ctx.manifest.add("sample-data", {});
    return d;
  });

  CleanStage clean =
      guarded(ctx, "clean-train", [&] { return stage_clean(ctx, task, data); });

  std::vector<DiagSummaryRow> summary;
  guarded(ctx, "diagnostics-clean", [&] {
    DiagSummaryRow init_row;
    init_row.model = "init";
    init_row.sets = classify_neurons(
        clean.result.init_net.W, task.dict, task.w_star,
        make_neuron_params(cfg, initial_bias(cfg)));
    init_row.dense = dense_projection(clean.result.init_net.W, task.dict,
                                      task.w_star,
                                      to_entries(clean.sure_pairs));
    summary.push_back(std::move(init_row));
    stage_diag(ctx, task, clean.result.net, "clean", summary,
               clean.sure_pairs);
    return 0;
  });

  AdvTrainResult adv = guarded(ctx, "adv-train", [&] {
    return stage_adv(ctx, task, data, clean.result.net, clean.result.net.W,
                     clean.sure_pairs, make_schedule(cfg).t_f,
                     clean.result.late_phase);
  });

  guarded(ctx, "diagnostics-adv", [&] {
    stage_diag(ctx, task, adv.net, "adv", summary, clean.sure_pairs);
    write_diag_summary_csv(ctx, "diag_summary.csv", summary);
    std::vector<std::pair<std::string, DenseProjectionReport>> dense_rows;
    for (const auto& row : summary)
      dense_rows.emplace_back(row.model, row.dense);
    write_dense_projection_csv(ctx, "dense_projection.csv", dense_rows);
    return 0;
  });

  guarded(ctx, "purity", [&] {
    stage_purity(ctx, clean.result.init_net, clean.result.net, adv.net,
                 clean.sure_pairs);
    return 0;
  });

  guarded(ctx, "metrics-csv", [&] {
    write_metrics_csv(ctx, "metrics.csv",
                      make_metrics_options(cfg).attacks,
                      {&clean.result.metrics, &adv.metrics});
    write_lottery_csv(ctx, "lottery.csv", clean.sure_pairs,
                      {&clean.result.lottery, &adv.lottery});
    ctx.manifest.add("metrics-csv", {"metrics.csv", "lottery.csv"});
    return 0;
  });

  guarded(ctx, "eval", [&] {
    stage_eval_sweep(ctx, task,
                     {{"init", &clean.result.init_net},
                      {"clean", &clean.result.net},
                      {"adv", &adv.net}});
    return 0;
  });

  if (cfg.reconstruct)
    guarded(ctx, "reconstruct", [&] {
      stage_recon(ctx, task, clean.result.net.W, adv.net.W);
      return 0;
    });

  guarded(ctx, "plot-data", [&] {
    stage_plots(ctx, true);
    return 0;
  });

  ctx.finalize();
  return ctx.manifest;
}

RunManifest run_train_clean(const ExperimentConfig& cfg) {
  Ctx ctx(cfg);
  SparseCodingTask task = guarded(ctx, "task", [&] { return make_task(cfg); });
  Dataset data = guarded(ctx, "sample-data", [&] {
    Rng rng = Rng::substream(cfg.seed, stream::kData);
    Dataset d = sample_dataset(task, cfg.n_train, rng);
    ctx.manifest.add("sample-data", {});
    return d;
  });
  CleanStage clean =
      guarded(ctx, "clean-train", [&] { return stage_clean(ctx, task, data); });
  std::vector<DiagSummaryRow> summary;
  guarded(ctx, "diagnostics-clean", [&] {
    stage_diag(ctx, task, clean.result.net, "clean", summary,
               clean.sure_pairs);
    write_diag_summary_csv(ctx, "diag_summary.csv", summary);
    return 0;
  });
  guarded(ctx, "metrics-csv", [&] {
    write_metrics_csv(ctx, "metrics.csv", make_metrics_options(cfg).attacks,
                      {&clean.result.metrics});
    write_lottery_csv(ctx, "lottery.csv", clean.sure_pairs,
                      {&clean.result.lottery});
    ctx.manifest.add("metrics-csv", {"metrics.csv", "lottery.csv"});
    return 0;
  });
  guarded(ctx, "eval", [&] {
    stage_eval_sweep(ctx, task,
                     {{"init", &clean.result.init_net},
                      {"clean", &clean.result.net}});
    return 0;
  });
  guarded(ctx, "plot-data", [&] {
    stage_plots(ctx, false);
    return 0;
  });
  ctx.finalize();
  return ctx.manifest;
}

RunManifest run_train_adv(const ExperimentConfig& cfg,
                          const std::string& start_ckpt) {
  if (start_ckpt.empty()) return run_pipeline(cfg);

  Ctx ctx(cfg);
  SparseCodingTask task = guarded(ctx, "task", [&] { return make_task(cfg); });
  Dataset data = guarded(ctx, "sample-data", [&] {
    Rng rng = Rng::substream(cfg.seed, stream::kData);
    Dataset d = sample_dataset(task, cfg.n_train, rng);
    ctx.manifest.add("sample-data", {});
    return d;
  });

  CheckpointMeta meta;
  SymmetricNet start = guarded(ctx, "load-start", [&] {
    SymmetricNet net = load_net_checkpoint(start_ckpt, &meta);
    if (net.d() != cfg.d || net.m() != cfg.m)
      throw config_error("start checkpoint dimensions do not match config");
    ctx.manifest.add("load-start", {});
    return net;
  });

  std::vector<SurePair> sure_pairs = guarded(ctx, "classify-init", [&] {
    SymmetricNet init = rebuild_init(ctx);
    auto pairs = to_sure_pairs(classify_neurons(
        init.W, task.dict, task.w_star,
        make_neuron_params(cfg, initial_bias(cfg))));
    write_sure_pairs_csv(ctx, "sure_pairs.csv", pairs);
    ctx.manifest.add("classify-init", {"sure_pairs.csv"});
    return pairs;
  });

  const bool late = cfg.t_a >= 0 ? meta.iteration > cfg.t_a
                                 : start.b >= cfg.b_cap - 1e-15;
  AdvTrainResult adv = guarded(ctx, "adv-train", [&] {
    return stage_adv(ctx, task, data, start, start.W, sure_pairs,
                     meta.iteration, late);
  });

  std::vector<DiagSummaryRow> summary;
  guarded(ctx, "diagnostics-adv", [&] {
    stage_diag(ctx, task, adv.net, "adv", summary, sure_pairs);
    write_diag_summary_csv(ctx, "diag_summary.csv", summary);
    return 0;
  });
  guarded(ctx, "metrics-csv", [&] {
    write_metrics_csv(ctx, "metrics.csv", make_metrics_options(cfg).attacks,
                      {&adv.metrics});
    write_lottery_csv(ctx, "lottery.csv", sure_pairs, {&adv.lottery});
    ctx.manifest.add("metrics-csv", {"metrics.csv", "lottery.csv"});
    return 0;
  });
  guarded(ctx, "eval", [&] {
    stage_eval_sweep(ctx, task, {{"start", &start}, {"adv", &adv.net}});
    return 0;
  });
  guarded(ctx, "plot-data", [&] {
    stage_plots(ctx, false);
    return 0;
  });
  ctx.finalize();
  return ctx.manifest;
}

RunManifest run_attack_eval(const ExperimentConfig& cfg,
                            const std::string& net_ckpt) {
  Ctx ctx(cfg);
  SparseCodingTask task = guarded(ctx, "task", [&] { return make_task(cfg); });
  guarded(ctx, "attack-eval", [&] {
    CheckpointMeta meta;
    std::ifstream probe(net_ckpt, std::ios::binary);
    if (!probe) throw config_error("cannot open checkpoint: " + net_ckpt);
    std::string first;
    std::getline(probe, first);
    probe.close();
    std::vector<std::pair<std::string, EvalReport>> reports;
    if (first.find("schema=ntk1") != std::string::npos) {
      NtkModel model = load_ntk_checkpoint(net_ckpt, &meta);
      NtkPredictor pred(model);
      reports.emplace_back("ntk", sweep_eval(ctx, pred, task, 16));
    } else {
      SymmetricNet net = load_net_checkpoint(net_ckpt, &meta);
      SymmetricNetPredictor pred(net, rho_mode_of(ctx));
      reports.emplace_back("net", sweep_eval(ctx, pred, task, 16));
    }
    write_eval_csv(ctx, "eval.csv", reports);
    write_margins_csv(ctx, "margins.csv", reports);
    ctx.manifest.add("attack-eval", {"eval.csv", "margins.csv"});
    return 0;
  });
  ctx.finalize();
  return ctx.manifest;
}

RunManifest run_diagnose(const ExperimentConfig& cfg,
                         const std::string& net_ckpt,
                         const std::string& adv_ckpt) {
  Ctx ctx(cfg);
  SparseCodingTask task = guarded(ctx, "task", [&] { return make_task(cfg); });
  guarded(ctx, "diagnose", [&] {
    SymmetricNet net = load_net_checkpoint(net_ckpt);
    SymmetricNet init = rebuild_init(ctx);
    std::vector<SurePair> pairs = to_sure_pairs(classify_neurons(
        init.W, task.dict, task.w_star,
        make_neuron_params(cfg, initial_bias(cfg))));
    write_sure_pairs_csv(ctx, "sure_pairs.csv", pairs);

    std::vector<DiagSummaryRow> summary;
    stage_diag(ctx, task, net, "clean", summary, pairs);
    std::vector<std::pair<std::string, DenseProjectionReport>> dense_rows;
    dense_rows.emplace_back(
        "init",
        dense_projection(init.W, task.dict, task.w_star, to_entries(pairs)));
    dense_rows.emplace_back("clean", summary.back().dense);

    if (!adv_ckpt.empty()) {
      SymmetricNet adv = load_net_checkpoint(adv_ckpt);
      stage_diag(ctx, task, adv, "adv", summary, pairs);
      dense_rows.emplace_back("adv", summary.back().dense);
      stage_purity(ctx, init, net, adv, pairs);
    }
    write_diag_summary_csv(ctx, "diag_summary.csv", summary);
    write_dense_projection_csv(ctx, "dense_projection.csv", dense_rows);
    ctx.manifest.add("diagnose", {"sure_pairs.csv", "diag_summary.csv",
                                  "dense_projection.csv"});
    return 0;
  });
  ctx.finalize();
  return ctx.manifest;
}

RunManifest run_ntk(const ExperimentConfig& cfg) {
  Ctx ctx(cfg);
  SparseCodingTask task = guarded(ctx, "task", [&] { return make_task(cfg); });
  guarded(ctx, "ntk", [&] {
    run_ntk_stage(ctx, task);
    return 0;
  });
  ctx.finalize();
  return ctx.manifest;
}

RunManifest run_reconstruct(const ExperimentConfig& cfg,
                            const std::string& clean_ckpt,
                            const std::string& adv_ckpt) {
  Ctx ctx(cfg);
  SparseCodingTask task = guarded(ctx, "task", [&] { return make_task(cfg); });
  guarded(ctx, "reconstruct", [&] {
    SymmetricNet clean = load_net_checkpoint(clean_ckpt);
    SymmetricNet adv = load_net_checkpoint(adv_ckpt);
    stage_recon(ctx, task, clean.W, adv.W);
    return 0;
  });
  ctx.finalize();
  return ctx.manifest;
}

std::vector<std::string> emit_plot_data(const std::string& metrics_csv,
                                        const std::string& purity_csv,
                                        const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<std::string> outputs;
  CsvTable metrics = read_csv(metrics_csv);

  const std::string long_path = out_dir + "/metrics_long.csv";
  emit_long_form(metrics, "t", {"stage"}, long_path);
  outputs.push_back(long_path);

  // Accuracy series: 1 - error columns, one point per source row.
  {
    CsvWriter w(out_dir + "/accuracy_vs_iteration.csv", metrics.config_hash,
                {"series", "x", "y"});
    const int tcol = metrics.column("t");
    for (std::size_t r = 0; r < metrics.rows.size(); ++r)
      for (std::size_t c = 0; c < metrics.columns.size(); ++c) {
        const std::string& name = metrics.columns[c];
        const bool is_err = name == "clean_err" || name.rfind("err_", 0) == 0;
        if (!is_err) continue;
        const std::string series =
            name == "clean_err" ? "acc_clean" : "acc_" + name.substr(4);
        w.write_row({series, metrics.rows[r][static_cast<std::size_t>(tcol)],
                     fmt_double(1.0 -
                                metrics.number(r, static_cast<int>(c)))});
      }
    outputs.push_back(out_dir + "/accuracy_vs_iteration.csv");
  }

  auto single_series = [&](const std::string& col, const std::string& file) {
    const int c = metrics.column(col);
    if (c < 0) return;
    CsvWriter w(out_dir + "/" + file, metrics.config_hash, {"series", "x",
                                                            "y"});
    const int tcol = metrics.column("t");
    for (std::size_t r = 0; r < metrics.rows.size(); ++r)
      w.write_row({col, metrics.rows[r][static_cast<std::size_t>(tcol)],
                   metrics.rows[r][static_cast<std::size_t>(c)]});
    outputs.push_back(out_dir + "/" + file);
  };
  single_series("dense_projection", "dense_projection_vs_iteration.csv");
  single_series("activation_sparsity", "sparsity_vs_iteration.csv");

  if (!purity_csv.empty()) {
    CsvTable purity = read_csv(purity_csv);
    constexpr int kBins = 20;
    const char* cols[3] = {"theta_init_clean", "theta_init_robust",
                           "theta_clean_robust"};
    CsvWriter w(out_dir + "/theta_hist.csv", purity.config_hash,
                {"series", "x", "y"});
    for (const char* col : cols) {
      const int c = purity.column(col);
      if (c < 0) continue;
      std::vector<std::int64_t> counts(kBins, 0);
      for (std::size_t r = 0; r < purity.rows.size(); ++r) {
        double v = purity.number(r, c);
        int bin = std::min(kBins - 1,
                           std::max(0, static_cast<int>(v * kBins)));
        ++counts[static_cast<std::size_t>(bin)];
      }
      for (int b = 0; b < kBins; ++b)
        w.write_row({col, fmt_double((b + 0.5) / kBins),
                     fmt_int(counts[static_cast<std::size_t>(b)])});
    }
    outputs.push_back(out_dir + "/theta_hist.csv");
  }
  return outputs;
}

std::vector<LotteryPoint> lottery_from_checkpoints(
    const std::vector<std::string>& ckpt_paths, const Dictionary& dict,
    const std::vector<SurePair>& pairs) {
  std::vector<LotteryPoint> out;
  for (const auto& path : ckpt_paths) {
    CheckpointMeta meta;
    SymmetricNet net = load_net_checkpoint(path, &meta);
    LotteryPoint pt;
    pt.t = meta.iteration;
    pt.proj.reserve(pairs.size());
    for (const SurePair& p : pairs) {
      double v = dict.is_identity()
                     ? net.W(p.neuron, p.atom)
                     : net.W.row(p.neuron).dot(dict.M.col(p.atom));
      pt.proj.push_back(v);
    }
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace purelab
