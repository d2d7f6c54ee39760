#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "purelab/config.hpp"
#include "purelab/csv.hpp"
#include "purelab/pipeline.hpp"

namespace {

using purelab::ExperimentConfig;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "config file (key = value lines)");
  sub->add_option("--out", c.out, "output directory (overrides run.out)");
  sub->add_option("--seed", c.seed, "root seed (overrides run.seed)");
  sub->add_option("--threads", c.threads, "worker threads (overrides run.threads)");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? purelab::parse_config_text("")
                                          : purelab::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  if (c.threads) cfg.threads = *c.threads;
  purelab::validate_config(cfg);
  return cfg;
}

void report(const purelab::RunManifest& manifest) {
  std::cout << manifest.status << " " << manifest.dir << " ("
            << purelab::fmt_double(manifest.wall_clock_sec) << " s, config "
            << manifest.config_hash << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse-coding robustness laboratory"};
  app.require_subcommand(1);

  Common c_gen, c_run, c_clean, c_adv, c_eval, c_diag, c_ntk, c_recon;
  std::string adv_start, eval_net, diag_net, diag_adv, recon_clean, recon_adv;

  CLI::App* gen = app.add_subcommand(
      "gen-config", "write the effective default configuration");
  add_common(gen, c_gen);

  CLI::App* run = app.add_subcommand("run", "full pipeline");
  add_common(run, c_run);

  CLI::App* clean = app.add_subcommand("train-clean",
                                       "clean stage plus diagnostics");
  add_common(clean, c_clean);

  CLI::App* adv = app.add_subcommand("train-adv", "adversarial stage");
  add_common(adv, c_adv);
  adv->add_option("--start", adv_start,
                  "clean checkpoint to continue from (default: run the clean "
                  "stage first)");

  CLI::App* aeval = app.add_subcommand("attack-eval",
                                       "evaluate a stored model");
  add_common(aeval, c_eval);
  aeval->add_option("--net", eval_net, "checkpoint to evaluate")->required();

  CLI::App* diag = app.add_subcommand("diagnose", "neuron-level reports");
  add_common(diag, c_diag);
  diag->add_option("--net", diag_net, "checkpoint to analyze")->required();
  diag->add_option("--adv", diag_adv,
                   "robust checkpoint for the three-way angle report");

  CLI::App* ntk = app.add_subcommand("ntk", "random-feature baseline");
  add_common(ntk, c_ntk);

  CLI::App* recon = app.add_subcommand("reconstruct",
                                       "sparse-code comparison");
  add_common(recon, c_recon);
  recon->add_option("--clean", recon_clean, "clean checkpoint")->required();
  recon->add_option("--adv", recon_adv, "robust checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = resolve(c_gen);
      const std::string text = purelab::emit_config(cfg);
      if (c_gen.out.empty()) {
        std::cout << text;
      } else {
        std::ofstream f(c_gen.out, std::ios::binary);
        if (!f) throw purelab::config_error("cannot write " + c_gen.out);
        f << text;
        std::cout << "wrote " << c_gen.out << " (config "
                  << purelab::config_hash(cfg) << ")\n";
      }
      return 0;
    }
    if (run->parsed()) {
      report(purelab::run_pipeline(resolve(c_run)));
      return 0;
    }
    if (clean->parsed()) {
      report(purelab::run_train_clean(resolve(c_clean)));
      return 0;
    }
    if (adv->parsed()) {
      report(purelab::run_train_adv(resolve(c_adv), adv_start));
      return 0;
    }
    if (aeval->parsed()) {
      report(purelab::run_attack_eval(resolve(c_eval), eval_net));
      return 0;
    }
    if (diag->parsed()) {
      report(purelab::run_diagnose(resolve(c_diag), diag_net, diag_adv));
      return 0;
    }
    if (ntk->parsed()) {
      report(purelab::run_ntk(resolve(c_ntk)));
      return 0;
    }
    if (recon->parsed()) {
      report(purelab::run_reconstruct(resolve(c_recon), recon_clean,
                                      recon_adv));
      return 0;
    }
  } catch (const purelab::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const purelab::divergence_error& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const purelab::contract_violation& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
