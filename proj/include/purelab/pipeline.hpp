#pragma once

#include <string>
#include <vector>

#include "purelab/checkpoint.hpp"
#include "purelab/config.hpp"
#include "purelab/diagnostics.hpp"
#include "purelab/training.hpp"

namespace purelab {

inline constexpr const char* kArtifactVersion = "1.0";

struct StageRecord {
  std::string name;
  std::string status;  // "ok" or "failed"
  std::vector<std::string> outputs;  // paths relative to the run directory
};

struct RunManifest {
  std::string config_hash;
  std::string version = kArtifactVersion;
  std::string status = "ok";  // or "failed:<stage>"
  double wall_clock_sec = 0.0;
  std::vector<StageRecord> stages;
  std::string dir;

  void add(const std::string& stage, std::vector<std::string> outputs);
  void save() const;  // writes <dir>/manifest.txt
};

// Full default pipeline: sample data, clean train, diagnostics, adversarial
// train, diagnostics, purity report, eval sweep, plot data, manifest. On a
// stage failure the manifest records the stage and partial outputs stay on
// disk; the exception is rethrown for the exit code.
RunManifest run_pipeline(const ExperimentConfig& cfg);

// Stages through diagnostics on the clean net only.
RunManifest run_train_clean(const ExperimentConfig& cfg);

// Adversarial stage; start_ckpt empty means clean-train first.
RunManifest run_train_adv(const ExperimentConfig& cfg,
                          const std::string& start_ckpt);

// Eval sweep of eval.attacks against a stored net (net1 or ntk1 schema).
RunManifest run_attack_eval(const ExperimentConfig& cfg,
                            const std::string& net_ckpt);

// Neuron sets, decomposition, dense projection on a stored net; with a
// robust checkpoint the three-way angle report is included (the matching
// initialization is re-derived from the seed).
RunManifest run_diagnose(const ExperimentConfig& cfg,
                         const std::string& net_ckpt,
                         const std::string& adv_ckpt);

// Random-feature baseline: train, metrics CSV, checkpoint, eval sweep.
RunManifest run_ntk(const ExperimentConfig& cfg);

// Sparse reconstruction comparison between two weight dictionaries.
RunManifest run_reconstruct(const ExperimentConfig& cfg,
                            const std::string& clean_ckpt,
                            const std::string& adv_ckpt);

// Plot-ready long-form CSVs from a metrics CSV and (optionally) a per-neuron
// angle CSV; writes into out_dir.
std::vector<std::string> emit_plot_data(const std::string& metrics_csv,
                                        const std::string& purity_csv,
                                        const std::string& out_dir);

// Recomputes the per-pair atom projections from stored checkpoints; row
// order follows the checkpoint order given.
std::vector<LotteryPoint> lottery_from_checkpoints(
    const std::vector<std::string>& ckpt_paths, const Dictionary& dict,
    const std::vector<SurePair>& pairs);

}  // namespace purelab
