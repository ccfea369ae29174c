#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stc/agent.hpp"
#include "stc/config.hpp"
#include "stc/correction.hpp"
#include "stc/data.hpp"
#include "stc/target_models.hpp"
#include "stc/theory.hpp"

namespace stc::pipeline {

/// File layout of a workspace directory. Names embed the sweep values so
/// expanded runs never collide.
struct Workspace {
  std::filesystem::path root;

  std::filesystem::path source_dataset() const { return root / "source.stcds"; }
  std::filesystem::path target_dataset() const { return root / "target.stcds"; }
  std::filesystem::path inverse_model() const { return root / "inverse.stcnet"; }
  std::filesystem::path forward_model() const { return root / "forward.stcnet"; }
  std::filesystem::path reward_model() const { return root / "reward.stcnet"; }
  std::filesystem::path phase1_report() const { return root / "phase1.csv"; }
  std::filesystem::path corrected_dataset(float lambda, float alpha) const;
  std::filesystem::path corrections_csv(float lambda, float alpha) const;
  std::filesystem::path run_dir(float lambda, float alpha, float beta, std::uint64_t seed) const;
  std::filesystem::path bounds_csv() const { return root / "bounds.csv"; }
  std::filesystem::path diagnostics_csv(float lambda, float alpha) const;
  std::filesystem::path densities_csv(float lambda, float alpha) const;
  std::filesystem::path resolved_config() const { return root / "resolved.ini"; }
};

/// Writes the resolved config snapshot into `dir`.
void write_resolved_config(const config::ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Parallel-job cap: STC_THREADS if set, else hardware concurrency.
unsigned sweep_thread_cap();

// --- Subcommand bodies (also the library-level pipeline API) ---------------

/// Generates the source and target datasets.
void gen_data(const config::ExperimentConfig& cfg, const Workspace& ws);

/// Trains the three target models, saves checkpoints and phase1.csv.
models::Phase1Report pretrain(const config::ExperimentConfig& cfg, const Workspace& ws);

/// Loads the Phase I models if present, trains them otherwise.
models::TargetModels load_or_pretrain(const config::ExperimentConfig& cfg, const Workspace& ws);

/// Corrects the source dataset for every (lambda, alpha) combination.
/// Returns one acceptance rate per combination.
std::vector<double> correct(const config::ExperimentConfig& cfg, const Workspace& ws);

struct RunSummary {
  float lambda = 0.0f;
  float alpha = 0.0f;
  float beta = 0.0f;
  std::uint64_t seed = 0;
  double acceptance_rate = 0.0;
  double final_score = 0.0;
  double final_return = 0.0;
  std::filesystem::path dir;
};

/// Expands (lambda, alpha, beta, seed), trains each combination (in parallel
/// up to the thread cap), and writes per-run metrics/checkpoints.
std::vector<RunSummary> train(const config::ExperimentConfig& cfg, const Workspace& ws);

/// Re-evaluates saved actors; writes eval.csv per run directory.
std::vector<agent::EvalReport> evaluate_runs(const config::ExperimentConfig& cfg,
                                             const Workspace& ws);

/// KD-tree pairing + density report for every (lambda, alpha) combination.
void diagnose(const config::ExperimentConfig& cfg, const Workspace& ws);

struct BoundsOptions {
  std::string theorem = "all";  // 1 | 2 | 3 | telescoping | all
  int trials = 200;
  double delta = 0.1;
  std::vector<int> sample_sizes{50, 500, 5000};
  std::uint64_t seed = 1;
  double gamma = 0.99;
};

struct BoundsSummary {
  std::vector<theory::BoundReport> reports;
  int violations = 0;
  double theorem3_failure_rate = 0.0;
};

/// Randomized verification trials; one CSV row per trial.
BoundsSummary verify_bounds(const BoundsOptions& options, const Workspace& ws);

/// In-memory end-to-end run used by `train` and the acceptance suite:
/// Phase I on the target set, correction at (lambda, alpha), Phase II loop.
struct PipelineResult {
  agent::TrainLoopResult loop;
  double acceptance_rate = 0.0;
};

PipelineResult run_pipeline(const config::ExperimentConfig& cfg, float lambda, float alpha,
                            float beta, std::uint64_t seed,
                            const data::TransitionDataset& source,
                            const data::TransitionDataset& target,
                            const models::TargetModels& models);

}  // namespace stc::pipeline
