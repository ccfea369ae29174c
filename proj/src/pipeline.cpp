#include "stc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <thread>

#include "stc/diagnostics.hpp"

namespace stc::pipeline {

namespace {

std::string format_value(float v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%g", static_cast<double>(v));
  return buf;
}

std::string csv_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void require_file(const std::filesystem::path& path, const std::string& producer) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("missing " + path.string() + "; run `" + producer + "` first");
  }
}

}  // namespace

std::filesystem::path Workspace::corrected_dataset(float lambda, float alpha) const {
  return root / ("corrected_lam" + format_value(lambda) + "_alpha" + format_value(alpha) +
                 ".stcds");
}

std::filesystem::path Workspace::corrections_csv(float lambda, float alpha) const {
  return root / ("corrections_lam" + format_value(lambda) + "_alpha" + format_value(alpha) +
                 ".csv");
}

std::filesystem::path Workspace::run_dir(float lambda, float alpha, float beta,
                                         std::uint64_t seed) const {
  return root / ("run_lam" + format_value(lambda) + "_alpha" + format_value(alpha) + "_beta" +
                 format_value(beta) + "_seed" + std::to_string(seed));
}

std::filesystem::path Workspace::diagnostics_csv(float lambda, float alpha) const {
  return root / ("diagnostics_lam" + format_value(lambda) + "_alpha" + format_value(alpha) +
                 ".csv");
}

std::filesystem::path Workspace::densities_csv(float lambda, float alpha) const {
  return root / ("densities_lam" + format_value(lambda) + "_alpha" + format_value(alpha) + ".csv");
}

void write_resolved_config(const config::ExperimentConfig& cfg,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "resolved.ini", std::ios::trunc);
  if (!out) throw IoError("cannot write resolved config in " + dir.string());
  out << cfg.serialize();
}

unsigned sweep_thread_cap() {
  if (const char* env = std::getenv("STC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void gen_data(const config::ExperimentConfig& cfg, const Workspace& ws) {
  std::filesystem::create_directories(ws.root);
  write_resolved_config(cfg, ws.root);
  const auto src_env = cfg.source_env();
  const auto tar_env = cfg.target_env();
  const auto src = envs::generate_dataset(
      src_env, envs::make_policy(src_env, cfg.parse_quality(cfg.source_quality)),
      static_cast<std::size_t>(cfg.n_source), derive_seed(cfg.data_seed, 0xd5),
      data::DomainTag::kSource);
  const auto tar = envs::generate_dataset(
      tar_env, envs::make_policy(tar_env, cfg.parse_quality(cfg.target_quality)),
      static_cast<std::size_t>(cfg.n_target), derive_seed(cfg.data_seed, 0xd7),
      data::DomainTag::kTarget);
  data::save_dataset(src, ws.source_dataset().string());
  data::save_dataset(tar, ws.target_dataset().string());
}

namespace {

models::Phase1Config phase1_config(const config::ExperimentConfig& cfg) {
  models::Phase1Config p;
  p.steps = cfg.phase1_steps;
  p.batch_size = cfg.phase1_batch_size;
  p.learning_rate = cfg.learning_rate;
  p.holdout_fraction = cfg.holdout_fraction;
  p.hidden = cfg.hidden;
  p.seed = cfg.phase1_seed;
  return p;
}

}  // namespace

models::Phase1Report pretrain(const config::ExperimentConfig& cfg, const Workspace& ws) {
  require_file(ws.target_dataset(), "gen-data");
  write_resolved_config(cfg, ws.root);
  const auto target = data::load_dataset(ws.target_dataset().string(), data::DomainTag::kTarget);
  auto report = models::train_target_models(target, phase1_config(cfg));
  nn::save_checkpoint(report.models.inverse_model, ws.inverse_model().string());
  nn::save_checkpoint(report.models.forward_model, ws.forward_model().string());
  nn::save_checkpoint(report.models.reward_model, ws.reward_model().string());
  std::ofstream out(ws.phase1_report(), std::ios::trunc);
  if (!out) throw IoError("cannot write " + ws.phase1_report().string());
  out << "model,holdout_mse\n";
  out << "inverse," << csv_double(report.inverse_mse) << "\n";
  out << "forward," << csv_double(report.forward_mse) << "\n";
  out << "reward," << csv_double(report.reward_mse) << "\n";
  return report;
}

models::TargetModels load_or_pretrain(const config::ExperimentConfig& cfg, const Workspace& ws) {
  if (std::filesystem::exists(ws.inverse_model()) &&
      std::filesystem::exists(ws.forward_model()) &&
      std::filesystem::exists(ws.reward_model())) {
    models::TargetModels m;
    m.inverse_model =
        nn::load_checkpoint(ws.inverse_model().string(), nn::OutputActivation::kTanh);
    m.forward_model =
        nn::load_checkpoint(ws.forward_model().string(), nn::OutputActivation::kIdentity);
    m.reward_model =
        nn::load_checkpoint(ws.reward_model().string(), nn::OutputActivation::kIdentity);
    require_file(ws.target_dataset(), "gen-data");
    const auto target =
        data::load_dataset(ws.target_dataset().string(), data::DomainTag::kTarget);
    m.stats = data::compute_stats(target);
    return m;
  }
  return pretrain(cfg, ws).models;
}

std::vector<double> correct(const config::ExperimentConfig& cfg, const Workspace& ws) {
  require_file(ws.source_dataset(), "gen-data");
  write_resolved_config(cfg, ws.root);
  const auto models = load_or_pretrain(cfg, ws);
  const auto source = data::load_dataset(ws.source_dataset().string(), data::DomainTag::kSource);
  std::vector<double> rates;
  for (float lambda : cfg.lambda) {
    for (float alpha : cfg.alpha) {
      const auto result = correction::correct_dataset(models, source, alpha, lambda);
      data::save_dataset(result.dataset, ws.corrected_dataset(lambda, alpha).string());
      correction::write_correction_csv(result, ws.corrections_csv(lambda, alpha).string());
      rates.push_back(result.acceptance_rate);
    }
  }
  return rates;
}

PipelineResult run_pipeline(const config::ExperimentConfig& cfg, float lambda, float alpha,
                            float beta, std::uint64_t seed,
                            const data::TransitionDataset& source,
                            const data::TransitionDataset& target,
                            const models::TargetModels& models) {
  PipelineResult result;
  const auto corrected = correction::correct_dataset(models, source, alpha, lambda);
  result.acceptance_rate = corrected.acceptance_rate;

  agent::AgentConfig agent_cfg;
  agent_cfg.obs_dim = source.obs_dim();
  agent_cfg.act_dim = source.act_dim();
  agent_cfg.hidden = cfg.hidden;
  agent_cfg.gamma = cfg.gamma;
  agent_cfg.target_update_rate = cfg.tau;
  agent_cfg.learning_rate = cfg.learning_rate;
  agent_cfg.beta = beta;
  agent_cfg.seed = seed;

  agent::TrainLoopConfig loop_cfg;
  loop_cfg.gradient_steps = cfg.gradient_steps;
  loop_cfg.batch_size = cfg.batch_size;
  loop_cfg.eval_every = cfg.eval_every;
  loop_cfg.eval_episodes = cfg.eval_episodes;
  loop_cfg.seed = seed;

  result.loop = agent::train_loop(agent_cfg, loop_cfg, corrected.dataset, target, models.stats,
                                  cfg.target_env());
  return result;
}

namespace {

void write_metrics_csv(const std::vector<agent::MetricsRow>& log,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,critic_loss,actor_loss,eval_return,normalized_score\n";
  for (const auto& row : log) {
    out << row.step << "," << csv_double(row.critic_loss) << "," << csv_double(row.actor_loss)
        << "," << csv_double(row.eval_return) << "," << csv_double(row.normalized_score) << "\n";
  }
}

}  // namespace

std::vector<RunSummary> train(const config::ExperimentConfig& cfg, const Workspace& ws) {
  require_file(ws.source_dataset(), "gen-data");
  require_file(ws.target_dataset(), "gen-data");
  write_resolved_config(cfg, ws.root);
  const auto models = load_or_pretrain(cfg, ws);
  const auto source = data::load_dataset(ws.source_dataset().string(), data::DomainTag::kSource);
  const auto target = data::load_dataset(ws.target_dataset().string(), data::DomainTag::kTarget);

  // Corrections are cheap and shared across beta/seed; materialize them (and
  // their sidecar files) up front, sequentially.
  struct Job {
    float lambda, alpha, beta;
    std::uint64_t seed;
    const data::TransitionDataset* corrected;
    double acceptance_rate;
  };
  std::vector<std::unique_ptr<data::TransitionDataset>> corrected_sets;
  std::vector<Job> jobs;
  for (float lambda : cfg.lambda) {
    for (float alpha : cfg.alpha) {
      auto result = correction::correct_dataset(models, source, alpha, lambda);
      const auto ds_path = ws.corrected_dataset(lambda, alpha);
      data::save_dataset(result.dataset, ds_path.string());
      correction::write_correction_csv(result, ws.corrections_csv(lambda, alpha).string());
      corrected_sets.push_back(
          std::make_unique<data::TransitionDataset>(std::move(result.dataset)));
      for (float beta : cfg.beta) {
        for (std::uint64_t seed : cfg.seeds) {
          jobs.push_back(
              {lambda, alpha, beta, seed, corrected_sets.back().get(), result.acceptance_rate});
        }
      }
    }
  }

  const auto stats = data::compute_stats(target);
  std::vector<RunSummary> summaries(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];

      agent::AgentConfig agent_cfg;
      agent_cfg.obs_dim = source.obs_dim();
      agent_cfg.act_dim = source.act_dim();
      agent_cfg.hidden = cfg.hidden;
      agent_cfg.gamma = cfg.gamma;
      agent_cfg.target_update_rate = cfg.tau;
      agent_cfg.learning_rate = cfg.learning_rate;
      agent_cfg.beta = job.beta;
      agent_cfg.seed = job.seed;
      agent::TrainLoopConfig loop_cfg;
      loop_cfg.gradient_steps = cfg.gradient_steps;
      loop_cfg.batch_size = cfg.batch_size;
      loop_cfg.eval_every = cfg.eval_every;
      loop_cfg.eval_episodes = cfg.eval_episodes;
      loop_cfg.seed = job.seed;

      const auto result = agent::train_loop(agent_cfg, loop_cfg, *job.corrected, target, stats,
                                            cfg.target_env());

      const auto dir = ws.run_dir(job.lambda, job.alpha, job.beta, job.seed);
      std::filesystem::create_directories(dir);
      config::ExperimentConfig resolved = cfg;
      resolved.lambda = {job.lambda};
      resolved.alpha = {job.alpha};
      resolved.beta = {job.beta};
      resolved.seeds = {job.seed};
      write_resolved_config(resolved, dir);
      write_metrics_csv(result.log, dir / "metrics.csv");
      nn::save_checkpoint(result.agent.actor, (dir / "actor.stcnet").string());
      nn::save_checkpoint(result.agent.critic1, (dir / "critic1.stcnet").string());
      nn::save_checkpoint(result.agent.critic2, (dir / "critic2.stcnet").string());

      summaries[i] = {job.lambda,           job.alpha,       job.beta,
                      job.seed,             job.acceptance_rate, result.final_score,
                      result.final_return,  dir};
    }
  };
  const unsigned threads =
      std::min<unsigned>(sweep_thread_cap(), static_cast<unsigned>(jobs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return summaries;
}

std::vector<agent::EvalReport> evaluate_runs(const config::ExperimentConfig& cfg,
                                             const Workspace& ws) {
  require_file(ws.target_dataset(), "gen-data");
  const auto target = data::load_dataset(ws.target_dataset().string(), data::DomainTag::kTarget);
  const auto stats = data::compute_stats(target);
  const auto env = cfg.target_env();

  std::vector<agent::EvalReport> reports;
  for (float lambda : cfg.lambda) {
    for (float alpha : cfg.alpha) {
      for (float beta : cfg.beta) {
        for (std::uint64_t seed : cfg.seeds) {
          const auto dir = ws.run_dir(lambda, alpha, beta, seed);
          require_file(dir / "actor.stcnet", "train");
          const auto actor =
              nn::load_checkpoint((dir / "actor.stcnet").string(), nn::OutputActivation::kTanh);
          const auto [j_random, j_expert] = agent::reference_scores(env, derive_seed(seed, 0x7));
          const auto report = agent::evaluate(actor, stats, env, cfg.eval_episodes,
                                              derive_seed(seed, 0x600), j_random, j_expert);
          std::ofstream out(dir / "eval.csv", std::ios::trunc);
          if (!out) throw IoError("cannot write eval.csv in " + dir.string());
          out << "episode,return\n";
          for (std::size_t ep = 0; ep < report.episode_returns.size(); ++ep) {
            out << ep << "," << csv_double(report.episode_returns[ep]) << "\n";
          }
          out << "mean," << csv_double(report.mean_return) << "\n";
          out << "normalized_score," << csv_double(report.normalized_score) << "\n";
          out << "reference_random," << csv_double(report.reference_random) << "\n";
          out << "reference_expert," << csv_double(report.reference_expert) << "\n";
          reports.push_back(report);
        }
      }
    }
  }
  return reports;
}

void diagnose(const config::ExperimentConfig& cfg, const Workspace& ws) {
  require_file(ws.source_dataset(), "gen-data");
  require_file(ws.target_dataset(), "gen-data");
  const auto source = data::load_dataset(ws.source_dataset().string(), data::DomainTag::kSource);
  const auto target = data::load_dataset(ws.target_dataset().string(), data::DomainTag::kTarget);
  for (float lambda : cfg.lambda) {
    for (float alpha : cfg.alpha) {
      const auto path = ws.corrected_dataset(lambda, alpha);
      require_file(path, "correct");
      const auto corrected = data::load_dataset(path.string(), data::DomainTag::kCorrected);
      const auto triples = diag::pair_actions(source, corrected, target);
      const auto reports = diag::distribution_report(triples);
      diag::write_triples_csv(triples, ws.diagnostics_csv(lambda, alpha).string());
      diag::write_densities_csv(reports, ws.densities_csv(lambda, alpha).string());
    }
  }
}

BoundsSummary verify_bounds(const BoundsOptions& options, const Workspace& ws) {
  if (options.trials < 1) throw UsageError("verify-bounds needs trials >= 1");
  const bool all = options.theorem == "all";
  if (!all && options.theorem != "1" && options.theorem != "2" && options.theorem != "3" &&
      options.theorem != "telescoping") {
    throw UsageError("unknown theorem '" + options.theorem +
                     "' (expected 1, 2, 3, telescoping, or all)");
  }
  std::filesystem::create_directories(ws.root);

  BoundsSummary summary;
  int theorem3_trials = 0, theorem3_failures = 0;
  auto instance_rng = [&](const char* tag, int trial) {
    return Rng(derive_seed(options.seed, derive_seed(std::hash<std::string>{}(tag),
                                                     static_cast<std::uint64_t>(trial))));
  };

  if (all || options.theorem == "1") {
    for (int trial = 0; trial < options.trials; ++trial) {
      Rng rng = instance_rng("t1", trial);
      const int S = 2 + static_cast<int>(rng.index(9));
      const int A = 1 + static_cast<int>(rng.index(4));
      const auto [src, tar] = theory::random_mdp_pair(S, A, options.gamma, rng.uniform(0.0, 2.0),
                                                      rng.next_u64());
      const auto mu = theory::random_policy(S, A, rng);
      const auto pi_hat = theory::random_policy(S, A, rng);
      auto report = theory::verify_theorem1(src, tar, mu, pi_hat);
      report.seed = options.seed + static_cast<std::uint64_t>(trial);
      if (!report.holds) ++summary.violations;
      summary.reports.push_back(std::move(report));
    }
  }
  if (all || options.theorem == "2") {
    for (int trial = 0; trial < options.trials; ++trial) {
      Rng rng = instance_rng("t2", trial);
      const int S = 2 + static_cast<int>(rng.index(9));
      const int A = 2 + static_cast<int>(rng.index(3));
      const auto [src, tar] = theory::random_mdp_pair(S, A, rng.uniform(0.5, 0.99),
                                                      rng.uniform(0.0, 2.0), rng.next_u64());
      const auto mu_src = theory::random_policy(S, A, rng);
      const auto mu_tar = theory::random_policy(S, A, rng);
      auto report = theory::verify_theorem2(src, mu_src, mu_tar, rng.uniform(0.0, 3.0),
                                            rng.next_u64());
      report.seed = options.seed + static_cast<std::uint64_t>(trial);
      if (!report.holds) ++summary.violations;
      summary.reports.push_back(std::move(report));
    }
  }
  if (all || options.theorem == "3") {
    for (int trial = 0; trial < options.trials; ++trial) {
      Rng rng = instance_rng("t3", trial);
      const int S = 2 + static_cast<int>(rng.index(7));
      const int A = 1 + static_cast<int>(rng.index(3));
      const auto [src, tar] = theory::random_mdp_pair(S, A, options.gamma, rng.uniform(0.0, 1.0),
                                                      rng.next_u64());
      const auto mu_tar = theory::random_policy(S, A, rng);
      const auto pi_hat = theory::random_policy(S, A, rng);
      const auto pi_eval = theory::random_policy(S, A, rng);
      const int n = options.sample_sizes[static_cast<std::size_t>(trial) %
                                         options.sample_sizes.size()];
      const auto result = theory::verify_theorem3(src, tar, mu_tar, pi_hat, pi_eval, n,
                                                  options.delta, 1, rng.next_u64());
      for (auto report : result.reports) {
        ++theorem3_trials;
        if (!report.holds) {
          ++theorem3_failures;
          ++summary.violations;
        }
        summary.reports.push_back(std::move(report));
      }
    }
  }
  if (all || options.theorem == "telescoping") {
    for (int trial = 0; trial < options.trials; ++trial) {
      Rng rng = instance_rng("lemma", trial);
      const int S = 2 + static_cast<int>(rng.index(7));
      const int A = 1 + static_cast<int>(rng.index(4));
      const auto [m1, m2] = theory::random_mdp_pair(S, A, rng.uniform(0.1, 0.99),
                                                    rng.uniform(0.0, 2.0), rng.next_u64());
      const auto pi = theory::random_policy(S, A, rng);
      auto report = theory::verify_telescoping(m1, m2, pi);
      report.seed = options.seed + static_cast<std::uint64_t>(trial);
      if (!report.holds) ++summary.violations;
      summary.reports.push_back(std::move(report));
    }
  }
  if (theorem3_trials > 0) {
    summary.theorem3_failure_rate =
        static_cast<double>(theorem3_failures) / theorem3_trials;
  }

  std::ofstream out(ws.bounds_csv(), std::ios::trunc);
  if (!out) throw IoError("cannot write " + ws.bounds_csv().string());
  out << "check,seed,num_states,num_actions,kappa,epsilon,n,delta,lhs,rhs,margin,holds,"
         "j_empirical\n";
  for (const auto& r : summary.reports) {
    out << r.check << "," << r.seed << "," << r.num_states << "," << r.num_actions << ","
        << csv_double(r.kappa) << "," << csv_double(r.epsilon) << "," << r.sample_size << ","
        << csv_double(r.delta) << "," << csv_double(r.lhs) << "," << csv_double(r.rhs) << ","
        << csv_double(r.margin) << "," << (r.holds ? 1 : 0) << "," << csv_double(r.j_empirical)
        << "\n";
  }
  return summary;
}

}  // namespace stc::pipeline
