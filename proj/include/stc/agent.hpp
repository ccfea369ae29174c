#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "stc/data.hpp"
#include "stc/envs.hpp"
#include "stc/nn.hpp"

namespace stc::agent {

struct AgentConfig {
  int obs_dim = envs::kObsDim;
  int act_dim = envs::kActDim;
  std::vector<int> hidden{64, 64};
  float gamma = 0.99f;
  float target_update_rate = 5e-3f;
  float learning_rate = 3e-4f;
  float beta = 5.0f;  // behavior-cloning weight
  std::uint64_t seed = 0;
};

/// Deterministic tanh actor with twin critics and their Polyak targets.
struct AgentState {
  AgentConfig cfg;
  nn::Mlp actor;
  nn::Mlp critic1;
  nn::Mlp critic2;
  nn::Mlp target_critic1;
  nn::Mlp target_critic2;
  nn::AdamState actor_opt;
  nn::AdamState critic1_opt;
  nn::AdamState critic2_opt;
  std::int64_t step = 0;
};

AgentState agent_init(const AgentConfig& cfg);

/// Training batch with states already standardized.
struct Batch {
  Eigen::MatrixXf states;
  Eigen::MatrixXf actions;
  Eigen::VectorXf rewards;
  Eigen::MatrixXf next_states;
  Eigen::VectorXf dones;
};

/// TD regression of both critics onto
///   y = r + gamma (1 - done) min_j targetQ_j(s', actor(s'))
/// followed by a Polyak update of both target critics. Returns the mean of
/// the two critic losses.
float critic_update(AgentState& agent, const Batch& batch);

/// Q-weighted behavior cloning step on the actor:
///   eta = 1 / max(mean |Q1(s, a)|, 1e-6)
///   loss = -mean[ eta Q1(s, actor(s)) - beta exp(clip(eta Q1(s, a), -5, 5)) ||actor(s)-a||^2 ]
/// Only actor parameters move. Returns the loss.
float actor_update(AgentState& agent, const Batch& batch);

/// Greedy action of the actor for a raw observation.
Eigen::VectorXf act(const nn::Mlp& actor, const data::NormStats& stats,
                    const Eigen::VectorXf& observation);

struct EvalReport {
  double mean_return = 0.0;
  std::vector<double> episode_returns;
  double normalized_score = 0.0;
  double reference_random = 0.0;
  double reference_expert = 0.0;
  std::uint64_t seed = 0;
};

/// Mean return of the uniform-random policy and the noise-free scripted
/// expert, 20 episodes each.
std::pair<double, double> reference_scores(const envs::PointMassConfig& cfg, std::uint64_t seed);

/// Deterministic rollouts of the actor in the target environment; normalized
/// score is (J - J_r) / (J_e - J_r) * 100 against the provided references.
EvalReport evaluate(const nn::Mlp& actor, const data::NormStats& stats,
                    const envs::PointMassConfig& target_cfg, int n_episodes, std::uint64_t seed,
                    double reference_random, double reference_expert);

struct MetricsRow {
  std::int64_t step = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double eval_return = 0.0;
  double normalized_score = 0.0;
};

struct TrainLoopConfig {
  int gradient_steps = 50000;
  int batch_size = 256;  // split evenly across the two datasets
  int eval_every = 5000;
  int eval_episodes = 10;
  std::uint64_t seed = 0;
};

struct TrainLoopResult {
  AgentState agent;
  std::vector<MetricsRow> log;
  /// Mean normalized score over the last three evaluations.
  double final_score = 0.0;
  double final_return = 0.0;
};

/// Offline loop over the union of the corrected source data and the target
/// data: symmetric mini-batches, critic update, actor update, periodic
/// evaluation (including step 0). Fully deterministic per seed.
TrainLoopResult train_loop(const AgentConfig& agent_cfg, const TrainLoopConfig& loop_cfg,
                           const data::TransitionDataset& corrected_source,
                           const data::TransitionDataset& target, const data::NormStats& stats,
                           const envs::PointMassConfig& target_env);

}  // namespace stc::agent
