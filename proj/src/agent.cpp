#include "stc/agent.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace stc::agent {

namespace {

std::vector<int> layer_list(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes;
  sizes.push_back(in);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(out);
  return sizes;
}

}  // namespace

AgentState agent_init(const AgentConfig& cfg) {
  if (cfg.gamma < 0.0f || cfg.gamma >= 1.0f) throw ConfigError("gamma must lie in [0, 1)");
  if (cfg.target_update_rate < 0.0f || cfg.target_update_rate > 1.0f) {
    throw ConfigError("target update rate must lie in [0, 1]");
  }
  AgentState agent;
  agent.cfg = cfg;
  agent.actor = nn::mlp_init(layer_list(cfg.obs_dim, cfg.hidden, cfg.act_dim),
                             nn::OutputActivation::kTanh, derive_seed(cfg.seed, 0xac));
  agent.critic1 = nn::mlp_init(layer_list(cfg.obs_dim + cfg.act_dim, cfg.hidden, 1),
                               nn::OutputActivation::kIdentity, derive_seed(cfg.seed, 0xc1));
  agent.critic2 = nn::mlp_init(layer_list(cfg.obs_dim + cfg.act_dim, cfg.hidden, 1),
                               nn::OutputActivation::kIdentity, derive_seed(cfg.seed, 0xc2));
  agent.target_critic1 = agent.critic1;
  agent.target_critic2 = agent.critic2;
  agent.actor_opt = nn::adam_init(agent.actor, cfg.learning_rate);
  agent.critic1_opt = nn::adam_init(agent.critic1, cfg.learning_rate);
  agent.critic2_opt = nn::adam_init(agent.critic2, cfg.learning_rate);
  return agent;
}

float critic_update(AgentState& agent, const Batch& batch) {
  const auto n = batch.states.rows();
  if (n < 1) throw UsageError("critic_update: empty batch");

  // Bootstrap target, fully detached.
  const Eigen::MatrixXf next_actions = agent.actor.forward(batch.next_states);
  Eigen::MatrixXf next_input(n, batch.next_states.cols() + next_actions.cols());
  next_input << batch.next_states, next_actions;
  const Eigen::VectorXf q1 = agent.target_critic1.forward(next_input);
  const Eigen::VectorXf q2 = agent.target_critic2.forward(next_input);
  const Eigen::VectorXf y =
      batch.rewards.array() +
      agent.cfg.gamma * (1.0f - batch.dones.array()) * q1.cwiseMin(q2).array();
  if (!y.allFinite()) throw NumericalError("critic_update: non-finite TD target");

  Eigen::MatrixXf input(n, batch.states.cols() + batch.actions.cols());
  input << batch.states, batch.actions;
  const Eigen::MatrixXf y_mat = y;

  float total_loss = 0.0f;
  auto regress = [&](nn::Mlp& critic, nn::AdamState& opt) {
    nn::Graph graph;
    const auto pred = graph.apply(critic, graph.constant(input));
    const auto loss_node = graph.mean_all(graph.square(graph.sub(pred, graph.constant(y_mat))));
    total_loss += graph.backward(loss_node);
    nn::adam_step(critic, graph.take_gradients(critic), opt);
  };
  regress(agent.critic1, agent.critic1_opt);
  regress(agent.critic2, agent.critic2_opt);

  nn::polyak_update(agent.target_critic1, agent.critic1, agent.cfg.target_update_rate);
  nn::polyak_update(agent.target_critic2, agent.critic2, agent.cfg.target_update_rate);
  return total_loss / 2.0f;
}

float actor_update(AgentState& agent, const Batch& batch) {
  const auto n = batch.states.rows();
  if (n < 1) throw UsageError("actor_update: empty batch");

  // Batch-wise scaling factor from the dataset-action Q-values, detached.
  Eigen::MatrixXf data_input(n, batch.states.cols() + batch.actions.cols());
  data_input << batch.states, batch.actions;
  const Eigen::VectorXf q_data = agent.critic1.forward(data_input);
  if (!q_data.allFinite()) throw NumericalError("actor_update: non-finite Q values");
  const float eta = 1.0f / std::max(q_data.cwiseAbs().mean(), 1e-6f);

  // Exponential cloning weights, clipped in the exponent and detached.
  const Eigen::MatrixXf weights =
      (eta * q_data.array()).min(5.0f).max(-5.0f).exp().matrix();

  nn::Graph graph;
  const auto states_node = graph.constant(batch.states);
  const auto pi = graph.apply(agent.actor, states_node);
  const auto q_pi = graph.apply(agent.critic1, graph.concat_cols(states_node, pi));
  const auto q_term = graph.scale(q_pi, eta);
  const auto bc = graph.row_sum(graph.square(graph.sub(pi, graph.constant(batch.actions))));
  const auto bc_term = graph.scale(graph.hadamard(bc, graph.constant(weights)), agent.cfg.beta);
  const auto loss_node = graph.scale(graph.mean_all(graph.sub(q_term, bc_term)), -1.0f);
  const float loss = graph.backward(loss_node);
  // Only the actor moves; the critic gradients from this graph are dropped.
  nn::adam_step(agent.actor, graph.take_gradients(agent.actor), agent.actor_opt);
  return loss;
}

Eigen::VectorXf act(const nn::Mlp& actor, const data::NormStats& stats,
                    const Eigen::VectorXf& observation) {
  return actor.forward_one(stats.standardize_one(observation));
}

namespace {

double rollout_return(const envs::PointMassConfig& cfg, std::uint64_t episode_seed,
                      const std::function<Eigen::Vector2f(const envs::EnvState&, Rng&)>& policy) {
  Rng rng(episode_seed);
  envs::EnvState state = envs::reset(cfg, rng);
  double total = 0.0;
  bool done = false;
  while (!done) {
    const Eigen::Vector2f action = policy(state, rng);
    const auto result = envs::step(cfg, state, action);
    total += result.reward;
    state = result.next;
    done = result.done;
  }
  return total;
}

}  // namespace

std::pair<double, double> reference_scores(const envs::PointMassConfig& cfg, std::uint64_t seed) {
  constexpr int kEpisodes = 20;
  double random_total = 0.0;
  double expert_total = 0.0;
  for (int ep = 0; ep < kEpisodes; ++ep) {
    random_total += rollout_return(cfg, derive_seed(seed, 0x300 + static_cast<std::uint64_t>(ep)),
                                   [](const envs::EnvState&, Rng& rng) {
                                     return Eigen::Vector2f{rng.uniform_float(-1.0f, 1.0f),
                                                            rng.uniform_float(-1.0f, 1.0f)};
                                   });
    expert_total += rollout_return(cfg, derive_seed(seed, 0x300 + static_cast<std::uint64_t>(ep)),
                                   [&cfg](const envs::EnvState& s, Rng& rng) {
                                     return envs::scripted_policy(cfg, s, 0.0f, rng);
                                   });
  }
  return {random_total / kEpisodes, expert_total / kEpisodes};
}

EvalReport evaluate(const nn::Mlp& actor, const data::NormStats& stats,
                    const envs::PointMassConfig& target_cfg, int n_episodes, std::uint64_t seed,
                    double reference_random, double reference_expert) {
  if (n_episodes < 1) throw UsageError("evaluate: need at least one episode");
  if (std::abs(reference_expert - reference_random) < 1e-9) {
    throw UsageError("evaluate: degenerate reference scores (expert == random)");
  }
  EvalReport report;
  report.seed = seed;
  report.reference_random = reference_random;
  report.reference_expert = reference_expert;
  report.episode_returns.reserve(static_cast<std::size_t>(n_episodes));
  for (int ep = 0; ep < n_episodes; ++ep) {
    const double ret =
        rollout_return(target_cfg, derive_seed(seed, 0x400 + static_cast<std::uint64_t>(ep)),
                       [&](const envs::EnvState& s, Rng&) {
                         const Eigen::VectorXf a = act(actor, stats, envs::observe(s));
                         return Eigen::Vector2f{a(0), a(1)};
                       });
    report.episode_returns.push_back(ret);
    report.mean_return += ret;
  }
  report.mean_return /= n_episodes;
  report.normalized_score = (report.mean_return - reference_random) /
                            (reference_expert - reference_random) * 100.0;
  return report;
}

TrainLoopResult train_loop(const AgentConfig& agent_cfg, const TrainLoopConfig& loop_cfg,
                           const data::TransitionDataset& corrected_source,
                           const data::TransitionDataset& target, const data::NormStats& stats,
                           const envs::PointMassConfig& target_env) {
  if (loop_cfg.batch_size < 2 || loop_cfg.batch_size % 2 != 0) {
    throw ConfigError("train loop batch size must be even and >= 2");
  }
  TrainLoopResult result;
  result.agent = agent_init(agent_cfg);
  if (loop_cfg.gradient_steps == 0) return result;
  if (corrected_source.empty() || target.empty()) {
    throw UsageError("train_loop: datasets must be non-empty");
  }

  const auto [j_random, j_expert] = reference_scores(target_env, derive_seed(loop_cfg.seed, 0x7));

  Rng sample_rng(derive_seed(loop_cfg.seed, 0x2));
  const auto half = static_cast<std::size_t>(loop_cfg.batch_size / 2);

  double critic_acc = 0.0, actor_acc = 0.0;
  int acc_n = 0;
  int eval_index = 0;
  auto run_eval = [&](std::int64_t step) {
    const auto report = evaluate(result.agent.actor, stats, target_env, loop_cfg.eval_episodes,
                                 derive_seed(loop_cfg.seed, 0x500 + static_cast<std::uint64_t>(
                                                                        eval_index)),
                                 j_random, j_expert);
    ++eval_index;
    MetricsRow row;
    row.step = step;
    row.critic_loss = acc_n > 0 ? critic_acc / acc_n : 0.0;
    row.actor_loss = acc_n > 0 ? actor_acc / acc_n : 0.0;
    row.eval_return = report.mean_return;
    row.normalized_score = report.normalized_score;
    result.log.push_back(row);
    critic_acc = actor_acc = 0.0;
    acc_n = 0;
  };

  for (int step = 0; step < loop_cfg.gradient_steps; ++step) {
    if (step % loop_cfg.eval_every == 0) run_eval(step);
    const auto src_idx = data::sample_indices(corrected_source, half, sample_rng);
    const auto tar_idx = data::sample_indices(target, half, sample_rng);
    const auto merged =
        data::concat(data::gather(corrected_source, src_idx), data::gather(target, tar_idx));
    Batch batch;
    batch.states = stats.standardize(merged.states);
    batch.actions = merged.actions;
    batch.rewards = merged.rewards;
    batch.next_states = stats.standardize(merged.next_states);
    batch.dones = merged.dones;
    critic_acc += critic_update(result.agent, batch);
    actor_acc += actor_update(result.agent, batch);
    ++acc_n;
    result.agent.step += 1;
  }
  run_eval(loop_cfg.gradient_steps);

  const std::size_t tail = std::min<std::size_t>(3, result.log.size());
  for (std::size_t i = result.log.size() - tail; i < result.log.size(); ++i) {
    result.final_score += result.log[i].normalized_score;
    result.final_return += result.log[i].eval_return;
  }
  result.final_score /= static_cast<double>(tail);
  result.final_return /= static_cast<double>(tail);
  return result;
}

}  // namespace stc::agent
