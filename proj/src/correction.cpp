#include "stc/correction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace stc::correction {

namespace {

constexpr float kGradientFloor = 1e-8f;

/// Per-row action gradients of the reward model at the dataset actions.
Eigen::MatrixXf reward_action_gradients(const nn::Mlp& reward_model,
                                        const Eigen::MatrixXf& std_states,
                                        const Eigen::MatrixXf& actions) {
  nn::Graph graph;
  const auto state_node = graph.constant(std_states);
  const auto action_node = graph.constant(actions);
  const auto pred = graph.apply(reward_model, graph.concat_cols(state_node, action_node));
  // Rows are independent, so the gradient of the output sum w.r.t. the action
  // input is the per-row action gradient.
  graph.backward(graph.sum_all(pred));
  return graph.grad(action_node);
}

float taylor_delta(const Eigen::VectorXf& grad, const Eigen::VectorXf& displacement) {
  const float norm = grad.norm();
  if (norm < kGradientFloor) return 0.0f;
  const float inner = grad.dot(displacement) / norm;
  return std::clamp(inner, -1.0f, 1.0f);
}

}  // namespace

Eigen::VectorXf correct_action(const nn::Mlp& inverse_model, const data::NormStats& stats,
                               const Eigen::VectorXf& state, const Eigen::VectorXf& next_state) {
  Eigen::VectorXf input(2 * state.size());
  input << stats.standardize_one(state), stats.standardize_one(next_state);
  return inverse_model.forward_one(input);
}

float correct_reward(const nn::Mlp& reward_model, const data::NormStats& stats,
                     const Eigen::VectorXf& state, const Eigen::VectorXf& action,
                     const Eigen::VectorXf& corrected_action, float reward, float alpha) {
  if (alpha < 0.0f) throw UsageError("correct_reward: alpha must be >= 0");
  if (action.size() != corrected_action.size()) {
    throw ShapeError("correct_reward: action dimension mismatch");
  }
  Eigen::MatrixXf std_state(1, state.size());
  std_state.row(0) = stats.standardize_one(state).transpose();
  Eigen::MatrixXf act(1, action.size());
  act.row(0) = action.transpose();
  const Eigen::MatrixXf grads = reward_action_gradients(reward_model, std_state, act);
  const float delta = taylor_delta(grads.row(0).transpose(), corrected_action - action);
  return reward + alpha * delta;
}

std::pair<float, float> dynamics_discrepancies(const nn::Mlp& forward_model,
                                               const data::NormStats& stats,
                                               const Eigen::VectorXf& state,
                                               const Eigen::VectorXf& action,
                                               const Eigen::VectorXf& corrected_action,
                                               const Eigen::VectorXf& next_state) {
  if (action.size() != corrected_action.size()) {
    throw ShapeError("dynamics_discrepancies: action dimension mismatch");
  }
  const Eigen::VectorXf std_state = stats.standardize_one(state);
  const Eigen::VectorXf delta = next_state - state;
  Eigen::VectorXf input(std_state.size() + action.size());
  input << std_state, action;
  const float eps_orig = (forward_model.forward_one(input) - delta).squaredNorm();
  input.tail(action.size()) = corrected_action;
  const float eps_corr = (forward_model.forward_one(input) - delta).squaredNorm();
  return {eps_orig, eps_corr};
}

CorrectionOutcome select(const data::Transition& original, const Eigen::VectorXf& corrected_action,
                         float corrected_reward, float eps_orig, float eps_corr, float lambda) {
  if (lambda < 0.0f) throw UsageError("select: lambda must be >= 0");
  CorrectionOutcome out;
  out.original = original;
  out.corrected_action = corrected_action;
  out.corrected_reward = corrected_reward;
  out.eps_orig = eps_orig;
  out.eps_corr = eps_corr;
  out.accepted = static_cast<double>(eps_corr) <
                 static_cast<double>(lambda) * static_cast<double>(eps_orig);
  if (out.accepted) {
    out.chosen = original;
    out.chosen.action = corrected_action;
    out.chosen.reward = corrected_reward;
    // State trajectory and the done flag are unchanged by the correction.
  } else {
    out.chosen = original;
  }
  return out;
}

CorrectionResult correct_dataset(const models::TargetModels& models,
                                 const data::TransitionDataset& source, float alpha,
                                 float lambda) {
  if (source.empty()) throw UsageError("correct_dataset: empty source dataset");
  if (lambda < 0.0f) throw UsageError("correct_dataset: lambda must be >= 0");
  if (alpha < 0.0f) throw UsageError("correct_dataset: alpha must be >= 0");
  if (models.inverse_model.input_dim() != 2 * source.obs_dim() ||
      models.inverse_model.output_dim() != source.act_dim()) {
    throw ShapeError("correct_dataset: inverse model does not match the dataset");
  }
  if (models.forward_model.input_dim() != source.obs_dim() + source.act_dim()) {
    throw ShapeError("correct_dataset: forward model does not match the dataset");
  }

  const Eigen::MatrixXf std_states = models.stats.standardize(source.states());
  const Eigen::MatrixXf std_next = models.stats.standardize(source.next_states());
  const Eigen::MatrixXf actions = source.actions();
  const Eigen::MatrixXf deltas = source.next_states() - source.states();
  const auto n = static_cast<Eigen::Index>(source.size());

  // Batched model passes over the whole dataset.
  Eigen::MatrixXf inverse_input(n, 2 * source.obs_dim());
  inverse_input << std_states, std_next;
  const Eigen::MatrixXf corrected_actions = models.inverse_model.forward(inverse_input);

  Eigen::MatrixXf forward_input(n, source.obs_dim() + source.act_dim());
  forward_input << std_states, actions;
  const Eigen::MatrixXf pred_orig = models.forward_model.forward(forward_input);
  forward_input.rightCols(source.act_dim()) = corrected_actions;
  const Eigen::MatrixXf pred_corr = models.forward_model.forward(forward_input);

  const Eigen::MatrixXf reward_grads =
      reward_action_gradients(models.reward_model, std_states, actions);

  CorrectionResult result{data::TransitionDataset(source.obs_dim(), source.act_dim(),
                                                  data::DomainTag::kCorrected),
                          0.0,
                          {}};
  result.dataset.reserve(source.size());
  result.rows.reserve(source.size());
  std::size_t accepted_count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const float eps_orig = (pred_orig.row(i) - deltas.row(i)).squaredNorm();
    const float eps_corr = (pred_corr.row(i) - deltas.row(i)).squaredNorm();
    const bool accepted = static_cast<double>(eps_corr) <
                          static_cast<double>(lambda) * static_cast<double>(eps_orig);
    if (accepted) {
      const Eigen::VectorXf displacement =
          (corrected_actions.row(i) - actions.row(i)).transpose();
      const float delta = taylor_delta(reward_grads.row(i).transpose(), displacement);
      data::Transition t = source.record(static_cast<std::size_t>(i));
      t.action = corrected_actions.row(i).transpose();
      t.reward = t.reward + alpha * delta;
      result.dataset.append(t);
      ++accepted_count;
    } else {
      result.dataset.append(source.record(static_cast<std::size_t>(i)));
    }
    result.rows.push_back({static_cast<std::size_t>(i), eps_orig, eps_corr, accepted});
  }
  result.acceptance_rate = static_cast<double>(accepted_count) / static_cast<double>(source.size());
  return result;
}

void write_correction_csv(const CorrectionResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "index,eps_orig,eps_corr,accepted\n";
  char buf[96];
  for (const auto& row : result.rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%d\n", row.index,
                  static_cast<double>(row.eps_orig), static_cast<double>(row.eps_corr),
                  row.accepted ? 1 : 0);
    out << buf;
  }
}

}  // namespace stc::correction
