#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "stc/data.hpp"
#include "stc/target_models.hpp"

namespace stc::correction {

/// One source transition next to its corrected candidate and the verdict.
struct CorrectionOutcome {
  data::Transition original;
  Eigen::VectorXf corrected_action;
  float corrected_reward = 0.0f;
  float eps_orig = 0.0f;
  float eps_corr = 0.0f;
  bool accepted = false;
  data::Transition chosen;
};

/// Corrected action: the inverse model's prediction for the observed state
/// transition. Components land in [-1, 1] via the tanh head.
Eigen::VectorXf correct_action(const nn::Mlp& inverse_model, const data::NormStats& stats,
                               const Eigen::VectorXf& state, const Eigen::VectorXf& next_state);

/// First-order reward adjustment along the action displacement. The action
/// gradient of the reward model is l2-normalized (taken as zero below 1e-8)
/// and the inner product is clipped to [-1, 1] before scaling by alpha.
float correct_reward(const nn::Mlp& reward_model, const data::NormStats& stats,
                     const Eigen::VectorXf& state, const Eigen::VectorXf& action,
                     const Eigen::VectorXf& corrected_action, float reward, float alpha);

/// Squared forward-model prediction errors of the original and corrected
/// actions against the observed state delta.
std::pair<float, float> dynamics_discrepancies(const nn::Mlp& forward_model,
                                               const data::NormStats& stats,
                                               const Eigen::VectorXf& state,
                                               const Eigen::VectorXf& action,
                                               const Eigen::VectorXf& corrected_action,
                                               const Eigen::VectorXf& next_state);

/// Strict-threshold selection: the corrected transition is adopted only when
/// eps_corr < lambda * eps_orig; ties keep the original.
CorrectionOutcome select(const data::Transition& original, const Eigen::VectorXf& corrected_action,
                         float corrected_reward, float eps_orig, float eps_corr, float lambda);

struct CorrectionRow {
  std::size_t index = 0;
  float eps_orig = 0.0f;
  float eps_corr = 0.0f;
  bool accepted = false;
};

struct CorrectionResult {
  data::TransitionDataset dataset;  // tagged corrected, same size as the source
  double acceptance_rate = 0.0;
  std::vector<CorrectionRow> rows;
};

/// Applies the correction to every source record. Output is index-aligned
/// with the input; rejected records are carried over bitwise.
CorrectionResult correct_dataset(const models::TargetModels& models,
                                 const data::TransitionDataset& source, float alpha, float lambda);

void write_correction_csv(const CorrectionResult& result, const std::string& path);

}  // namespace stc::correction
