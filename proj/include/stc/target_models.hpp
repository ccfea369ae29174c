#pragma once

#include <cstdint>
#include <vector>

#include "stc/data.hpp"
#include "stc/nn.hpp"

namespace stc::models {

/// Pretraining setup shared by the three target-domain models.
struct Phase1Config {
  int steps = 50000;
  int batch_size = 128;
  float learning_rate = 3e-4f;
  float holdout_fraction = 0.1f;
  std::vector<int> hidden{64, 64};
  std::uint64_t seed = 0;
};

struct TrainedModel {
  nn::Mlp net;
  float holdout_mse = 0.0f;
  /// Mean training loss over the first and last decile of steps; the late
  /// mean staying below the early mean is the training-progress check.
  float early_loss_mean = 0.0f;
  float late_loss_mean = 0.0f;
};

/// The three frozen models of the correction phase plus the state
/// normalization they were trained with.
struct TargetModels {
  nn::Mlp inverse_model;  // (std s, std s') -> action, tanh head
  nn::Mlp forward_model;  // (std s, a) -> s' - s, identity head
  nn::Mlp reward_model;   // (std s, a) -> r, identity head
  data::NormStats stats;
};

/// Action regression from (s, s') pairs; reports held-out MSE on a 10% split.
TrainedModel train_inverse(const data::TransitionDataset& target, const Phase1Config& cfg);

/// Next-state-delta regression from (s, a).
TrainedModel train_forward(const data::TransitionDataset& target, const Phase1Config& cfg);

/// Reward regression from (s, a).
TrainedModel train_reward(const data::TransitionDataset& target, const Phase1Config& cfg);

struct Phase1Report {
  TargetModels models;
  float inverse_mse = 0.0f;
  float forward_mse = 0.0f;
  float reward_mse = 0.0f;
};

Phase1Report train_target_models(const data::TransitionDataset& target, const Phase1Config& cfg);

}  // namespace stc::models
