#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "stc/data.hpp"
#include "stc/rng.hpp"

namespace stc::envs {

/// Planar point mass under gravity, linear damping, and bounded thrust.
/// Dynamics shifts scale gravity, damping, or per-axis thrust gain.
struct PointMassConfig {
  float gravity_scale = 1.0f;   // scales base_gravity
  float friction_scale = 1.0f;  // scales base_damping
  Eigen::Vector2f gain_scale{1.0f, 1.0f};

  float base_gravity = 9.8f;
  float base_damping = 1.0f;
  float base_gain = 14.0f;
  float dt = 0.05f;
  int episode_len = 200;
  Eigen::Vector2f goal{0.0f, 3.0f};
  float position_bound = 5.0f;
  float velocity_bound = 10.0f;
  float start_velocity_bound = 2.0f;
  float action_cost = 0.05f;

  // Scripted-controller gains.
  float kp = 1.0f;
  float kd = 0.5f;

  float gravity() const { return base_gravity * gravity_scale; }
  float damping() const { return base_damping * friction_scale; }
  Eigen::Vector2f gain() const { return base_gain * gain_scale; }

  void validate() const;
};

struct EnvState {
  Eigen::Vector2f position{0.0f, 0.0f};
  Eigen::Vector2f velocity{0.0f, 0.0f};
  int step_count = 0;
};

struct StepResult {
  EnvState next;
  float reward;
  bool done;
};

/// Observation layout: [position, velocity].
constexpr int kObsDim = 4;
constexpr int kActDim = 2;

Eigen::VectorXf observe(const EnvState& state);

/// Uniform start position inside the box, zero velocity.
EnvState reset(const PointMassConfig& cfg, Rng& rng);

/// Semi-implicit Euler step with velocity/position clipping. Actions are
/// clipped to [-1, 1] internally. Deterministic.
StepResult step(const PointMassConfig& cfg, const EnvState& state, Eigen::Vector2f action);

/// PD controller toward the goal plus gravity-compensation feedforward,
/// computed from `believed` physics, with optional Gaussian exploration noise.
Eigen::Vector2f scripted_policy(const PointMassConfig& believed, const EnvState& state,
                                float noise_std, Rng& rng);

enum class Quality { kExpert, kMedium };

/// Behavior policy: believed physics plus an exploration-noise level.
/// Expert uses noise 0.05, medium 0.3.
struct PolicySpec {
  PointMassConfig believed;
  float noise_std = 0.05f;
};

PolicySpec make_policy(const PointMassConfig& believed, Quality quality);
float noise_for(Quality quality);

/// Rolls episodes from uniform starts until exactly `n` transitions are
/// collected. Deterministic per seed.
data::TransitionDataset generate_dataset(const PointMassConfig& cfg, const PolicySpec& policy,
                                         std::size_t n, std::uint64_t seed, data::DomainTag tag);

}  // namespace stc::envs
