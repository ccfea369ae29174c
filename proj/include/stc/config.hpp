#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stc/envs.hpp"

namespace stc::config {

/// Every experiment knob, resolved to concrete values. lambda/alpha/beta and
/// seeds are sweep lists; single runs use one-element lists.
struct ExperimentConfig {
  // [env]
  std::string shift = "gravity";  // gravity | friction | morphology | none | custom
  float src_gravity_scale = 1.0f;
  float src_friction_scale = 1.0f;
  std::array<float, 2> src_gain_scale{1.0f, 1.0f};
  float tar_gravity_scale = 0.5f;  // resolved from `shift` unless set explicitly
  float tar_friction_scale = 1.0f;
  std::array<float, 2> tar_gain_scale{1.0f, 1.0f};
  float dt = 0.05f;
  int episode_len = 200;
  float thrust_gain = 14.0f;
  float start_velocity_bound = 2.0f;
  float kp = 1.0f;
  float kd = 0.5f;

  // [data]
  int n_source = 50000;
  int n_target = 5000;
  std::string source_quality = "medium";  // medium | expert
  std::string target_quality = "medium";
  std::uint64_t data_seed = 1;

  // [phase1]
  int phase1_steps = 50000;
  int phase1_batch_size = 128;
  float holdout_fraction = 0.1f;
  std::uint64_t phase1_seed = 1;

  // [train]
  int gradient_steps = 50000;
  std::vector<float> lambda{1.0f, 5.0f};
  std::vector<float> alpha{0.5f};
  std::vector<float> beta{0.5f, 5.0f};
  int batch_size = 256;
  float gamma = 0.99f;
  float tau = 5e-3f;
  float learning_rate = 3e-4f;
  std::vector<int> hidden{64, 64};
  int eval_every = 5000;
  int eval_episodes = 10;

  // [run]
  std::vector<std::uint64_t> seeds{1};

  envs::PointMassConfig source_env() const;
  envs::PointMassConfig target_env() const;
  envs::Quality parse_quality(const std::string& q) const;

  /// Full key = value snapshot; parsing it back reproduces this config.
  std::string serialize() const;
};

/// Parses INI-style text (sections, key = value, # or ; comments). Unknown
/// keys, duplicate keys, type errors, and out-of-range values raise
/// ConfigError naming the offender. `overrides` are "section.key=value"
/// entries applied after the file.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {});

/// Same, reading from a file. An empty path yields the defaults.
ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides = {});

}  // namespace stc::config
