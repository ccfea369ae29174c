#include "stc/envs.hpp"

#include <algorithm>
#include <cmath>

namespace stc::envs {

void PointMassConfig::validate() const {
  if (!std::isfinite(gravity_scale) || gravity_scale < 0.0f) {
    throw ConfigError("gravity_scale must be finite and >= 0");
  }
  if (!std::isfinite(friction_scale) || friction_scale < 0.0f) {
    throw ConfigError("friction_scale must be finite and >= 0");
  }
  if (!gain_scale.allFinite() || gain_scale.minCoeff() < 0.0f) {
    throw ConfigError("gain_scale must be finite and >= 0");
  }
  if (!(dt > 0.0f) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
  if (episode_len < 1) throw ConfigError("episode_len must be >= 1");
}

Eigen::VectorXf observe(const EnvState& state) {
  Eigen::VectorXf obs(kObsDim);
  obs << state.position(0), state.position(1), state.velocity(0), state.velocity(1);
  return obs;
}

EnvState reset(const PointMassConfig& cfg, Rng& rng) {
  EnvState state;
  state.position(0) = rng.uniform_float(-cfg.position_bound, cfg.position_bound);
  state.position(1) = rng.uniform_float(-cfg.position_bound, cfg.position_bound);
  state.velocity(0) = rng.uniform_float(-cfg.start_velocity_bound, cfg.start_velocity_bound);
  state.velocity(1) = rng.uniform_float(-cfg.start_velocity_bound, cfg.start_velocity_bound);
  state.step_count = 0;
  return state;
}

StepResult step(const PointMassConfig& cfg, const EnvState& state, Eigen::Vector2f action) {
  action = action.cwiseMax(-1.0f).cwiseMin(1.0f);
  const Eigen::Vector2f thrust = cfg.gain().cwiseProduct(action);
  const Eigen::Vector2f accel = thrust + Eigen::Vector2f(0.0f, -cfg.gravity());

  StepResult result;
  result.next.velocity = (1.0f - cfg.damping() * cfg.dt) * state.velocity + cfg.dt * accel;
  result.next.velocity =
      result.next.velocity.cwiseMax(-cfg.velocity_bound).cwiseMin(cfg.velocity_bound);
  result.next.position = state.position + cfg.dt * result.next.velocity;
  result.next.position =
      result.next.position.cwiseMax(-cfg.position_bound).cwiseMin(cfg.position_bound);
  result.next.step_count = state.step_count + 1;
  result.reward = -(result.next.position - cfg.goal).norm() - cfg.action_cost * action.squaredNorm();
  result.done = result.next.step_count >= cfg.episode_len;
  return result;
}

Eigen::Vector2f scripted_policy(const PointMassConfig& believed, const EnvState& state,
                                float noise_std, Rng& rng) {
  if (noise_std < 0.0f) throw UsageError("noise_std must be >= 0");
  Eigen::Vector2f action = believed.kp * (believed.goal - state.position) -
                           believed.kd * state.velocity;
  // Feedforward thrust that cancels gravity under the believed physics.
  const Eigen::Vector2f gain = believed.gain();
  if (gain(1) > 1e-8f) {
    action(1) += believed.gravity() / gain(1);
  }
  if (noise_std > 0.0f) {
    action(0) += noise_std * static_cast<float>(rng.normal());
    action(1) += noise_std * static_cast<float>(rng.normal());
  }
  return action.cwiseMax(-1.0f).cwiseMin(1.0f);
}

float noise_for(Quality quality) {
  return quality == Quality::kExpert ? 0.05f : 0.3f;
}

PolicySpec make_policy(const PointMassConfig& believed, Quality quality) {
  return PolicySpec{believed, noise_for(quality)};
}

data::TransitionDataset generate_dataset(const PointMassConfig& cfg, const PolicySpec& policy,
                                         std::size_t n, std::uint64_t seed, data::DomainTag tag) {
  cfg.validate();
  if (n < 1) throw UsageError("generate_dataset: need n >= 1");
  data::TransitionDataset ds(kObsDim, kActDim, tag);
  ds.reserve(n);
  std::uint64_t episode = 0;
  while (ds.size() < n) {
    Rng rng(derive_seed(seed, episode++));
    EnvState state = reset(cfg, rng);
    bool done = false;
    while (!done && ds.size() < n) {
      const Eigen::Vector2f action = scripted_policy(policy.believed, state, policy.noise_std, rng);
      const StepResult result = step(cfg, state, action);
      Eigen::VectorXf a(kActDim);
      a << action(0), action(1);
      ds.append(observe(state), a, result.reward, observe(result.next), result.done);
      state = result.next;
      done = result.done;
    }
  }
  return ds;
}

}  // namespace stc::envs
