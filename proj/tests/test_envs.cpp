#include <doctest.h>

#include <cmath>

#include "stc/envs.hpp"
#include "stc/errors.hpp"

using namespace stc;
using envs::EnvState;
using envs::PointMassConfig;

namespace {

double episode_return(const PointMassConfig& env, const envs::PolicySpec& policy,
                      std::uint64_t seed) {
  Rng rng(seed);
  EnvState state = envs::reset(env, rng);
  double total = 0.0;
  bool done = false;
  while (!done) {
    const auto action = envs::scripted_policy(policy.believed, state, policy.noise_std, rng);
    const auto result = envs::step(env, state, action);
    total += result.reward;
    state = result.next;
    done = result.done;
  }
  return total;
}

}  // namespace

TEST_SUITE_BEGIN("envs");

TEST_CASE("gravity-cancelling thrust keeps the mass still") {
  PointMassConfig cfg;
  EnvState s;
  s.position << 0.0f, 3.0f;
  s.velocity.setZero();
  const float hover = cfg.gravity() / cfg.gain()(1);
  REQUIRE(hover <= 1.0f);  // hover must be a legal action in both domains
  const auto result = envs::step(cfg, s, {0.0f, hover});
  CHECK(result.next.velocity.cwiseAbs().maxCoeff() < 1e-6f);
  CHECK((result.next.position - s.position).cwiseAbs().maxCoeff() < 1e-6f);
  CHECK(result.reward == doctest::Approx(-cfg.action_cost * hover * hover));
}

TEST_CASE("free fall for one step from rest") {
  PointMassConfig cfg;
  EnvState s;
  s.position << 0.0f, 1.0f;
  s.velocity.setZero();
  const auto result = envs::step(cfg, s, {0.0f, 0.0f});
  // v' = (1 - mu dt) * 0 + dt * (-g) = -0.49; p' = 1 + dt * v' = 0.9755
  CHECK(result.next.velocity(1) == doctest::Approx(-0.49f));
  CHECK(result.next.position(1) == doctest::Approx(0.9755f));
  CHECK(result.next.velocity(0) == 0.0f);
}

TEST_CASE("no forces freezes the state") {
  PointMassConfig cfg;
  cfg.gravity_scale = 0.0f;
  cfg.friction_scale = 0.0f;
  EnvState s;
  s.position << 2.0f, -1.0f;
  s.velocity.setZero();
  const auto result = envs::step(cfg, s, {0.0f, 0.0f});
  CHECK((result.next.position - s.position).cwiseAbs().maxCoeff() == 0.0f);
  CHECK(result.next.velocity.cwiseAbs().maxCoeff() == 0.0f);
  CHECK(result.reward == doctest::Approx(-(s.position - cfg.goal).norm()));
}

TEST_CASE("friction only shrinks the speed") {
  PointMassConfig cfg;
  cfg.gravity_scale = 0.0f;
  cfg.friction_scale = 1.0f;
  EnvState s;
  s.position.setZero();
  s.velocity << 4.0f, -6.0f;
  float prev = s.velocity.norm();
  for (int i = 0; i < 50; ++i) {
    const auto result = envs::step(cfg, s, {0.0f, 0.0f});
    const float speed = result.next.velocity.norm();
    CHECK(speed <= prev);
    prev = speed;
    s = result.next;
  }
  CHECK(prev < 1.0f);
}

TEST_CASE("positions and velocities stay inside their boxes") {
  PointMassConfig cfg;
  Rng rng(3);
  EnvState s = envs::reset(cfg, rng);
  for (int i = 0; i < 400; ++i) {
    Eigen::Vector2f a{rng.uniform_float(-2.0f, 2.0f), rng.uniform_float(-2.0f, 2.0f)};
    const auto result = envs::step(cfg, s, a);
    CHECK(result.next.position.cwiseAbs().maxCoeff() <= cfg.position_bound);
    CHECK(result.next.velocity.cwiseAbs().maxCoeff() <= cfg.velocity_bound);
    s = result.next;
    if (result.done) s = envs::reset(cfg, rng);
  }
}

TEST_CASE("step is deterministic") {
  PointMassConfig cfg;
  EnvState s;
  s.position << 1.0f, 2.0f;
  s.velocity << -0.5f, 0.25f;
  const auto a = Eigen::Vector2f{0.3f, -0.8f};
  const auto r1 = envs::step(cfg, s, a);
  const auto r2 = envs::step(cfg, s, a);
  CHECK((r1.next.position - r2.next.position).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((r1.next.velocity - r2.next.velocity).cwiseAbs().maxCoeff() == 0.0f);
  CHECK(r1.reward == r2.reward);
}

TEST_CASE("episode terminates exactly at the configured length") {
  PointMassConfig cfg;
  Rng rng(0);
  EnvState s = envs::reset(cfg, rng);
  int steps = 0;
  bool done = false;
  while (!done) {
    const auto result = envs::step(cfg, s, {0.0f, 0.0f});
    s = result.next;
    done = result.done;
    ++steps;
    REQUIRE(steps <= cfg.episode_len);
  }
  CHECK(steps == cfg.episode_len);
}

TEST_CASE("scripted policy is zero at the goal with no gravity") {
  PointMassConfig cfg;
  cfg.gravity_scale = 0.0f;
  EnvState s;
  s.position = cfg.goal;
  s.velocity.setZero();
  Rng rng(0);
  const auto a = envs::scripted_policy(cfg, s, 0.0f, rng);
  CHECK(a.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("scripted policy is deterministic without noise") {
  PointMassConfig cfg;
  EnvState s;
  s.position << -2.0f, 1.0f;
  s.velocity << 0.5f, -1.5f;
  Rng rng_a(1), rng_b(2);
  const auto a = envs::scripted_policy(cfg, s, 0.0f, rng_a);
  const auto b = envs::scripted_policy(cfg, s, 0.0f, rng_b);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("expert beats medium on average") {
  PointMassConfig env;
  env.gravity_scale = 0.5f;  // hoverable, so skill shows up in the return
  const auto expert = envs::make_policy(env, envs::Quality::kExpert);
  const auto medium = envs::make_policy(env, envs::Quality::kMedium);
  double expert_total = 0.0, medium_total = 0.0;
  for (std::uint64_t ep = 0; ep < 20; ++ep) {
    expert_total += episode_return(env, expert, 100 + ep);
    medium_total += episode_return(env, medium, 100 + ep);
  }
  CHECK(expert_total / 20.0 > medium_total / 20.0);
}

TEST_CASE("dataset generation is deterministic and sized exactly") {
  PointMassConfig cfg;
  const auto policy = envs::make_policy(cfg, envs::Quality::kMedium);
  const auto a = envs::generate_dataset(cfg, policy, 450, 9, data::DomainTag::kSource);
  const auto b = envs::generate_dataset(cfg, policy, 450, 9, data::DomainTag::kSource);
  REQUIRE(a.size() == 450);
  REQUIRE(b.size() == 450);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(data::bitwise_equal(a.record(i), b.record(i)));
  }
}

TEST_CASE("n = episode_len produces exactly one episode") {
  PointMassConfig cfg;
  const auto policy = envs::make_policy(cfg, envs::Quality::kExpert);
  const auto ds = envs::generate_dataset(cfg, policy, 200, 4, data::DomainTag::kTarget);
  CHECK(ds.size() == 200);
  for (std::size_t i = 0; i + 1 < ds.size(); ++i) CHECK_FALSE(ds.record(i).done);
  CHECK(ds.record(199).done);
}

TEST_CASE("gravity shift separates next states and grows with the gap") {
  PointMassConfig src;
  PointMassConfig tar_half = src;
  tar_half.gravity_scale = 0.5f;
  PointMassConfig tar_quarter = src;
  tar_quarter.gravity_scale = 0.25f;

  Rng rng(12);
  double gap_half = 0.0, gap_quarter = 0.0;
  const int trials = 200;
  for (int i = 0; i < trials; ++i) {
    EnvState s = envs::reset(src, rng);
    s.velocity << rng.uniform_float(-2.0f, 2.0f), rng.uniform_float(-2.0f, 2.0f);
    Eigen::Vector2f a{rng.uniform_float(-1.0f, 1.0f), rng.uniform_float(-1.0f, 1.0f)};
    const auto s_src = envs::step(src, s, a).next;
    const auto s_half = envs::step(tar_half, s, a).next;
    const auto s_quarter = envs::step(tar_quarter, s, a).next;
    auto dist = [](const EnvState& x, const EnvState& y) {
      return std::sqrt((x.position - y.position).squaredNorm() +
                       (x.velocity - y.velocity).squaredNorm());
    };
    gap_half += dist(s_src, s_half);
    gap_quarter += dist(s_src, s_quarter);
  }
  gap_half /= trials;
  gap_quarter /= trials;
  CHECK(gap_half > 0.0);
  CHECK(gap_quarter > gap_half);  // larger dt*delta_g, larger next-state gap
}

TEST_CASE("invalid configs are rejected") {
  PointMassConfig cfg;
  cfg.gravity_scale = -1.0f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  PointMassConfig cfg2;
  cfg2.dt = 0.0f;
  CHECK_THROWS_AS(cfg2.validate(), ConfigError);
}

TEST_CASE("negative noise is a usage error") {
  PointMassConfig cfg;
  EnvState s;
  Rng rng(0);
  CHECK_THROWS_AS(envs::scripted_policy(cfg, s, -0.1f, rng), UsageError);
}

TEST_SUITE_END();
