#include <doctest.h>

#include <cmath>

#include "stc/errors.hpp"
#include "stc/theory.hpp"

using namespace stc;
using theory::TabularMdp;
using theory::TabularPolicy;

namespace {

TabularMdp single_state_mdp(double reward, double gamma) {
  TabularMdp m;
  m.num_states = 1;
  m.num_actions = 1;
  m.dynamics = {Eigen::MatrixXd::Ones(1, 1)};
  m.reward = Eigen::MatrixXd::Constant(1, 1, reward);
  m.gamma = gamma;
  m.r_max = std::max(1.0, std::abs(reward));
  m.start = Eigen::VectorXd::Ones(1);
  return m;
}

double max_l1_row_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace

TEST_SUITE_BEGIN("theory");

TEST_CASE("random pair with epsilon 0 has identical dynamics") {
  const auto [src, tar] = theory::random_mdp_pair(6, 3, 0.95, 0.0, 11);
  for (int a = 0; a < 3; ++a) {
    CHECK((src.dynamics[a] - tar.dynamics[a]).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((src.reward - tar.reward).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random pair respects the requested dynamics gap") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int S = 2 + static_cast<int>(rng.index(8));
    const int A = 1 + static_cast<int>(rng.index(4));
    const double eps = rng.uniform(0.0, 2.0);
    const auto [src, tar] = theory::random_mdp_pair(S, A, 0.9, eps, 100 + trial);
    double measured = 0.0;
    for (int a = 0; a < A; ++a) {
      measured = std::max(measured, max_l1_row_gap(src.dynamics[a], tar.dynamics[a]));
    }
    CHECK(measured <= eps + 1e-12);
  }
}

TEST_CASE("single-state pair is the point mass") {
  const auto [src, tar] = theory::random_mdp_pair(1, 2, 0.9, 1.0, 3);
  for (int a = 0; a < 2; ++a) {
    CHECK(src.dynamics[a](0, 0) == doctest::Approx(1.0));
    CHECK(tar.dynamics[a](0, 0) == doctest::Approx(1.0));
  }
}

TEST_CASE("random pair rejects bad epsilon") {
  CHECK_THROWS_AS(theory::random_mdp_pair(3, 2, 0.9, -0.1, 0), UsageError);
  CHECK_THROWS_AS(theory::random_mdp_pair(3, 2, 0.9, 2.5, 0), UsageError);
}

TEST_CASE("induced dynamics: one-hot policy selects that action's rows") {
  const auto [src, tar] = theory::random_mdp_pair(4, 3, 0.9, 0.5, 21);
  TabularPolicy pi;
  pi.probs = Eigen::MatrixXd::Zero(4, 3);
  pi.probs.col(1).setOnes();
  const Eigen::MatrixXd induced = theory::policy_induced_dynamics(src, pi);
  CHECK((induced - src.dynamics[1]).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("induced dynamics: uniform mix of swap rows") {
  TabularMdp m = single_state_mdp(0.0, 0.9);
  m.num_states = 2;
  m.num_actions = 2;
  Eigen::MatrixXd p0(2, 2), p1(2, 2);
  p0 << 1, 0, 1, 0;
  p1 << 0, 1, 0, 1;
  m.dynamics = {p0, p1};
  m.reward = Eigen::MatrixXd::Zero(2, 2);
  m.start = Eigen::VectorXd::Constant(2, 0.5);
  const auto pi = theory::uniform_policy(2, 2);
  const Eigen::MatrixXd induced = theory::policy_induced_dynamics(m, pi);
  CHECK(induced(0, 0) == doctest::Approx(0.5));
  CHECK(induced(0, 1) == doctest::Approx(0.5));
  CHECK(induced(1, 0) == doctest::Approx(0.5));
}

TEST_CASE("induced dynamics rows remain stochastic") {
  Rng rng(9);
  const auto [src, tar] = theory::random_mdp_pair(7, 4, 0.9, 1.2, 33);
  const auto pi = theory::random_policy(7, 4, rng);
  const Eigen::MatrixXd induced = theory::policy_induced_dynamics(src, pi);
  for (int s = 0; s < 7; ++s) {
    CHECK(induced.row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(induced.row(s).minCoeff() >= 0.0);
  }
}

TEST_CASE("constant reward 1 with gamma 0.9 gives value 10") {
  const TabularMdp m = single_state_mdp(1.0, 0.9);
  const auto pi = theory::uniform_policy(1, 1);
  const auto values = theory::exact_values(m, pi);
  CHECK(values.v(0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(values.j == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(values.q(0, 0) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("zero reward gives zero values") {
  const auto [src, tar] = theory::random_mdp_pair(5, 2, 0.97, 0.8, 40);
  TabularMdp m = src;
  m.reward.setZero();
  Rng rng(2);
  const auto pi = theory::random_policy(5, 2, rng);
  const auto values = theory::exact_values(m, pi);
  CHECK(values.v.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(values.q.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("linear solve agrees with value iteration") {
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const auto [src, tar] = theory::random_mdp_pair(5, 3, 0.9, 1.0, 200 + trial);
    const auto pi = theory::random_policy(5, 3, rng);
    const auto direct = theory::exact_values(src, pi);
    const auto iterated = theory::exact_values_by_iteration(src, pi);
    CHECK((direct.v - iterated.v).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((direct.q - iterated.q).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(direct.j == doctest::Approx(iterated.j).epsilon(1e-10));
  }
}

TEST_CASE("occupancy solves its defining system and sums to one") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto [src, tar] = theory::random_mdp_pair(6, 2, 0.95, 0.7, 300 + trial);
    const auto pi = theory::random_policy(6, 2, rng);
    const Eigen::VectorXd d = theory::state_occupancy(src, pi);
    CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(d.minCoeff() >= -1e-12);
    const Eigen::MatrixXd p_pi = theory::policy_induced_dynamics(src, pi);
    const Eigen::VectorXd reconstructed =
        (1.0 - src.gamma) * src.start + src.gamma * p_pi.transpose() * d;
    CHECK((d - reconstructed).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("theorem 1: zero when policies and dynamics coincide") {
  const auto [src, tar] = theory::random_mdp_pair(5, 3, 0.9, 0.0, 50);
  Rng rng(4);
  const auto mu = theory::random_policy(5, 3, rng);
  const auto report = theory::verify_theorem1(src, tar, mu, mu);
  CHECK(report.lhs == doctest::Approx(0.0));
  CHECK(report.rhs == doctest::Approx(0.0));
  CHECK(report.holds);
}

TEST_CASE("theorem 1: no violations over 200 random trials") {
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Rng rng(derive_seed(9000, trial));
    const int S = 2 + static_cast<int>(rng.index(9));   // <= 10
    const int A = 1 + static_cast<int>(rng.index(4));   // <= 4
    const double eps = rng.uniform(0.0, 2.0);
    const auto [src, tar] = theory::random_mdp_pair(S, A, 0.9, eps, 7000 + trial);
    const auto mu = theory::random_policy(S, A, rng);
    const auto pi_hat = theory::random_policy(S, A, rng);
    const auto report = theory::verify_theorem1(src, tar, mu, pi_hat);
    CHECK(report.holds);
    ++checked;
  }
  CHECK(checked == 200);
}

TEST_CASE("theorem 1: one-hot policy gap with identical dynamics") {
  const auto [src, tar] = theory::random_mdp_pair(4, 2, 0.9, 0.0, 60);
  TabularPolicy a, b;
  a.probs = Eigen::MatrixXd::Zero(4, 2);
  a.probs.col(0).setOnes();
  b.probs = Eigen::MatrixXd::Zero(4, 2);
  b.probs.col(1).setOnes();
  const auto report = theory::verify_theorem1(src, tar, a, b);
  CHECK(report.kappa == doctest::Approx(2.0));
  CHECK(report.epsilon == doctest::Approx(0.0));
  CHECK(report.lhs <= report.kappa + 1e-12);
  CHECK(report.holds);
}

TEST_CASE("theorem 2: identical behavior policies give zero on both sides") {
  const auto [src, tar] = theory::random_mdp_pair(5, 3, 0.9, 0.5, 70);
  Rng rng(6);
  const auto mu = theory::random_policy(5, 3, rng);
  const auto report = theory::verify_theorem2(src, mu, mu, 2.0, 123);
  CHECK(report.lhs == doctest::Approx(0.0));
  CHECK(report.rhs == doctest::Approx(0.0));
  CHECK(report.holds);
}

TEST_CASE("theorem 2: zero smoothness bound leaves rewards unchanged") {
  const auto [src, tar] = theory::random_mdp_pair(4, 2, 0.95, 0.5, 80);
  Rng rng(7);
  const auto mu_src = theory::random_policy(4, 2, rng);
  const auto mu_tar = theory::random_policy(4, 2, rng);
  const auto report = theory::verify_theorem2(src, mu_src, mu_tar, 0.0, 9);
  CHECK(report.lhs == doctest::Approx(0.0));
  CHECK(report.holds);
}

TEST_CASE("theorem 2: no violations over 200 random trials") {
  for (int trial = 0; trial < 200; ++trial) {
    Rng rng(derive_seed(9100, trial));
    const int S = 2 + static_cast<int>(rng.index(9));
    const int A = 2 + static_cast<int>(rng.index(3));
    const auto [src, tar] =
        theory::random_mdp_pair(S, A, rng.uniform(0.5, 0.99), rng.uniform(0.0, 2.0), 7100 + trial);
    const auto mu_src = theory::random_policy(S, A, rng);
    const auto mu_tar = theory::random_policy(S, A, rng);
    const double l_r = rng.uniform(0.0, 3.0);
    const auto report = theory::verify_theorem2(src, mu_src, mu_tar, l_r, 7200 + trial);
    CHECK(report.holds);
  }
}

TEST_CASE("theorem 3: large-sample limit holds with wide margin") {
  const auto [src, tar] = theory::random_mdp_pair(2, 2, 0.9, 0.0, 90);
  const auto mu = theory::uniform_policy(2, 2);
  Rng rng(10);
  const auto pi_eval = theory::random_policy(2, 2, rng);
  // kappa = 0 (pi_hat = mu_tar), epsilon = 0 by construction.
  const auto result = theory::verify_theorem3(src, tar, mu, mu, pi_eval, 1000000, 0.1, 3, 42);
  for (const auto& r : result.reports) {
    CHECK(r.holds);
    CHECK(r.kappa == 0.0);
    CHECK(r.epsilon == 0.0);
    // With kappa = epsilon = 0 the slack is pure concentration; require a
    // comfortable fraction of it to remain.
    CHECK(r.margin > 0.5 * std::abs(r.rhs));
  }
  CHECK(result.failure_rate == 0.0);
}

TEST_CASE("theorem 3: failure rate within the Monte Carlo budget") {
  // 60 instances x a handful of draws; acceptance runs the full 500.
  int total = 0, failures = 0;
  for (int inst = 0; inst < 60; ++inst) {
    Rng rng(derive_seed(9200, inst));
    const int S = 2 + static_cast<int>(rng.index(6));
    const int A = 1 + static_cast<int>(rng.index(3));
    const auto [src, tar] =
        theory::random_mdp_pair(S, A, 0.99, rng.uniform(0.0, 1.0), 7400 + inst);
    const auto mu_tar = theory::random_policy(S, A, rng);
    const auto pi_hat = theory::random_policy(S, A, rng);
    const auto pi_eval = theory::random_policy(S, A, rng);
    const int n = (inst % 3 == 0) ? 50 : (inst % 3 == 1) ? 500 : 5000;
    const auto result =
        theory::verify_theorem3(src, tar, mu_tar, pi_hat, pi_eval, n, 0.1, 2, 7500 + inst);
    for (const auto& r : result.reports) {
      ++total;
      if (!r.holds) ++failures;
    }
  }
  CHECK(static_cast<double>(failures) / total <= 0.13);
}

TEST_CASE("theorem 3: zero trials is a usage error") {
  const auto [src, tar] = theory::random_mdp_pair(2, 2, 0.9, 0.5, 95);
  const auto mu = theory::uniform_policy(2, 2);
  CHECK_THROWS_AS(theory::verify_theorem3(src, tar, mu, mu, mu, 100, 0.1, 0, 0), UsageError);
}

TEST_CASE("telescoping: identical MDPs give zero on both sides") {
  const auto [src, tar] = theory::random_mdp_pair(4, 2, 0.9, 0.0, 101);
  Rng rng(11);
  const auto pi = theory::random_policy(4, 2, rng);
  const auto report = theory::verify_telescoping(src, tar, pi);
  CHECK(report.lhs == doctest::Approx(0.0));
  CHECK(report.rhs == doctest::Approx(0.0));
  CHECK(report.holds);
}

TEST_CASE("telescoping: gamma 0 zeroes both sides") {
  auto [m1, m2] = theory::random_mdp_pair(5, 3, 0.0, 1.0, 110);
  Rng rng(12);
  const auto pi = theory::random_policy(5, 3, rng);
  const auto report = theory::verify_telescoping(m1, m2, pi);
  CHECK(report.lhs == doctest::Approx(0.0));
  CHECK(report.rhs == doctest::Approx(0.0));
  CHECK(report.holds);
}

TEST_CASE("telescoping identity holds on 100 random pairs") {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(9300, trial));
    const int S = 2 + static_cast<int>(rng.index(7));
    const int A = 1 + static_cast<int>(rng.index(4));
    const double gamma = rng.uniform(0.1, 0.99);
    const auto [m1, m2] =
        theory::random_mdp_pair(S, A, gamma, rng.uniform(0.0, 2.0), 7600 + trial);
    const auto pi = theory::random_policy(S, A, rng);
    const auto report = theory::verify_telescoping(m1, m2, pi);
    CHECK(report.margin <= 1e-8);
    CHECK(report.holds);
  }
}

TEST_CASE("telescoping rejects differing rewards") {
  auto [m1, m2] = theory::random_mdp_pair(3, 2, 0.9, 0.5, 120);
  m2.reward(0, 0) += 0.5;
  const auto pi = theory::uniform_policy(3, 2);
  CHECK_THROWS_AS(theory::verify_telescoping(m1, m2, pi), UsageError);
}

TEST_SUITE_END();
