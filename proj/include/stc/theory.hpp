#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stc/errors.hpp"
#include "stc/rng.hpp"

namespace stc::theory {

/// Finite MDP with per-action row-stochastic dynamics. All math here is
/// double precision; tolerances are 1e-8/1e-9.
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  /// dynamics[a](s, s') = P(s' | s, a); each row sums to 1.
  std::vector<Eigen::MatrixXd> dynamics;
  /// reward(s, a), bounded by r_max in absolute value.
  Eigen::MatrixXd reward;
  double gamma = 0.99;
  double r_max = 1.0;
  /// Start-state distribution (uniform unless set otherwise).
  Eigen::VectorXd start;

  void validate() const;
};

struct TabularPolicy {
  /// probs(s, a) = pi(a | s); rows are probability vectors.
  Eigen::MatrixXd probs;

  void validate() const;
};

struct BoundReport {
  std::string check;  // "theorem1", "theorem2", "theorem3", "telescoping"
  std::uint64_t seed = 0;
  int num_states = 0;
  int num_actions = 0;
  double kappa = 0.0;
  double epsilon = 0.0;
  int sample_size = 0;
  double delta = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs for upper bounds, lhs - rhs for lower bounds
  bool holds = false;
  /// Theorem 3 only: exact return on the per-trial empirical target MDP.
  double j_empirical = 0.0;
};

/// Target dynamics rows are Dirichlet(1)-uniform; source rows are the same
/// rows mixed with fresh ones so that every per-(s,a) l1 gap is at most
/// `epsilon_target`. Rewards are shared, uniform in [-1, 1].
std::pair<TabularMdp, TabularMdp> random_mdp_pair(int num_states, int num_actions, double gamma,
                                                  double epsilon_target, std::uint64_t seed);

TabularPolicy random_policy(int num_states, int num_actions, Rng& rng);
TabularPolicy uniform_policy(int num_states, int num_actions);

/// P^pi(s' | s) = sum_a P(s' | s, a) pi(a | s).
Eigen::MatrixXd policy_induced_dynamics(const TabularMdp& mdp, const TabularPolicy& pi);

struct ExactValues {
  Eigen::MatrixXd q;  // (s, a)
  Eigen::VectorXd v;  // (s)
  double j = 0.0;     // start-weighted value
};

/// Policy evaluation by direct linear solve of (I - gamma P^pi) v = r^pi.
ExactValues exact_values(const TabularMdp& mdp, const TabularPolicy& pi);

/// Same fixed point via value iteration; independent route used as an oracle.
ExactValues exact_values_by_iteration(const TabularMdp& mdp, const TabularPolicy& pi,
                                      double residual_tol = 1e-13, int max_iters = 2000000);

/// Normalized discounted state occupancy d(s) = (1-gamma) sum_t gamma^t P(s_t=s),
/// solved exactly from its defining linear system.
Eigen::VectorXd state_occupancy(const TabularMdp& mdp, const TabularPolicy& pi);

/// max_s l1 distance between the pi_hat-composed source dynamics and the
/// mu_tar-composed target dynamics, against kappa + epsilon.
BoundReport verify_theorem1(const TabularMdp& m_src, const TabularMdp& m_tar,
                            const TabularPolicy& mu_tar, const TabularPolicy& pi_hat);

/// Q-gap between the reward-corrected and raw MDP (shared dynamics) against
/// (2 L_r / (1-gamma)) max_s TV(mu_src, mu_tar). Actions carry one-hot
/// embeddings; the correction term averages the embedding displacement over
/// mu_tar (corrected draw) and mu_src (dataset action).
BoundReport verify_theorem2(const TabularMdp& m_src_empirical, const TabularPolicy& mu_src,
                            const TabularPolicy& mu_tar, double l_r, std::uint64_t seed);

struct Theorem3Result {
  std::vector<BoundReport> reports;
  double failure_rate = 0.0;
};

/// Finite-data return bound. Per trial: draws n transitions from the target
/// MDP under mu_tar, builds the count-normalized empirical dynamics (unvisited
/// rows uniform), and checks
///   J_corrected - J_tar >= -gamma r_max (kappa+eps)/(1-gamma)^2 - C1 sqrt(ln(2 C2/delta)/n)
/// where J_corrected is the exact return of pi_eval on the pi_hat-composed
/// source dynamics with the shared reward table.
Theorem3Result verify_theorem3(const TabularMdp& m_src, const TabularMdp& m_tar,
                               const TabularPolicy& mu_tar, const TabularPolicy& pi_hat,
                               const TabularPolicy& pi_eval, int n, double delta, int trials,
                               std::uint64_t seed);

/// Return-gap identity between two MDPs sharing rewards:
/// J1 - J2 = gamma/(1-gamma) E_{rho1}[ E_{P1} V2 - E_{P2} V2 ].
BoundReport verify_telescoping(const TabularMdp& m1, const TabularMdp& m2,
                               const TabularPolicy& pi);

}  // namespace stc::theory
