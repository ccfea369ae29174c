#include "stc/theory.hpp"

#include <algorithm>
#include <cmath>

namespace stc::theory {

namespace {

constexpr double kRowTol = 1e-9;

Eigen::VectorXd dirichlet_row(int n, Rng& rng) {
  // Normalized Exp(1) draws.
  Eigen::VectorXd row(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    row(i) = -std::log(1.0 - rng.uniform() + 1e-300);
    total += row(i);
  }
  return row / total;
}

double l1_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().sum();
}

}  // namespace

void TabularMdp::validate() const {
  if (num_states < 1 || num_actions < 1) throw UsageError("MDP sizes must be >= 1");
  if (static_cast<int>(dynamics.size()) != num_actions) {
    throw ShapeError("dynamics tensor has wrong action count");
  }
  for (const auto& p : dynamics) {
    if (p.rows() != num_states || p.cols() != num_states) {
      throw ShapeError("dynamics matrix has wrong shape");
    }
    if (p.minCoeff() < 0.0) throw UsageError("negative transition probability");
    for (int s = 0; s < num_states; ++s) {
      if (std::abs(p.row(s).sum() - 1.0) > kRowTol) {
        throw UsageError("dynamics row does not sum to 1");
      }
    }
  }
  if (reward.rows() != num_states || reward.cols() != num_actions) {
    throw ShapeError("reward table has wrong shape");
  }
  if (reward.cwiseAbs().maxCoeff() > r_max + kRowTol) {
    throw UsageError("reward exceeds declared r_max");
  }
  if (gamma < 0.0 || gamma >= 1.0) throw UsageError("gamma must be in [0, 1)");
  if (start.size() != num_states || std::abs(start.sum() - 1.0) > kRowTol ||
      start.minCoeff() < 0.0) {
    throw UsageError("start distribution invalid");
  }
}

void TabularPolicy::validate() const {
  for (int s = 0; s < probs.rows(); ++s) {
    if (probs.row(s).minCoeff() < 0.0 || std::abs(probs.row(s).sum() - 1.0) > kRowTol) {
      throw UsageError("policy row is not a probability vector");
    }
  }
}

std::pair<TabularMdp, TabularMdp> random_mdp_pair(int num_states, int num_actions, double gamma,
                                                  double epsilon_target, std::uint64_t seed) {
  if (num_states < 1 || num_actions < 1) throw UsageError("MDP sizes must be >= 1");
  if (epsilon_target < 0.0 || epsilon_target > 2.0) {
    throw UsageError("epsilon_target must lie in [0, 2]");
  }
  Rng rng(derive_seed(seed, 0x7464ULL));
  TabularMdp tar;
  tar.num_states = num_states;
  tar.num_actions = num_actions;
  tar.gamma = gamma;
  tar.r_max = 1.0;
  tar.start = Eigen::VectorXd::Constant(num_states, 1.0 / num_states);
  tar.reward.resize(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) tar.reward(s, a) = rng.uniform(-1.0, 1.0);
  }
  tar.dynamics.resize(static_cast<std::size_t>(num_actions));
  for (auto& p : tar.dynamics) p.resize(num_states, num_states);
  for (int a = 0; a < num_actions; ++a) {
    for (int s = 0; s < num_states; ++s) {
      tar.dynamics[static_cast<std::size_t>(a)].row(s) = dirichlet_row(num_states, rng).transpose();
    }
  }

  // Mixing with weight c moves each row by at most c * ||q - p||_1 <= 2c.
  TabularMdp src = tar;
  const double mix = epsilon_target / 2.0;
  if (mix > 0.0) {
    for (int a = 0; a < num_actions; ++a) {
      for (int s = 0; s < num_states; ++s) {
        const Eigen::VectorXd fresh = dirichlet_row(num_states, rng);
        src.dynamics[static_cast<std::size_t>(a)].row(s) =
            (1.0 - mix) * tar.dynamics[static_cast<std::size_t>(a)].row(s) +
            mix * fresh.transpose();
      }
    }
  }
  tar.validate();
  src.validate();
  return {std::move(src), std::move(tar)};
}

TabularPolicy random_policy(int num_states, int num_actions, Rng& rng) {
  TabularPolicy pi;
  pi.probs.resize(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    pi.probs.row(s) = dirichlet_row(num_actions, rng).transpose();
  }
  return pi;
}

TabularPolicy uniform_policy(int num_states, int num_actions) {
  TabularPolicy pi;
  pi.probs = Eigen::MatrixXd::Constant(num_states, num_actions, 1.0 / num_actions);
  return pi;
}

Eigen::MatrixXd policy_induced_dynamics(const TabularMdp& mdp, const TabularPolicy& pi) {
  if (pi.probs.rows() != mdp.num_states || pi.probs.cols() != mdp.num_actions) {
    throw ShapeError("policy shape does not match MDP");
  }
  Eigen::MatrixXd induced = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_states);
  for (int a = 0; a < mdp.num_actions; ++a) {
    induced += pi.probs.col(a).asDiagonal() * mdp.dynamics[static_cast<std::size_t>(a)];
  }
  return induced;
}

ExactValues exact_values(const TabularMdp& mdp, const TabularPolicy& pi) {
  const Eigen::MatrixXd p_pi = policy_induced_dynamics(mdp, pi);
  const Eigen::VectorXd r_pi = (mdp.reward.array() * pi.probs.array()).rowwise().sum();
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(mdp.num_states, mdp.num_states) - mdp.gamma * p_pi;
  ExactValues out;
  out.v = system.partialPivLu().solve(r_pi);
  out.q.resize(mdp.num_states, mdp.num_actions);
  for (int a = 0; a < mdp.num_actions; ++a) {
    out.q.col(a) =
        mdp.reward.col(a) + mdp.gamma * mdp.dynamics[static_cast<std::size_t>(a)] * out.v;
  }
  out.j = mdp.start.dot(out.v);
  return out;
}

ExactValues exact_values_by_iteration(const TabularMdp& mdp, const TabularPolicy& pi,
                                      double residual_tol, int max_iters) {
  const Eigen::MatrixXd p_pi = policy_induced_dynamics(mdp, pi);
  const Eigen::VectorXd r_pi = (mdp.reward.array() * pi.probs.array()).rowwise().sum();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.num_states);
  for (int it = 0; it < max_iters; ++it) {
    const Eigen::VectorXd next = r_pi + mdp.gamma * p_pi * v;
    const double residual = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (residual < residual_tol) {
      ExactValues out;
      out.v = v;
      out.q.resize(mdp.num_states, mdp.num_actions);
      for (int a = 0; a < mdp.num_actions; ++a) {
        out.q.col(a) =
            mdp.reward.col(a) + mdp.gamma * mdp.dynamics[static_cast<std::size_t>(a)] * v;
      }
      out.j = mdp.start.dot(v);
      return out;
    }
  }
  throw NumericalError("value iteration did not converge");
}

Eigen::VectorXd state_occupancy(const TabularMdp& mdp, const TabularPolicy& pi) {
  // d = (1-gamma) d0 + gamma P^pi^T d.
  const Eigen::MatrixXd p_pi = policy_induced_dynamics(mdp, pi);
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(mdp.num_states, mdp.num_states) - mdp.gamma * p_pi.transpose();
  return system.partialPivLu().solve((1.0 - mdp.gamma) * mdp.start);
}

BoundReport verify_theorem1(const TabularMdp& m_src, const TabularMdp& m_tar,
                            const TabularPolicy& mu_tar, const TabularPolicy& pi_hat) {
  if (m_src.num_states != m_tar.num_states || m_src.num_actions != m_tar.num_actions) {
    throw ShapeError("source/target MDPs must share state and action spaces");
  }
  BoundReport report;
  report.check = "theorem1";
  report.num_states = m_src.num_states;
  report.num_actions = m_src.num_actions;

  double kappa = 0.0;
  for (int s = 0; s < m_src.num_states; ++s) {
    kappa = std::max(kappa, l1_distance(pi_hat.probs.row(s), mu_tar.probs.row(s)));
  }
  double epsilon = 0.0;
  for (int a = 0; a < m_src.num_actions; ++a) {
    for (int s = 0; s < m_src.num_states; ++s) {
      epsilon = std::max(epsilon, l1_distance(m_src.dynamics[static_cast<std::size_t>(a)].row(s),
                                              m_tar.dynamics[static_cast<std::size_t>(a)].row(s)));
    }
  }
  const Eigen::MatrixXd corrected = policy_induced_dynamics(m_src, pi_hat);
  const Eigen::MatrixXd target = policy_induced_dynamics(m_tar, mu_tar);
  double lhs = 0.0;
  for (int s = 0; s < m_src.num_states; ++s) {
    lhs = std::max(lhs, l1_distance(corrected.row(s), target.row(s)));
  }
  report.kappa = kappa;
  report.epsilon = epsilon;
  report.lhs = lhs;
  report.rhs = kappa + epsilon;
  report.margin = report.rhs - report.lhs;
  report.holds = lhs <= report.rhs + 1e-9;
  return report;
}

BoundReport verify_theorem2(const TabularMdp& m_src_empirical, const TabularPolicy& mu_src,
                            const TabularPolicy& mu_tar, double l_r, std::uint64_t seed) {
  if (l_r < 0.0) throw UsageError("l_r must be >= 0");
  const TabularMdp& mdp = m_src_empirical;
  if (mu_src.probs.rows() != mdp.num_states || mu_src.probs.cols() != mdp.num_actions ||
      mu_tar.probs.rows() != mdp.num_states || mu_tar.probs.cols() != mdp.num_actions) {
    throw UsageError("behavior policies must match the MDP (one-hot action embeddings)");
  }
  Rng rng(derive_seed(seed, 0x7132ULL));

  // Reward-gradient field, bounded coordinate-wise by l_r. With one-hot
  // action embeddings, the exact expected embedding under a policy row is the
  // row itself; the Taylor displacement averages the corrected draw (mu_tar)
  // against the dataset action (mu_src).
  Eigen::MatrixXd corrected_reward = mdp.reward;
  for (int s = 0; s < mdp.num_states; ++s) {
    const Eigen::VectorXd displacement = (mu_tar.probs.row(s) - mu_src.probs.row(s)).transpose();
    for (int a = 0; a < mdp.num_actions; ++a) {
      Eigen::VectorXd grad(mdp.num_actions);
      for (int k = 0; k < mdp.num_actions; ++k) grad(k) = rng.uniform(-l_r, l_r);
      corrected_reward(s, a) += grad.dot(displacement);
    }
  }

  TabularMdp corrected = mdp;
  corrected.reward = corrected_reward;
  corrected.r_max = std::max(mdp.r_max, corrected_reward.cwiseAbs().maxCoeff());

  const TabularPolicy pi_eval = random_policy(mdp.num_states, mdp.num_actions, rng);
  const ExactValues q_corrected = exact_values(corrected, pi_eval);
  const ExactValues q_raw = exact_values(mdp, pi_eval);

  double max_tv = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    max_tv = std::max(max_tv, 0.5 * l1_distance(mu_src.probs.row(s), mu_tar.probs.row(s)));
  }

  BoundReport report;
  report.check = "theorem2";
  report.seed = seed;
  report.num_states = mdp.num_states;
  report.num_actions = mdp.num_actions;
  report.kappa = max_tv;
  report.lhs = (q_corrected.q - q_raw.q).cwiseAbs().maxCoeff();
  report.rhs = 2.0 * l_r / (1.0 - mdp.gamma) * max_tv;
  report.margin = report.rhs - report.lhs;
  report.holds = report.lhs <= report.rhs + 1e-9;
  return report;
}

Theorem3Result verify_theorem3(const TabularMdp& m_src, const TabularMdp& m_tar,
                               const TabularPolicy& mu_tar, const TabularPolicy& pi_hat,
                               const TabularPolicy& pi_eval, int n, double delta, int trials,
                               std::uint64_t seed) {
  if (trials < 1) throw UsageError("theorem 3 needs at least one trial");
  if (n < 1) throw UsageError("target sample size must be >= 1");
  if (delta <= 0.0 || delta >= 1.0) throw UsageError("delta must lie in (0, 1)");

  const int S = m_tar.num_states;
  const int A = m_tar.num_actions;

  double kappa = 0.0;
  for (int s = 0; s < S; ++s) {
    kappa = std::max(kappa, l1_distance(pi_hat.probs.row(s), mu_tar.probs.row(s)));
  }
  double epsilon = 0.0;
  for (int a = 0; a < A; ++a) {
    for (int s = 0; s < S; ++s) {
      epsilon = std::max(epsilon, l1_distance(m_src.dynamics[static_cast<std::size_t>(a)].row(s),
                                              m_tar.dynamics[static_cast<std::size_t>(a)].row(s)));
    }
  }

  // Corrected source MDP: every action row is the pi_hat-composition of the
  // source dynamics; rewards are the shared table.
  TabularMdp corrected = m_src;
  const Eigen::MatrixXd composed = policy_induced_dynamics(m_src, pi_hat);
  for (auto& p : corrected.dynamics) p = composed;
  const double j_corrected = exact_values(corrected, pi_eval).j;
  const double j_target = exact_values(m_tar, pi_eval).j;

  const double gamma = m_tar.gamma;
  const double r_max = m_tar.r_max;
  const double c1 = gamma * r_max * S / (std::sqrt(2.0) * (1.0 - gamma) * (1.0 - gamma));
  const double c2 = static_cast<double>(S) * A * S;
  const double rhs = -gamma * r_max * (kappa + epsilon) / ((1.0 - gamma) * (1.0 - gamma)) -
                     c1 * std::sqrt(std::log(2.0 * c2 / delta) / n);

  Theorem3Result result;
  result.reports.reserve(static_cast<std::size_t>(trials));
  int failures = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, 0x9000ULL + static_cast<std::uint64_t>(trial)));
    // Empirical target dynamics from n transitions drawn under mu_tar
    // (uniform state visits); count normalization, unvisited rows uniform.
    std::vector<Eigen::MatrixXd> counts(static_cast<std::size_t>(A),
                                        Eigen::MatrixXd::Zero(S, S));
    for (int i = 0; i < n; ++i) {
      const int s = static_cast<int>(rng.index(static_cast<std::size_t>(S)));
      double u = rng.uniform();
      int a = 0;
      for (; a < A - 1; ++a) {
        u -= mu_tar.probs(s, a);
        if (u < 0.0) break;
      }
      u = rng.uniform();
      const auto& row = m_tar.dynamics[static_cast<std::size_t>(a)].row(s);
      int s2 = 0;
      for (; s2 < S - 1; ++s2) {
        u -= row(s2);
        if (u < 0.0) break;
      }
      counts[static_cast<std::size_t>(a)](s, s2) += 1.0;
    }
    TabularMdp empirical = m_tar;
    for (int a = 0; a < A; ++a) {
      for (int s = 0; s < S; ++s) {
        const double total = counts[static_cast<std::size_t>(a)].row(s).sum();
        if (total > 0.0) {
          empirical.dynamics[static_cast<std::size_t>(a)].row(s) =
              counts[static_cast<std::size_t>(a)].row(s) / total;
        } else {
          empirical.dynamics[static_cast<std::size_t>(a)].row(s).setConstant(1.0 / S);
        }
      }
    }

    BoundReport report;
    report.check = "theorem3";
    report.seed = derive_seed(seed, 0x9000ULL + static_cast<std::uint64_t>(trial));
    report.num_states = S;
    report.num_actions = A;
    report.kappa = kappa;
    report.epsilon = epsilon;
    report.sample_size = n;
    report.delta = delta;
    report.lhs = j_corrected - j_target;
    report.rhs = rhs;
    report.margin = report.lhs - report.rhs;
    report.holds = report.lhs >= report.rhs - 1e-9;
    // The empirical-target return is the intermediate the sample-size term
    // accounts for; keep it per trial so the sampling noise is visible.
    report.j_empirical = exact_values(empirical, pi_eval).j;
    if (!report.holds) ++failures;
    result.reports.push_back(report);
  }
  result.failure_rate = static_cast<double>(failures) / trials;
  return result;
}

BoundReport verify_telescoping(const TabularMdp& m1, const TabularMdp& m2,
                               const TabularPolicy& pi) {
  if (m1.num_states != m2.num_states || m1.num_actions != m2.num_actions) {
    throw ShapeError("MDPs must share state and action spaces");
  }
  if ((m1.reward - m2.reward).cwiseAbs().maxCoeff() > 0.0 || m1.gamma != m2.gamma) {
    throw UsageError("telescoping requires MDPs differing only in dynamics");
  }
  const ExactValues v1 = exact_values(m1, pi);
  const ExactValues v2 = exact_values(m2, pi);
  const Eigen::VectorXd d1 = state_occupancy(m1, pi);

  double expectation = 0.0;
  for (int s = 0; s < m1.num_states; ++s) {
    for (int a = 0; a < m1.num_actions; ++a) {
      const double rho = d1(s) * pi.probs(s, a);
      if (rho == 0.0) continue;
      const double next_value_gap =
          (m1.dynamics[static_cast<std::size_t>(a)].row(s) -
           m2.dynamics[static_cast<std::size_t>(a)].row(s))
              .dot(v2.v);
      expectation += rho * next_value_gap;
    }
  }

  BoundReport report;
  report.check = "telescoping";
  report.num_states = m1.num_states;
  report.num_actions = m1.num_actions;
  report.lhs = v1.j - v2.j;
  report.rhs = m1.gamma / (1.0 - m1.gamma) * expectation;
  report.margin = std::abs(report.lhs - report.rhs);
  report.holds = report.margin <= 1e-8;
  return report;
}

}  // namespace stc::theory
