#include "stc/target_models.hpp"

#include <algorithm>
#include <numeric>

namespace stc::models {

namespace {

enum class Head { kInverse, kForward, kReward };

struct Regression {
  Eigen::MatrixXf inputs;   // one row per record
  Eigen::MatrixXf targets;  // one row per record
};

Regression build_regression(const data::TransitionDataset& ds, const data::NormStats& stats,
                            Head head) {
  Regression r;
  const Eigen::MatrixXf std_states = stats.standardize(ds.states());
  switch (head) {
    case Head::kInverse: {
      const Eigen::MatrixXf std_next = stats.standardize(ds.next_states());
      r.inputs.resize(std_states.rows(), 2 * ds.obs_dim());
      r.inputs << std_states, std_next;
      r.targets = ds.actions();
      break;
    }
    case Head::kForward: {
      r.inputs.resize(std_states.rows(), ds.obs_dim() + ds.act_dim());
      r.inputs << std_states, ds.actions();
      r.targets = ds.next_states() - ds.states();
      break;
    }
    case Head::kReward: {
      r.inputs.resize(std_states.rows(), ds.obs_dim() + ds.act_dim());
      r.inputs << std_states, ds.actions();
      r.targets = ds.rewards();
      break;
    }
  }
  return r;
}

/// Mean over rows of the squared error norm.
float holdout_mse(const nn::Mlp& net, const Regression& reg,
                  const std::vector<std::size_t>& rows) {
  if (rows.empty()) return 0.0f;
  Eigen::MatrixXf x(rows.size(), reg.inputs.cols());
  Eigen::MatrixXf t(rows.size(), reg.targets.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = reg.inputs.row(static_cast<Eigen::Index>(rows[i]));
    t.row(static_cast<Eigen::Index>(i)) = reg.targets.row(static_cast<Eigen::Index>(rows[i]));
  }
  const Eigen::MatrixXf pred = net.forward(x);
  return (pred - t).rowwise().squaredNorm().sum() / static_cast<float>(rows.size());
}

TrainedModel train_regression(const data::TransitionDataset& ds, const Phase1Config& cfg,
                              Head head, std::uint64_t seed_stream) {
  if (ds.empty()) throw UsageError("phase 1 training needs a non-empty target dataset");
  if (cfg.steps < 1) throw UsageError("phase 1 training needs steps >= 1");
  if (cfg.batch_size < 1) throw UsageError("phase 1 batch size must be >= 1");

  const data::NormStats stats = data::compute_stats(ds);
  const Regression reg = build_regression(ds, stats, head);

  // Seed-shuffled 10% holdout split by record index.
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(cfg.seed, seed_stream));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[split_rng.index(i)]);
  }
  const auto holdout_count =
      static_cast<std::size_t>(static_cast<double>(ds.size()) * cfg.holdout_fraction);
  std::vector<std::size_t> holdout(order.begin(), order.begin() + holdout_count);
  std::vector<std::size_t> train(order.begin() + holdout_count, order.end());
  if (train.empty()) train = order;  // degenerate tiny datasets train on everything

  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(reg.inputs.cols()));
  for (int h : cfg.hidden) sizes.push_back(h);
  sizes.push_back(static_cast<int>(reg.targets.cols()));
  const auto activation =
      head == Head::kInverse ? nn::OutputActivation::kTanh : nn::OutputActivation::kIdentity;

  TrainedModel out;
  out.net = nn::mlp_init(sizes, activation, derive_seed(cfg.seed, seed_stream + 1));
  nn::AdamState opt = nn::adam_init(out.net, cfg.learning_rate);

  Rng batch_rng(derive_seed(cfg.seed, seed_stream + 2));
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  Eigen::MatrixXf x(batch, reg.inputs.cols());
  Eigen::MatrixXf t(batch, reg.targets.cols());
  const int decile = std::max(1, cfg.steps / 10);
  double early_sum = 0.0, late_sum = 0.0;
  int early_n = 0, late_n = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t row = train[batch_rng.index(train.size())];
      x.row(static_cast<Eigen::Index>(i)) = reg.inputs.row(static_cast<Eigen::Index>(row));
      t.row(static_cast<Eigen::Index>(i)) = reg.targets.row(static_cast<Eigen::Index>(row));
    }
    nn::Graph graph;
    const auto pred = graph.apply(out.net, graph.constant(x));
    const auto loss_node =
        graph.scale(graph.sum_all(graph.square(graph.sub(pred, graph.constant(t)))),
                    1.0f / static_cast<float>(batch));
    const float loss = graph.backward(loss_node);
    nn::adam_step(out.net, graph.take_gradients(out.net), opt);
    if (step < decile) {
      early_sum += loss;
      ++early_n;
    }
    if (step >= cfg.steps - decile) {
      late_sum += loss;
      ++late_n;
    }
  }
  out.early_loss_mean = static_cast<float>(early_sum / std::max(early_n, 1));
  out.late_loss_mean = static_cast<float>(late_sum / std::max(late_n, 1));
  out.holdout_mse = holdout_mse(out.net, reg, holdout.empty() ? train : holdout);
  return out;
}

}  // namespace

TrainedModel train_inverse(const data::TransitionDataset& target, const Phase1Config& cfg) {
  return train_regression(target, cfg, Head::kInverse, 0x11);
}

TrainedModel train_forward(const data::TransitionDataset& target, const Phase1Config& cfg) {
  return train_regression(target, cfg, Head::kForward, 0x22);
}

TrainedModel train_reward(const data::TransitionDataset& target, const Phase1Config& cfg) {
  return train_regression(target, cfg, Head::kReward, 0x33);
}

Phase1Report train_target_models(const data::TransitionDataset& target, const Phase1Config& cfg) {
  Phase1Report report;
  TrainedModel inverse = train_inverse(target, cfg);
  TrainedModel forward = train_forward(target, cfg);
  TrainedModel reward = train_reward(target, cfg);
  report.inverse_mse = inverse.holdout_mse;
  report.forward_mse = forward.holdout_mse;
  report.reward_mse = reward.holdout_mse;
  report.models.inverse_model = std::move(inverse.net);
  report.models.forward_model = std::move(forward.net);
  report.models.reward_model = std::move(reward.net);
  report.models.stats = data::compute_stats(target);
  return report;
}

}  // namespace stc::models
