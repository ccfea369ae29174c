#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stc/errors.hpp"

namespace stc::nn {

enum class OutputActivation { kIdentity, kTanh };

/// Dense MLP: ReLU on hidden layers, identity or tanh on the output head.
/// Plain value type; copy to snapshot, assign to restore.
struct Mlp {
  std::vector<int> layer_sizes;
  OutputActivation output_activation = OutputActivation::kIdentity;
  std::vector<Eigen::MatrixXf> weights;  // weights[l]: layer_sizes[l+1] x layer_sizes[l]
  std::vector<Eigen::VectorXf> biases;   // biases[l]:  layer_sizes[l+1]

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;
  bool same_architecture(const Mlp& other) const;
  bool all_finite() const;

  /// Batched forward pass; rows are samples.
  Eigen::MatrixXf forward(const Eigen::MatrixXf& x) const;
  /// Single-sample forward pass.
  Eigen::VectorXf forward_one(const Eigen::VectorXf& x) const;
};

/// Fan-in-scaled uniform init (U[-1/sqrt(fan_in), +1/sqrt(fan_in)]), zero
/// biases. Deterministic per seed.
Mlp mlp_init(const std::vector<int>& layer_sizes, OutputActivation output_activation,
             std::uint64_t seed);

/// Parameter-shaped gradient accumulator.
struct Gradients {
  std::vector<Eigen::MatrixXf> weights;
  std::vector<Eigen::VectorXf> biases;

  void set_zero();
  bool all_finite() const;
};

Gradients make_gradients(const Mlp& net);

struct AdamState {
  float learning_rate = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  std::int64_t step = 0;
  Gradients first_moment;
  Gradients second_moment;
};

AdamState adam_init(const Mlp& net, float learning_rate);

/// One Adam update with bias correction. Throws NumericalError on non-finite
/// gradients; parameters are left untouched in that case.
void adam_step(Mlp& net, const Gradients& grads, AdamState& state);

/// target <- (1 - rate) * target + rate * online, parameter-wise.
void polyak_update(Mlp& target, const Mlp& online, float rate);

void save_checkpoint(const Mlp& net, const std::string& path);
Mlp load_checkpoint(const std::string& path, OutputActivation output_activation);

/// Reverse-mode tape over batched float matrices (rows = samples). Build the
/// loss bottom-up with the node constructors, then call backward() on a 1x1
/// node. Parameter gradients of every network used via apply() accumulate in
/// the graph and are read back with take_gradients().
class Graph {
 public:
  using NodeId = std::int32_t;

  NodeId constant(Eigen::MatrixXf value);
  NodeId constant(const Eigen::VectorXf& value);  // stored as a column

  /// Full forward pass of `net`; tracks its parameter gradients.
  NodeId apply(const Mlp& net, NodeId input);

  NodeId relu(NodeId x);
  NodeId tanh(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId scale(NodeId x, float c);
  NodeId square(NodeId x);
  NodeId row_sum(NodeId x);            // batch x k  ->  batch x 1
  NodeId sum_all(NodeId x);            // -> 1 x 1
  NodeId mean_all(NodeId x);           // -> 1 x 1
  NodeId exp_clip(NodeId x, float lo, float hi);
  NodeId min_scalar(NodeId a, NodeId b);  // both 1 x 1; subgradient routes to the smaller

  const Eigen::MatrixXf& value(NodeId id) const;
  float value_scalar(NodeId id) const;

  /// Reverse pass from a scalar node. Returns its value.
  float backward(NodeId loss);

  /// Gradient w.r.t. a node's value (valid after backward; zero matrix if the
  /// node did not influence the loss).
  Eigen::MatrixXf grad(NodeId id) const;

  /// Accumulated parameter gradients for `net` (zeros if never applied).
  Gradients take_gradients(const Mlp& net);

 private:
  enum class Op : std::uint8_t {
    kConstant, kLinear, kRelu, kTanh, kAdd, kSub, kHadamard, kConcat,
    kScale, kSquare, kRowSum, kSumAll, kMeanAll, kExpClip, kMinScalar,
  };

  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    float c0 = 0.0f;
    float c1 = 0.0f;
    int net_slot = -1;  // kLinear only
    int layer = -1;     // kLinear only
    Eigen::MatrixXf value;
    Eigen::MatrixXf grad;
    bool grad_live = false;
  };

  NodeId push(Node node);
  NodeId linear(NodeId input, int net_slot, int layer);
  Eigen::MatrixXf& ensure_grad(NodeId id);
  int slot_for(const Mlp& net);

  std::vector<Node> nodes_;
  std::vector<const Mlp*> nets_;
  std::vector<Gradients> net_grads_;
};

/// Builds a loss with `build(graph)` (a scalar node id), runs the reverse
/// pass, and returns (loss value, gradients of `net`).
template <typename BuildFn>
std::pair<float, Gradients> grad_scalar_loss(const Mlp& net, BuildFn&& build) {
  Graph graph;
  Graph::NodeId loss = build(graph);
  float value = graph.backward(loss);
  return {value, graph.take_gradients(net)};
}

}  // namespace stc::nn
