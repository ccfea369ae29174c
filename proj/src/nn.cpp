#include "stc/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "stc/rng.hpp"

namespace stc::nn {

namespace {

constexpr char kCheckpointMagic[] = "STCNET1";  // 7 bytes on disk, no terminator

void check_layer_sizes(const std::vector<int>& layer_sizes) {
  if (layer_sizes.size() < 2) {
    throw ConfigError("mlp_init: need at least two layer sizes, got " +
                      std::to_string(layer_sizes.size()));
  }
  for (int s : layer_sizes) {
    if (s <= 0) {
      throw ConfigError("mlp_init: layer sizes must be positive, got " + std::to_string(s));
    }
  }
}

}  // namespace

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<std::size_t>(weights[l].size()) + static_cast<std::size_t>(biases[l].size());
  }
  return n;
}

bool Mlp::same_architecture(const Mlp& other) const {
  return layer_sizes == other.layer_sizes && output_activation == other.output_activation;
}

bool Mlp::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

Eigen::MatrixXf Mlp::forward(const Eigen::MatrixXf& x) const {
  if (x.cols() != input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(input_dim()));
  }
  Eigen::MatrixXf h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::MatrixXf z = h * weights[l].transpose();
    z.rowwise() += biases[l].transpose();
    if (l + 1 < weights.size()) {
      h = z.cwiseMax(0.0f);
    } else if (output_activation == OutputActivation::kTanh) {
      h = z.array().tanh().matrix();
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Eigen::VectorXf Mlp::forward_one(const Eigen::VectorXf& x) const {
  return forward(x.transpose()).row(0).transpose();
}

Mlp mlp_init(const std::vector<int>& layer_sizes, OutputActivation output_activation,
             std::uint64_t seed) {
  check_layer_sizes(layer_sizes);
  Mlp net;
  net.layer_sizes = layer_sizes;
  net.output_activation = output_activation;
  Rng rng(derive_seed(seed, 0x6e657469ULL));
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
    Eigen::MatrixXf w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) {
        w(r, c) = rng.uniform_float(-bound, bound);
      }
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXf::Zero(fan_out));
  }
  return net;
}

void Gradients::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

bool Gradients::all_finite() const {
  for (const auto& w : weights) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : biases) {
    if (!b.allFinite()) return false;
  }
  return true;
}

Gradients make_gradients(const Mlp& net) {
  Gradients g;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    g.weights.push_back(Eigen::MatrixXf::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXf::Zero(net.biases[l].size()));
  }
  return g;
}

AdamState adam_init(const Mlp& net, float learning_rate) {
  AdamState state;
  state.learning_rate = learning_rate;
  state.first_moment = make_gradients(net);
  state.second_moment = make_gradients(net);
  return state;
}

void adam_step(Mlp& net, const Gradients& grads, AdamState& state) {
  if (grads.weights.size() != net.weights.size()) {
    throw ShapeError("adam_step: gradient layer count mismatch");
  }
  if (!grads.all_finite()) {
    throw NumericalError("adam_step: non-finite gradient");
  }
  state.step += 1;
  const float bc1 = 1.0f - std::pow(state.beta1, static_cast<float>(state.step));
  const float bc2 = 1.0f - std::pow(state.beta2, static_cast<float>(state.step));
  auto update = [&](Eigen::Ref<Eigen::MatrixXf> param, const Eigen::MatrixXf& grad,
                    Eigen::Ref<Eigen::MatrixXf> m, Eigen::Ref<Eigen::MatrixXf> v) {
    m = state.beta1 * m + (1.0f - state.beta1) * grad;
    v = state.beta2 * v + (1.0f - state.beta2) * grad.cwiseProduct(grad);
    param.array() -=
        state.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
  };
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    if (grads.weights[l].rows() != net.weights[l].rows() ||
        grads.weights[l].cols() != net.weights[l].cols()) {
      throw ShapeError("adam_step: gradient shape mismatch at layer " + std::to_string(l));
    }
    update(net.weights[l], grads.weights[l], state.first_moment.weights[l],
           state.second_moment.weights[l]);
    update(net.biases[l], grads.biases[l], state.first_moment.biases[l],
           state.second_moment.biases[l]);
  }
}

void polyak_update(Mlp& target, const Mlp& online, float rate) {
  if (!target.same_architecture(online)) {
    throw ShapeError("polyak_update: architecture mismatch");
  }
  if (rate == 1.0f) {
    target.weights = online.weights;
    target.biases = online.biases;
    return;
  }
  // The increment form keeps target == online an exact fixed point.
  for (std::size_t l = 0; l < target.weights.size(); ++l) {
    target.weights[l] += rate * (online.weights[l] - target.weights[l]);
    target.biases[l] += rate * (online.biases[l] - target.biases[l]);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint I/O. Layout: "STCNET1", i32 layer count, i32 layer sizes, then
// per layer row-major f32 weights followed by f32 biases. Little-endian.
// ---------------------------------------------------------------------------

namespace {

void write_i32(std::ofstream& out, std::int32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((static_cast<std::uint32_t>(v) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 4);
}

void write_f32(std::ofstream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 4);
}

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open " + path);
  }
  std::size_t offset() const { return offset_; }
  void read_bytes(void* dst, std::size_t n, const char* what) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(path_ + ": truncated while reading " + std::string(what) + ", missing " +
                            std::to_string(n - static_cast<std::size_t>(in_.gcount())) + " bytes",
                        offset_);
    }
    offset_ += n;
  }
  std::int32_t read_i32(const char* what) {
    unsigned char buf[4];
    read_bytes(buf, 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return static_cast<std::int32_t>(v);
  }
  float read_f32(const char* what) {
    unsigned char buf[4];
    read_bytes(buf, 4, what);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

 private:
  std::ifstream in_;
  std::string path_;
  std::size_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const Mlp& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 7);
  write_i32(out, static_cast<std::int32_t>(net.layer_sizes.size()));
  for (int s : net.layer_sizes) write_i32(out, s);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto& w = net.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) write_f32(out, w(r, c));
    }
    for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) write_f32(out, net.biases[l](i));
  }
  if (!out) throw IoError("write failed for " + path);
}

Mlp load_checkpoint(const std::string& path, OutputActivation output_activation) {
  Reader reader(path);
  char magic[7];
  reader.read_bytes(magic, 7, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 7) != 0) {
    throw FormatError(path + ": bad magic, not a network checkpoint", 0);
  }
  const std::int32_t n_layers = reader.read_i32("layer count");
  if (n_layers < 2 || n_layers > 64) {
    throw FormatError(path + ": implausible layer count " + std::to_string(n_layers),
                      reader.offset() - 4);
  }
  std::vector<int> sizes(static_cast<std::size_t>(n_layers));
  for (auto& s : sizes) {
    s = reader.read_i32("layer size");
    if (s <= 0 || s > (1 << 20)) {
      throw FormatError(path + ": implausible layer size " + std::to_string(s),
                        reader.offset() - 4);
    }
  }
  Mlp net;
  net.layer_sizes = sizes;
  net.output_activation = output_activation;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Eigen::MatrixXf w(sizes[l + 1], sizes[l]);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = reader.read_f32("weight");
    }
    Eigen::VectorXf b(sizes[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = reader.read_f32("bias");
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  if (!net.all_finite()) {
    throw FormatError(path + ": non-finite parameter", reader.offset());
  }
  return net;
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

Graph::NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Eigen::MatrixXf& Graph::value(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }

float Graph::value_scalar(NodeId id) const {
  const auto& v = value(id);
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("value_scalar: node is not 1x1");
  }
  return v(0, 0);
}

Graph::NodeId Graph::constant(Eigen::MatrixXf value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Graph::NodeId Graph::constant(const Eigen::VectorXf& value) {
  return constant(Eigen::MatrixXf(value));
}

int Graph::slot_for(const Mlp& net) {
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    if (nets_[i] == &net) return static_cast<int>(i);
  }
  nets_.push_back(&net);
  net_grads_.push_back(make_gradients(net));
  return static_cast<int>(nets_.size() - 1);
}

Graph::NodeId Graph::linear(NodeId input, int net_slot, int layer) {
  const Mlp& net = *nets_[static_cast<std::size_t>(net_slot)];
  const auto& x = value(input);
  if (x.cols() != net.weights[static_cast<std::size_t>(layer)].cols()) {
    throw ShapeError("apply: input has " + std::to_string(x.cols()) + " columns, layer expects " +
                     std::to_string(net.weights[static_cast<std::size_t>(layer)].cols()));
  }
  Node n;
  n.op = Op::kLinear;
  n.a = input;
  n.net_slot = net_slot;
  n.layer = layer;
  n.value.noalias() = x * net.weights[static_cast<std::size_t>(layer)].transpose();
  n.value.rowwise() += net.biases[static_cast<std::size_t>(layer)].transpose();
  return push(std::move(n));
}

Graph::NodeId Graph::apply(const Mlp& net, NodeId input) {
  if (value(input).rows() < 1) throw UsageError("apply: empty batch");
  const int slot = slot_for(net);
  NodeId h = input;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    h = linear(h, slot, static_cast<int>(l));
    if (l + 1 < net.layer_count()) {
      h = relu(h);
    } else if (net.output_activation == OutputActivation::kTanh) {
      h = tanh(h);
    }
  }
  return h;
}

Graph::NodeId Graph::relu(NodeId x) {
  Node n;
  n.op = Op::kRelu;
  n.a = x;
  n.value = value(x).cwiseMax(0.0f);
  return push(std::move(n));
}

Graph::NodeId Graph::tanh(NodeId x) {
  Node n;
  n.op = Op::kTanh;
  n.a = x;
  n.value = value(x).array().tanh().matrix();
  return push(std::move(n));
}

namespace {
void check_same_shape(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}
}  // namespace

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  check_same_shape(value(a), value(b), "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = value(a) + value(b);
  return push(std::move(n));
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
  check_same_shape(value(a), value(b), "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.value = value(a) - value(b);
  return push(std::move(n));
}

Graph::NodeId Graph::hadamard(NodeId a, NodeId b) {
  check_same_shape(value(a), value(b), "hadamard");
  Node n;
  n.op = Op::kHadamard;
  n.a = a;
  n.b = b;
  n.value = value(a).cwiseProduct(value(b));
  return push(std::move(n));
}

Graph::NodeId Graph::concat_cols(NodeId a, NodeId b) {
  if (value(a).rows() != value(b).rows()) {
    throw ShapeError("concat_cols: row mismatch");
  }
  Node n;
  n.op = Op::kConcat;
  n.a = a;
  n.b = b;
  n.c0 = static_cast<float>(value(a).cols());
  n.value.resize(value(a).rows(), value(a).cols() + value(b).cols());
  n.value << value(a), value(b);
  return push(std::move(n));
}

Graph::NodeId Graph::scale(NodeId x, float c) {
  Node n;
  n.op = Op::kScale;
  n.a = x;
  n.c0 = c;
  n.value = c * value(x);
  return push(std::move(n));
}

Graph::NodeId Graph::square(NodeId x) {
  Node n;
  n.op = Op::kSquare;
  n.a = x;
  n.value = value(x).cwiseProduct(value(x));
  return push(std::move(n));
}

Graph::NodeId Graph::row_sum(NodeId x) {
  Node n;
  n.op = Op::kRowSum;
  n.a = x;
  n.value = value(x).rowwise().sum();
  return push(std::move(n));
}

Graph::NodeId Graph::sum_all(NodeId x) {
  Node n;
  n.op = Op::kSumAll;
  n.a = x;
  n.value.resize(1, 1);
  n.value(0, 0) = value(x).sum();
  return push(std::move(n));
}

Graph::NodeId Graph::mean_all(NodeId x) {
  Node n;
  n.op = Op::kMeanAll;
  n.a = x;
  n.c0 = 1.0f / static_cast<float>(value(x).size());
  n.value.resize(1, 1);
  n.value(0, 0) = value(x).sum() * n.c0;
  return push(std::move(n));
}

Graph::NodeId Graph::exp_clip(NodeId x, float lo, float hi) {
  if (lo > hi) throw UsageError("exp_clip: lo > hi");
  Node n;
  n.op = Op::kExpClip;
  n.a = x;
  n.c0 = lo;
  n.c1 = hi;
  n.value = value(x).array().max(lo).min(hi).exp().matrix();
  return push(std::move(n));
}

Graph::NodeId Graph::min_scalar(NodeId a, NodeId b) {
  if (value(a).size() != 1 || value(b).size() != 1) {
    throw ShapeError("min_scalar: operands must be 1x1");
  }
  Node n;
  n.op = Op::kMinScalar;
  n.a = a;
  n.b = b;
  n.value.resize(1, 1);
  n.value(0, 0) = std::min(value(a)(0, 0), value(b)(0, 0));
  return push(std::move(n));
}

Eigen::MatrixXf& Graph::ensure_grad(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_live) {
    n.grad = Eigen::MatrixXf::Zero(n.value.rows(), n.value.cols());
    n.grad_live = true;
  }
  return n.grad;
}

float Graph::backward(NodeId loss) {
  Node& top = nodes_.at(static_cast<std::size_t>(loss));
  if (top.value.size() != 1) {
    throw ShapeError("backward: loss node must be 1x1");
  }
  ensure_grad(loss)(0, 0) = 1.0f;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_live) continue;
    const Eigen::MatrixXf& g = n.grad;
    switch (n.op) {
      case Op::kConstant:
        break;
      case Op::kLinear: {
        const Mlp& net = *nets_[static_cast<std::size_t>(n.net_slot)];
        Gradients& acc = net_grads_[static_cast<std::size_t>(n.net_slot)];
        const auto& x = nodes_[static_cast<std::size_t>(n.a)].value;
        const auto& w = net.weights[static_cast<std::size_t>(n.layer)];
        acc.weights[static_cast<std::size_t>(n.layer)].noalias() += g.transpose() * x;
        acc.biases[static_cast<std::size_t>(n.layer)] += g.colwise().sum().transpose();
        ensure_grad(n.a).noalias() += g * w;
        break;
      }
      case Op::kRelu: {
        const auto& x = nodes_[static_cast<std::size_t>(n.a)].value;
        ensure_grad(n.a).array() += g.array() * (x.array() > 0.0f).cast<float>();
        break;
      }
      case Op::kTanh:
        ensure_grad(n.a).array() += g.array() * (1.0f - n.value.array().square());
        break;
      case Op::kAdd:
        ensure_grad(n.a) += g;
        ensure_grad(n.b) += g;
        break;
      case Op::kSub:
        ensure_grad(n.a) += g;
        ensure_grad(n.b) -= g;
        break;
      case Op::kHadamard:
        ensure_grad(n.a).array() += g.array() * nodes_[static_cast<std::size_t>(n.b)].value.array();
        ensure_grad(n.b).array() += g.array() * nodes_[static_cast<std::size_t>(n.a)].value.array();
        break;
      case Op::kConcat: {
        const Eigen::Index split = static_cast<Eigen::Index>(n.c0);
        ensure_grad(n.a) += g.leftCols(split);
        ensure_grad(n.b) += g.rightCols(g.cols() - split);
        break;
      }
      case Op::kScale:
        ensure_grad(n.a) += n.c0 * g;
        break;
      case Op::kSquare:
        ensure_grad(n.a).array() +=
            2.0f * g.array() * nodes_[static_cast<std::size_t>(n.a)].value.array();
        break;
      case Op::kRowSum:
        ensure_grad(n.a).colwise() += g.col(0);
        break;
      case Op::kSumAll:
        ensure_grad(n.a).array() += g(0, 0);
        break;
      case Op::kMeanAll:
        ensure_grad(n.a).array() += g(0, 0) * n.c0;
        break;
      case Op::kExpClip: {
        const auto& x = nodes_[static_cast<std::size_t>(n.a)].value;
        ensure_grad(n.a).array() +=
            g.array() * n.value.array() *
            ((x.array() > n.c0) && (x.array() < n.c1)).cast<float>();
        break;
      }
      case Op::kMinScalar: {
        const float av = nodes_[static_cast<std::size_t>(n.a)].value(0, 0);
        const float bv = nodes_[static_cast<std::size_t>(n.b)].value(0, 0);
        // Subgradient: ties route to the first operand.
        if (av <= bv) {
          ensure_grad(n.a) += g;
        } else {
          ensure_grad(n.b) += g;
        }
        break;
      }
    }
  }
  return top.value(0, 0);
}

Eigen::MatrixXf Graph::grad(NodeId id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad_live) return n.grad;
  return Eigen::MatrixXf::Zero(n.value.rows(), n.value.cols());
}

Gradients Graph::take_gradients(const Mlp& net) {
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    if (nets_[i] == &net) return std::move(net_grads_[i]);
  }
  return make_gradients(net);
}

}  // namespace stc::nn
