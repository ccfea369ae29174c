#include "stc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace stc::data {

namespace {
constexpr char kMagic[] = "STCDS01";  // 7 bytes on disk
}

std::string to_string(DomainTag tag) {
  switch (tag) {
    case DomainTag::kSource: return "source";
    case DomainTag::kTarget: return "target";
    case DomainTag::kCorrected: return "corrected";
  }
  return "unknown";
}

bool bitwise_equal(const Transition& a, const Transition& b) {
  auto eq = [](const Eigen::VectorXf& x, const Eigen::VectorXf& y) {
    return x.size() == y.size() &&
           std::memcmp(x.data(), y.data(), sizeof(float) * static_cast<std::size_t>(x.size())) == 0;
  };
  return eq(a.state, b.state) && eq(a.action, b.action) &&
         std::memcmp(&a.reward, &b.reward, sizeof(float)) == 0 &&
         eq(a.next_state, b.next_state) && a.done == b.done;
}

TransitionDataset::TransitionDataset(int obs_dim, int act_dim, DomainTag tag)
    : obs_dim_(obs_dim), act_dim_(act_dim), tag_(tag) {
  if (obs_dim <= 0 || act_dim <= 0) {
    throw UsageError("dataset dimensions must be positive");
  }
}

void TransitionDataset::reserve(std::size_t n) {
  states_.reserve(n * static_cast<std::size_t>(obs_dim_));
  actions_.reserve(n * static_cast<std::size_t>(act_dim_));
  next_states_.reserve(n * static_cast<std::size_t>(obs_dim_));
  rewards_.reserve(n);
  dones_.reserve(n);
}

void TransitionDataset::append(const Transition& t) {
  append(t.state, t.action, t.reward, t.next_state, t.done);
}

void TransitionDataset::append(const Eigen::VectorXf& state, const Eigen::VectorXf& action,
                               float reward, const Eigen::VectorXf& next_state, bool done) {
  if (state.size() != obs_dim_ || next_state.size() != obs_dim_) {
    throw ShapeError("append: state dimension mismatch");
  }
  if (action.size() != act_dim_) {
    throw ShapeError("append: action dimension mismatch");
  }
  states_.insert(states_.end(), state.data(), state.data() + obs_dim_);
  for (int i = 0; i < act_dim_; ++i) {
    actions_.push_back(std::clamp(action(i), -1.0f, 1.0f));
  }
  rewards_.push_back(reward);
  next_states_.insert(next_states_.end(), next_state.data(), next_state.data() + obs_dim_);
  dones_.push_back(done ? 1.0f : 0.0f);
  ++count_;
}

Transition TransitionDataset::record(std::size_t i) const {
  if (i >= count_) throw UsageError("record index out of range");
  Transition t;
  t.state = states().row(static_cast<Eigen::Index>(i)).transpose();
  t.action = actions().row(static_cast<Eigen::Index>(i)).transpose();
  t.reward = rewards_[i];
  t.next_state = next_states().row(static_cast<Eigen::Index>(i)).transpose();
  t.done = dones_[i] != 0.0f;
  return t;
}

// ---------------------------------------------------------------------------
// Serialization. Layout: "STCDS01", u32 obs_dim, u32 act_dim, u64 count,
// then per record f32 [state | action | reward | next_state | done]. All
// little-endian.
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

void put_f32(std::ofstream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open " + path);
  }
  std::size_t offset() const { return offset_; }
  const std::string& path() const { return path_; }
  void read(void* dst, std::size_t n, const char* what) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(path_ + ": truncated while reading " + std::string(what) + ", missing " +
                            std::to_string(n - static_cast<std::size_t>(in_.gcount())) + " bytes",
                        offset_);
    }
    offset_ += n;
  }
  std::uint32_t read_u32(const char* what) {
    unsigned char buf[4];
    read(buf, 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
  }
  std::uint64_t read_u64(const char* what) {
    unsigned char buf[8];
    read(buf, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  float read_f32(const char* what) {
    std::uint32_t bits = read_u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  bool at_eof() {
    return in_.peek() == std::ifstream::traits_type::eof();
  }

 private:
  std::ifstream in_;
  std::string path_;
  std::size_t offset_ = 0;
};

}  // namespace

void save_dataset(const TransitionDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, 7);
  put_u32(out, static_cast<std::uint32_t>(ds.obs_dim()));
  put_u32(out, static_cast<std::uint32_t>(ds.act_dim()));
  put_u64(out, ds.size());
  const auto states = ds.states();
  const auto actions = ds.actions();
  const auto next_states = ds.next_states();
  const auto rewards = ds.rewards();
  const auto dones = ds.dones();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (int d = 0; d < ds.obs_dim(); ++d) put_f32(out, states(row, d));
    for (int d = 0; d < ds.act_dim(); ++d) put_f32(out, actions(row, d));
    put_f32(out, rewards(row));
    for (int d = 0; d < ds.obs_dim(); ++d) put_f32(out, next_states(row, d));
    put_f32(out, dones(row));
  }
  if (!out) throw IoError("write failed for " + path);
}

TransitionDataset load_dataset(const std::string& path, DomainTag tag) {
  Reader reader(path);
  char magic[7];
  reader.read(magic, 7, "magic");
  if (std::memcmp(magic, kMagic, 7) != 0) {
    throw FormatError(path + ": bad magic, not a transition dataset", 0);
  }
  const std::uint32_t obs_dim = reader.read_u32("obs_dim");
  const std::uint32_t act_dim = reader.read_u32("act_dim");
  if (obs_dim == 0 || obs_dim > (1u << 20) || act_dim == 0 || act_dim > (1u << 20)) {
    throw FormatError(path + ": implausible dimensions", 7);
  }
  const std::uint64_t count = reader.read_u64("record count");
  TransitionDataset ds(static_cast<int>(obs_dim), static_cast<int>(act_dim), tag);
  ds.reserve(count);
  Eigen::VectorXf s(obs_dim), a(act_dim), s2(obs_dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    for (auto& v : s) v = reader.read_f32("state");
    for (auto& v : a) v = reader.read_f32("action");
    const float r = reader.read_f32("reward");
    for (auto& v : s2) v = reader.read_f32("next state");
    const float done = reader.read_f32("done flag");
    if (!s.allFinite() || !a.allFinite() || !std::isfinite(r) || !s2.allFinite()) {
      throw FormatError(path + ": non-finite value in record " + std::to_string(i),
                        reader.offset());
    }
    if (a.cwiseAbs().maxCoeff() > 1.0f) {
      throw FormatError(path + ": action outside [-1, 1] in record " + std::to_string(i),
                        reader.offset());
    }
    if (done != 0.0f && done != 1.0f) {
      throw FormatError(path + ": done flag must be 0.0 or 1.0 in record " + std::to_string(i),
                        reader.offset() - 4);
    }
    ds.append(s, a, r, s2, done == 1.0f);
  }
  if (!reader.at_eof()) {
    throw FormatError(path + ": trailing bytes after " + std::to_string(count) + " records",
                      reader.offset());
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

std::vector<std::size_t> sample_indices(const TransitionDataset& ds, std::size_t n, Rng& rng) {
  if (ds.empty()) throw UsageError("sample from empty dataset");
  if (n < 1) throw UsageError("sample size must be >= 1");
  std::vector<std::size_t> out(n);
  for (auto& idx : out) idx = rng.index(ds.size());
  return out;
}

std::vector<Transition> sample_batch(const TransitionDataset& ds, std::size_t n, Rng& rng) {
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t idx : sample_indices(ds, n, rng)) out.push_back(ds.record(idx));
  return out;
}

std::pair<std::vector<Transition>, std::vector<Transition>> symmetric_batch(
    const TransitionDataset& source, const TransitionDataset& target, std::size_t total_n,
    Rng& rng) {
  if (total_n % 2 != 0) {
    throw UsageError("symmetric_batch: total size must be even, got " + std::to_string(total_n));
  }
  auto src_half = sample_batch(source, total_n / 2, rng);
  auto tar_half = sample_batch(target, total_n / 2, rng);
  return {std::move(src_half), std::move(tar_half)};
}

NormStats compute_stats(const TransitionDataset& ds) {
  if (ds.empty()) throw UsageError("compute_stats: empty dataset");
  const auto states = ds.states();
  const auto n = static_cast<double>(ds.size());
  NormStats stats;
  stats.mean.resize(ds.obs_dim());
  stats.std.resize(ds.obs_dim());
  for (int d = 0; d < ds.obs_dim(); ++d) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < states.rows(); ++i) sum += states(i, d);
    const double mean = sum / n;
    double var = 0.0;
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
      const double delta = states(i, d) - mean;
      var += delta * delta;
    }
    var /= n;
    stats.mean(d) = static_cast<float>(mean);
    stats.std(d) = std::max(static_cast<float>(std::sqrt(var)), 1e-6f);
  }
  return stats;
}

Eigen::MatrixXf NormStats::standardize(const Eigen::MatrixXf& states) const {
  if (states.cols() != mean.size()) throw ShapeError("standardize: dimension mismatch");
  Eigen::MatrixXf out = states;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() /= std.transpose().array();
  return out;
}

Eigen::VectorXf NormStats::standardize_one(const Eigen::VectorXf& state) const {
  if (state.size() != mean.size()) throw ShapeError("standardize: dimension mismatch");
  return (state - mean).cwiseQuotient(std);
}

GatheredBatch gather(const TransitionDataset& ds, const std::vector<std::size_t>& indices) {
  GatheredBatch b;
  const auto n = static_cast<Eigen::Index>(indices.size());
  b.states.resize(n, ds.obs_dim());
  b.actions.resize(n, ds.act_dim());
  b.rewards.resize(n);
  b.next_states.resize(n, ds.obs_dim());
  b.dones.resize(n);
  const auto states = ds.states();
  const auto actions = ds.actions();
  const auto next_states = ds.next_states();
  const auto rewards = ds.rewards();
  const auto dones = ds.dones();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(i)]);
    b.states.row(i) = states.row(row);
    b.actions.row(i) = actions.row(row);
    b.rewards(i) = rewards(row);
    b.next_states.row(i) = next_states.row(row);
    b.dones(i) = dones(row);
  }
  return b;
}

GatheredBatch concat(const GatheredBatch& a, const GatheredBatch& b) {
  GatheredBatch out;
  out.states.resize(a.states.rows() + b.states.rows(), a.states.cols());
  out.states << a.states, b.states;
  out.actions.resize(a.actions.rows() + b.actions.rows(), a.actions.cols());
  out.actions << a.actions, b.actions;
  out.rewards.resize(a.rewards.size() + b.rewards.size());
  out.rewards << a.rewards, b.rewards;
  out.next_states.resize(a.next_states.rows() + b.next_states.rows(), a.next_states.cols());
  out.next_states << a.next_states, b.next_states;
  out.dones.resize(a.dones.size() + b.dones.size());
  out.dones << a.dones, b.dones;
  return out;
}

}  // namespace stc::data
