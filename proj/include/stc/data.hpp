#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stc/errors.hpp"
#include "stc/rng.hpp"

namespace stc::data {

enum class DomainTag : std::uint8_t { kSource, kTarget, kCorrected };

std::string to_string(DomainTag tag);

struct Transition {
  Eigen::VectorXf state;
  Eigen::VectorXf action;
  float reward = 0.0f;
  Eigen::VectorXf next_state;
  bool done = false;
};

bool bitwise_equal(const Transition& a, const Transition& b);

/// Flat, append-only container of transitions with columnar storage
/// (row-major, one row per record). Immutable once fully built; readers may
/// share it across threads.
class TransitionDataset {
 public:
  TransitionDataset(int obs_dim, int act_dim, DomainTag tag);

  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  DomainTag tag() const { return tag_; }
  void set_tag(DomainTag tag) { tag_ = tag; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  void reserve(std::size_t n);

  /// Validates dimensions; action components are clipped to [-1, 1].
  void append(const Transition& t);
  void append(const Eigen::VectorXf& state, const Eigen::VectorXf& action, float reward,
              const Eigen::VectorXf& next_state, bool done);

  Transition record(std::size_t i) const;

  using ConstMap =
      Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  ConstMap states() const { return map(states_, obs_dim_); }
  ConstMap actions() const { return map(actions_, act_dim_); }
  ConstMap next_states() const { return map(next_states_, obs_dim_); }
  Eigen::Map<const Eigen::VectorXf> rewards() const {
    return {rewards_.data(), static_cast<Eigen::Index>(count_)};
  }
  /// 1.0 where the episode ended at this record, else 0.0.
  Eigen::Map<const Eigen::VectorXf> dones() const {
    return {dones_.data(), static_cast<Eigen::Index>(count_)};
  }

 private:
  ConstMap map(const std::vector<float>& buf, int dim) const {
    return ConstMap(buf.data(), static_cast<Eigen::Index>(count_), dim);
  }

  int obs_dim_;
  int act_dim_;
  DomainTag tag_;
  std::size_t count_ = 0;
  std::vector<float> states_, actions_, next_states_, rewards_, dones_;
};

void save_dataset(const TransitionDataset& ds, const std::string& path);
TransitionDataset load_dataset(const std::string& path, DomainTag tag);

/// Uniform-with-replacement record indices; integer-only draw per index.
std::vector<std::size_t> sample_indices(const TransitionDataset& ds, std::size_t n, Rng& rng);
std::vector<Transition> sample_batch(const TransitionDataset& ds, std::size_t n, Rng& rng);

/// Equal halves from the two datasets: source half drawn first, then target.
std::pair<std::vector<Transition>, std::vector<Transition>> symmetric_batch(
    const TransitionDataset& source, const TransitionDataset& target, std::size_t total_n,
    Rng& rng);

struct NormStats {
  Eigen::VectorXf mean;
  Eigen::VectorXf std;  // floored at 1e-6

  /// (x - mean) / std applied per row.
  Eigen::MatrixXf standardize(const Eigen::MatrixXf& states) const;
  Eigen::VectorXf standardize_one(const Eigen::VectorXf& state) const;
};

/// Per-dimension state mean/std over the dataset, population convention.
NormStats compute_stats(const TransitionDataset& ds);

/// Matrix-form batch for training loops. States are raw (standardize at use).
struct GatheredBatch {
  Eigen::MatrixXf states;
  Eigen::MatrixXf actions;
  Eigen::VectorXf rewards;
  Eigen::MatrixXf next_states;
  Eigen::VectorXf dones;
};

GatheredBatch gather(const TransitionDataset& ds, const std::vector<std::size_t>& indices);
GatheredBatch concat(const GatheredBatch& a, const GatheredBatch& b);

}  // namespace stc::data
