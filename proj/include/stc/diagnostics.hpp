#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stc/data.hpp"
#include "stc/errors.hpp"

namespace stc::diag {

/// Exact nearest-neighbor index over a fixed point set. Median split on
/// cycling axes; ties break toward the lowest point index.
class KdTree {
 public:
  explicit KdTree(Eigen::MatrixXf points);  // rows are points

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  int dim() const { return static_cast<int>(points_.cols()); }

  /// (index, Euclidean distance) of the exact nearest stored point.
  std::pair<std::size_t, float> nearest(const Eigen::VectorXf& query) const;

 private:
  struct Node {
    int axis = -1;        // -1 marks a leaf
    float split = 0.0f;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t begin = 0;  // leaf range into order_
    std::int32_t end = 0;
  };

  std::int32_t build(std::int32_t begin, std::int32_t end, int depth);
  void search(std::int32_t node_id, const Eigen::VectorXf& query, std::size_t& best_index,
              double& best_dist2) const;

  Eigen::MatrixXf points_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

/// Per-target-record action triple: the nearest source record's original
/// action, the corrected action at the same index, and the target action.
struct ActionTriples {
  Eigen::MatrixXf source;     // |D_tar| x act_dim
  Eigen::MatrixXf corrected;  // |D_tar| x act_dim
  Eigen::MatrixXf target;     // |D_tar| x act_dim
  std::vector<std::size_t> source_index;
};

/// Nearest-neighbor pairing keyed on the concatenated (s, s') of each record.
/// `source` and `corrected` must be index-aligned.
ActionTriples pair_actions(const data::TransitionDataset& source,
                           const data::TransitionDataset& corrected,
                           const data::TransitionDataset& target);

/// Exact 1-D Wasserstein-1 distance between empirical distributions
/// (quantile-function integral; for equal sizes this is the mean
/// sorted-sample gap).
double wasserstein1(std::vector<double> a, std::vector<double> b);

struct SeriesDensity {
  Eigen::VectorXd histogram;  // 64 bins over [-1, 1], density-normalized
  Eigen::VectorXd kde;        // sampled on the shared grid
  double bandwidth = 0.0;     // Silverman's rule
};

struct DimensionReport {
  Eigen::VectorXd grid;  // 256 points, spans all three series plus tails
  SeriesDensity source;
  SeriesDensity corrected;
  SeriesDensity target;
  double w1_source_target = 0.0;
  double w1_corrected_target = 0.0;
};

constexpr int kHistogramBins = 64;
constexpr int kKdeGridPoints = 256;

/// Per-action-dimension densities and W1 distances. Needs >= 2 triples.
std::vector<DimensionReport> distribution_report(const ActionTriples& triples);

void write_triples_csv(const ActionTriples& triples, const std::string& path);
void write_densities_csv(const std::vector<DimensionReport>& reports, const std::string& path);

}  // namespace stc::diag
