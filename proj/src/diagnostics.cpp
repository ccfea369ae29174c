#include "stc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace stc::diag {

// ---------------------------------------------------------------------------
// KdTree
// ---------------------------------------------------------------------------

KdTree::KdTree(Eigen::MatrixXf points) : points_(std::move(points)) {
  if (points_.rows() == 0) throw UsageError("KdTree: empty point set");
  order_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(static_cast<std::size_t>(points_.rows()) / 4 + 8);
  root_ = build(0, static_cast<std::int32_t>(points_.rows()), 0);
}

std::int32_t KdTree::build(std::int32_t begin, std::int32_t end, int depth) {
  constexpr std::int32_t kLeafSize = 8;
  Node node;
  if (end - begin <= kLeafSize) {
    node.begin = begin;
    node.end = end;
    nodes_.push_back(node);
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }
  const int axis = depth % dim();
  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::int32_t a, std::int32_t b) {
                     const float va = points_(a, axis);
                     const float vb = points_(b, axis);
                     return va < vb || (va == vb && a < b);
                   });
  node.axis = axis;
  node.split = points_(order_[static_cast<std::size_t>(mid)], axis);
  nodes_.push_back(node);
  const auto id = static_cast<std::int32_t>(nodes_.size() - 1);
  const std::int32_t left = build(begin, mid, depth + 1);
  const std::int32_t right = build(mid, end, depth + 1);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

void KdTree::search(std::int32_t node_id, const Eigen::VectorXf& query, std::size_t& best_index,
                    double& best_dist2) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (std::int32_t k = node.begin; k < node.end; ++k) {
      const std::int32_t idx = order_[static_cast<std::size_t>(k)];
      const double d2 =
          (points_.row(idx).transpose() - query).cast<double>().squaredNorm();
      if (d2 < best_dist2 ||
          (d2 == best_dist2 && static_cast<std::size_t>(idx) < best_index)) {
        best_dist2 = d2;
        best_index = static_cast<std::size_t>(idx);
      }
    }
    return;
  }
  const double gap = static_cast<double>(query(node.axis)) - static_cast<double>(node.split);
  const std::int32_t near = gap < 0.0 ? node.left : node.right;
  const std::int32_t far = gap < 0.0 ? node.right : node.left;
  search(near, query, best_index, best_dist2);
  if (gap * gap <= best_dist2) {
    search(far, query, best_index, best_dist2);
  }
}

std::pair<std::size_t, float> KdTree::nearest(const Eigen::VectorXf& query) const {
  if (query.size() != points_.cols()) throw ShapeError("KdTree: query dimension mismatch");
  std::size_t best_index = size();
  double best_dist2 = std::numeric_limits<double>::infinity();
  search(root_, query, best_index, best_dist2);
  return {best_index, static_cast<float>(std::sqrt(best_dist2))};
}

// ---------------------------------------------------------------------------
// Pairing
// ---------------------------------------------------------------------------

ActionTriples pair_actions(const data::TransitionDataset& source,
                           const data::TransitionDataset& corrected,
                           const data::TransitionDataset& target) {
  if (source.size() != corrected.size()) {
    throw UsageError("pair_actions: source and corrected datasets are not index-aligned");
  }
  if (source.obs_dim() != corrected.obs_dim() || source.act_dim() != corrected.act_dim() ||
      source.obs_dim() != target.obs_dim() || source.act_dim() != target.act_dim()) {
    throw UsageError("pair_actions: dataset dimensions disagree");
  }
  if (source.empty() || target.empty()) {
    throw UsageError("pair_actions: empty dataset");
  }
  // Keys are the concatenated (s, s') rows.
  Eigen::MatrixXf keys(source.size(), 2 * source.obs_dim());
  keys << source.states(), source.next_states();
  const KdTree tree(std::move(keys));

  ActionTriples out;
  const auto n = static_cast<Eigen::Index>(target.size());
  out.source.resize(n, source.act_dim());
  out.corrected.resize(n, source.act_dim());
  out.target.resize(n, source.act_dim());
  out.source_index.resize(target.size());
  Eigen::VectorXf query(2 * source.obs_dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    query << target.states().row(i).transpose(), target.next_states().row(i).transpose();
    const auto [index, dist] = tree.nearest(query);
    out.source_index[static_cast<std::size_t>(i)] = index;
    out.source.row(i) = source.actions().row(static_cast<Eigen::Index>(index));
    out.corrected.row(i) = corrected.actions().row(static_cast<Eigen::Index>(index));
    out.target.row(i) = target.actions().row(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw UsageError("wasserstein1: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // Integrate |F_a^{-1}(q) - F_b^{-1}(q)| over q in (0, 1) by walking the
  // merged quantile breakpoints.
  const std::size_t na = a.size(), nb = b.size();
  std::size_t ia = 0, ib = 0;
  double q = 0.0, total = 0.0;
  while (ia < na && ib < nb) {
    const double qa = static_cast<double>(ia + 1) / na;
    const double qb = static_cast<double>(ib + 1) / nb;
    const double next = std::min(qa, qb);
    total += (next - q) * std::abs(a[ia] - b[ib]);
    q = next;
    if (qa <= next) ++ia;
    if (qb <= next) ++ib;
  }
  return total;
}

namespace {

double silverman_bandwidth(const std::vector<double>& sorted_samples) {
  const std::size_t n = sorted_samples.size();
  const double mean =
      std::accumulate(sorted_samples.begin(), sorted_samples.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : sorted_samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted_samples[lo] * (1.0 - frac) + sorted_samples[hi] * frac;
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (spread <= 0.0) spread = sd;
  const double bw = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  return std::max(bw, 1e-3);
}

SeriesDensity series_density(const std::vector<double>& sorted_samples,
                             const Eigen::VectorXd& grid) {
  SeriesDensity out;
  out.bandwidth = silverman_bandwidth(sorted_samples);

  out.histogram = Eigen::VectorXd::Zero(kHistogramBins);
  const double bin_width = 2.0 / kHistogramBins;
  for (double v : sorted_samples) {
    int bin = static_cast<int>((v + 1.0) / bin_width);
    bin = std::clamp(bin, 0, kHistogramBins - 1);
    out.histogram(bin) += 1.0;
  }
  out.histogram /= static_cast<double>(sorted_samples.size()) * bin_width;

  out.kde.resize(grid.size());
  const double h = out.bandwidth;
  const double norm = 1.0 / (static_cast<double>(sorted_samples.size()) * h *
                             std::sqrt(2.0 * 3.14159265358979323846));
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double v : sorted_samples) {
      const double z = (grid(g) - v) / h;
      acc += std::exp(-0.5 * z * z);
    }
    out.kde(g) = acc * norm;
  }
  return out;
}

std::vector<double> column_of(const Eigen::MatrixXf& m, int col) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, col);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<DimensionReport> distribution_report(const ActionTriples& triples) {
  if (triples.target.rows() < 2) {
    throw UsageError("distribution_report: need at least 2 triples");
  }
  const int act_dim = static_cast<int>(triples.target.cols());
  std::vector<DimensionReport> reports;
  reports.reserve(static_cast<std::size_t>(act_dim));
  for (int d = 0; d < act_dim; ++d) {
    const auto src = column_of(triples.source, d);
    const auto corr = column_of(triples.corrected, d);
    const auto tar = column_of(triples.target, d);

    const double max_bw = std::max(
        {silverman_bandwidth(src), silverman_bandwidth(corr), silverman_bandwidth(tar)});
    const double lo =
        std::min({src.front(), corr.front(), tar.front()}) - 4.0 * max_bw;
    const double hi = std::max({src.back(), corr.back(), tar.back()}) + 4.0 * max_bw;

    DimensionReport report;
    report.grid = Eigen::VectorXd::LinSpaced(kKdeGridPoints, lo, hi);
    report.source = series_density(src, report.grid);
    report.corrected = series_density(corr, report.grid);
    report.target = series_density(tar, report.grid);
    report.w1_source_target = wasserstein1(src, tar);
    report.w1_corrected_target = wasserstein1(corr, tar);
    reports.push_back(std::move(report));
  }
  return reports;
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

void write_triples_csv(const ActionTriples& triples, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const int act_dim = static_cast<int>(triples.target.cols());
  out << "target_index,source_index";
  for (int d = 0; d < act_dim; ++d) out << ",a_src_" << d;
  for (int d = 0; d < act_dim; ++d) out << ",a_corrected_" << d;
  for (int d = 0; d < act_dim; ++d) out << ",a_tar_" << d;
  out << "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < triples.target.rows(); ++i) {
    out << i << "," << triples.source_index[static_cast<std::size_t>(i)];
    auto emit = [&](float v) {
      std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(v));
      out << buf;
    };
    for (int d = 0; d < act_dim; ++d) emit(triples.source(i, d));
    for (int d = 0; d < act_dim; ++d) emit(triples.corrected(i, d));
    for (int d = 0; d < act_dim; ++d) emit(triples.target(i, d));
    out << "\n";
  }
}

void write_densities_csv(const std::vector<DimensionReport>& reports, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "dim,grid,kde_source,kde_corrected,kde_target,w1_source_target,w1_corrected_target\n";
  char buf[160];
  for (std::size_t d = 0; d < reports.size(); ++d) {
    const auto& r = reports[d];
    for (Eigen::Index g = 0; g < r.grid.size(); ++g) {
      std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", d, r.grid(g),
                    r.source.kde(g), r.corrected.kde(g), r.target.kde(g), r.w1_source_target,
                    r.w1_corrected_target);
      out << buf;
    }
  }
}

}  // namespace stc::diag
