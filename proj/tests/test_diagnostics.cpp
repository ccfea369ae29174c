#include <doctest.h>

#include <cmath>
#include <limits>

#include "stc/diagnostics.hpp"
#include "stc/errors.hpp"
#include "stc/rng.hpp"

using namespace stc;
using diag::KdTree;

namespace {

std::pair<std::size_t, float> brute_force_nearest(const Eigen::MatrixXf& points,
                                                  const Eigen::VectorXf& query) {
  std::size_t best = points.rows();
  double best_d2 = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double d2 = (points.row(i).transpose() - query).cast<double>().squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<std::size_t>(i);
    }
  }
  return {best, static_cast<float>(std::sqrt(best_d2))};
}

data::TransitionDataset tiny_dataset(const std::vector<float>& actions, float state_offset,
                                     data::DomainTag tag) {
  data::TransitionDataset ds(1, 1, tag);
  Eigen::VectorXf s(1), a(1), s2(1);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    s << state_offset + static_cast<float>(i);
    s2 << state_offset + static_cast<float>(i) + 0.5f;
    a << actions[i];
    ds.append(s, a, 0.0f, s2, false);
  }
  return ds;
}

}  // namespace

TEST_SUITE_BEGIN("diagnostics");

TEST_CASE("nearest neighbor by inspection") {
  Eigen::MatrixXf pts(3, 2);
  pts << 0, 0, 1, 1, 2, 2;
  const KdTree tree(pts);
  Eigen::VectorXf q(2);
  q << 0.9f, 0.9f;
  const auto [idx, dist] = tree.nearest(q);
  CHECK(idx == 1);
  CHECK(dist == doctest::Approx(std::sqrt(0.02f)));
}

TEST_CASE("a stored point is its own nearest neighbor at distance zero") {
  Rng rng(3);
  Eigen::MatrixXf pts(64, 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) pts(i, j) = rng.uniform_float(-5.0f, 5.0f);
  }
  const KdTree tree(pts);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const auto [idx, dist] = tree.nearest(pts.row(i).transpose());
    CHECK(idx == static_cast<std::size_t>(i));
    CHECK(dist == 0.0f);
  }
}

TEST_CASE("ties break toward the lowest index") {
  Eigen::MatrixXf pts(4, 1);
  pts << 1.0f, -1.0f, 1.0f, -1.0f;  // two duplicate pairs
  const KdTree tree(pts);
  Eigen::VectorXf q(1);
  q << 0.0f;  // equidistant from everything
  const auto [idx, dist] = tree.nearest(q);
  CHECK(idx == 0);
  CHECK(dist == doctest::Approx(1.0f));
}

TEST_CASE("kd-tree matches brute force on random instances") {
  Rng rng(17);
  for (int round = 0; round < 3; ++round) {
    const int dim = 2 + round * 3;  // 2, 5, 8
    Eigen::MatrixXf pts(1000, dim);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      for (Eigen::Index j = 0; j < dim; ++j) pts(i, j) = rng.uniform_float(-3.0f, 3.0f);
    }
    const KdTree tree(pts);
    for (int k = 0; k < 100; ++k) {
      Eigen::VectorXf q(dim);
      for (Eigen::Index j = 0; j < dim; ++j) q(j) = rng.uniform_float(-3.5f, 3.5f);
      const auto got = tree.nearest(q);
      const auto want = brute_force_nearest(pts, q);
      CHECK(got.first == want.first);
      CHECK(got.second == doctest::Approx(want.second).epsilon(1e-6));
    }
  }
}

TEST_CASE("empty point set is a usage error") {
  CHECK_THROWS_AS(KdTree(Eigen::MatrixXf(0, 2)), UsageError);
}

TEST_CASE("pair_actions with corrected == source copies the column") {
  const auto src = tiny_dataset({0.1f, -0.4f, 0.9f}, 0.0f, data::DomainTag::kSource);
  const auto corrected = tiny_dataset({0.1f, -0.4f, 0.9f}, 0.0f, data::DomainTag::kCorrected);
  const auto tar = tiny_dataset({0.5f, 0.6f}, 0.2f, data::DomainTag::kTarget);
  const auto triples = diag::pair_actions(src, corrected, tar);
  CHECK(triples.source.rows() == 2);
  CHECK((triples.source - triples.corrected).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("pair_actions on single-record datasets") {
  const auto src = tiny_dataset({0.3f}, 0.0f, data::DomainTag::kSource);
  const auto corrected = tiny_dataset({-0.2f}, 0.0f, data::DomainTag::kCorrected);
  const auto tar = tiny_dataset({0.8f}, 5.0f, data::DomainTag::kTarget);
  const auto triples = diag::pair_actions(src, corrected, tar);
  REQUIRE(triples.source.rows() == 1);
  CHECK(triples.source_index[0] == 0);
  CHECK(triples.source(0, 0) == doctest::Approx(0.3f));
  CHECK(triples.corrected(0, 0) == doctest::Approx(-0.2f));
  CHECK(triples.target(0, 0) == doctest::Approx(0.8f));
}

TEST_CASE("pair_actions rejects misaligned datasets") {
  const auto src = tiny_dataset({0.1f, 0.2f}, 0.0f, data::DomainTag::kSource);
  const auto corrected = tiny_dataset({0.1f}, 0.0f, data::DomainTag::kCorrected);
  const auto tar = tiny_dataset({0.5f}, 0.0f, data::DomainTag::kTarget);
  CHECK_THROWS_AS(diag::pair_actions(src, corrected, tar), UsageError);
}

TEST_CASE("W1 of identical samples is zero") {
  CHECK(diag::wasserstein1({0.3, -0.2, 0.9}, {0.3, -0.2, 0.9}) == doctest::Approx(0.0));
}

TEST_CASE("W1 of opposite point masses is 2") {
  CHECK(diag::wasserstein1({-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}) == doctest::Approx(2.0));
}

TEST_CASE("W1 sorted-difference example") {
  CHECK(diag::wasserstein1({0.0, 1.0}, {0.5, 0.5}) == doctest::Approx(0.5));
}

TEST_CASE("W1 handles unequal sample sizes") {
  // {0, 1} vs {0.5}: quantile gap is |0-0.5| on the first half, |1-0.5| on
  // the second, so the distance is 0.5.
  CHECK(diag::wasserstein1({0.0, 1.0}, {0.5}) == doctest::Approx(0.5));
}

TEST_CASE("W1 symmetry and triangle inequality on random samples") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    auto draw = [&](std::size_t n) {
      std::vector<double> v(n);
      for (auto& x : v) x = rng.uniform(-1.0, 1.0);
      return v;
    };
    const auto a = draw(40), b = draw(55), c = draw(33);
    const double ab = diag::wasserstein1(a, b);
    const double ba = diag::wasserstein1(b, a);
    const double ac = diag::wasserstein1(a, c);
    const double cb = diag::wasserstein1(c, b);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab <= ac + cb + 1e-12);
  }
}

TEST_CASE("distribution report: densities normalize and W1 columns match") {
  Rng rng(31);
  const std::size_t n = 600;
  diag::ActionTriples triples;
  triples.source.resize(n, 2);
  triples.corrected.resize(n, 2);
  triples.target.resize(n, 2);
  triples.source_index.resize(n, 0);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    triples.source(i, 0) = rng.uniform_float(-1.0f, 0.2f);
    triples.source(i, 1) = rng.uniform_float(-0.5f, 0.5f);
    triples.corrected(i, 0) = rng.uniform_float(-0.2f, 1.0f);
    triples.corrected(i, 1) = rng.uniform_float(-0.5f, 0.5f);
    triples.target(i, 0) = rng.uniform_float(0.0f, 1.0f);
    triples.target(i, 1) = rng.uniform_float(-0.5f, 0.5f);
  }
  const auto reports = diag::distribution_report(triples);
  REQUIRE(reports.size() == 2);
  for (const auto& r : reports) {
    // Trapezoid integral of each KDE over the grid should be close to 1.
    auto integral = [&](const Eigen::VectorXd& f) {
      double acc = 0.0;
      for (Eigen::Index g = 0; g + 1 < r.grid.size(); ++g) {
        acc += 0.5 * (f(g) + f(g + 1)) * (r.grid(g + 1) - r.grid(g));
      }
      return acc;
    };
    CHECK(integral(r.source.kde) == doctest::Approx(1.0).epsilon(0.02));
    CHECK(integral(r.corrected.kde) == doctest::Approx(1.0).epsilon(0.02));
    CHECK(integral(r.target.kde) == doctest::Approx(1.0).epsilon(0.02));
    // Histograms are density-normalized over [-1, 1].
    CHECK(r.source.histogram.sum() * (2.0 / diag::kHistogramBins) == doctest::Approx(1.0));
  }
  // Dimension 0 was built so the corrected distribution sits closer to the
  // target than the source does.
  CHECK(reports[0].w1_corrected_target < reports[0].w1_source_target);
}

TEST_CASE("distribution report needs at least two triples") {
  diag::ActionTriples triples;
  triples.source.resize(1, 1);
  triples.corrected.resize(1, 1);
  triples.target.resize(1, 1);
  triples.source_index.resize(1, 0);
  CHECK_THROWS_AS(diag::distribution_report(triples), UsageError);
}

TEST_SUITE_END();
