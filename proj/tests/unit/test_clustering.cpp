#include <gtest/gtest.h>

#include <random>

#include "homophily/clustering.hpp"
#include "homophily/error.hpp"
#include "support.hpp"

namespace homophily {
namespace {

PointMatrix blobs(int per_blob, const std::vector<Eigen::Vector2d>& centers, double spread, std::uint64_t seed,
                  std::vector<int>* labels = nullptr) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, spread);
  PointMatrix X(per_blob * static_cast<int>(centers.size()), 2);
  int row = 0;
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (int i = 0; i < per_blob; ++i, ++row) {
      X(row, 0) = centers[c].x() + n(rng);
      X(row, 1) = centers[c].y() + n(rng);
      if (labels) labels->push_back(static_cast<int>(c));
    }
  return X;
}

PointMatrix points(std::initializer_list<std::pair<double, double>> xy) {
  PointMatrix X(static_cast<Eigen::Index>(xy.size()), 2);
  int i = 0;
  for (const auto& [x, y] : xy) {
    X(i, 0) = x;
    X(i++, 1) = y;
  }
  return X;
}

TEST(Kmeans, TwoBlobsRecoveredExactly) {
  const auto X = points({{0, 0}, {0, 1}, {10, 10}, {10, 11}});
  const auto m = kmeans(X, 2, 3);
  EXPECT_EQ(m.assignments[0], m.assignments[1]);
  EXPECT_EQ(m.assignments[2], m.assignments[3]);
  EXPECT_NE(m.assignments[0], m.assignments[2]);
  EXPECT_NEAR(m.inertia, 1.0, 1e-12);
}

TEST(Kmeans, KEqualsNHasZeroInertia) {
  const auto X = points({{0, 0}, {1, 3}, {2, 7}, {5, 1}});
  EXPECT_NEAR(kmeans(X, 4, 1).inertia, 0.0, 1e-12);
  EXPECT_THROW(kmeans(X, 5, 1), Error);
}

TEST(Kmeans, InertiaNonIncreasingAndFixedPoint) {
  const auto X = blobs(20, {{0, 0}, {3, 0}, {0, 3}, {3, 3}}, 1.0, 5);
  const auto m = kmeans(X, 4, 8, 1);
  for (std::size_t i = 1; i < m.inertia_history.size(); ++i)
    EXPECT_LE(m.inertia_history[i], m.inertia_history[i - 1] + 1e-12);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Eigen::Index best = 0;
    (m.centroids.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&best);
    EXPECT_EQ(best, m.assignments[static_cast<std::size_t>(i)]);
  }
  for (int c = 0; c < m.k; ++c) {
    Eigen::RowVector2d sum = Eigen::RowVector2d::Zero();
    int n = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      if (m.assignments[static_cast<std::size_t>(i)] == c) {
        sum += X.row(i);
        ++n;
      }
    EXPECT_LE((m.centroids.row(c) - sum / n).norm(), 1e-9);
  }
  EXPECT_NEAR(m.inertia, within_cluster_ss(X, m.centroids, m.assignments), 1e-9);
}

TEST(Kmeans, SeedDeterministic) {
  const auto X = blobs(15, {{0, 0}, {4, 1}, {1, 5}}, 1.5, 2);
  const auto a = kmeans(X, 3, 42);
  const auto b = kmeans(X, 3, 42);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.centroids, b.centroids);
}

TEST(Silhouette, PlanarFixtures) {
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  EXPECT_NEAR(silhouette_score(points({{0, 0}, {1, 0}, {0, 1}, {4, 4}, {5, 4}, {4, 6}}), labels),
              0.7590442039611487, 1e-12);
  EXPECT_NEAR(silhouette_score(points({{0, 0}, {2, 0}, {0, 3}, {3, 3}, {6, 1}, {5, 5}}), labels),
              0.3425303087750284, 1e-12);
}

TEST(Silhouette, Conventions) {
  const auto tight = points({{0, 0}, {0, 0.01}, {100, 100}, {100, 100.01}});
  EXPECT_GT(silhouette_score(tight, std::vector<int>{0, 0, 1, 1}), 0.9);
  const auto same = points({{1, 1}, {1, 1}, {1, 1}, {1, 1}});
  EXPECT_EQ(silhouette_score(same, std::vector<int>{0, 0, 1, 1}), 0.0);
  EXPECT_THROW(silhouette_score(same, std::vector<int>{0, 0, 0, 0}), Error);
}

TEST(Gap, ClusteredDataPrefersTrueK) {
  const auto X = blobs(20, {{0, 0}, {10, 0}, {5, 9}}, 0.5, 7);
  const auto g2 = gap_statistic(X, 2, 20, 1);
  const auto g3 = gap_statistic(X, 3, 20, 1);
  EXPECT_GT(g3.gap, g2.gap);
  const auto again = gap_statistic(X, 3, 20, 1);
  EXPECT_EQ(again.gap, g3.gap);
  EXPECT_EQ(again.std_error, g3.std_error);
}

TEST(Gap, UniformDataIsFlat) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointMatrix X(200, 2);
  for (Eigen::Index i = 0; i < X.rows(); ++i) X.row(i) << u(rng), u(rng);
  const auto first = gap_statistic(X, 2, 50, 4);
  for (int k = 3; k <= 6; ++k) {
    const auto g = gap_statistic(X, k, 50, 4);
    EXPECT_LE(std::abs(g.gap - first.gap), 2 * (g.std_error + first.std_error) + 0.05) << "k=" << k;
  }
}

TEST(Gap, DegenerateBoxRejected) {
  const auto same = points({{1, 1}, {1, 1}, {1, 1}});
  EXPECT_THROW(gap_statistic(same, 2, 5, 0), Error);
}

TEST(SelectK, ThreeBlobsChooseThree) {
  const auto X = blobs(25, {{0, 0}, {12, 0}, {6, 10}}, 0.8, 13);
  const auto report = evaluate_k_range(X, 21);
  EXPECT_EQ(report.chosen_k, 3);
  EXPECT_EQ(report.silhouette.size(), 9u);
  EXPECT_EQ(report.gap.size(), 9u);
}

TEST(SelectK, NoCandidateFallsBackToMaxGap) {
  std::map<int, double> sil;
  std::map<int, GapValue> gap;
  for (int k = 2; k <= 10; ++k) {
    sil[k] = 0.5;
    gap[k] = {0.1 * k * k, 0.01};
  }
  const auto r = select_k(sil, gap);
  EXPECT_TRUE(r.candidates.empty());
  EXPECT_EQ(r.path, SelectionPath::MaxGap);
  EXPECT_EQ(r.chosen_k, 10);
}

TEST(SelectK, FlatSilhouetteUsesBestCandidate) {
  std::map<int, double> sil;
  std::map<int, GapValue> gap;
  for (int k = 2; k <= 10; ++k) {
    sil[k] = 0.3;
    gap[k] = {1.0, 0.01};
  }
  sil[6] = 0.4;
  sil[7] = 0.4;
  const auto r = select_k(sil, gap);
  EXPECT_GE(r.chosen_k, 2);
  EXPECT_LE(r.chosen_k, 10);
  EXPECT_FALSE(r.candidates.empty());
}

TEST(SelectK, DropAfterRunningMaximum) {
  std::map<int, double> sil = {{2, 0.6}, {3, 0.4}, {4, 0.45}, {5, 0.55}, {6, 0.3}, {7, 0.25}, {8, 0.1}, {9, 0.05}, {10, 0.0}};
  std::map<int, GapValue> gap;
  for (int k = 2; k <= 10; ++k) gap[k] = {0.01 * k, 0.01};
  const auto r = select_k(sil, gap);
  EXPECT_EQ(r.chosen_k, 5);
  EXPECT_EQ(r.path, SelectionPath::SilhouetteDrop);
}

TEST(Flatten, RowMajorByState) {
  Policy p = Policy::Zero(12, 6);
  p(1, 2) = 7.0;
  const auto X = flatten_policies(std::vector<Policy>{p});
  EXPECT_EQ(X.cols(), 72);
  EXPECT_EQ(X(0, 1 * 6 + 2), 7.0);
}

TEST(Composition, Oracles) {
  const Policy p = testing::random_stochastic(1);
  StateWeights it = StateWeights::Zero();
  it[0] = 1.0;
  const auto one = action_composition(std::vector<Policy>{p}, std::vector<StateWeights>{it});
  EXPECT_LE((one - p.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-15);

  const Policy uniform = Policy::Constant(12, 6, 1.0 / 6);
  const auto flat = action_composition(std::vector<Policy>{uniform}, std::vector<StateWeights>{testing::random_weights(3)});
  EXPECT_LE((flat.array() - 1.0 / 6).abs().maxCoeff(), 1e-15);

  std::vector<Policy> ps = {testing::random_stochastic(4), testing::random_stochastic(5), testing::random_stochastic(6)};
  std::vector<StateWeights> ws = {testing::random_weights(4), testing::random_weights(5), testing::random_weights(6)};
  Eigen::VectorXd hand = Eigen::VectorXd::Zero(6);
  for (int m = 0; m < 3; ++m)
    for (int s = 0; s < 12; ++s)
      for (int a = 0; a < 6; ++a) hand[a] += ws[m][s] * ps[m](s, a) / 3.0;
  const auto c = action_composition(ps, ws);
  EXPECT_LE((c - hand).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(c.sum(), 1.0, 1e-12);
}

TEST(AdjustedRand, Fixture) {
  const std::vector<int> a = {0, 0, 0, 1, 1, 1, 2, 2};
  const std::vector<int> b = {1, 1, 0, 0, 2, 2, 2, 2};
  EXPECT_NEAR(adjusted_rand_index(a, b), 0.18181818181818182, 1e-12);
  const std::vector<int> relabeled = {2, 2, 2, 0, 0, 0, 1, 1};
  EXPECT_NEAR(adjusted_rand_index(a, relabeled), 1.0, 1e-12);
}

}  // namespace
}  // namespace homophily
