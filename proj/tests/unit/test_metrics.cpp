#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "homophily/metrics.hpp"
#include "support.hpp"

namespace homophily {
namespace {

TEST(KlDivergence, HandFixture) {
  const Eigen::Vector2d p(0.5, 0.5);
  const Eigen::Vector2d q(0.25, 0.75);
  EXPECT_NEAR(kl_divergence(p, q), 0.14384103622589042, 1e-12);
  EXPECT_EQ(kl_divergence(p, p), 0.0);
}

TEST(KlDivergence, NonnegativeOnRandomSimplexPairs) {
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const Policy pq = testing::random_stochastic(seed, 2, 6);
    EXPECT_GE(kl_divergence(pq.row(0).transpose(), pq.row(1).transpose()), 0.0);
  }
}

TEST(KlDivergence, SmoothsZeroEntries) {
  const Eigen::Vector3d p(0.5, 0.5, 0.0);
  const Eigen::Vector3d q(0.0, 0.5, 0.5);
  const double v = kl_divergence(p, q);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(v, 5.0);
}

TEST(KlDivergence, LengthMismatch) {
  EXPECT_THROW(kl_divergence(Eigen::Vector2d(0.5, 0.5), Eigen::Vector3d(0.2, 0.3, 0.5)), Error);
}

TEST(Swkl, TwoStateHandFixture) {
  Eigen::Matrix2d u;
  u << 0.5, 0.5, 0.5, 0.5;
  Eigen::Matrix2d v;
  v << 0.25, 0.75, 0.1, 0.9;
  const Eigen::Vector2d wu(1.0, 0.0);
  const Eigen::Vector2d wv(0.0, 1.0);
  EXPECT_NEAR(swkl(u, wu, v, wv), 0.25595262169719374, 1e-12);
}

TEST(Swkl, IdenticalPoliciesGiveZero) {
  const Policy p = testing::random_stochastic(3);
  EXPECT_EQ(swkl(p, testing::random_weights(1), p, testing::random_weights(2)), 0.0);
}

TEST(Swkl, SymmetricAndNonnegative) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const PolicyRecord a{"a", testing::random_stochastic(2 * seed), testing::random_weights(2 * seed)};
    const PolicyRecord b{"b", testing::random_stochastic(2 * seed + 1), testing::random_weights(2 * seed + 1)};
    const double ab = swkl(a, b);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, swkl(b, a), 1e-12);
  }
}

TEST(Swkl, ZeroWeightStatesAreIrrelevant) {
  Policy pu = testing::random_stochastic(10);
  const Policy pv = testing::random_stochastic(11);
  StateWeights wu = testing::random_weights(12);
  StateWeights wv = testing::random_weights(13);
  wu[4] = 0.0;
  wv[4] = 0.0;
  wu /= wu.sum();
  wv /= wv.sum();
  const double before = swkl(pu, wu, pv, wv);
  pu.row(4) = testing::random_stochastic(99).row(0);
  EXPECT_EQ(swkl(pu, wu, pv, wv), before);
}

TEST(Swkl, ShapeErrors) {
  const Policy p = testing::random_stochastic(1);
  const Policy small = testing::random_stochastic(1, 11, 6);
  const StateWeights w = testing::random_weights(1);
  EXPECT_THROW(swkl(p, w, small, w), Error);
  EXPECT_THROW(swkl(p, Eigen::VectorXd::Ones(5), p, w), Error);
}

TEST(Cosine, Oracles) {
  const Eigen::Vector3d a(1, 2, 0);
  EXPECT_NEAR(cosine_distance(a, a), 0.0, 1e-15);
  EXPECT_NEAR(cosine_distance(a, Eigen::Vector3d(0, 0, 5)), 1.0, 1e-15);
  EXPECT_NEAR(cosine_distance(Eigen::Vector3d(3.5 * a), Eigen::Vector3d(2, 1, 1)),
              cosine_distance(a, Eigen::Vector3d(2, 1, 1)), 1e-15);
  EXPECT_THROW(cosine_distance(a, Eigen::Vector3d::Zero()), Error);
}

class GroupMatrix : public ::testing::Test {
 protected:
  void SetUp() override {
    groups = {{"g1", {"a", "b", "c"}}, {"g2", {"d", "e"}}, {"g3", {"f"}}};
    std::uint64_t seed = 0;
    for (const auto& [g, users] : groups)
      for (const auto& u : users) records[u] = {u, testing::random_stochastic(seed), testing::random_weights(seed++)};
    metric = [this](const std::string& x, const std::string& y) -> std::optional<double> {
      return swkl(records.at(x), records.at(y));
    };
  }

  double brute(const std::string& g1, const std::string& g2) const {
    double total = 0.0;
    int n = 0;
    const auto& a = groups.at(g1);
    const auto& b = groups.at(g2);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (g1 == g2 && j <= i) continue;
        total += swkl(records.at(a[i]), records.at(b[j]));
        ++n;
      }
    return total / n;
  }

  Groups groups;
  std::map<std::string, PolicyRecord> records;
  PairMetric metric;
};

TEST_F(GroupMatrix, MatchesBruteForce) {
  const auto m = group_mean_matrix(groups, metric, Metric::Swkl);
  ASSERT_EQ(m.labels, (std::vector<std::string>{"g1", "g2", "g3"}));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == 2 && j == 2) continue;
      EXPECT_NEAR(m.values(i, j), brute(m.labels[i], m.labels[j]), 1e-12);
      EXPECT_EQ(m.values(i, j), m.values(j, i));
    }
  EXPECT_FALSE(m.defined(2, 2));
  EXPECT_TRUE(std::isnan(m.values(2, 2)));
  EXPECT_EQ(m.pair_counts(0, 0), 3);
  EXPECT_EQ(m.pair_counts(0, 1), 6);
}

TEST_F(GroupMatrix, UserOrderInvariantAndParallelSafe) {
  const auto m = group_mean_matrix(groups, metric, Metric::Swkl);
  auto shuffled = groups;
  std::reverse(shuffled["g1"].begin(), shuffled["g1"].end());
  const auto n = group_mean_matrix(shuffled, metric, Metric::Swkl, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (m.defined(i, j)) EXPECT_NEAR(m.values(i, j), n.values(i, j), 1e-12);
}

TEST_F(GroupMatrix, SingletonPairAndIdenticalPolicies) {
  const Groups pair = {{"x", {"a"}}, {"y", {"d"}}};
  const auto m = group_mean_matrix(pair, metric, Metric::Swkl);
  EXPECT_DOUBLE_EQ(m.values(0, 1), swkl(records.at("a"), records.at("d")));

  records["b"].policy = records["a"].policy;
  const Groups same = {{"s", {"a", "b"}}};
  EXPECT_EQ(group_mean_matrix(same, metric, Metric::Swkl).values(0, 0), 0.0);
}

TEST_F(GroupMatrix, OverlappingGroupsRejected) {
  const Groups bad = {{"x", {"a", "b"}}, {"y", {"b"}}};
  EXPECT_THROW(group_mean_matrix(bad, metric, Metric::Swkl), Error);
}

TEST(GroupPairs, CountIncludesDiagonal) {
  std::vector<std::string> labels;
  for (int i = 0; i < 15; ++i) labels.push_back(fmt::format("g{:02d}", i));
  EXPECT_EQ(group_pairs(labels).size(), 120u);
}

}  // namespace
}  // namespace homophily
