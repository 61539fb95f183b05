#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "homophily/mdp.hpp"

namespace homophily {

/// Rows are points.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ClusterModel {
  int k = 0;
  PointMatrix centroids;
  std::vector<int> assignments;
  double inertia = 0.0;
  std::uint64_t seed = 0;
  int iterations = 0;
  /// Inertia after each Lloyd assignment step of the retained restart.
  std::vector<double> inertia_history;
};

inline constexpr int kMaxLloydIterations = 300;

/// k-means++ seeding followed by Lloyd iterations until the assignment is
/// stable or 300 iterations; empty clusters are reseeded with the point
/// farthest from its centroid. The best of `restarts` seeded runs is kept.
ClusterModel kmeans(const PointMatrix& points, int k, std::uint64_t seed, int restarts = 10);

/// Sum of squared distances of each point to its assigned centroid.
double within_cluster_ss(const PointMatrix& points, const PointMatrix& centroids, std::span<const int> assignments);

/// Mean silhouette over points (Euclidean). Points in singleton clusters
/// contribute 0, as do points with a = b = 0. Throws with fewer than two
/// clusters.
double silhouette_score(const PointMatrix& points, std::span<const int> assignments);

struct GapValue {
  double gap = 0.0;
  double std_error = 0.0;
};

/// Gap(k) = mean_b log W*_kb - log W_k over B uniform references in the
/// bounding box; s_k = sd * sqrt(1 + 1/B). Throws when all points coincide.
GapValue gap_statistic(const PointMatrix& points, int k, int references, std::uint64_t seed, int restarts = 3,
                       unsigned jobs = 1);

enum class SelectionPath { SilhouetteDrop, MaxSilhouetteCandidate, MaxGap, Fixed };
std::string_view to_string(SelectionPath p) noexcept;

struct SelectionOptions {
  int k_min = 2;
  int k_max = 10;
  double gap_threshold = 0.05;
  /// Silhouette drops starting below this k are not considered.
  int min_informative_k = 3;
  int gap_references = 50;
  int restarts = 10;
  int gap_restarts = 3;
};

struct KSelectionReport {
  int k_min = 2;
  int k_max = 10;
  std::map<int, double> silhouette;
  std::map<int, GapValue> gap;
  std::vector<int> candidates;
  int chosen_k = 0;
  SelectionPath path = SelectionPath::SilhouetteDrop;
};

/// Candidates: k with gap(k+1) - gap(k) < threshold. Among candidates with
/// k >= min_informative_k whose silhouette exceeds every smaller such
/// candidate's, chooses the k with the largest positive drop s(k) - s(k+1).
/// Falls back to the best-silhouette candidate, then to the max-gap k when
/// no candidate exists.
KSelectionReport select_k(const std::map<int, double>& silhouette, const std::map<int, GapValue>& gap,
                          const SelectionOptions& options = {});

/// Computes both curves for k in [k_min, k_max] and applies select_k.
KSelectionReport evaluate_k_range(const PointMatrix& points, std::uint64_t seed, const SelectionOptions& options = {},
                                  unsigned jobs = 1);

/// Row-major flattening of each policy; one row per policy.
PointMatrix flatten_policies(std::span<const Policy> policies);

/// Mean over members of the action marginal sum_s w_s pi(a|s).
Eigen::VectorXd action_composition(std::span<const Policy> policies, std::span<const StateWeights> weights);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace homophily
