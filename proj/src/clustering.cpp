#include "homophily/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "homophily/error.hpp"
#include "homophily/parallel.hpp"
#include "homophily/random.hpp"

namespace homophily {

namespace {

std::vector<double> squared_distances_to(const PointMatrix& points, const Eigen::RowVectorXd& c) {
  std::vector<double> d(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) d[static_cast<std::size_t>(i)] = (points.row(i) - c).squaredNorm();
  return d;
}

PointMatrix plus_plus_seeds(const PointMatrix& points, int k, Rng& rng) {
  const auto n = points.rows();
  PointMatrix centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  auto nearest = squared_distances_to(points, centroids.row(0));
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      pick = first(rng);
    } else {
      std::discrete_distribution<Eigen::Index> draw(nearest.begin(), nearest.end());
      pick = draw(rng);
    }
    centroids.row(c) = points.row(pick);
    const auto d = squared_distances_to(points, centroids.row(c));
    for (std::size_t i = 0; i < nearest.size(); ++i) nearest[i] = std::min(nearest[i], d[i]);
  }
  return centroids;
}

struct Assignment {
  std::vector<int> labels;
  std::vector<double> distances;
  double inertia = 0.0;
};

Assignment assign(const PointMatrix& points, const PointMatrix& centroids) {
  Assignment a;
  const auto n = static_cast<std::size_t>(points.rows());
  a.labels.resize(n);
  a.distances.resize(n);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int label = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        label = static_cast<int>(c);
      }
    }
    a.labels[static_cast<std::size_t>(i)] = label;
    a.distances[static_cast<std::size_t>(i)] = best;
    a.inertia += best;
  }
  return a;
}

ClusterModel lloyd(const PointMatrix& points, int k, Rng& rng) {
  ClusterModel m;
  m.k = k;
  m.centroids = plus_plus_seeds(points, k, rng);
  Assignment current = assign(points, m.centroids);
  m.inertia_history.push_back(current.inertia);
  for (int it = 1; it <= kMaxLloydIterations; ++it) {
    m.iterations = it;
    PointMatrix sums = PointMatrix::Zero(k, points.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const int label = current.labels[static_cast<std::size_t>(i)];
      sums.row(label) += points.row(i);
      ++counts[static_cast<std::size_t>(label)];
    }
    std::vector<bool> taken(static_cast<std::size_t>(points.rows()), false);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        m.centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      std::size_t far = 0;
      double worst = -1.0;
      for (std::size_t i = 0; i < current.distances.size(); ++i) {
        if (!taken[i] && current.distances[i] > worst) {
          worst = current.distances[i];
          far = i;
        }
      }
      taken[far] = true;
      m.centroids.row(c) = points.row(static_cast<Eigen::Index>(far));
    }
    Assignment next = assign(points, m.centroids);
    m.inertia_history.push_back(next.inertia);
    const bool stable = next.labels == current.labels;
    current = std::move(next);
    if (stable) break;
  }
  m.assignments = std::move(current.labels);
  m.inertia = current.inertia;
  return m;
}

double log_w(double inertia) { return std::log(std::max(inertia, 1e-300)); }

}  // namespace

ClusterModel kmeans(const PointMatrix& points, int k, std::uint64_t seed, int restarts) {
  if (k < 1) throw Error("k must be at least 1");
  if (points.rows() < k) throw Error(fmt::format("k-means needs n >= k (n = {}, k = {})", points.rows(), k));
  if (!points.allFinite()) throw Error("k-means input contains non-finite values");
  if (restarts < 1) throw Error("k-means restarts must be positive");
  ClusterModel best;
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    ClusterModel m = lloyd(points, k, rng);
    if (r == 0 || m.inertia < best.inertia) best = std::move(m);
  }
  best.seed = seed;
  return best;
}

double within_cluster_ss(const PointMatrix& points, const PointMatrix& centroids, std::span<const int> assignments) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    total += (points.row(i) - centroids.row(assignments[static_cast<std::size_t>(i)])).squaredNorm();
  return total;
}

double silhouette_score(const PointMatrix& points, std::span<const int> assignments) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (assignments.size() != n) throw Error("silhouette: assignment count does not match points");
  std::map<int, std::size_t> sizes;
  for (const int a : assignments) ++sizes[a];
  if (sizes.size() < 2) throw Error("silhouette needs at least two clusters");

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int own = assignments[i];
    if (sizes[own] == 1) continue;
    std::map<int, double> sums;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sums[assignments[j]] += (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).norm();
    }
    const double a = sums[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, sum] : sums) {
      if (label != own) b = std::min(b, sum / static_cast<double>(sizes[label]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

GapValue gap_statistic(const PointMatrix& points, int k, int references, std::uint64_t seed, int restarts,
                       unsigned jobs) {
  if (references < 1) throw Error("gap statistic needs at least one reference");
  const Eigen::RowVectorXd lo = points.colwise().minCoeff();
  const Eigen::RowVectorXd hi = points.colwise().maxCoeff();
  if (((hi - lo).array() <= 0.0).all()) throw Error("gap statistic undefined: all points coincide");

  const double observed = log_w(kmeans(points, k, seed, restarts).inertia);
  std::vector<double> ref_logs(static_cast<std::size_t>(references));
  parallel_for(ref_logs.size(), jobs, [&](std::size_t b) {
    Rng rng(derive_seed(seed, 1000003 + b));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PointMatrix ref(points.rows(), points.cols());
    for (Eigen::Index i = 0; i < ref.rows(); ++i)
      for (Eigen::Index j = 0; j < ref.cols(); ++j) ref(i, j) = lo[j] + (hi[j] - lo[j]) * unit(rng);
    ref_logs[b] = log_w(kmeans(ref, k, derive_seed(seed, 2000003 + b), restarts).inertia);
  });
  const double mean = std::accumulate(ref_logs.begin(), ref_logs.end(), 0.0) / references;
  double ss = 0.0;
  for (const double v : ref_logs) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / references);
  return {mean - observed, sd * std::sqrt(1.0 + 1.0 / references)};
}

std::string_view to_string(SelectionPath p) noexcept {
  switch (p) {
    case SelectionPath::SilhouetteDrop: return "silhouette-drop";
    case SelectionPath::MaxSilhouetteCandidate: return "max-silhouette-candidate";
    case SelectionPath::MaxGap: return "max-gap";
    case SelectionPath::Fixed: break;
  }
  return "fixed";
}

KSelectionReport select_k(const std::map<int, double>& silhouette, const std::map<int, GapValue>& gap,
                          const SelectionOptions& options) {
  KSelectionReport r;
  r.k_min = options.k_min;
  r.k_max = options.k_max;
  r.silhouette = silhouette;
  r.gap = gap;
  for (int k = options.k_min; k <= options.k_max; ++k) {
    if (!silhouette.contains(k) || !gap.contains(k))
      throw Error(fmt::format("select_k: missing curve value for k = {}", k));
  }
  for (int k = options.k_min; k < options.k_max; ++k) {
    if (gap.at(k + 1).gap - gap.at(k).gap < options.gap_threshold) r.candidates.push_back(k);
  }

  if (r.candidates.empty()) {
    spdlog::warn("select_k: no k meets the gap threshold {}; choosing the max-gap k", options.gap_threshold);
    r.path = SelectionPath::MaxGap;
    r.chosen_k = options.k_min;
    for (int k = options.k_min; k <= options.k_max; ++k)
      if (gap.at(k).gap > gap.at(r.chosen_k).gap) r.chosen_k = k;
    return r;
  }

  double best_drop = 0.0;
  double record = -std::numeric_limits<double>::infinity();
  for (const int k : r.candidates) {
    if (k < options.min_informative_k) continue;
    if (silhouette.at(k) <= record) continue;
    record = silhouette.at(k);
    const double drop = silhouette.at(k) - silhouette.at(k + 1);
    if (drop > best_drop) {
      best_drop = drop;
      r.chosen_k = k;
    }
  }
  if (r.chosen_k != 0) {
    r.path = SelectionPath::SilhouetteDrop;
    return r;
  }
  r.path = SelectionPath::MaxSilhouetteCandidate;
  r.chosen_k = r.candidates.front();
  for (const int k : r.candidates)
    if (silhouette.at(k) > silhouette.at(r.chosen_k)) r.chosen_k = k;
  return r;
}

KSelectionReport evaluate_k_range(const PointMatrix& points, std::uint64_t seed, const SelectionOptions& options,
                                  unsigned jobs) {
  if (options.k_min < 2 || options.k_max <= options.k_min) throw Error("k range must satisfy 2 <= k_min < k_max");
  if (points.rows() <= options.k_max)
    throw Error(fmt::format("need more than {} points to evaluate k up to {}", options.k_max, options.k_max));
  std::map<int, double> sil;
  std::map<int, GapValue> gap;
  for (int k = options.k_min; k <= options.k_max; ++k) {
    const auto model = kmeans(points, k, derive_seed(seed, static_cast<std::uint64_t>(k)), options.restarts);
    sil[k] = silhouette_score(points, model.assignments);
    gap[k] = gap_statistic(points, k, options.gap_references, derive_seed(seed, 100 + static_cast<std::uint64_t>(k)),
                           options.gap_restarts, jobs);
  }
  return select_k(sil, gap, options);
}

PointMatrix flatten_policies(std::span<const Policy> policies) {
  if (policies.empty()) return PointMatrix(0, 0);
  const auto dim = policies.front().size();
  PointMatrix out(static_cast<Eigen::Index>(policies.size()), dim);
  for (std::size_t i = 0; i < policies.size(); ++i) {
    if (policies[i].size() != dim) throw Error("policies differ in shape");
    out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(policies[i].data(), dim);
  }
  return out;
}

Eigen::VectorXd action_composition(std::span<const Policy> policies, std::span<const StateWeights> weights) {
  if (policies.empty()) throw Error("action composition of an empty cluster");
  if (policies.size() != weights.size()) throw Error("action composition: policy and weight counts differ");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(policies.front().cols());
  for (std::size_t i = 0; i < policies.size(); ++i) total += policies[i].transpose() * weights[i];
  return total / static_cast<double>(policies.size());
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error("ARI: label vectors differ in length");
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0;
  for (const auto& [cell, n] : table) index += choose2(n);
  double sum_a = 0.0;
  for (const auto& [label, n] : rows) sum_a += choose2(n);
  double sum_b = 0.0;
  for (const auto& [label, n] : cols) sum_b += choose2(n);
  const double expected = sum_a * sum_b / choose2(static_cast<double>(a.size()));
  const double max_index = (sum_a + sum_b) / 2.0;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace homophily
