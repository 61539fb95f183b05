#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>

#include "homophily/error.hpp"
#include "homophily/mdp.hpp"

namespace homophily {

inline constexpr double kKlSmoothing = 1e-9;

namespace detail {

template <typename Derived>
VectorX<typename Derived::Scalar> smoothed(const Eigen::MatrixBase<Derived>& p, bool& changed) {
  using Scalar = typename Derived::Scalar;
  VectorX<Scalar> out = p;
  if ((out.array() <= Scalar(0)).any()) {
    out.array() += Scalar(kKlSmoothing);
    changed = true;
  }
  const Scalar total = out.sum();
  if (std::abs(static_cast<double>(total) - 1.0) > 1e-12) {
    out /= total;
    changed = true;
  }
  return out;
}

void warn_smoothing();

}  // namespace detail

/// KL(p || q) in nats. Nonpositive entries are lifted by 1e-9 and both
/// vectors renormalized, with a warning.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_divergence(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  if (p.size() != q.size()) throw Error(fmt::format("KL length mismatch: {} vs {}", p.size(), q.size()));
  bool changed = false;
  const VectorX<Scalar> ps = detail::smoothed(p, changed);
  const VectorX<Scalar> qs = detail::smoothed(q, changed);
  if (changed && ((p.array() <= Scalar(0)).any() || (q.array() <= Scalar(0)).any())) detail::warn_smoothing();
  return (ps.array() * (ps.array() / qs.array()).log()).sum();
}

/// Symmetric visitation-weighted KL:
/// 1/2 sum_s (wu_s KL(pu_s || pv_s) + wv_s KL(pv_s || pu_s)).
template <typename DerivedPU, typename DerivedWU, typename DerivedPV, typename DerivedWV>
typename DerivedPU::Scalar swkl(const Eigen::MatrixBase<DerivedPU>& policy_u, const Eigen::MatrixBase<DerivedWU>& weights_u,
                                const Eigen::MatrixBase<DerivedPV>& policy_v, const Eigen::MatrixBase<DerivedWV>& weights_v) {
  using Scalar = typename DerivedPU::Scalar;
  if (policy_u.rows() != policy_v.rows() || policy_u.cols() != policy_v.cols())
    throw Error("SWKL: policy shapes differ");
  if (weights_u.size() != policy_u.rows() || weights_v.size() != policy_v.rows())
    throw Error("SWKL: weight length does not match the number of states");
  Scalar total = 0;
  for (Eigen::Index s = 0; s < policy_u.rows(); ++s) {
    const Scalar wu = weights_u(s);
    const Scalar wv = weights_v(s);
    if (wu != Scalar(0)) total += wu * kl_divergence(policy_u.row(s).transpose(), policy_v.row(s).transpose());
    if (wv != Scalar(0)) total += wv * kl_divergence(policy_v.row(s).transpose(), policy_u.row(s).transpose());
  }
  return total / Scalar(2);
}

/// 1 - cos(u, v). Throws when either vector has zero norm.
template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar cosine_distance(const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedV>& v) {
  using Scalar = typename DerivedU::Scalar;
  if (u.size() != v.size()) throw Error("cosine distance: length mismatch");
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (nu == Scalar(0) || nv == Scalar(0)) throw Error("cosine distance undefined for a zero vector");
  return Scalar(1) - u.dot(v) / (nu * nv);
}

enum class Metric { Swkl, Cosine };
std::string_view to_string(Metric m) noexcept;

/// A user's fitted policy and visitation weights.
struct PolicyRecord {
  std::string user;
  Policy policy;
  StateWeights weights;
};

double swkl(const PolicyRecord& u, const PolicyRecord& v);

struct HomophilyMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd values;
  Metric metric = Metric::Swkl;
  /// False on the diagonal of groups with fewer than two members, and for
  /// cells whose every pair was undefined.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> defined;
  /// Number of pair evaluations behind each cell.
  Eigen::MatrixXi pair_counts;
};

using Groups = std::map<std::string, std::vector<std::string>>;
/// Returns the metric for a user pair, or nullopt when undefined for the pair.
using PairMetric = std::function<std::optional<double>(const std::string&, const std::string&)>;

/// Off-diagonal: mean over all |C| x |C'| cross pairs. Diagonal: mean over
/// unordered distinct within-group pairs. Throws when groups overlap.
HomophilyMatrix group_mean_matrix(const Groups& groups, const PairMetric& pair_metric, Metric metric, unsigned jobs = 1);

/// Upper triangle (diagonal included) of the group pair cells in label
/// order, as (row label, column label).
std::vector<std::pair<std::string, std::string>> group_pairs(const std::vector<std::string>& labels);

/// Matches matrix cells to group_pairs order, NaN where undefined.
std::vector<double> upper_triangle(const HomophilyMatrix& m);

}  // namespace homophily
