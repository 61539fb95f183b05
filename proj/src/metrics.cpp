#include "homophily/metrics.hpp"

#include <atomic>
#include <set>

#include <spdlog/spdlog.h>

#include "homophily/parallel.hpp"

namespace homophily {

void detail::warn_smoothing() {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true)) spdlog::warn("KL input with nonpositive entries smoothed by {} and renormalized", kKlSmoothing);
}

std::string_view to_string(Metric m) noexcept { return m == Metric::Swkl ? "swkl" : "cosine"; }

double swkl(const PolicyRecord& u, const PolicyRecord& v) { return swkl(u.policy, u.weights, v.policy, v.weights); }

HomophilyMatrix group_mean_matrix(const Groups& groups, const PairMetric& pair_metric, Metric metric, unsigned jobs) {
  std::set<std::string> seen;
  for (const auto& [name, users] : groups) {
    for (const auto& u : users) {
      if (!seen.insert(u).second) throw Error(fmt::format("user '{}' appears in more than one group", u));
    }
  }

  HomophilyMatrix out;
  out.metric = metric;
  std::vector<const std::vector<std::string>*> members;
  for (const auto& [name, users] : groups) {
    out.labels.push_back(name);
    members.push_back(&users);
  }
  const auto n = static_cast<Eigen::Index>(out.labels.size());
  out.values = Eigen::MatrixXd::Zero(n, n);
  out.pair_counts = Eigen::MatrixXi::Zero(n, n);
  out.defined = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);

  const auto cells = group_pairs(out.labels);
  std::vector<std::pair<double, int>> results(cells.size());
  std::vector<std::pair<Eigen::Index, Eigen::Index>> index_of;
  index_of.reserve(cells.size());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) index_of.emplace_back(i, j);

  parallel_for(cells.size(), jobs, [&](std::size_t c) {
    const auto [i, j] = index_of[c];
    const auto& a = *members[static_cast<std::size_t>(i)];
    const auto& b = *members[static_cast<std::size_t>(j)];
    double sum = 0.0;
    int count = 0;
    auto add = [&](const std::string& x, const std::string& y) {
      if (const auto v = pair_metric(x, y)) {
        sum += *v;
        ++count;
      }
    };
    if (i == j) {
      for (std::size_t p = 0; p < a.size(); ++p)
        for (std::size_t q = p + 1; q < a.size(); ++q) add(a[p], a[q]);
    } else {
      for (const auto& x : a)
        for (const auto& y : b) add(x, y);
    }
    results[c] = {sum, count};
  });

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto [i, j] = index_of[c];
    const auto [sum, count] = results[c];
    const double mean = count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
    out.values(i, j) = out.values(j, i) = mean;
    out.pair_counts(i, j) = out.pair_counts(j, i) = count;
    out.defined(i, j) = out.defined(j, i) = count > 0;
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> group_pairs(const std::vector<std::string>& labels) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i; j < labels.size(); ++j) out.emplace_back(labels[i], labels[j]);
  return out;
}

std::vector<double> upper_triangle(const HomophilyMatrix& m) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < m.values.rows(); ++i)
    for (Eigen::Index j = i; j < m.values.cols(); ++j)
      out.push_back(m.defined(i, j) ? m.values(i, j) : std::numeric_limits<double>::quiet_NaN());
  return out;
}

}  // namespace homophily
