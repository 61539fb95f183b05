#include "homophily/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "homophily/error.hpp"
#include "homophily/random.hpp"

namespace homophily {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::string_view to_string(PValueMethod m) noexcept {
  switch (m) {
    case PValueMethod::TApproximation: return "t-approximation";
    case PValueMethod::ExactPermutation: return "exact-permutation";
    case PValueMethod::MonteCarloPermutation: return "monte-carlo-permutation";
    case PValueMethod::Undefined: break;
  }
  return "undefined";
}

namespace {

struct Centered {
  std::vector<double> values;
  /// Sum of squared deviations.
  double ss = 0.0;
};

Centered center(const std::vector<double>& ranks) {
  Centered c;
  const double mean = std::accumulate(ranks.begin(), ranks.end(), 0.0) / static_cast<double>(ranks.size());
  c.values.reserve(ranks.size());
  for (const double r : ranks) c.values.push_back(r - mean);
  c.ss = std::inner_product(c.values.begin(), c.values.end(), c.values.begin(), 0.0);
  return c;
}

double correlation(const Centered& x, const std::vector<double>& y, const std::vector<std::size_t>& perm, double yss) {
  double dot = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) dot += x.values[i] * y[perm[i]];
  return dot / std::sqrt(x.ss * yss);
}

std::size_t factorial_capped(std::size_t n, std::size_t cap) {
  std::size_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) {
    f *= i;
    if (f > cap) return cap + 1;
  }
  return f;
}

// Lentz continued fraction for the incomplete beta.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw Error("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error("incomplete beta requires a, b > 0");
  if (x < 0.0 || x > 1.0) throw Error("incomplete beta requires x in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double dof) {
  if (!(dof > 0.0)) throw Error("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

SpearmanResult spearman_test(std::span<const double> xs, std::span<const double> ys, std::uint64_t seed) {
  if (xs.size() != ys.size()) throw Error(fmt::format("spearman: sizes differ ({} vs {})", xs.size(), ys.size()));
  if (xs.size() < 3) throw Error("spearman: at least 3 observations required");
  SpearmanResult out;
  out.n = xs.size();
  const auto cx = center(average_ranks(xs));
  const auto cy = center(average_ranks(ys));
  if (cx.ss == 0.0 || cy.ss == 0.0) {
    out.defined = false;
    out.rho = std::numeric_limits<double>::quiet_NaN();
    out.p_value = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const std::size_t n = out.n;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  out.rho = std::clamp(correlation(cx, cy.values, perm, cy.ss), -1.0, 1.0);

  if (n > 20) {
    out.method = PValueMethod::TApproximation;
    const double dof = static_cast<double>(n - 2);
    const double denom = 1.0 - out.rho * out.rho;
    out.p_value = denom <= 0.0 ? 0.0 : student_t_two_sided(out.rho * std::sqrt(dof / denom), dof);
    return out;
  }

  const double threshold = std::abs(out.rho) - 1e-12;
  std::size_t extreme = 0;
  std::size_t total = 0;
  if (factorial_capped(n, kExactPermutationLimit) <= kExactPermutationLimit) {
    out.method = PValueMethod::ExactPermutation;
    do {
      ++total;
      if (std::abs(correlation(cx, cy.values, perm, cy.ss)) >= threshold) ++extreme;
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    out.method = PValueMethod::MonteCarloPermutation;
    Rng rng(derive_seed(seed, n));
    for (std::size_t d = 0; d < kMonteCarloDraws; ++d) {
      std::shuffle(perm.begin(), perm.end(), rng);
      ++total;
      if (std::abs(correlation(cx, cy.values, perm, cy.ss)) >= threshold) ++extreme;
    }
  }
  out.p_value = static_cast<double>(extreme) / static_cast<double>(total);
  return out;
}

double bonferroni_threshold(std::size_t m, double alpha) {
  if (m == 0) throw Error("bonferroni: at least one comparison required");
  return alpha / static_cast<double>(m);
}

std::vector<bool> bonferroni(std::span<const double> p_values, double alpha) {
  const double threshold = bonferroni_threshold(p_values.size(), alpha);
  std::vector<bool> flags;
  flags.reserve(p_values.size());
  for (const double p : p_values) flags.push_back(p <= threshold);
  return flags;
}

CVStats temporal_cv(const std::map<int, double>& yearly_values) {
  if (yearly_values.size() < 3)
    throw Error(fmt::format("temporal CV needs at least 3 years, got {}", yearly_values.size()));
  CVStats out;
  for (auto it = std::next(yearly_values.begin()); it != yearly_values.end(); ++it)
    out.deltas.push_back(it->second - std::prev(it)->second);
  const double n = static_cast<double>(out.deltas.size());
  out.mu = std::accumulate(out.deltas.begin(), out.deltas.end(), 0.0) / n;
  double ss = 0.0;
  for (const double d : out.deltas) ss += (d - out.mu) * (d - out.mu);
  out.sigma = std::sqrt(ss / (n - 1.0));
  out.cv_defined = std::abs(out.mu) >= 1e-12;
  out.cv = out.cv_defined ? out.sigma / out.mu : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace homophily
