#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace homophily {

/// Ranks starting at 1; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

enum class PValueMethod { TApproximation, ExactPermutation, MonteCarloPermutation, Undefined };
std::string_view to_string(PValueMethod m) noexcept;

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
  /// False when either input is constant; rho and p are then meaningless.
  bool defined = true;
  PValueMethod method = PValueMethod::Undefined;
  std::size_t n = 0;
};

inline constexpr std::size_t kExactPermutationLimit = 100000;
inline constexpr std::size_t kMonteCarloDraws = 100000;

/// Spearman rank correlation with a two-sided p-value: t approximation for
/// n > 20, otherwise all n! permutations when n! <= 1e5, else 1e5 seeded
/// Monte-Carlo permutations. Throws Error when sizes differ or n < 3.
SpearmanResult spearman_test(std::span<const double> xs, std::span<const double> ys, std::uint64_t seed = 0);

/// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided p-value of a Student t statistic with `dof` degrees of freedom.
double student_t_two_sided(double t, double dof);

double bonferroni_threshold(std::size_t m, double alpha = 0.05);
/// flag_i = p_i <= alpha / m.
std::vector<bool> bonferroni(std::span<const double> p_values, double alpha = 0.05);

struct CVStats {
  std::string user;
  std::string metric;
  std::vector<double> deltas;
  double mu = 0.0;
  double sigma = 0.0;
  double cv = 0.0;
  bool cv_defined = false;
};

/// Year-over-year deltas, their mean, sample std (n - 1) and sigma / mu.
/// Throws Error with fewer than three years.
CVStats temporal_cv(const std::map<int, double>& yearly_values);

}  // namespace homophily
