#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "homophily/mdp.hpp"

namespace homophily {

/// (1/|tau|) sum_k log pi(a_k | s_k); -inf (with a warning) when a visited
/// action has zero probability. Throws on an empty trajectory.
double normalized_log_likelihood(const Trajectory& trajectory, const Policy& policy);

/// Same value from a state-action count or frequency table.
double normalized_log_likelihood(const Eigen::MatrixXd& frequencies, const Policy& policy);

/// 12 x 6 policy with rows drawn uniformly from the simplex.
Policy random_policy(std::uint64_t seed);

struct RankResult {
  std::string user;
  double own_ll = 0.0;
  /// 1 + number of competitors whose likelihood is >= own (ties count against).
  std::size_t rank = 1;
  std::size_t competitors = 0;
};

/// Ranks `own` against N random policies drawn from `seed`.
RankResult rank_policy(const Trajectory& trajectory, const Policy& own, std::size_t n_random, std::uint64_t seed);
RankResult rank_against(const Trajectory& trajectory, const Policy& own, std::span<const Policy> competitors);

/// s_0 ~ start, a_k ~ pi(.|s_k), s_{k+1} ~ P(.|s_k, a_k); `length` pairs.
Trajectory simulate_agent(const Policy& policy, const TransitionModel& P, const StateWeights& start, std::size_t length,
                          std::uint64_t seed);

/// Ground-truth kernel respecting the action families: CT -> IT; RC and PR
/// split between the Initial and Engaged variant (engaged more likely after
/// Engaged or received-reply states); WR splits over received stances,
/// tilted towards the stance of the current state.
TransitionModel structured_kernel();

/// Uniform over the Initial family.
StateWeights initial_family_start();

struct Archetype {
  std::string name;
  Policy policy;
  std::size_t count = 1;
};

/// Thread Creator, Root Only, Root Favored, Balanced, Disagreer.
std::vector<Archetype> persona_archetypes(std::size_t count_each = 1);

struct SyntheticAgent {
  std::string user;
  int label = 0;
  Policy policy;
  Trajectory trajectory;
};

struct SynthOptions {
  std::size_t length = 2000;
  std::uint64_t seed = 0;
  /// Dirichlet concentration of per-agent rows around the archetype row; 0
  /// gives every agent the archetype policy itself.
  double concentration = 0.0;
};

std::vector<SyntheticAgent> synth_corpus(std::span<const Archetype> archetypes, const TransitionModel& P,
                                         const StateWeights& start, const SynthOptions& options);

/// Row-wise Dirichlet draw around `mean` with total concentration `c`.
Policy perturb_policy(const Policy& mean, double concentration, std::uint64_t seed);

}  // namespace homophily
