#include "homophily/validation.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "homophily/error.hpp"
#include "homophily/random.hpp"

namespace homophily {

double normalized_log_likelihood(const Eigen::MatrixXd& frequencies, const Policy& policy) {
  if (frequencies.rows() != policy.rows() || frequencies.cols() != policy.cols())
    throw Error("log-likelihood: frequency table and policy differ in shape");
  const double total = frequencies.sum();
  if (total <= 0.0) throw Error("log-likelihood of an empty trajectory");
  double ll = 0.0;
  for (Eigen::Index s = 0; s < frequencies.rows(); ++s) {
    for (Eigen::Index a = 0; a < frequencies.cols(); ++a) {
      const double f = frequencies(s, a);
      if (f == 0.0) continue;
      if (policy(s, a) <= 0.0) {
        spdlog::warn("log-likelihood: visited action {} in state {} has zero probability", kActionNames[a], kStateNames[s]);
        return -std::numeric_limits<double>::infinity();
      }
      ll += f * std::log(policy(s, a));
    }
  }
  return ll / total;
}

double normalized_log_likelihood(const Trajectory& trajectory, const Policy& policy) {
  if (trajectory.empty()) throw Error(fmt::format("log-likelihood of empty trajectory for '{}'", trajectory.user));
  return normalized_log_likelihood(state_action_frequencies(trajectory), policy);
}

Policy random_policy(std::uint64_t seed) {
  Rng rng(seed);
  std::exponential_distribution<double> exp1(1.0);
  Policy p(kNumStates, kNumActions);
  for (int s = 0; s < kNumStates; ++s) {
    for (int a = 0; a < kNumActions; ++a) p(s, a) = exp1(rng);
    p.row(s) /= p.row(s).sum();
  }
  return p;
}

RankResult rank_against(const Trajectory& trajectory, const Policy& own, std::span<const Policy> competitors) {
  const Eigen::MatrixXd freq = state_action_frequencies(trajectory);
  RankResult r;
  r.user = trajectory.user;
  r.own_ll = normalized_log_likelihood(trajectory, own);
  r.competitors = competitors.size();
  for (const auto& c : competitors)
    if (normalized_log_likelihood(freq, c) >= r.own_ll) ++r.rank;
  return r;
}

RankResult rank_policy(const Trajectory& trajectory, const Policy& own, std::size_t n_random, std::uint64_t seed) {
  if (trajectory.empty()) throw Error(fmt::format("cannot rank empty trajectory for '{}'", trajectory.user));
  const Eigen::MatrixXd freq = state_action_frequencies(trajectory);
  RankResult r;
  r.user = trajectory.user;
  r.own_ll = normalized_log_likelihood(freq, own);
  r.competitors = n_random;
  for (std::size_t i = 0; i < n_random; ++i)
    if (normalized_log_likelihood(freq, random_policy(derive_seed(seed, i))) >= r.own_ll) ++r.rank;
  return r;
}

namespace {

template <typename Row>
int draw(const Row& probs, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  const int last = static_cast<int>(probs.size()) - 1;
  for (int i = 0; i < last; ++i) {
    acc += probs(i);
    if (u < acc) return i;
  }
  return last;
}

}  // namespace

Trajectory simulate_agent(const Policy& policy, const TransitionModel& P, const StateWeights& start, std::size_t length,
                          std::uint64_t seed) {
  if (length < 1) throw Error("simulation length must be at least 1");
  if (!is_row_stochastic(policy, 1e-9)) throw Error("simulate_agent: policy is not row-stochastic");
  if (!P.valid()) throw Error("simulate_agent: invalid transition kernel");
  Rng rng(seed);
  Trajectory t;
  t.pairs.reserve(length);
  int s = draw(start, rng);
  for (std::size_t k = 0; k < length; ++k) {
    const int a = draw(policy.row(s), rng);
    t.pairs.push_back({static_cast<State>(s), static_cast<Action>(a)});
    s = draw(P.row(s, a), rng);
  }
  return t;
}

TransitionModel structured_kernel() {
  TransitionModel P(kNumStates, kNumActions);
  P.kernel.setZero();
  auto engaged_prob = [](State s) {
    if (is_initial(s)) return 0.2;
    if (index(s) >= index(State::GRAgree)) return 0.8;
    return 0.7;
  };
  auto received_split = [](State s) -> std::array<double, 3> {
    switch (s) {
      case State::IRAgree: case State::ERAgree: case State::GRAgree: return {0.5, 0.3, 0.2};
      case State::IRDisagree: case State::ERDisagree: case State::GRDisagree: return {0.2, 0.3, 0.5};
      default: return {0.3, 0.4, 0.3};
    }
  };
  for (int si = 0; si < kNumStates; ++si) {
    const auto s = static_cast<State>(si);
    const double pe = engaged_prob(s);
    const auto split = received_split(s);
    P(si, index(Action::WR), index(State::GRAgree)) = split[0];
    P(si, index(Action::WR), index(State::GRNeutral)) = split[1];
    P(si, index(Action::WR), index(State::GRDisagree)) = split[2];
    P(si, index(Action::CT), index(State::IT)) = 1.0;
    P(si, index(Action::RC), index(State::IRC)) = 1.0 - pe;
    P(si, index(Action::RC), index(State::ERC)) = pe;
    const std::array<std::pair<State, State>, 3> replies = {std::pair{State::IRAgree, State::ERAgree},
                                                            std::pair{State::IRNeutral, State::ERNeutral},
                                                            std::pair{State::IRDisagree, State::ERDisagree}};
    for (int r = 0; r < 3; ++r) {
      const int a = index(Action::PRAgree) + r;
      P(si, a, index(replies[r].first)) = 1.0 - pe;
      P(si, a, index(replies[r].second)) = pe;
    }
  }
  return P;
}

StateWeights initial_family_start() {
  StateWeights w = StateWeights::Zero();
  for (int s = 0; s < kNumStates; ++s)
    if (is_initial(static_cast<State>(s))) w[s] = 1.0;
  return w / w.sum();
}

std::vector<Archetype> persona_archetypes(std::size_t count_each) {
  using Row = Eigen::Matrix<double, 1, kNumActions>;
  auto uniform_rows = [](const Row& row) {
    Policy p(kNumStates, kNumActions);
    for (int s = 0; s < kNumStates; ++s) p.row(s) = row / row.sum();
    return p;
  };
  // WR, CT, RC, PR+, PR~, PR-
  return {
      {"Thread Creator", uniform_rows(Row{0.15, 0.55, 0.10, 0.07, 0.06, 0.07}), count_each},
      {"Root Only", uniform_rows(Row{0.15, 0.03, 0.70, 0.04, 0.04, 0.04}), count_each},
      {"Root Favored", uniform_rows(Row{0.20, 0.05, 0.45, 0.10, 0.10, 0.10}), count_each},
      {"Balanced", uniform_rows(Row{0.30, 0.05, 0.20, 0.15, 0.15, 0.15}), count_each},
      {"Disagreer", uniform_rows(Row{0.20, 0.03, 0.12, 0.07, 0.08, 0.50}), count_each},
  };
}

Policy perturb_policy(const Policy& mean, double concentration, std::uint64_t seed) {
  if (!(concentration > 0.0)) throw Error("Dirichlet concentration must be positive");
  Rng rng(seed);
  Policy p(mean.rows(), mean.cols());
  for (Eigen::Index s = 0; s < mean.rows(); ++s) {
    for (Eigen::Index a = 0; a < mean.cols(); ++a) {
      std::gamma_distribution<double> g(std::max(concentration * mean(s, a), 1e-6), 1.0);
      p(s, a) = std::max(g(rng), 1e-300);
    }
    p.row(s) /= p.row(s).sum();
  }
  return p;
}

std::vector<SyntheticAgent> synth_corpus(std::span<const Archetype> archetypes, const TransitionModel& P,
                                         const StateWeights& start, const SynthOptions& options) {
  std::vector<SyntheticAgent> agents;
  std::uint64_t id = 0;
  for (std::size_t label = 0; label < archetypes.size(); ++label) {
    const auto& arch = archetypes[label];
    if (arch.count < 1) throw Error(fmt::format("archetype '{}' needs a positive count", arch.name));
    for (std::size_t i = 0; i < arch.count; ++i, ++id) {
      SyntheticAgent agent;
      agent.user = fmt::format("agent{:04d}", id);
      agent.label = static_cast<int>(label);
      agent.policy = options.concentration > 0.0
                         ? perturb_policy(arch.policy, options.concentration, derive_seed(options.seed, 2 * id + 1))
                         : arch.policy;
      agent.trajectory = simulate_agent(agent.policy, P, start, options.length, derive_seed(options.seed, 2 * id));
      agent.trajectory.user = agent.user;
      agents.push_back(std::move(agent));
    }
  }
  return agents;
}

}  // namespace homophily
