#pragma once

// Maximum-entropy deep IRL over a tabular MDP.
//
// The reward network maps a one-hot state to R(s) = w' sig(W2 sig(W1 e_s)),
// the policy is the soft (log-sum-exp) Bellman fixed point, and training
// minimizes the normalized negative log-likelihood of the demonstrated
// actions. At the soft fixed point dL/dR = d - w_emp, where w_emp is the
// empirical state frequency and d the normalized discounted occupancy of the
// current policy; the start vector of d is selected by StartMode.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>

#include "homophily/error.hpp"
#include "homophily/mdp.hpp"
#include "homophily/random.hpp"

namespace homophily {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

/// Feed-forward reward network of structure (S, 3, 3), no biases.
template <typename Scalar>
struct RewardNet {
  static constexpr int kHidden = 3;
  using Hidden = Eigen::Matrix<Scalar, kHidden, Eigen::Dynamic>;

  Hidden layer1;                                   // 3 x S
  Eigen::Matrix<Scalar, kHidden, kHidden> layer2;  // 3 x 3
  Eigen::Matrix<Scalar, kHidden, 1> output;        // w

  static RewardNet zeros(int num_states = kNumStates) {
    RewardNet net;
    net.layer1 = Hidden::Zero(kHidden, num_states);
    net.layer2.setZero();
    net.output.setZero();
    return net;
  }

  /// i.i.d. Normal(0, stddev) entries drawn in flatten() order.
  static RewardNet normal(std::uint64_t seed, Scalar stddev, int num_states = kNumStates) {
    Rng rng(seed);
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    VectorX<Scalar> theta(parameter_count(num_states));
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = Scalar(dist(rng));
    return unflatten(theta, num_states);
  }

  static constexpr Eigen::Index parameter_count(int num_states) {
    return Eigen::Index(kHidden) * num_states + kHidden * kHidden + kHidden;
  }

  int num_states() const { return static_cast<int>(layer1.cols()); }
  Eigen::Index num_parameters() const { return parameter_count(num_states()); }

  /// layer1 (column-major), layer2 (column-major), output.
  VectorX<Scalar> flatten() const {
    VectorX<Scalar> theta(num_parameters());
    theta << Eigen::Map<const VectorX<Scalar>>(layer1.data(), layer1.size()),
        Eigen::Map<const VectorX<Scalar>>(layer2.data(), layer2.size()), output;
    return theta;
  }

  static RewardNet unflatten(const VectorX<Scalar>& theta, int num_states) {
    if (theta.size() != parameter_count(num_states)) throw Error("parameter vector has the wrong length");
    RewardNet net = zeros(num_states);
    const Eigen::Index n1 = net.layer1.size();
    Eigen::Map<VectorX<Scalar>>(net.layer1.data(), n1) = theta.head(n1);
    Eigen::Map<VectorX<Scalar>>(net.layer2.data(), net.layer2.size()) = theta.segment(n1, kHidden * kHidden);
    net.output = theta.tail(kHidden);
    return net;
  }

  bool all_finite() const {
    return layer1.allFinite() && layer2.allFinite() && output.allFinite();
  }
};

template <typename Scalar>
struct RewardForward {
  typename RewardNet<Scalar>::Hidden hidden1;
  typename RewardNet<Scalar>::Hidden hidden2;
  VectorX<Scalar> rewards;
};

/// Evaluates every state at once; one-hot inputs select columns of W1.
template <typename Scalar>
RewardForward<Scalar> forward(const RewardNet<Scalar>& net) {
  RewardForward<Scalar> f;
  f.hidden1 = net.layer1.unaryExpr([](Scalar x) { return sigmoid(x); });
  f.hidden2 = (net.layer2 * f.hidden1).unaryExpr([](Scalar x) { return sigmoid(x); });
  f.rewards = (net.output.transpose() * f.hidden2).transpose();
  return f;
}

template <typename Scalar>
VectorX<Scalar> rewards(const RewardNet<Scalar>& net) {
  return forward(net).rewards;
}

template <typename Scalar>
Scalar reward_forward(const RewardNet<Scalar>& net, int state) {
  if (state < 0 || state >= net.num_states()) throw Error(fmt::format("state index {} out of range", state));
  if (!net.all_finite()) throw Error("reward network has non-finite parameters");
  return forward(net).rewards[state];
}

/// Gradient of sum_s upstream[s] * R(s) with respect to every parameter,
/// returned in network shape.
template <typename Scalar>
RewardNet<Scalar> backprop(const RewardNet<Scalar>& net, const RewardForward<Scalar>& f,
                           const VectorX<Scalar>& upstream) {
  using Hidden = typename RewardNet<Scalar>::Hidden;
  RewardNet<Scalar> g;
  g.output = f.hidden2 * upstream;
  const Hidden delta2 =
      ((net.output * upstream.transpose()).array() * f.hidden2.array() * (Scalar(1) - f.hidden2.array())).matrix();
  g.layer2 = delta2 * f.hidden1.transpose();
  g.layer1 = ((net.layer2.transpose() * delta2).array() * f.hidden1.array() * (Scalar(1) - f.hidden1.array())).matrix();
  return g;
}

template <typename Scalar>
RewardNet<Scalar> backprop(const RewardNet<Scalar>& net, const VectorX<Scalar>& upstream) {
  return backprop(net, forward(net), upstream);
}

template <typename Scalar>
struct SoftSolution {
  VectorX<Scalar> values;
  PolicyMatrix<Scalar> q;
  PolicyMatrix<Scalar> policy;
  int iterations = 0;
  Scalar residual = 0;
};

/// Q(s,a) = R(s) + gamma * sum_s' P(s'|s,a) V(s').
template <typename Scalar>
PolicyMatrix<Scalar> soft_q(const VectorX<Scalar>& rewards, const TransitionKernel<Scalar>& P, Scalar gamma,
                            const VectorX<Scalar>& values) {
  const VectorX<Scalar> next = P.kernel * values;
  PolicyMatrix<Scalar> q = gamma * Eigen::Map<const PolicyMatrix<Scalar>>(next.data(), P.num_states, P.num_actions);
  q.colwise() += rewards;
  return q;
}

template <typename Derived>
VectorX<typename Derived::Scalar> row_log_sum_exp(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const VectorX<Scalar> peak = m.rowwise().maxCoeff();
  const VectorX<Scalar> sums = (m.colwise() - peak).array().exp().rowwise().sum();
  return peak.array() + sums.array().log();
}

/// Iteration cap for soft value iteration: 10 * ceil(log(tol) / log(gamma)).
template <typename Scalar>
int soft_iteration_cap(Scalar gamma, Scalar tolerance) {
  const double ratio = std::log(static_cast<double>(tolerance)) / std::log(static_cast<double>(gamma));
  return 10 * std::max(1, static_cast<int>(std::ceil(ratio)));
}

/// Soft value iteration to max_s |V_new - V_old| <= epsilon. The returned
/// policy rows are exp(Q - logsumexp Q), strictly positive.
template <typename Scalar>
SoftSolution<Scalar> soft_value_iteration(const VectorX<Scalar>& rewards, const TransitionKernel<Scalar>& P,
                                          Scalar gamma, Scalar epsilon,
                                          const VectorX<Scalar>* warm_start = nullptr) {
  if (!(gamma > Scalar(0) && gamma < Scalar(1))) throw Error("gamma must lie in (0, 1)");
  if (!(epsilon > Scalar(0))) throw Error("epsilon must be positive");
  if (rewards.size() != P.num_states) throw Error("reward vector does not match the kernel");
  if (!rewards.allFinite()) throw Error("non-finite rewards");

  SoftSolution<Scalar> sol;
  sol.values = warm_start ? *warm_start : VectorX<Scalar>::Zero(P.num_states);
  const int cap = soft_iteration_cap(gamma, epsilon);
  for (int it = 1; it <= cap; ++it) {
    sol.q = soft_q(rewards, P, gamma, sol.values);
    VectorX<Scalar> next = row_log_sum_exp(sol.q);
    sol.residual = (next - sol.values).cwiseAbs().maxCoeff();
    sol.values = std::move(next);
    sol.iterations = it;
    if (sol.residual <= epsilon) {
      sol.policy = (sol.q.colwise() - sol.values).array().exp().matrix();
      return sol;
    }
  }
  throw ConvergenceError(fmt::format("soft value iteration did not converge in {} iterations (residual {})", cap,
                                     static_cast<double>(sol.residual)));
}

/// T(s, s') = sum_a pi(a|s) P(s'|s,a).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> policy_transition(const PolicyMatrix<Scalar>& policy,
                                                                        const TransitionKernel<Scalar>& P) {
  const int S = P.num_states;
  const int A = P.num_actions;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> T(S, S);
  for (int s = 0; s < S; ++s) T.row(s) = policy.row(s) * P.kernel.middleRows(s * A, A);
  return T;
}

/// Normalized discounted occupancy d = sum_t gamma^t d_t, d_0 = start, iterated
/// until the added term is below `tol`. `start` must sum to one; it may hold
/// negative entries (the likelihood-matched start does).
template <typename Scalar>
VectorX<Scalar> expected_visitation(const PolicyMatrix<Scalar>& policy, const TransitionKernel<Scalar>& P,
                                    const VectorX<Scalar>& start, Scalar gamma, Scalar tol) {
  if (policy.rows() != P.num_states || policy.cols() != P.num_actions) throw Error("policy does not match the kernel");
  if (start.size() != P.num_states) throw Error("start distribution does not match the kernel");
  if (std::abs(static_cast<double>(start.sum()) - 1.0) > 1e-9) throw Error("start distribution must sum to 1");
  if (!(gamma > Scalar(0) && gamma < Scalar(1))) throw Error("gamma must lie in (0, 1)");
  if (!(tol > Scalar(0))) throw Error("tolerance must be positive");

  const auto Tt = policy_transition(policy, P).transpose().eval();
  VectorX<Scalar> term = start;
  VectorX<Scalar> total = start;
  while (term.cwiseAbs().maxCoeff() > tol) {
    term = gamma * (Tt * term);
    total += term;
  }
  return total / total.sum();
}

/// Empirical state-action frequencies of a demonstration.
template <typename Scalar>
struct Demonstration {
  PolicyMatrix<Scalar> frequencies;  // S x A, sums to 1
  std::size_t length = 0;
  Eigen::Array<bool, Eigen::Dynamic, 1> initial_states;
  int first_state = 0;

  VectorX<Scalar> state_frequencies() const { return frequencies.rowwise().sum(); }
};

inline Demonstration<double> make_demonstration(const Trajectory& trajectory) {
  if (trajectory.empty()) throw Error(fmt::format("empty trajectory for '{}'", trajectory.user));
  Demonstration<double> demo;
  demo.frequencies = state_action_frequencies(trajectory);
  demo.length = trajectory.size();
  demo.initial_states.resize(kNumStates);
  for (int s = 0; s < kNumStates; ++s) demo.initial_states[s] = is_initial(static_cast<State>(s));
  demo.first_state = index(trajectory.pairs.front().state);
  return demo;
}

enum class StartMode {
  /// x0 = (w_emp - gamma * rho) / (1 - gamma), rho the expected next-state
  /// distribution under the demonstrated actions; makes d - w_emp the exact
  /// log-likelihood gradient.
  LikelihoodMatched,
  /// x0 = w_emp.
  EmpiricalStates,
  /// Empirical distribution over Initial-family visits, else the first state.
  InitialFamily,
};

template <typename Scalar>
VectorX<Scalar> start_distribution(const Demonstration<Scalar>& demo, const TransitionKernel<Scalar>& P,
                                   StartMode mode, Scalar gamma) {
  const VectorX<Scalar> w = demo.state_frequencies();
  switch (mode) {
    case StartMode::LikelihoodMatched: {
      const Eigen::Map<const VectorX<Scalar>> flat(demo.frequencies.data(), demo.frequencies.size());
      const VectorX<Scalar> rho = P.kernel.transpose() * flat;
      return (w - gamma * rho) / (Scalar(1) - gamma);
    }
    case StartMode::EmpiricalStates:
      return w;
    case StartMode::InitialFamily: {
      VectorX<Scalar> x = demo.initial_states.select(w, VectorX<Scalar>::Zero(w.size()));
      if (x.sum() > Scalar(0)) return x / x.sum();
      x.setZero();
      x[demo.first_state] = Scalar(1);
      return x;
    }
  }
  return w;
}

/// -sum f(s,a) log pi(a|s); +inf when a demonstrated action has zero probability.
template <typename Scalar>
Scalar negative_log_likelihood(const Demonstration<Scalar>& demo, const PolicyMatrix<Scalar>& policy) {
  Scalar total = 0;
  for (Eigen::Index s = 0; s < demo.frequencies.rows(); ++s) {
    for (Eigen::Index a = 0; a < demo.frequencies.cols(); ++a) {
      const Scalar f = demo.frequencies(s, a);
      if (f == Scalar(0)) continue;
      if (policy(s, a) <= Scalar(0)) return std::numeric_limits<Scalar>::infinity();
      total -= f * std::log(policy(s, a));
    }
  }
  return total;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 1000;
  double gamma = 0.9;
  double epsilon = 0.01;
  double init_stddev = 1.0;
  std::uint64_t rng_seed = 0;
  StartMode start_mode = StartMode::LikelihoodMatched;
  double visitation_tol = 1e-10;
  AdamConfig adam;
};

template <typename Scalar>
struct LossEvaluation {
  Scalar loss = 0;
  VectorX<Scalar> reward_gradient;  // dL/dR
  RewardNet<Scalar> parameter_gradient;
  SoftSolution<Scalar> solution;
};

template <typename Scalar>
LossEvaluation<Scalar> evaluate_loss(const RewardNet<Scalar>& net, const Demonstration<Scalar>& demo,
                                     const TransitionKernel<Scalar>& P, const VectorX<Scalar>& start, Scalar gamma,
                                     Scalar epsilon, Scalar visitation_tol,
                                     const VectorX<Scalar>* warm_start = nullptr) {
  LossEvaluation<Scalar> out;
  const auto f = forward(net);
  out.solution = soft_value_iteration(f.rewards, P, gamma, epsilon, warm_start);
  out.loss = negative_log_likelihood(demo, out.solution.policy);
  const VectorX<Scalar> occupancy = expected_visitation(out.solution.policy, P, start, gamma, visitation_tol);
  out.reward_gradient = occupancy - demo.state_frequencies();
  out.parameter_gradient = backprop(net, f, out.reward_gradient);
  return out;
}

template <typename Scalar>
struct TrainResult {
  RewardNet<Scalar> net;
  PolicyMatrix<Scalar> policy;
  VectorX<Scalar> values;
  std::vector<Scalar> loss_history;
};

/// Adam on the flattened parameter vector.
template <typename Scalar>
class Adam {
 public:
  Adam(Eigen::Index n, Scalar learning_rate, const AdamConfig& cfg)
      : lr_(learning_rate), cfg_(cfg), m_(VectorX<Scalar>::Zero(n)), v_(VectorX<Scalar>::Zero(n)) {}

  void step(VectorX<Scalar>& theta, const VectorX<Scalar>& grad) {
    ++t_;
    const Scalar b1 = Scalar(cfg_.beta1);
    const Scalar b2 = Scalar(cfg_.beta2);
    m_ = b1 * m_ + (Scalar(1) - b1) * grad;
    v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseAbs2();
    const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(t_));
    const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(t_));
    theta.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + Scalar(cfg_.eps));
  }

 private:
  Scalar lr_;
  AdamConfig cfg_;
  VectorX<Scalar> m_;
  VectorX<Scalar> v_;
  int t_ = 0;
};

template <typename Scalar>
TrainResult<Scalar> train_irl(const Demonstration<Scalar>& demo, const TransitionKernel<Scalar>& P,
                              const TrainConfig& config) {
  if (demo.length == 0) throw Error("cannot train on an empty trajectory");
  if (config.epochs < 0) throw Error("epochs must be nonnegative");
  if (!P.valid()) throw Error("invalid transition kernel");
  const Scalar gamma = Scalar(config.gamma);
  const Scalar epsilon = Scalar(config.epsilon);
  const Scalar tol = Scalar(config.visitation_tol);

  const int S = P.num_states;
  auto net = RewardNet<Scalar>::normal(config.rng_seed, Scalar(config.init_stddev), S);
  const VectorX<Scalar> start = start_distribution(demo, P, config.start_mode, gamma);
  VectorX<Scalar> theta = net.flatten();
  Adam<Scalar> adam(theta.size(), Scalar(config.learning_rate), config.adam);

  TrainResult<Scalar> result;
  result.loss_history.reserve(static_cast<std::size_t>(config.epochs));
  VectorX<Scalar> warm = VectorX<Scalar>::Zero(S);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto eval = evaluate_loss(net, demo, P, start, gamma, epsilon, tol, &warm);
    if (!std::isfinite(static_cast<double>(eval.loss)) || !eval.reward_gradient.allFinite())
      throw Error(fmt::format("training diverged at epoch {}", epoch));
    result.loss_history.push_back(eval.loss);
    warm = eval.solution.values;
    adam.step(theta, eval.parameter_gradient.flatten());
    net = RewardNet<Scalar>::unflatten(theta, S);
    if (!net.all_finite()) throw Error(fmt::format("training diverged at epoch {}", epoch));
  }
  const auto final_solution = soft_value_iteration(rewards(net), P, gamma, epsilon, &warm);
  result.net = std::move(net);
  result.policy = final_solution.policy;
  result.values = final_solution.values;
  return result;
}

inline TrainResult<double> train_irl(const Trajectory& trajectory, const TransitionModel& transitions,
                                     const TrainConfig& config) {
  if (trajectory.empty()) throw Error(fmt::format("cannot train on empty trajectory for '{}'", trajectory.user));
  return train_irl(make_demonstration(trajectory), transitions, config);
}

/// |a - n| / max(|a|, |n|, 1e-6) over all entries (absolute below 1e-6).
template <typename Scalar>
Scalar max_relative_error(const VectorX<Scalar>& analytic, const VectorX<Scalar>& numeric) {
  Scalar worst = 0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const Scalar denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), Scalar(1e-6)});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

/// Compares an analytic gradient of sum_s g[s] R(s) against central
/// differences (R+ - R-)/2h per parameter. `analytic(net, g)` defaults to
/// backprop; tests inject faulty variants.
template <typename Scalar, typename Analytic>
Scalar finite_difference_check(const RewardNet<Scalar>& net, const VectorX<Scalar>& rewards_grad, Analytic analytic,
                               Scalar h = Scalar(1e-5)) {
  const int S = net.num_states();
  const VectorX<Scalar> theta = net.flatten();
  const VectorX<Scalar> a = analytic(net, rewards_grad).flatten();
  VectorX<Scalar> n(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    VectorX<Scalar> plus = theta;
    VectorX<Scalar> minus = theta;
    plus[i] += h;
    minus[i] -= h;
    const Scalar fp = rewards_grad.dot(rewards(RewardNet<Scalar>::unflatten(plus, S)));
    const Scalar fm = rewards_grad.dot(rewards(RewardNet<Scalar>::unflatten(minus, S)));
    n[i] = (fp - fm) / (Scalar(2) * h);
  }
  return max_relative_error(a, n);
}

template <typename Scalar>
Scalar finite_difference_check(const RewardNet<Scalar>& net, const VectorX<Scalar>& rewards_grad,
                               Scalar h = Scalar(1e-5)) {
  return finite_difference_check(
      net, rewards_grad, [](const RewardNet<Scalar>& n, const VectorX<Scalar>& g) { return backprop(n, g); }, h);
}

/// Central-difference check of the full training loss (soft value iteration
/// included) at the likelihood-matched start, with solver tolerances tight
/// enough for the difference quotient to resolve 1e-4 relative error.
template <typename Scalar>
Scalar loss_gradient_check(const RewardNet<Scalar>& net, const Demonstration<Scalar>& demo,
                           const TransitionKernel<Scalar>& P, Scalar gamma, Scalar h = Scalar(1e-5)) {
  const Scalar eps = Scalar(1e-13);
  const Scalar tol = Scalar(1e-15);
  const int S = net.num_states();
  const VectorX<Scalar> start = start_distribution(demo, P, StartMode::LikelihoodMatched, gamma);
  const auto base = evaluate_loss(net, demo, P, start, gamma, eps, tol);
  const VectorX<Scalar> a = base.parameter_gradient.flatten();
  const VectorX<Scalar> theta = net.flatten();
  VectorX<Scalar> n(theta.size());
  auto loss_at = [&](const VectorX<Scalar>& params) {
    const auto sol = soft_value_iteration(rewards(RewardNet<Scalar>::unflatten(params, S)), P, gamma, eps,
                                          &base.solution.values);
    return negative_log_likelihood(demo, sol.policy);
  };
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    VectorX<Scalar> plus = theta;
    VectorX<Scalar> minus = theta;
    plus[i] += h;
    minus[i] -= h;
    n[i] = (loss_at(plus) - loss_at(minus)) / (Scalar(2) * h);
  }
  return max_relative_error(a, n);
}

}  // namespace homophily
