#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "homophily/error.hpp"
#include "homophily/ingestion.hpp"

namespace homophily {

inline constexpr int kNumStates = 12;
inline constexpr int kNumActions = 6;

// Canonical index order; every matrix and file uses it.
enum class State : std::uint8_t {
  IT, IRC, IRAgree, IRNeutral, IRDisagree, ERC, ERAgree, ERNeutral, ERDisagree, GRAgree, GRNeutral, GRDisagree
};
enum class Action : std::uint8_t { WR, CT, RC, PRAgree, PRNeutral, PRDisagree };

inline constexpr std::array<std::string_view, kNumStates> kStateNames = {
    "IT", "IRC", "IR+", "IR~", "IR-", "ERC", "ER+", "ER~", "ER-", "GR+", "GR~", "GR-"};
inline constexpr std::array<std::string_view, kNumActions> kActionNames = {"WR", "CT", "RC", "PR+", "PR~", "PR-"};

constexpr int index(State s) noexcept { return static_cast<int>(s); }
constexpr int index(Action a) noexcept { return static_cast<int>(a); }
constexpr std::string_view name(State s) noexcept { return kStateNames[index(s)]; }
constexpr std::string_view name(Action a) noexcept { return kActionNames[index(a)]; }
std::optional<State> parse_state(std::string_view text) noexcept;
std::optional<Action> parse_action(std::string_view text) noexcept;

/// Initial family {IT, IRC, IR+, IR~, IR-}: admissible trajectory starts.
constexpr bool is_initial(State s) noexcept { return index(s) <= index(State::IRDisagree); }

/// The family of states an action leads to: WR -> GR*, CT -> IT,
/// RC -> {IRC, ERC}, PR(sigma) -> {IR(sigma), ER(sigma)}.
bool action_leads_to(Action a, State next) noexcept;

struct MDPSpec {
  double gamma = 0.9;
  double epsilon = 0.01;
  static constexpr int num_states = kNumStates;
  static constexpr int num_actions = kNumActions;
};

struct StepPair {
  State state;
  Action action;
  friend bool operator==(const StepPair&, const StepPair&) = default;
};

struct Trajectory {
  std::string user;
  std::vector<StepPair> pairs;
  /// UTC year -> half-open [begin, end) range into `pairs`.
  std::map<int, std::pair<std::size_t, std::size_t>> year_marks;

  bool empty() const noexcept { return pairs.empty(); }
  std::size_t size() const noexcept { return pairs.size(); }
  /// Sub-trajectory for one year (no year marks); empty when absent.
  Trajectory slice_year(int year) const;
};

/// Checks the state/action invariants: indices in range, first state in the
/// Initial family, every action consistent with the following state.
/// Returns a description of the first violation.
std::optional<std::string> check_trajectory(const Trajectory& trajectory);

using StateWeights = Eigen::Matrix<double, kNumStates, 1>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
/// Rows are states, columns actions.
template <typename Scalar>
using PolicyMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Policy = PolicyMatrix<double>;

template <typename Derived>
bool is_row_stochastic(const Eigen::MatrixBase<Derived>& m, double tol = 1e-9) {
  if ((m.array() < 0).any() || (m.array() > 1).any()) return false;
  return ((m.rowwise().sum().array() - 1).abs() <= tol).all();
}

/// w_s = (count of s) / |trajectory|. Throws on an empty trajectory.
StateWeights state_weights(const Trajectory& trajectory);

/// Empirical [s, a] frequency table (rows = states), entries sum to 1.
Eigen::MatrixXd state_action_frequencies(const Trajectory& trajectory);

/// Transition kernel stored as a (S*A) x S row-stochastic matrix; row s*A+a
/// holds P(. | s, a).
template <typename Scalar>
struct TransitionKernel {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  int num_states = 0;
  int num_actions = 0;
  Matrix kernel;
  Scalar smoothing_alpha = 0;

  TransitionKernel() = default;
  TransitionKernel(int states, int actions)
      : num_states(states), num_actions(actions),
        kernel(Matrix::Constant(states * actions, states, Scalar(1) / Scalar(states))) {}

  auto row(int s, int a) { return kernel.row(s * num_actions + a); }
  auto row(int s, int a) const { return kernel.row(s * num_actions + a); }
  Scalar operator()(int s, int a, int next) const { return kernel(s * num_actions + a, next); }
  Scalar& operator()(int s, int a, int next) { return kernel(s * num_actions + a, next); }

  bool valid(Scalar tol = Scalar(1e-9)) const {
    if (kernel.rows() != num_states * num_actions || kernel.cols() != num_states) return false;
    if ((kernel.array() < Scalar(0)).any()) return false;
    return ((kernel.rowwise().sum().array() - Scalar(1)).abs() <= tol).all();
  }
};

using TransitionModel = TransitionKernel<double>;

/// 12 x 6 x 12 counts of (s_k, a_k, s_{k+1}) pooled over the trajectories.
Eigen::MatrixXd transition_counts(std::span<const Trajectory> trajectories);

struct TransitionEstimate {
  TransitionModel model;
  /// (s, a) rows with no data and alpha = 0, filled uniformly.
  std::size_t unseen_rows = 0;
};

/// P(s'|s,a) = (count(s,a,s') + alpha) / (count(s,a) + 12 alpha).
TransitionEstimate estimate_transitions(std::span<const Trajectory> trajectories, double alpha = 1.0);

/// Stance for an event id; falls back to the event's own label.
using StanceLookup = std::unordered_map<std::string, Stance>;

struct EncodeResult {
  Trajectory trajectory;
  /// Reply events whose stance was absent and encoded as neutral.
  std::size_t missing_stance = 0;
};

/// Maps a time-ordered activity stream onto (state, action) pairs. Each event
/// becomes a state; the action at a state is implied by the next event; the
/// final state is dropped.
EncodeResult encode_trajectory(const UserActivity& activity, const StanceLookup& stance_labels = {});

}  // namespace homophily
