#include "homophily/mdp.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace homophily {

std::optional<State> parse_state(std::string_view text) noexcept {
  for (int i = 0; i < kNumStates; ++i)
    if (kStateNames[i] == text) return static_cast<State>(i);
  return std::nullopt;
}

std::optional<Action> parse_action(std::string_view text) noexcept {
  for (int i = 0; i < kNumActions; ++i)
    if (kActionNames[i] == text) return static_cast<Action>(i);
  return std::nullopt;
}

bool action_leads_to(Action a, State next) noexcept {
  switch (a) {
    case Action::WR: return next == State::GRAgree || next == State::GRNeutral || next == State::GRDisagree;
    case Action::CT: return next == State::IT;
    case Action::RC: return next == State::IRC || next == State::ERC;
    case Action::PRAgree: return next == State::IRAgree || next == State::ERAgree;
    case Action::PRNeutral: return next == State::IRNeutral || next == State::ERNeutral;
    case Action::PRDisagree: return next == State::IRDisagree || next == State::ERDisagree;
  }
  return false;
}

Trajectory Trajectory::slice_year(int year) const {
  Trajectory out;
  out.user = user;
  const auto it = year_marks.find(year);
  if (it == year_marks.end()) return out;
  const auto [begin, end] = it->second;
  out.pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(begin), pairs.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

std::optional<std::string> check_trajectory(const Trajectory& trajectory) {
  const auto& p = trajectory.pairs;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (index(p[k].state) < 0 || index(p[k].state) >= kNumStates || index(p[k].action) < 0 ||
        index(p[k].action) >= kNumActions)
      return fmt::format("pair {} out of range", k);
    if (k + 1 < p.size() && !action_leads_to(p[k].action, p[k + 1].state))
      return fmt::format("pair {}: action {} followed by state {}", k, name(p[k].action), name(p[k + 1].state));
  }
  if (!p.empty() && !is_initial(p.front().state))
    return fmt::format("first state {} is not in the Initial family", name(p.front().state));
  return std::nullopt;
}

StateWeights state_weights(const Trajectory& trajectory) {
  if (trajectory.empty()) throw Error(fmt::format("state weights of empty trajectory for '{}'", trajectory.user));
  StateWeights w = StateWeights::Zero();
  for (const auto& step : trajectory.pairs) w[index(step.state)] += 1.0;
  return w / static_cast<double>(trajectory.size());
}

Eigen::MatrixXd state_action_frequencies(const Trajectory& trajectory) {
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(kNumStates, kNumActions);
  if (trajectory.empty()) return f;
  for (const auto& step : trajectory.pairs) f(index(step.state), index(step.action)) += 1.0;
  return f / static_cast<double>(trajectory.size());
}

Eigen::MatrixXd transition_counts(std::span<const Trajectory> trajectories) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(kNumStates * kNumActions, kNumStates);
  for (const auto& t : trajectories) {
    for (std::size_t k = 0; k + 1 < t.pairs.size(); ++k)
      counts(index(t.pairs[k].state) * kNumActions + index(t.pairs[k].action), index(t.pairs[k + 1].state)) += 1.0;
  }
  return counts;
}

TransitionEstimate estimate_transitions(std::span<const Trajectory> trajectories, double alpha) {
  if (!(alpha >= 0.0)) throw Error("smoothing alpha must be nonnegative");
  const auto counts = transition_counts(trajectories);
  TransitionEstimate out{TransitionModel(kNumStates, kNumActions), 0};
  out.model.smoothing_alpha = alpha;
  for (int r = 0; r < counts.rows(); ++r) {
    const double total = counts.row(r).sum() + kNumStates * alpha;
    if (total <= 0.0) {
      out.model.kernel.row(r).setConstant(1.0 / kNumStates);
      ++out.unseen_rows;
    } else {
      out.model.kernel.row(r) = (counts.row(r).array() + alpha) / total;
    }
  }
  if (out.unseen_rows > 0)
    spdlog::warn("transition estimate: {} unseen (state, action) rows filled uniformly (alpha = 0)", out.unseen_rows);
  return out;
}

namespace {

State reply_state(Stance stance, bool initial) {
  switch (stance) {
    case Stance::Agree: return initial ? State::IRAgree : State::ERAgree;
    case Stance::Disagree: return initial ? State::IRDisagree : State::ERDisagree;
    case Stance::Neutral: break;
  }
  return initial ? State::IRNeutral : State::ERNeutral;
}

State received_state(Stance stance) {
  switch (stance) {
    case Stance::Agree: return State::GRAgree;
    case Stance::Disagree: return State::GRDisagree;
    case Stance::Neutral: break;
  }
  return State::GRNeutral;
}

Action reply_action(Stance stance) {
  switch (stance) {
    case Stance::Agree: return Action::PRAgree;
    case Stance::Disagree: return Action::PRDisagree;
    case Stance::Neutral: break;
  }
  return Action::PRNeutral;
}

}  // namespace

EncodeResult encode_trajectory(const UserActivity& activity, const StanceLookup& stance_labels) {
  EncodeResult result;
  result.trajectory.user = activity.user;

  auto stance_of = [&](const EventRecord& e) {
    if (const auto it = stance_labels.find(e.event_id); it != stance_labels.end()) return it->second;
    if (e.stance) return *e.stance;
    ++result.missing_stance;
    return Stance::Neutral;
  };

  struct Step {
    State state;
    Action implied;  // action taken when this event is the next one
    std::int64_t created_utc;
  };
  std::vector<Step> steps;
  std::unordered_set<std::string_view> engaged;
  for (const auto& item : activity.merged()) {
    const auto& e = *item.event;
    if (item.role == StreamRole::Response) {
      steps.push_back({received_state(stance_of(e)), Action::WR, e.created_utc});
      continue;
    }
    const bool initial = !engaged.contains(e.thread_id);
    if (e.is_thread()) {
      steps.push_back({State::IT, Action::CT, e.created_utc});
    } else if (e.is_root_comment()) {
      steps.push_back({initial ? State::IRC : State::ERC, Action::RC, e.created_utc});
    } else {
      const auto stance = stance_of(e);
      steps.push_back({reply_state(stance, initial), reply_action(stance), e.created_utc});
    }
    engaged.insert(e.thread_id);
  }

  auto& traj = result.trajectory;
  for (std::size_t k = 0; k + 1 < steps.size(); ++k) {
    traj.pairs.push_back({steps[k].state, steps[k + 1].implied});
    const int year = utc_year(steps[k].created_utc);
    auto [it, inserted] = traj.year_marks.try_emplace(year, k, k + 1);
    if (!inserted) it->second.second = k + 1;
  }
  return result;
}

}  // namespace homophily
