#include <gtest/gtest.h>

#include <random>

#include <fmt/format.h>

#include "homophily/labeling.hpp"
#include "homophily/mdp.hpp"
#include "homophily/synthetic.hpp"
#include "homophily/validation.hpp"
#include "support.hpp"

namespace homophily {
namespace {

using testing::comment;
using testing::thread;

std::vector<StepPair> encode(const std::vector<EventRecord>& events, const std::string& user) {
  const EventIndex index(events);
  return encode_trajectory(index.activity(user)).trajectory.pairs;
}

TEST(IndexTables, CanonicalOrder) {
  EXPECT_EQ(kStateNames[0], "IT");
  EXPECT_EQ(kStateNames[4], "IR-");
  EXPECT_EQ(kStateNames[9], "GR+");
  EXPECT_EQ(kStateNames[11], "GR-");
  EXPECT_EQ(kActionNames[0], "WR");
  EXPECT_EQ(kActionNames[5], "PR-");
  for (int s = 0; s < kNumStates; ++s) EXPECT_EQ(parse_state(kStateNames[s]), static_cast<State>(s));
  for (int a = 0; a < kNumActions; ++a) EXPECT_EQ(parse_action(kActionNames[a]), static_cast<Action>(a));
}

TEST(Encode, ThreeEventFixture) {
  const std::vector<EventRecord> events = {
      thread("t1", "u", 1),
      comment("c1", "t1", "t1", "s", 2, Stance::Agree),
      comment("c2", "c1", "t1", "u", 3, Stance::Disagree),
  };
  const std::vector<StepPair> expected = {{State::IT, Action::WR}, {State::GRAgree, Action::PRDisagree}};
  EXPECT_EQ(encode(events, "u"), expected);
}

TEST(Encode, LoneRootCommentIsEmpty) {
  const std::vector<EventRecord> events = {thread("t1", "s", 1), comment("c1", "t1", "t1", "u", 2)};
  EXPECT_TRUE(encode(events, "u").empty());
  EXPECT_TRUE(encode({}, "u").empty());
}

TEST(Encode, RootCommentsInTwoThreads) {
  const std::vector<EventRecord> events = {thread("ta", "s", 1), thread("tb", "s", 2),
                                           comment("c1", "ta", "ta", "u", 3), comment("c2", "tb", "tb", "u", 4)};
  const std::vector<StepPair> expected = {{State::IRC, Action::RC}};
  EXPECT_EQ(encode(events, "u"), expected);
}

TEST(Encode, EngagementIsPerThread) {
  const std::vector<EventRecord> events = {thread("ta", "s", 1), comment("c1", "ta", "ta", "u", 2),
                                           comment("c2", "ta", "ta", "u", 3), comment("c3", "ta", "ta", "u", 4)};
  const std::vector<StepPair> expected = {{State::IRC, Action::RC}, {State::ERC, Action::RC}};
  EXPECT_EQ(encode(events, "u"), expected);
}

TEST(Encode, QueuedRepliesEachProduceAStep) {
  const std::vector<EventRecord> events = {
      thread("t1", "u", 1),
      comment("c1", "t1", "t1", "s", 2, Stance::Agree),
      comment("c2", "t1", "t1", "x", 3, Stance::Disagree),
      thread("t2", "u", 4),
  };
  const std::vector<StepPair> expected = {
      {State::IT, Action::WR}, {State::GRAgree, Action::WR}, {State::GRDisagree, Action::CT}};
  EXPECT_EQ(encode(events, "u"), expected);
}

TEST(Encode, MissingStanceIsNeutralAndCounted) {
  const std::vector<EventRecord> events = {thread("t1", "u", 1), comment("c1", "t1", "t1", "s", 2),
                                           comment("c2", "c1", "t1", "u", 3)};
  const EventIndex index(events);
  const auto r = encode_trajectory(index.activity("u"));
  const std::vector<StepPair> expected = {{State::IT, Action::WR}, {State::GRNeutral, Action::PRNeutral}};
  EXPECT_EQ(r.trajectory.pairs, expected);
  EXPECT_EQ(r.missing_stance, 2u);
}

TEST(Encode, ExternalLookupOverridesInline) {
  const std::vector<EventRecord> events = {thread("t1", "u", 1), comment("c1", "t1", "t1", "s", 2, Stance::Agree),
                                           comment("c2", "c1", "t1", "u", 3, Stance::Agree)};
  const EventIndex index(events);
  const auto r = encode_trajectory(index.activity("u"), {{"c1", Stance::Disagree}});
  EXPECT_EQ(r.trajectory.pairs[1].state, State::GRDisagree);
}

TEST(Encode, Deterministic) {
  const auto corpus = render_event_corpus(
      {{"agent", "alpha", testing::random_stochastic(1), 0}}, structured_kernel(), EventCorpusOptions{});
  const EventIndex index(corpus.events);
  const auto a = encode_trajectory(index.activity("agent"));
  const auto b = encode_trajectory(index.activity("agent"));
  EXPECT_EQ(a.trajectory.pairs, b.trajectory.pairs);
}

TEST(Encode, SyntheticCorpusRoundTripAndInvariants) {
  EventCorpusOptions opts;
  opts.states_per_user = 1001;
  opts.seed = 17;
  std::vector<EventCorpusUser> users;
  for (int i = 0; i < 20; ++i)
    users.push_back({fmt::format("agent{:02d}", i), opts.subreddits[i % 3], testing::random_stochastic(100 + i), i});
  const auto corpus = render_event_corpus(users, structured_kernel(), opts);
  LabelMap labels;
  for (const auto& [id, l] : corpus.labels) labels[id] = l;
  const EventIndex index(corpus.events);
  std::size_t steps = 0;
  for (const auto& u : users) {
    auto activity = index.activity(u.user);
    apply_labels(activity, labels, false, nullptr, opts.num_topics);
    const auto t = encode_trajectory(activity).trajectory;
    EXPECT_EQ(t.pairs, corpus.expected.at(u.user).pairs) << u.user;
    EXPECT_EQ(check_trajectory(t), std::nullopt) << u.user;
    steps += t.size();
  }
  EXPECT_EQ(steps, 20000u);
}

TEST(ActionFamilies, Consistency) {
  EXPECT_TRUE(action_leads_to(Action::WR, State::GRNeutral));
  EXPECT_FALSE(action_leads_to(Action::WR, State::IT));
  EXPECT_TRUE(action_leads_to(Action::CT, State::IT));
  EXPECT_TRUE(action_leads_to(Action::RC, State::ERC));
  EXPECT_FALSE(action_leads_to(Action::RC, State::ERAgree));
  EXPECT_TRUE(action_leads_to(Action::PRDisagree, State::IRDisagree));
  EXPECT_FALSE(action_leads_to(Action::PRDisagree, State::ERAgree));
}

TEST(CheckTrajectory, FlagsViolations) {
  Trajectory t;
  t.user = "u";
  t.pairs = {{State::GRAgree, Action::WR}};
  EXPECT_TRUE(check_trajectory(t).has_value());
  t.pairs = {{State::IT, Action::CT}, {State::GRAgree, Action::WR}};
  EXPECT_TRUE(check_trajectory(t).has_value());
  t.pairs = {{State::IT, Action::CT}, {State::IT, Action::WR}};
  EXPECT_FALSE(check_trajectory(t).has_value());
}

TEST(StateWeights, Oracles) {
  Trajectory t;
  t.pairs = {{State::IT, Action::WR}, {State::GRAgree, Action::CT}, {State::IT, Action::CT}};
  const auto w = state_weights(t);
  EXPECT_DOUBLE_EQ(w[0], 2.0 / 3);
  EXPECT_DOUBLE_EQ(w[9], 1.0 / 3);
  EXPECT_EQ(w.sum(), 1.0);

  t.pairs.clear();
  for (int s = 0; s < 12; ++s) t.pairs.push_back({static_cast<State>(s), Action::WR});
  EXPECT_LE((state_weights(t).array() - 1.0 / 12).abs().maxCoeff(), 1e-15);

  EXPECT_THROW(state_weights(Trajectory{}), Error);
}

TEST(StateWeights, MatchesCounterOnRandomTrajectory) {
  const auto t = simulate_agent(testing::random_stochastic(2), structured_kernel(), initial_family_start(), 1000, 2);
  std::array<int, 12> counts{};
  for (const auto& p : t.pairs) ++counts[static_cast<std::size_t>(index(p.state))];
  const auto w = state_weights(t);
  for (int s = 0; s < 12; ++s) EXPECT_DOUBLE_EQ(w[s], counts[static_cast<std::size_t>(s)] / 1000.0);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
}

TEST(Transitions, SingleCountAndLaplaceLimit) {
  Trajectory t;
  t.pairs = {{State::IT, Action::WR}, {State::GRAgree, Action::PRDisagree}};
  const auto est = estimate_transitions(std::vector<Trajectory>{t}, 0.0);
  EXPECT_EQ(est.model(index(State::IT), index(Action::WR), index(State::GRAgree)), 1.0);
  EXPECT_EQ(est.unseen_rows, 71u);
  EXPECT_TRUE(est.model.valid(1e-12));

  const auto laplace = estimate_transitions(std::vector<Trajectory>{}, 1.0);
  EXPECT_LE((laplace.model.kernel.array() - 1.0 / 12).abs().maxCoeff(), 1e-15);
}

TEST(Transitions, TwoTrajectoryCountTable) {
  Trajectory a;
  a.pairs = {{State::IT, Action::WR}, {State::GRAgree, Action::WR}, {State::GRNeutral, Action::CT}, {State::IT, Action::WR}};
  Trajectory b;
  b.pairs = {{State::IT, Action::WR}, {State::GRNeutral, Action::RC}, {State::IRC, Action::RC}};
  const auto est = estimate_transitions(std::vector<Trajectory>{a, b}, 1.0);
  const int it = index(State::IT);
  const int wr = index(Action::WR);
  // (IT, WR) seen twice: once to GR+, once to GR~ (the last pair of a has no successor).
  EXPECT_DOUBLE_EQ(est.model(it, wr, index(State::GRAgree)), 2.0 / 14);
  EXPECT_DOUBLE_EQ(est.model(it, wr, index(State::GRNeutral)), 2.0 / 14);
  EXPECT_DOUBLE_EQ(est.model(it, wr, index(State::IT)), 1.0 / 14);
  EXPECT_DOUBLE_EQ(est.model(index(State::GRNeutral), index(Action::CT), it), 2.0 / 13);
  EXPECT_LE((est.model.kernel.rowwise().sum().array() - 1).abs().maxCoeff(), 1e-12);
  EXPECT_TRUE((est.model.kernel.array() > 0).all());
}

TEST(Trajectory, SliceYear) {
  Trajectory t;
  t.pairs = {{State::IT, Action::WR}, {State::GRAgree, Action::CT}, {State::IT, Action::CT}};
  t.year_marks = {{2019, {0, 2}}, {2020, {2, 3}}};
  EXPECT_EQ(t.slice_year(2019).size(), 2u);
  EXPECT_EQ(t.slice_year(2020).pairs.front().state, State::IT);
  EXPECT_TRUE(t.slice_year(2021).empty());
}

}  // namespace
}  // namespace homophily
