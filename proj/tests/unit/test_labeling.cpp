#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "homophily/error.hpp"
#include "homophily/labeling.hpp"
#include "support.hpp"

namespace homophily {
namespace {

using testing::comment;
using testing::thread;

const std::filesystem::path kData = HOMOPHILY_TEST_DATA;

LabelFile parse(const std::string& text) {
  std::istringstream in(text);
  return parse_label_stream(in);
}

TEST(LabelFile, SingleRecord) {
  const auto f = parse(R"({"event_id":"c1","stance":"agree"})");
  ASSERT_EQ(f.labels.size(), 1u);
  EXPECT_EQ(f.labels.at("c1").stance, Stance::Agree);
  EXPECT_FALSE(f.labels.at("c1").topic_id.has_value());
  EXPECT_TRUE(f.warnings.empty());
  EXPECT_TRUE(f.errors.empty());
}

TEST(LabelFile, DuplicateLaterWins) {
  const auto f = parse("{\"event_id\":\"c1\",\"stance\":\"agree\"}\n{\"event_id\":\"c1\",\"stance\":\"disagree\"}\n");
  EXPECT_EQ(f.labels.at("c1").stance, Stance::Disagree);
  ASSERT_EQ(f.warnings.size(), 1u);
  EXPECT_NE(f.warnings[0].find("c1"), std::string::npos);
}

TEST(LabelFile, OutOfVocabularyRejected) {
  const auto f = parse(R"({"event_id":"c1","stance":"maybe"})");
  EXPECT_TRUE(f.labels.empty());
  ASSERT_EQ(f.errors.size(), 1u);
  EXPECT_NE(f.errors[0].find("maybe"), std::string::npos);
}

TEST(LabelFile, SidecarStyleFixture) {
  const auto f = load_label_file(kData / "sidecar_labels.jsonl");
  EXPECT_EQ(f.labels.size(), 5u);
  EXPECT_EQ(f.labels.at("c1").stance, Stance::Disagree);
  EXPECT_EQ(f.labels.at("c1").topic_id, 2);
  EXPECT_EQ(f.labels.at("c2").stance, Stance::Neutral);
  EXPECT_FALSE(f.labels.at("c2").topic_id.has_value());
  EXPECT_EQ(f.labels.at("c3").stance, Stance::Disagree);
  EXPECT_EQ(f.labels.at("t1").topic_id, 5);
  EXPECT_FALSE(f.labels.at("c6").stance.has_value());
  EXPECT_FALSE(f.labels.contains("c4"));
  EXPECT_FALSE(f.labels.contains("c5"));
  EXPECT_FALSE(f.labels.contains("c7"));
  EXPECT_EQ(f.warnings.size(), 1u);
  ASSERT_EQ(f.errors.size(), 5u);
  EXPECT_NE(f.errors[0].find("sidecar_labels.jsonl:5"), std::string::npos);
}

TEST(LabelFile, UnreadableThrows) { EXPECT_THROW(load_label_file(kData / "no-such-file.jsonl"), Error); }

TEST(Lexicon, Examples) {
  EXPECT_EQ(lexicon_stance("", "I agree completely"), Stance::Agree);
  EXPECT_EQ(lexicon_stance("", "this is wrong and you know it"), Stance::Disagree);
  EXPECT_EQ(lexicon_stance("", "interesting point about goalkeepers"), Stance::Neutral);
  EXPECT_EQ(lexicon_stance("", ""), Stance::Neutral);
  EXPECT_EQ(lexicon_stance("", "No way."), Stance::Disagree);
  EXPECT_EQ(lexicon_stance("", "EXACTLY, +1"), Stance::Agree);
  EXPECT_EQ(lexicon_stance("", "I don't agree"), Stance::Disagree);
  EXPECT_EQ(lexicon_stance("", "yes but wrong"), Stance::Neutral);
}

TEST(Lexicon, PureAndParentIgnored) {
  const std::vector<std::string> replies = {"well said", "nope", "fair point, though wrong", "meh"};
  for (const auto& r : replies) {
    const auto s = lexicon_stance("", r);
    EXPECT_EQ(lexicon_stance("The earth is round.", r), s);
    EXPECT_EQ(lexicon_stance("", r), s);
  }
}

TEST(Lexicon, Tokenize) {
  EXPECT_EQ(tokenize("Don't, +1 'quoted' CAPS"), (std::vector<std::string>{"don't", "+1", "quoted", "caps"}));
}

TEST(NeedsStance, OnlyRepliesAndResponses) {
  EXPECT_FALSE(needs_stance(thread("t", "u", 1), StreamRole::Own));
  EXPECT_FALSE(needs_stance(comment("c", "t", "t", "u", 1), StreamRole::Own));
  EXPECT_TRUE(needs_stance(comment("c", "p", "t", "u", 1), StreamRole::Own));
  EXPECT_TRUE(needs_stance(comment("c", "t", "t", "v", 1), StreamRole::Response));
}

UserActivity fixture() {
  auto reply = comment("c2", "c1", "t1", "u", 3);
  reply.body = "you are wrong";
  auto response = comment("c3", "c2", "t1", "v", 4);
  response.body = "exactly right";
  return {"u", {thread("t1", "u", 1), comment("c0", "t1", "t1", "u", 2), reply}, {response}};
}

TEST(ApplyLabels, LexiconFillsGaps) {
  auto a = fixture();
  const auto stats = apply_labels(a, {}, true);
  EXPECT_EQ(stats.lexicon, 2u);
  EXPECT_EQ(stats.unlabeled, 0u);
  EXPECT_EQ(a.events[2].stance, Stance::Disagree);
  EXPECT_EQ(a.responses[0].stance, Stance::Agree);
  EXPECT_FALSE(a.events[1].stance.has_value());
}

TEST(ApplyLabels, ExternalBeatsLexicon) {
  auto a = fixture();
  LabelMap labels;
  labels["c2"] = {Stance::Agree, 1};
  const auto stats = apply_labels(a, labels, true);
  EXPECT_EQ(a.events[2].stance, Stance::Agree);
  EXPECT_EQ(a.events[2].topic_id, 1);
  EXPECT_EQ(stats.external, 1u);
  EXPECT_EQ(stats.lexicon, 1u);

  auto inline_labeled = fixture();
  inline_labeled.responses[0].stance = Stance::Disagree;
  apply_labels(inline_labeled, {}, true);
  EXPECT_EQ(inline_labeled.responses[0].stance, Stance::Disagree);
}

TEST(ApplyLabels, WithoutFallbackCountsUnlabeled) {
  auto a = fixture();
  const auto stats = apply_labels(a, {}, false);
  EXPECT_EQ(stats.unlabeled, 2u);
  EXPECT_FALSE(a.events[2].stance.has_value());
}

TEST(ApplyLabels, TopicOutOfRangeDropped) {
  auto a = fixture();
  LabelMap labels;
  labels["t1"] = {std::nullopt, 9};
  labels["c0"] = {std::nullopt, 3};
  const auto stats = apply_labels(a, labels, false, nullptr, 4);
  EXPECT_EQ(stats.rejected_topic, 1u);
  EXPECT_FALSE(a.events[0].topic_id.has_value());
  EXPECT_EQ(a.events[1].topic_id, 3);
}

std::vector<EventRecord> topic_docs(const std::vector<std::optional<int>>& topics) {
  std::vector<EventRecord> docs;
  for (std::size_t i = 0; i < topics.size(); ++i) {
    auto e = comment("d" + std::to_string(i), "t", "t", "u", static_cast<std::int64_t>(i));
    e.topic_id = topics[i];
    docs.push_back(e);
  }
  return docs;
}

TEST(TopicVector, Counting) {
  const auto v = build_topic_vector("u", topic_docs({2, 2, 5}), {}, 8);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(8);
  expected[2] = 2;
  expected[5] = 1;
  EXPECT_EQ(v.counts, expected);
  EXPECT_EQ(v.labeled, 3u);
  EXPECT_TRUE(v.defined_for_cosine());
}

TEST(TopicVector, UnlabeledAndDegenerate) {
  const auto v = build_topic_vector("u", topic_docs({std::nullopt, std::nullopt}), {}, 3);
  EXPECT_EQ(v.counts.sum(), 0.0);
  EXPECT_EQ(v.unlabeled, 2u);
  EXPECT_FALSE(v.defined_for_cosine());
}

TEST(TopicVector, Errors) {
  EXPECT_THROW(build_topic_vector("u", topic_docs({8}), {}, 8), Error);
  EXPECT_THROW(build_topic_vector("u", topic_docs({}), {}, 0), Error);
}

TEST(TopicVector, LabelMapOverridesEvent) {
  LabelMap labels;
  labels["d0"] = {std::nullopt, 1};
  const auto v = build_topic_vector("u", topic_docs({0}), labels, 2);
  EXPECT_EQ(v.counts[1], 1.0);
  EXPECT_EQ(v.counts[0], 0.0);
}

TEST(TopicVector, OrderInvariantAndAdditive) {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> topic(-1, 9);
  std::vector<std::optional<int>> topics;
  for (int i = 0; i < 300; ++i) {
    const int t = topic(rng);
    topics.push_back(t < 0 ? std::nullopt : std::optional<int>(t));
  }
  auto docs = topic_docs(topics);
  const auto whole = build_topic_vector("u", docs, {}, 10);
  EXPECT_EQ(whole.counts.sum(), static_cast<double>(whole.labeled));
  std::shuffle(docs.begin(), docs.end(), rng);
  EXPECT_EQ(build_topic_vector("u", docs, {}, 10).counts, whole.counts);
  const std::span<const EventRecord> all(docs);
  const auto left = build_topic_vector("u", all.first(120), {}, 10);
  const auto right = build_topic_vector("u", all.subspan(120), {}, 10);
  EXPECT_EQ(left.counts + right.counts, whole.counts);
}

}  // namespace
}  // namespace homophily
