#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "homophily/ingestion.hpp"
#include "homophily/labeling.hpp"
#include "homophily/mdp.hpp"

namespace homophily {

/// Renders simulated agents as a Reddit-like event dump with a matching
/// external label file. Every agent acts in its own threads and in threads
/// opened by strangers; strangers add deeper replies and unrelated comments
/// that must not enter the agent's stream.
struct EventCorpusOptions {
  std::vector<std::string> subreddits = {"alpha", "beta", "gamma"};
  /// States rendered per agent (the encoded trajectory has one pair less).
  std::size_t states_per_user = 200;
  int first_year = 2019;
  int years = 3;
  int num_topics = 12;
  /// Share of the agent's comments placed outside the home subreddit.
  double away_share = 0.15;
  /// Fraction of stance labels left out of the label file (bodies still
  /// carry lexicon cues matching the stance).
  double unlabeled_share = 0.0;
  bool noise = true;
  std::uint64_t seed = 0;
};

struct EventCorpusUser {
  std::string user;
  std::string home;
  Policy policy;
  int persona = -1;
};

struct EventCorpus {
  std::vector<EventRecord> events;
  /// Per-event labels as an external labeler would emit them.
  std::vector<std::pair<std::string, EventLabel>> labels;
  std::vector<std::string> malformed_lines;
  /// Trajectory the encoder must reproduce for each agent.
  std::map<std::string, Trajectory> expected;
  std::map<std::string, std::string> home;
  std::map<std::string, int> persona;
};

EventCorpus render_event_corpus(const std::vector<EventCorpusUser>& users, const TransitionModel& P,
                                const EventCorpusOptions& options);

/// Event lines (time-ordered, malformed lines interleaved) for writing a dump.
std::vector<std::string> corpus_event_lines(const EventCorpus& corpus);
std::vector<std::string> corpus_label_lines(const EventCorpus& corpus);

}  // namespace homophily
