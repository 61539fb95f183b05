#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "homophily/ingestion.hpp"

namespace homophily {

enum class LabelSource { External, Lexicon };

struct StanceLabel {
  std::string event_id;
  Stance stance = Stance::Neutral;
  LabelSource source = LabelSource::External;
};

struct EventLabel {
  std::optional<Stance> stance;
  std::optional<int> topic_id;
};

using LabelMap = std::map<std::string, EventLabel, std::less<>>;

struct LabelFile {
  LabelMap labels;
  std::vector<std::string> warnings;
  /// Rejected records (bad JSON, missing id, stance outside the vocabulary).
  std::vector<std::string> errors;
};

/// JSONL {event_id, stance?, topic_id?}; topic_id null or -1 is unlabeled.
/// Later duplicates override earlier
/// ones with a warning. Throws Error when the file cannot be read.
LabelFile load_label_file(const std::filesystem::path& path);
LabelFile parse_label_stream(std::istream& in);

/// Case-folded lexicon vote over the reply. Agreement words preceded by a
/// negator count as disagreement. Ties and zero hits are neutral.
/// `parent_text` is accepted for signature parity with the model sidecar.
Stance lexicon_stance(std::string_view parent_text, std::string_view reply_text);

std::vector<std::string> tokenize(std::string_view text);

/// Events that carry a stance in the MDP: the user's replies to comments and
/// the first-order comments they receive.
bool needs_stance(const EventRecord& event, StreamRole role) noexcept;

struct LabelingStats {
  std::size_t external = 0;
  std::size_t lexicon = 0;
  std::size_t unlabeled = 0;
  std::size_t rejected_topic = 0;
  LabelingStats& operator+=(const LabelingStats& other) noexcept;
};

/// Attaches labels to a user's activity. External labels always win; the
/// lexicon only fills stance gaps when enabled. Topic ids >= num_topics are
/// dropped (when num_topics > 0) and counted.
LabelingStats apply_labels(UserActivity& activity, const LabelMap& labels, bool lexicon_fallback,
                           const EventIndex* parents = nullptr, int num_topics = 0);

struct TopicVector {
  std::string user;
  Eigen::VectorXd counts;
  int num_topics = 0;
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;

  /// Cosine distance is undefined for an all-zero vector.
  bool defined_for_cosine() const noexcept { return labeled > 0; }
};

/// counts[t] = number of the user's documents labeled with topic t. A topic
/// label from `topic_labels` overrides the event's own topic_id.
/// Throws Error on topic_id outside [0, num_topics).
TopicVector build_topic_vector(std::string_view user, std::span<const EventRecord> user_events,
                               const LabelMap& topic_labels, int num_topics);

}  // namespace homophily
