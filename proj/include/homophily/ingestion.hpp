#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace homophily {

enum class EventKind { Thread, Comment };
enum class Stance { Agree, Neutral, Disagree };

std::string_view to_string(EventKind kind) noexcept;
std::string_view to_string(Stance stance) noexcept;
std::optional<Stance> parse_stance(std::string_view text) noexcept;

/// One post or comment. Threads have no parent and are their own thread id.
struct EventRecord {
  std::string event_id;
  std::optional<std::string> parent_id;
  std::string thread_id;
  std::string subreddit;
  std::string author;
  std::int64_t created_utc = 0;
  EventKind kind = EventKind::Comment;
  std::optional<std::string> body;
  std::optional<std::string> title;
  /// Body was "[deleted]" or "[removed]" in the dump.
  bool removed = false;
  std::optional<Stance> stance;
  std::optional<int> topic_id;

  bool is_thread() const noexcept { return kind == EventKind::Thread; }
  /// A first-level comment directly on the thread's original post.
  bool is_root_comment() const noexcept {
    return kind == EventKind::Comment && parent_id && *parent_id == thread_id;
  }
  /// A comment replying to another comment.
  bool is_reply() const noexcept { return kind == EventKind::Comment && !is_root_comment(); }

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

/// Total order used for every merged stream.
inline bool stream_order(const EventRecord& a, const EventRecord& b) noexcept {
  if (a.created_utc != b.created_utc) return a.created_utc < b.created_utc;
  return a.event_id < b.event_id;
}

struct ParseResult {
  std::vector<EventRecord> records;
  std::size_t skipped = 0;
  std::vector<std::string> diagnostics;
};

/// Parses one JSON line. Accepts the native schema and raw pushshift field
/// names (see README field-mapping table). Returns an error message on failure.
std::pair<std::optional<EventRecord>, std::string> parse_event_line(std::string_view line);

/// Native-schema JSON line; removed bodies are written as "[deleted]".
std::string to_json_line(const EventRecord& event);

ParseResult parse_event_stream(std::istream& in);
ParseResult parse_event_lines(std::span<const std::string> lines);

/// Reads every file matching `pattern` (POSIX glob, gzip-transparent) in
/// sorted path order. Unreadable files throw.
ParseResult read_event_files(const std::string& pattern);

enum class StreamRole { Own, Response };

struct StreamItem {
  const EventRecord* event;
  StreamRole role;
};

/// A user's direct activity plus the first-order responses it received.
struct UserActivity {
  std::string user;
  std::vector<EventRecord> events;
  std::vector<EventRecord> responses;

  bool empty() const noexcept { return events.empty() && responses.empty(); }
  /// Both lists merged by (created_utc, event_id). Pointers refer into *this.
  std::vector<StreamItem> merged() const;
};

/// Lookup structure over a full event dump, built once and shared read-only.
class EventIndex {
 public:
  explicit EventIndex(std::span<const EventRecord> events);

  UserActivity activity(std::string_view user) const;
  std::vector<std::string> authors() const;
  const EventRecord* find(std::string_view event_id) const;

 private:
  std::span<const EventRecord> events_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_author_;
  std::unordered_map<std::string, std::vector<std::size_t>> children_;
};

/// Direct children of the user's events authored by someone else.
UserActivity first_order_responses(std::span<const EventRecord> all_events, std::string_view user);

/// True when the user has activity but every own event was deleted/removed.
bool history_unavailable(const UserActivity& activity) noexcept;

struct HomeAssignment {
  std::string user;
  std::string home_subreddit;
  std::map<std::string, std::size_t> comment_counts;

  std::size_t total_comments() const noexcept;
};

/// Subreddit with the most comments (threads ignored); ties go to the
/// lexicographically smallest name. Throws Error when there are no comments.
HomeAssignment home_subreddit(std::span<const EventRecord> events);

using YearlyRankings = std::map<std::pair<std::string, int>, std::vector<std::string>>;

/// Ranks authors per (subreddit, UTC year) by event count, ties by user id.
/// Authors named "[deleted]" are skipped.
YearlyRankings rank_yearly_activity(std::span<const EventRecord> events);

struct SampleResult {
  std::set<std::string> users;
  std::vector<std::string> shortfalls;
};

inline constexpr std::size_t kTopActive = 50;
inline constexpr std::size_t kPerQuartile = 50;

/// Per (subreddit, year): top 50 plus 50 uniform draws from each quartile of
/// the ranking. Each key's draw depends only on the seed and the key.
SampleResult sample_users(const YearlyRankings& yearly_activity, std::uint64_t rng_seed);

int utc_year(std::int64_t created_utc);

}  // namespace homophily
