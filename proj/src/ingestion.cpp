#include "homophily/ingestion.hpp"

#include <algorithm>
#include <ctime>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "homophily/error.hpp"
#include "homophily/io.hpp"
#include "homophily/random.hpp"

namespace homophily {

using nlohmann::json;

std::string_view to_string(EventKind kind) noexcept {
  return kind == EventKind::Thread ? "thread" : "comment";
}

std::string_view to_string(Stance stance) noexcept {
  switch (stance) {
    case Stance::Agree: return "agree";
    case Stance::Neutral: return "neutral";
    case Stance::Disagree: return "disagree";
  }
  return "neutral";
}

std::optional<Stance> parse_stance(std::string_view text) noexcept {
  if (text == "agree") return Stance::Agree;
  if (text == "neutral") return Stance::Neutral;
  if (text == "disagree") return Stance::Disagree;
  return std::nullopt;
}

namespace {

// pushshift fullnames carry a type prefix: t1_ (comment), t3_ (link).
std::string strip_fullname(std::string id) {
  if (id.size() > 3 && id[0] == 't' && id[2] == '_' && std::isdigit(static_cast<unsigned char>(id[1])))
    return id.substr(3);
  return id;
}

std::optional<std::string> string_field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(fmt::format("field '{}' is not a string", key));
  return it->get<std::string>();
}

std::int64_t timestamp_field(const json& j) {
  const auto it = j.find("created_utc");
  if (it == j.end()) throw Error("missing 'created_utc'");
  std::int64_t value = 0;
  if (it->is_number_integer()) {
    value = it->get<std::int64_t>();
  } else if (it->is_number_float()) {
    value = static_cast<std::int64_t>(it->get<double>());
  } else if (it->is_string()) {
    const auto s = it->get<std::string>();
    std::size_t consumed = 0;
    value = std::stoll(s, &consumed);
    if (consumed != s.size()) throw Error("'created_utc' is not an integer");
  } else {
    throw Error("'created_utc' is not an integer");
  }
  if (value < 0) throw Error("'created_utc' is negative");
  return value;
}

EventRecord record_from_json(const json& j) {
  if (!j.is_object()) throw Error("line is not a JSON object");
  EventRecord r;

  auto id = string_field(j, "event_id");
  if (!id) id = string_field(j, "id");
  if (!id || id->empty()) throw Error("missing 'id'");
  r.event_id = *id;

  const auto subreddit = string_field(j, "subreddit");
  if (!subreddit) throw Error("missing 'subreddit'");
  r.subreddit = *subreddit;
  const auto author = string_field(j, "author");
  if (!author) throw Error("missing 'author'");
  r.author = *author;
  r.created_utc = timestamp_field(j);

  const auto link_id = string_field(j, "link_id");
  auto parent = string_field(j, "parent_id");
  auto thread = string_field(j, "thread_id");
  if (link_id) {
    thread = strip_fullname(*link_id);
    if (parent) parent = strip_fullname(*parent);
  }

  if (const auto kind = string_field(j, "kind")) {
    if (*kind == "thread") {
      r.kind = EventKind::Thread;
    } else if (*kind == "comment") {
      r.kind = EventKind::Comment;
    } else {
      throw Error(fmt::format("unknown kind '{}'", *kind));
    }
  } else {
    r.kind = (parent || link_id) ? EventKind::Comment : EventKind::Thread;
  }

  if (r.kind == EventKind::Thread) {
    if (parent) throw Error("thread with parent_id");
    if (thread && *thread != r.event_id) throw Error("thread_id of a thread must equal its id");
    r.thread_id = r.event_id;
  } else {
    if (!parent || parent->empty()) throw Error("comment without parent_id");
    if (!thread || thread->empty()) throw Error("comment without thread_id");
    r.parent_id = std::move(parent);
    r.thread_id = std::move(*thread);
  }

  auto body = string_field(j, "body");
  if (!body && r.kind == EventKind::Thread) body = string_field(j, "selftext");
  if (body) {
    if (*body == "[deleted]" || *body == "[removed]") {
      r.removed = true;
    } else if (!body->empty()) {
      r.body = std::move(body);
    }
  }
  if (auto title = string_field(j, "title"); title && *title != "[deleted]" && *title != "[removed]")
    r.title = std::move(title);

  if (const auto stance = string_field(j, "stance")) {
    const auto parsed = parse_stance(*stance);
    if (!parsed) throw Error(fmt::format("invalid stance '{}'", *stance));
    if (r.kind != EventKind::Comment) throw Error("stance on a thread");
    r.stance = parsed;
  }
  if (const auto it = j.find("topic_id"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<long long>() < 0) throw Error("invalid topic_id");
    r.topic_id = it->get<int>();
  }
  return r;
}

void parse_into(ParseResult& result, std::string_view line, std::size_t line_no,
                std::string_view source) {
  if (line.find_first_not_of(" \t\r") == std::string_view::npos) return;
  auto [record, error] = parse_event_line(line);
  if (record) {
    result.records.push_back(std::move(*record));
  } else {
    ++result.skipped;
    result.diagnostics.push_back(source.empty() ? fmt::format("line {}: {}", line_no, error)
                                                : fmt::format("{}:{}: {}", source, line_no, error));
  }
}

}  // namespace

std::string to_json_line(const EventRecord& e) {
  json j;
  j["event_id"] = e.event_id;
  if (e.parent_id) j["parent_id"] = *e.parent_id;
  j["thread_id"] = e.thread_id;
  j["subreddit"] = e.subreddit;
  j["author"] = e.author;
  j["created_utc"] = e.created_utc;
  j["kind"] = to_string(e.kind);
  if (e.body) j["body"] = *e.body;
  else if (e.removed) j["body"] = "[deleted]";
  if (e.title) j["title"] = *e.title;
  if (e.stance) j["stance"] = to_string(*e.stance);
  if (e.topic_id) j["topic_id"] = *e.topic_id;
  return j.dump();
}

std::pair<std::optional<EventRecord>, std::string> parse_event_line(std::string_view line) {
  try {
    return {record_from_json(json::parse(line)), {}};
  } catch (const json::exception& e) {
    return {std::nullopt, fmt::format("malformed JSON ({})", e.what())};
  } catch (const std::exception& e) {
    return {std::nullopt, e.what()};
  }
}

ParseResult parse_event_stream(std::istream& in) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) parse_into(result, line, ++line_no, {});
  if (in.bad()) throw Error("I/O failure while reading event stream");
  return result;
}

ParseResult parse_event_lines(std::span<const std::string> lines) {
  ParseResult result;
  std::size_t line_no = 0;
  for (const auto& line : lines) parse_into(result, line, ++line_no, {});
  return result;
}

ParseResult read_event_files(const std::string& pattern) {
  const auto paths = io::glob(pattern);
  if (paths.empty()) throw Error(fmt::format("no input files match '{}'", pattern));
  ParseResult result;
  for (const auto& path : paths) {
    std::size_t line_no = 0;
    const auto source = path.string();
    io::for_each_line(path, [&](std::string_view line) { parse_into(result, line, ++line_no, source); });
  }
  return result;
}

std::vector<StreamItem> UserActivity::merged() const {
  std::vector<StreamItem> items;
  items.reserve(events.size() + responses.size());
  for (const auto& e : events) items.push_back({&e, StreamRole::Own});
  for (const auto& e : responses) items.push_back({&e, StreamRole::Response});
  std::stable_sort(items.begin(), items.end(),
                   [](const StreamItem& a, const StreamItem& b) { return stream_order(*a.event, *b.event); });
  return items;
}

EventIndex::EventIndex(std::span<const EventRecord> events) : events_(events) {
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const auto& e = events_[i];
    by_id_.emplace(e.event_id, i);
    by_author_[e.author].push_back(i);
    if (e.parent_id) children_[*e.parent_id].push_back(i);
  }
}

const EventRecord* EventIndex::find(std::string_view event_id) const {
  const auto it = by_id_.find(std::string(event_id));
  return it == by_id_.end() ? nullptr : &events_[it->second];
}

std::vector<std::string> EventIndex::authors() const {
  std::vector<std::string> names;
  names.reserve(by_author_.size());
  for (const auto& [name, _] : by_author_) names.push_back(name);
  std::sort(names.begin(), names.end());
  return names;
}

UserActivity EventIndex::activity(std::string_view user) const {
  UserActivity activity;
  activity.user = std::string(user);
  const auto it = by_author_.find(activity.user);
  if (it == by_author_.end()) return activity;

  for (const auto i : it->second) activity.events.push_back(events_[i]);
  for (const auto& own : activity.events) {
    const auto kids = children_.find(own.event_id);
    if (kids == children_.end()) continue;
    for (const auto k : kids->second) {
      if (events_[k].author != activity.user) activity.responses.push_back(events_[k]);
    }
  }
  std::sort(activity.events.begin(), activity.events.end(), stream_order);
  std::sort(activity.responses.begin(), activity.responses.end(), stream_order);
  return activity;
}

UserActivity first_order_responses(std::span<const EventRecord> all_events, std::string_view user) {
  return EventIndex(all_events).activity(user);
}

bool history_unavailable(const UserActivity& activity) noexcept {
  return !activity.events.empty() &&
         std::all_of(activity.events.begin(), activity.events.end(),
                     [](const EventRecord& e) { return e.removed; });
}

std::size_t HomeAssignment::total_comments() const noexcept {
  std::size_t total = 0;
  for (const auto& [_, n] : comment_counts) total += n;
  return total;
}

HomeAssignment home_subreddit(std::span<const EventRecord> events) {
  HomeAssignment home;
  if (!events.empty()) home.user = events.front().author;
  for (const auto& e : events) {
    if (e.kind == EventKind::Comment) ++home.comment_counts[e.subreddit];
  }
  std::size_t best = 0;
  for (const auto& [subreddit, n] : home.comment_counts) {
    if (n > best) {
      best = n;
      home.home_subreddit = subreddit;
    }
  }
  if (best == 0) throw Error(fmt::format("no home determinable for '{}': no comments", home.user));
  return home;
}

int utc_year(std::int64_t created_utc) {
  const auto t = static_cast<std::time_t>(created_utc);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return tm.tm_year + 1900;
}

YearlyRankings rank_yearly_activity(std::span<const EventRecord> events) {
  std::map<std::pair<std::string, int>, std::map<std::string, std::size_t>> counts;
  for (const auto& e : events) {
    if (e.author == "[deleted]") continue;
    ++counts[{e.subreddit, utc_year(e.created_utc)}][e.author];
  }
  YearlyRankings rankings;
  for (auto& [key, per_user] : counts) {
    std::vector<std::pair<std::string, std::size_t>> ranked(per_user.begin(), per_user.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    auto& out = rankings[key];
    for (auto& [user, _] : ranked) out.push_back(user);
  }
  return rankings;
}

SampleResult sample_users(const YearlyRankings& yearly_activity, std::uint64_t rng_seed) {
  SampleResult result;
  for (const auto& [key, ranking] : yearly_activity) {
    const auto& [subreddit, year] = key;
    Rng rng(derive_seed(rng_seed, stable_hash(fmt::format("{}\x1f{}", subreddit, year))));
    const auto n = ranking.size();

    const auto top = std::min(n, kTopActive);
    result.users.insert(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(top));
    if (top < kTopActive)
      result.shortfalls.push_back(fmt::format("{}/{}: top block has {} of {} users", subreddit, year, top, kTopActive));

    const auto block = n / 4;
    for (std::size_t q = 0; q < 4; ++q) {
      const auto begin = ranking.begin() + static_cast<std::ptrdiff_t>(q * block);
      const auto end = q == 3 ? ranking.end() : begin + static_cast<std::ptrdiff_t>(block);
      const auto size = static_cast<std::size_t>(end - begin);
      if (size <= kPerQuartile) {
        result.users.insert(begin, end);
        if (size < kPerQuartile)
          result.shortfalls.push_back(
              fmt::format("{}/{}: quartile {} has {} of {} users", subreddit, year, q + 1, size, kPerQuartile));
        continue;
      }
      std::vector<std::string> drawn;
      std::sample(begin, end, std::back_inserter(drawn), kPerQuartile, rng);
      result.users.insert(drawn.begin(), drawn.end());
    }
  }
  return result;
}

}  // namespace homophily
