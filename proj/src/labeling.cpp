#include "homophily/labeling.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <unordered_map>

#include <fmt/format.h>
#include <json.hpp>

#include "homophily/error.hpp"

namespace homophily {

using nlohmann::json;

namespace {

constexpr std::array kAgreeWords = {"agree",   "agreed", "agrees", "agreeing",  "exactly",
                                    "absolutely", "yes", "yep",    "yeah",      "true",
                                    "correct", "indeed", "+1",     "precisely", "definitely"};
constexpr std::array kDisagreeWords = {"disagree", "disagreed", "disagrees", "wrong",    "nope",
                                       "no",       "false",     "incorrect", "nonsense", "untrue",
                                       "bullshit", "ridiculous", "-1"};
constexpr std::array kNegators = {"not", "don't", "dont", "never", "isn't", "isnt", "doesn't", "hardly"};

struct Phrase {
  std::array<std::string_view, 2> words;
  Stance stance;
};
constexpr std::array kPhrases = {Phrase{{"no", "way"}, Stance::Disagree},
                                 Phrase{{"well", "said"}, Stance::Agree},
                                 Phrase{{"fair", "point"}, Stance::Agree},
                                 Phrase{{"good", "point"}, Stance::Agree}};

template <std::size_t N>
bool contains(const std::array<const char*, N>& words, std::string_view token) {
  return std::any_of(words.begin(), words.end(), [&](const char* w) { return token == w; });
}

LabelFile parse_labels(std::istream& in, std::string_view source) {
  LabelFile out;
  std::string line;
  std::size_t line_no = 0;
  auto where = [&] { return source.empty() ? fmt::format("line {}", line_no) : fmt::format("{}:{}", source, line_no); };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      out.errors.push_back(fmt::format("{}: malformed JSON", where()));
      continue;
    }
    if (!j.is_object() || !j.contains("event_id") || !j["event_id"].is_string()) {
      out.errors.push_back(fmt::format("{}: missing event_id", where()));
      continue;
    }
    EventLabel label;
    const auto id = j["event_id"].get<std::string>();
    if (const auto it = j.find("stance"); it != j.end() && !it->is_null()) {
      const auto parsed = it->is_string() ? parse_stance(it->get<std::string>()) : std::nullopt;
      if (!parsed) {
        out.errors.push_back(fmt::format("{}: invalid stance {} for '{}'", where(), it->dump(), id));
        continue;
      }
      label.stance = parsed;
    }
    // -1 is the outlier topic: the document stays unlabeled.
    if (const auto it = j.find("topic_id"); it != j.end() && !it->is_null() && *it != -1) {
      if (!it->is_number_integer() || it->get<long long>() < 0) {
        out.errors.push_back(fmt::format("{}: invalid topic_id for '{}'", where(), id));
        continue;
      }
      label.topic_id = it->get<int>();
    }
    if (out.labels.contains(id)) out.warnings.push_back(fmt::format("{}: duplicate label for '{}' overrides earlier", where(), id));
    out.labels.insert_or_assign(id, label);
  }
  if (in.bad()) throw Error("I/O failure while reading label file");
  return out;
}

}  // namespace

LabelFile parse_label_stream(std::istream& in) { return parse_labels(in, {}); }

LabelFile load_label_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot read label file '{}'", path.string()));
  return parse_labels(in, path.string());
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    while (!current.empty() && current.back() == '\'') current.pop_back();
    const auto start = current.find_first_not_of('\'');
    if (start != std::string::npos) tokens.push_back(current.substr(start));
    current.clear();
  };
  for (const char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '\'' || ((c == '+' || c == '-') && current.empty())) {
      current += static_cast<char>(std::tolower(u));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

Stance lexicon_stance(std::string_view /*parent_text*/, std::string_view reply_text) {
  const auto tokens = tokenize(reply_text);
  int agree = 0;
  int disagree = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const bool negated = i > 0 && contains(kNegators, tokens[i - 1]);
    if (contains(kAgreeWords, t)) {
      (negated ? disagree : agree) += 1;
    } else if (contains(kDisagreeWords, t)) {
      disagree += 1;
    }
    if (i + 1 < tokens.size()) {
      for (const auto& p : kPhrases) {
        if (t == p.words[0] && tokens[i + 1] == p.words[1]) (p.stance == Stance::Agree ? agree : disagree) += 1;
      }
    }
  }
  if (agree > disagree) return Stance::Agree;
  if (disagree > agree) return Stance::Disagree;
  return Stance::Neutral;
}

bool needs_stance(const EventRecord& event, StreamRole role) noexcept {
  if (event.kind != EventKind::Comment) return false;
  return role == StreamRole::Response || event.is_reply();
}

LabelingStats& LabelingStats::operator+=(const LabelingStats& other) noexcept {
  external += other.external;
  lexicon += other.lexicon;
  unlabeled += other.unlabeled;
  rejected_topic += other.rejected_topic;
  return *this;
}

LabelingStats apply_labels(UserActivity& activity, const LabelMap& labels, bool lexicon_fallback,
                           const EventIndex* parents, int num_topics) {
  LabelingStats stats;
  std::unordered_map<std::string_view, std::string_view> own_text;
  for (const auto& e : activity.events) {
    if (e.body) own_text.emplace(e.event_id, *e.body);
    else if (e.title) own_text.emplace(e.event_id, *e.title);
  }
  auto parent_text = [&](const EventRecord& e) -> std::string_view {
    if (!e.parent_id) return {};
    if (const auto it = own_text.find(*e.parent_id); it != own_text.end()) return it->second;
    if (parents) {
      if (const auto* p = parents->find(*e.parent_id)) {
        if (p->body) return *p->body;
        if (p->title) return *p->title;
      }
    }
    return {};
  };

  auto label_one = [&](EventRecord& e, StreamRole role) {
    const auto it = labels.find(e.event_id);
    if (it != labels.end() && it->second.topic_id) {
      if (num_topics > 0 && *it->second.topic_id >= num_topics) {
        ++stats.rejected_topic;
      } else {
        e.topic_id = it->second.topic_id;
      }
    }
    if (!needs_stance(e, role)) return;
    if (it != labels.end() && it->second.stance) {
      e.stance = it->second.stance;
      ++stats.external;
    } else if (e.stance) {
      ++stats.external;
    } else if (lexicon_fallback && e.body) {
      e.stance = lexicon_stance(parent_text(e), *e.body);
      ++stats.lexicon;
    } else {
      ++stats.unlabeled;
    }
  };
  for (auto& e : activity.events) label_one(e, StreamRole::Own);
  for (auto& e : activity.responses) label_one(e, StreamRole::Response);
  return stats;
}

TopicVector build_topic_vector(std::string_view user, std::span<const EventRecord> user_events,
                               const LabelMap& topic_labels, int num_topics) {
  if (num_topics <= 0) throw Error("number of topics must be positive");
  TopicVector v;
  v.user = std::string(user);
  v.num_topics = num_topics;
  v.counts = Eigen::VectorXd::Zero(num_topics);
  for (const auto& e : user_events) {
    std::optional<int> topic = e.topic_id;
    if (const auto it = topic_labels.find(e.event_id); it != topic_labels.end() && it->second.topic_id)
      topic = it->second.topic_id;
    if (!topic) {
      ++v.unlabeled;
      continue;
    }
    if (*topic < 0 || *topic >= num_topics)
      throw Error(fmt::format("topic_id {} of '{}' outside [0, {})", *topic, e.event_id, num_topics));
    v.counts[*topic] += 1.0;
    ++v.labeled;
  }
  return v;
}

}  // namespace homophily
