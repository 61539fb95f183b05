#include "homophily/synthetic.hpp"

#include <algorithm>
#include <array>
#include <ctime>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "homophily/error.hpp"
#include "homophily/random.hpp"
#include "homophily/validation.hpp"

namespace homophily {

using nlohmann::json;

namespace {

constexpr std::array kAgreeBodies = {"I agree with this.", "Exactly, well said.", "Yes, that is correct."};
constexpr std::array kDisagreeBodies = {"That is wrong.", "No way, I disagree.", "Nope, that is incorrect."};
constexpr std::array kNeutralBodies = {"Interesting thought about topic {}.", "Thanks for sharing the details on {}."};
constexpr int kStrangers = 40;

std::int64_t year_start(int year) {
  std::tm tm{};
  tm.tm_year = year - 1900;
  tm.tm_mon = 0;
  tm.tm_mday = 1;
  return static_cast<std::int64_t>(timegm(&tm));
}

std::optional<Stance> stance_of(State s) {
  switch (s) {
    case State::IRAgree: case State::ERAgree: case State::GRAgree: return Stance::Agree;
    case State::IRNeutral: case State::ERNeutral: case State::GRNeutral: return Stance::Neutral;
    case State::IRDisagree: case State::ERDisagree: case State::GRDisagree: return Stance::Disagree;
    default: return std::nullopt;
  }
}

State initial_variant(State s) {
  switch (s) {
    case State::ERC: return State::IRC;
    case State::ERAgree: return State::IRAgree;
    case State::ERNeutral: return State::IRNeutral;
    case State::ERDisagree: return State::IRDisagree;
    default: return s;
  }
}

struct ThreadSlot {
  std::string id;
  std::string subreddit;
  bool own = false;
  /// Comments in the thread the agent may reply to without creating a response.
  std::vector<std::string> replyable;
};

class Renderer {
 public:
  Renderer(EventCorpus& corpus, const EventCorpusOptions& options) : corpus_(corpus), options_(options) {}

  void render(const EventCorpusUser& user, const TransitionModel& P) {
    const std::uint64_t key = stable_hash(user.user);
    rng_.seed(derive_seed(options_.seed, key));
    const auto sim = simulate_agent(user.policy, P, initial_family_start(), options_.states_per_user,
                                    derive_seed(options_.seed, key + 1));
    threads_.clear();
    own_events_.clear();
    home_ = user.home;
    user_ = user.user;

    const std::int64_t begin = year_start(options_.first_year);
    const std::int64_t span = year_start(options_.first_year + options_.years) - begin;
    const std::int64_t dt = span / static_cast<std::int64_t>(sim.size() + 1);
    std::vector<State> rendered;
    std::vector<std::int64_t> times;
    for (std::size_t k = 0; k < sim.size(); ++k) {
      const std::int64_t t = begin + static_cast<std::int64_t>(k + 1) * dt + uniform_int(0, dt / 4);
      rendered.push_back(render_state(sim.pairs[k].state, t));
      times.push_back(t);
    }

    Trajectory expected;
    expected.user = user.user;
    for (std::size_t k = 0; k + 1 < rendered.size(); ++k) {
      expected.pairs.push_back({rendered[k], sim.pairs[k].action});
      auto [it, inserted] = expected.year_marks.try_emplace(utc_year(times[k]), k, k + 1);
      if (!inserted) it->second.second = k + 1;
    }
    corpus_.expected[user.user] = std::move(expected);
    corpus_.home[user.user] = user.home;
    if (user.persona >= 0) corpus_.persona[user.user] = user.persona;
  }

  void chatter(std::size_t count) {
    const std::int64_t begin = year_start(options_.first_year);
    const std::int64_t end = year_start(options_.first_year + options_.years);
    for (std::size_t i = 0; i < count; ++i) {
      const std::int64_t t = uniform_int(begin, end - 10);
      const auto& sub = options_.subreddits[static_cast<std::size_t>(uniform_int(0, options_.subreddits.size() - 1))];
      const auto thread = add_event(stranger(), sub, t, EventKind::Thread, std::nullopt, std::nullopt, "Random chatter");
      add_event(stranger(), sub, t + 1, EventKind::Comment, thread, thread, "Thanks for sharing.");
    }
  }

 private:
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, std::max(lo, hi))(rng_);
  }
  bool chance(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }

  std::string stranger() { return fmt::format("stranger{:02d}", uniform_int(0, kStrangers - 1)); }

  std::string pick_subreddit() {
    if (options_.subreddits.size() < 2 || !chance(options_.away_share)) return home_;
    std::string sub;
    do {
      sub = options_.subreddits[static_cast<std::size_t>(uniform_int(0, options_.subreddits.size() - 1))];
    } while (sub == home_);
    return sub;
  }

  int pick_topic(const std::string& subreddit) {
    const auto it = std::find(options_.subreddits.begin(), options_.subreddits.end(), subreddit);
    const int g = static_cast<int>(it - options_.subreddits.begin());
    if (chance(0.7)) return (2 * g + static_cast<int>(uniform_int(0, 1))) % options_.num_topics;
    return static_cast<int>(uniform_int(0, options_.num_topics - 1));
  }

  std::string body_for(Stance s, int topic) {
    switch (s) {
      case Stance::Agree: return kAgreeBodies[static_cast<std::size_t>(uniform_int(0, kAgreeBodies.size() - 1))];
      case Stance::Disagree:
        return kDisagreeBodies[static_cast<std::size_t>(uniform_int(0, kDisagreeBodies.size() - 1))];
      case Stance::Neutral: break;
    }
    return fmt::format(fmt::runtime(kNeutralBodies[static_cast<std::size_t>(uniform_int(0, kNeutralBodies.size() - 1))]),
                       topic);
  }

  std::string add_event(const std::string& author, const std::string& subreddit, std::int64_t t, EventKind kind,
                        std::optional<std::string> parent, std::optional<std::string> thread, std::string text) {
    EventRecord e;
    e.event_id = fmt::format("e{:07d}", next_id_++);
    e.author = author;
    e.subreddit = subreddit;
    e.created_utc = t;
    e.kind = kind;
    e.parent_id = std::move(parent);
    e.thread_id = thread ? *thread : e.event_id;
    if (kind == EventKind::Thread) e.title = std::move(text);
    else e.body = std::move(text);
    corpus_.events.push_back(std::move(e));
    return corpus_.events.back().event_id;
  }

  void label(const std::string& id, std::optional<Stance> stance, std::optional<int> topic) {
    EventLabel l;
    if (stance && !chance(options_.unlabeled_share)) l.stance = stance;
    l.topic_id = topic;
    if (l.stance || l.topic_id) corpus_.labels.emplace_back(id, l);
  }

  // Deletes the body of the last event when its stance is carried by a label.
  void maybe_delete_last() {
    if (!options_.noise || !chance(0.05)) return;
    const auto& id = corpus_.events.back().event_id;
    const bool labeled = !corpus_.labels.empty() && corpus_.labels.back().first == id &&
                         corpus_.labels.back().second.stance;
    if (!labeled && stance_needed_) return;
    auto& e = corpus_.events.back();
    e.body.reset();
    e.removed = true;
  }

  ThreadSlot& new_stranger_thread(std::int64_t t, const std::string& subreddit) {
    const auto id = add_event(stranger(), subreddit, t - 3, EventKind::Thread, std::nullopt, std::nullopt,
                              fmt::format("Discussion in {}", subreddit));
    threads_.push_back({id, subreddit, false, {}});
    return threads_.back();
  }

  std::string fresh_stranger_comment(ThreadSlot& slot, std::int64_t t) {
    const auto id = add_event(stranger(), slot.subreddit, t - 1, EventKind::Comment, slot.id, slot.id,
                              "What do you all think?");
    slot.replyable.push_back(id);
    return id;
  }

  void own_comment(ThreadSlot& slot, const std::string& parent, std::int64_t t, std::optional<Stance> stance) {
    const int topic = pick_topic(slot.subreddit);
    const auto text = stance ? body_for(*stance, topic) : fmt::format("My take on topic {}.", topic);
    const auto id = add_event(user_, slot.subreddit, t, EventKind::Comment, parent, slot.id, text);
    stance_needed_ = stance.has_value();
    label(id, stance, topic);
    maybe_delete_last();
    slot.replyable.push_back(id);
    own_events_.push_back({id, slot.id});
  }

  State render_state(State s, std::int64_t t) {
    const auto stance = stance_of(s);
    switch (s) {
      case State::IT: {
        const auto sub = pick_subreddit();
        const int topic = pick_topic(sub);
        const auto id = add_event(user_, sub, t, EventKind::Thread, std::nullopt, std::nullopt,
                                  fmt::format("Question about topic {}", topic));
        label(id, std::nullopt, topic);
        threads_.push_back({id, sub, true, {}});
        own_events_.push_back({id, id});
        return s;
      }
      case State::IRC: {
        auto& slot = new_stranger_thread(t, pick_subreddit());
        own_comment(slot, slot.id, t, std::nullopt);
        return s;
      }
      case State::IRAgree: case State::IRNeutral: case State::IRDisagree: {
        auto& slot = new_stranger_thread(t, pick_subreddit());
        const auto parent = fresh_stranger_comment(slot, t);
        own_comment(slot, parent, t, stance);
        return s;
      }
      case State::ERC: {
        auto& slot = threads_[static_cast<std::size_t>(uniform_int(0, threads_.size() - 1))];
        own_comment(slot, slot.id, t, std::nullopt);
        return s;
      }
      case State::ERAgree: case State::ERNeutral: case State::ERDisagree: {
        std::vector<std::size_t> usable;
        for (std::size_t i = 0; i < threads_.size(); ++i)
          if (!threads_[i].own || !threads_[i].replyable.empty()) usable.push_back(i);
        if (usable.empty()) return render_state(initial_variant(s), t);
        auto& slot = threads_[usable[static_cast<std::size_t>(uniform_int(0, usable.size() - 1))]];
        const auto parent = slot.own || (!slot.replyable.empty() && chance(0.5))
                                ? slot.replyable[static_cast<std::size_t>(uniform_int(0, slot.replyable.size() - 1))]
                                : fresh_stranger_comment(slot, t);
        own_comment(slot, parent, t, stance);
        return s;
      }
      case State::GRAgree: case State::GRNeutral: case State::GRDisagree: {
        const auto lo = own_events_.size() > 5 ? own_events_.size() - 5 : 0;
        const auto& [parent, thread] = own_events_[static_cast<std::size_t>(uniform_int(lo, own_events_.size() - 1))];
        auto slot = std::find_if(threads_.begin(), threads_.end(), [&](const ThreadSlot& ts) { return ts.id == thread; });
        const int topic = pick_topic(slot->subreddit);
        const auto id = add_event(stranger(), slot->subreddit, t, EventKind::Comment, parent, thread,
                                  body_for(*stance, topic));
        stance_needed_ = true;
        label(id, stance, std::nullopt);
        maybe_delete_last();
        slot->replyable.push_back(id);
        if (options_.noise && chance(0.3)) {
          const auto deeper = add_event(stranger(), slot->subreddit, t + 1, EventKind::Comment, id, thread,
                                        "That is wrong.");
          slot->replyable.push_back(deeper);
        }
        return s;
      }
    }
    return s;
  }

  EventCorpus& corpus_;
  const EventCorpusOptions& options_;
  Rng rng_;
  std::uint64_t next_id_ = 0;
  std::vector<ThreadSlot> threads_;
  std::vector<std::pair<std::string, std::string>> own_events_;
  std::string home_;
  std::string user_;
  bool stance_needed_ = false;
};

}  // namespace

EventCorpus render_event_corpus(const std::vector<EventCorpusUser>& users, const TransitionModel& P,
                                const EventCorpusOptions& options) {
  if (options.subreddits.empty()) throw Error("synthetic corpus needs at least one subreddit");
  if (options.states_per_user < 1) throw Error("synthetic corpus needs at least one state per user");
  if (options.years < 1) throw Error("synthetic corpus must span at least one year");
  if (options.num_topics < 1) throw Error("synthetic corpus needs at least one topic");
  EventCorpus corpus;
  Renderer renderer(corpus, options);
  for (const auto& u : users) {
    if (u.user.rfind("stranger", 0) == 0) throw Error(fmt::format("user name '{}' is reserved", u.user));
    if (std::find(options.subreddits.begin(), options.subreddits.end(), u.home) == options.subreddits.end())
      throw Error(fmt::format("home subreddit '{}' of '{}' is not in the subreddit list", u.home, u.user));
    renderer.render(u, P);
  }
  if (options.noise) {
    renderer.chatter(users.size() * 5);
    corpus.malformed_lines = {R"({"event_id": "broken", "subreddit": )", R"({"event_id": "x1", "kind": "comment", "subreddit": "alpha", "author": "stranger00", "created_utc": 5})"};
  }
  std::stable_sort(corpus.events.begin(), corpus.events.end(), stream_order);
  return corpus;
}

std::vector<std::string> corpus_event_lines(const EventCorpus& corpus) {
  std::vector<std::string> lines;
  lines.reserve(corpus.events.size() + corpus.malformed_lines.size());
  std::size_t n = 0;
  for (const auto& e : corpus.events) {
    // Every seventh record uses raw pushshift field names.
    if (++n % 7 == 0) {
      json j;
      j["id"] = e.event_id;
      j["subreddit"] = e.subreddit;
      j["author"] = e.author;
      j["created_utc"] = std::to_string(e.created_utc);
      if (e.is_thread()) {
        j["title"] = e.title ? *e.title : "[deleted]";
        j["selftext"] = "";
      } else {
        j["link_id"] = "t3_" + e.thread_id;
        j["parent_id"] = (e.is_root_comment() ? "t3_" : "t1_") + *e.parent_id;
        j["body"] = e.body ? *e.body : "[deleted]";
      }
      lines.push_back(j.dump());
    } else {
      lines.push_back(to_json_line(e));
    }
    if (n == corpus.events.size() / 2)
      lines.insert(lines.end(), corpus.malformed_lines.begin(), corpus.malformed_lines.end());
  }
  return lines;
}

std::vector<std::string> corpus_label_lines(const EventCorpus& corpus) {
  std::vector<std::string> lines;
  lines.reserve(corpus.labels.size());
  for (const auto& [id, label] : corpus.labels) {
    json j;
    j["event_id"] = id;
    if (label.stance) j["stance"] = to_string(*label.stance);
    if (label.topic_id) j["topic_id"] = *label.topic_id;
    lines.push_back(j.dump());
  }
  return lines;
}

}  // namespace homophily
