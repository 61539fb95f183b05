#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include <unistd.h>

#include "homophily/ingestion.hpp"
#include "homophily/mdp.hpp"
#include "homophily/random.hpp"

namespace homophily::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("homophily-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline EventRecord thread(std::string id, std::string author, std::int64_t t, std::string subreddit = "a") {
  EventRecord e;
  e.event_id = id;
  e.thread_id = std::move(id);
  e.author = std::move(author);
  e.created_utc = t;
  e.kind = EventKind::Thread;
  e.subreddit = std::move(subreddit);
  e.title = "title";
  return e;
}

inline EventRecord comment(std::string id, std::string parent, std::string thread_id, std::string author,
                           std::int64_t t, std::optional<Stance> stance = std::nullopt, std::string subreddit = "a") {
  EventRecord e;
  e.event_id = std::move(id);
  e.parent_id = std::move(parent);
  e.thread_id = std::move(thread_id);
  e.author = std::move(author);
  e.created_utc = t;
  e.kind = EventKind::Comment;
  e.subreddit = std::move(subreddit);
  e.body = "text";
  e.stance = stance;
  return e;
}

inline Policy random_stochastic(std::uint64_t seed, int rows = kNumStates, int cols = kNumActions) {
  Rng rng(seed);
  std::exponential_distribution<double> exp(1.0);
  Policy p(rows, cols);
  for (int s = 0; s < rows; ++s) {
    for (int a = 0; a < cols; ++a) p(s, a) = exp(rng) + 1e-12;
    p.row(s) /= p.row(s).sum();
  }
  return p;
}

inline StateWeights random_weights(std::uint64_t seed) {
  Rng rng(seed);
  std::exponential_distribution<double> exp(1.0);
  StateWeights w;
  for (int s = 0; s < kNumStates; ++s) w[s] = exp(rng);
  return w / w.sum();
}

}  // namespace homophily::testing
