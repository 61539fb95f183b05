#include "homophily/stages.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "homophily/error.hpp"
#include "homophily/io.hpp"
#include "homophily/parallel.hpp"
#include "homophily/random.hpp"
#include "homophily/stats.hpp"
#include "homophily/synthetic.hpp"
#include "homophily/validation.hpp"

namespace homophily {

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return "";
  return fmt::format("{:.17g}", v);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(fmt::format("cannot create directory '{}': {}", dir.string(), ec.message()));
}

fs::path write_output(StageOutput& out, const fs::path& path, std::string_view content) {
  io::write_file(path, content);
  out.written.push_back(path);
  return path;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) {
    s += l;
    s += '\n';
  }
  return s;
}

/// Calls fn(json, line_no) for each nonblank line; errors name file and line.
template <typename Fn>
void for_each_json_line(const fs::path& path, Fn&& fn) {
  if (!fs::exists(path)) throw Error(fmt::format("missing file '{}'", path.string()));
  std::size_t line_no = 0;
  io::for_each_line(path, [&](std::string_view line) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) return;
    try {
      fn(json::parse(line), line_no);
    } catch (const json::exception& e) {
      throw Error(fmt::format("{}:{}: malformed record ({})", path.string(), line_no, e.what()));
    } catch (const Error& e) {
      throw Error(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  });
}

fs::path activity_subdir(const fs::path& dir) {
  const auto sub = dir / "activity";
  return fs::is_directory(sub) ? sub : dir;
}

json policy_matrix_json(const Policy& p) {
  json rows = json::array();
  for (Eigen::Index s = 0; s < p.rows(); ++s) {
    json row = json::array();
    for (Eigen::Index a = 0; a < p.cols(); ++a) row.push_back(p(s, a));
    rows.push_back(std::move(row));
  }
  return rows;
}

Policy policy_from_json(const json& j) {
  if (!j.is_array() || j.size() != kNumStates) throw Error("policy must have 12 rows");
  Policy p(kNumStates, kNumActions);
  for (int s = 0; s < kNumStates; ++s) {
    const auto& row = j.at(static_cast<std::size_t>(s));
    if (!row.is_array() || row.size() != kNumActions) throw Error("policy rows must have 6 entries");
    for (int a = 0; a < kNumActions; ++a) p(s, a) = row.at(static_cast<std::size_t>(a)).get<double>();
  }
  return p;
}

template <typename Vec>
json vector_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

const char* direction(StreamRole r) { return r == StreamRole::Own ? "own" : "response"; }

}  // namespace

// ---- ingest ---------------------------------------------------------------

std::vector<std::string> read_user_list(const fs::path& path) {
  std::vector<std::string> users;
  std::set<std::string> seen;
  for (auto line : io::read_lines(path)) {
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t");
    line = line.substr(b, e - b + 1);
    if (seen.insert(line).second) users.push_back(line);
  }
  return users;
}

void write_activity_file(const fs::path& path, const UserActivity& activity) {
  std::string content;
  for (const auto& item : activity.merged()) {
    auto j = json::parse(to_json_line(*item.event));
    j["direction"] = direction(item.role);
    content += j.dump();
    content += '\n';
  }
  io::write_file(path, content);
}

std::vector<ActivityFile> read_activity_dir(const fs::path& dir) {
  const auto base = activity_subdir(dir);
  if (!fs::is_directory(base)) throw Error(fmt::format("activity directory '{}' not found", dir.string()));
  std::vector<ActivityFile> out;
  for (const auto& path : io::glob((base / "*.jsonl").string())) {
    ActivityFile f;
    f.path = path;
    f.activity.user = io::user_from_file_stem(path.stem().string());
    for_each_json_line(path, [&](const json& j, std::size_t) {
      const auto dir_it = j.find("direction");
      if (dir_it == j.end() || !dir_it->is_string()) throw Error("missing 'direction'");
      auto [record, error] = parse_event_line(j.dump());
      if (!record) throw Error(error);
      const auto d = dir_it->get<std::string>();
      if (d == "own") f.activity.events.push_back(std::move(*record));
      else if (d == "response") f.activity.responses.push_back(std::move(*record));
      else throw Error(fmt::format("unknown direction '{}'", d));
    });
    out.push_back(std::move(f));
  }
  return out;
}

StageOutput run_ingest(const IngestOptions& options) {
  StageOutput out;
  const auto parsed = read_event_files(options.input_glob);
  for (const auto& d : parsed.diagnostics) spdlog::debug("ingest: {}", d);
  if (parsed.skipped > 0) spdlog::warn("ingest: skipped {} malformed lines", parsed.skipped);

  const EventIndex index(parsed.records);
  std::vector<std::string> users;
  if (options.users_file) {
    users = read_user_list(*options.users_file);
  } else {
    for (auto& a : index.authors())
      if (a != "[deleted]") users.push_back(std::move(a));
  }
  std::sort(users.begin(), users.end());

  const auto act_dir = options.out_dir / "activity";
  ensure_dir(act_dir);
  std::vector<UserActivity> activities(users.size());
  parallel_for(users.size(), options.jobs, [&](std::size_t i) { activities[i] = index.activity(users[i]); });

  std::vector<std::string> home_rows = {"user,home_subreddit,total_comments"};
  std::size_t written = 0;
  json missing = json::array();
  json unavailable = json::array();
  json no_home = json::array();
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto& a = activities[i];
    if (a.events.empty()) {
      missing.push_back(users[i]);
      continue;
    }
    if (history_unavailable(a)) {
      unavailable.push_back(users[i]);
      continue;
    }
    const auto path = act_dir / (io::file_stem_for(users[i]) + ".jsonl");
    write_activity_file(path, a);
    out.written.push_back(path);
    ++written;
    try {
      const auto home = home_subreddit(a.events);
      home_rows.push_back(
          fmt::format("{},{},{}", io::csv_field(users[i]), io::csv_field(home.home_subreddit), home.total_comments()));
    } catch (const Error&) {
      no_home.push_back(users[i]);
    }
  }
  write_output(out, options.out_dir / kHomesFile, join_lines(home_rows));
  out.summary = {{"records", parsed.records.size()}, {"skipped_lines", parsed.skipped},
                 {"users_requested", users.size()}, {"users_written", written},
                 {"users_without_events", missing}, {"users_history_unavailable", unavailable},
                 {"users_without_home", no_home}};
  write_output(out, options.out_dir / kIngestSummaryFile, out.summary.dump(2) + "\n");
  return out;
}

// ---- label ----------------------------------------------------------------

StageOutput run_label(const LabelOptions& options) {
  StageOutput out;
  auto files = read_activity_dir(options.activity_dir);
  LabelFile labels;
  if (options.labels_file) {
    labels = load_label_file(*options.labels_file);
    for (const auto& w : labels.warnings) spdlog::warn("labels: {}", w);
    for (const auto& e : labels.errors) spdlog::warn("labels: {}", e);
  }

  int num_topics = 0;
  if (options.num_topics) {
    if (*options.num_topics <= 0) throw ConfigError("num_topics must be positive");
    num_topics = *options.num_topics;
  } else {
    for (const auto& [id, l] : labels.labels)
      if (l.topic_id) num_topics = std::max(num_topics, *l.topic_id + 1);
    for (const auto& f : files)
      for (const auto& e : f.activity.events)
        if (e.topic_id) num_topics = std::max(num_topics, *e.topic_id + 1);
    num_topics = std::max(num_topics, 1);
  }

  std::vector<LabelingStats> stats(files.size());
  std::vector<TopicRecord> topics(files.size());
  parallel_for(files.size(), options.jobs, [&](std::size_t i) {
    auto& a = files[i].activity;
    stats[i] = apply_labels(a, labels.labels, options.lexicon_fallback, nullptr, num_topics);
    topics[i].total = build_topic_vector(a.user, a.events, {}, num_topics);
    std::map<int, std::vector<EventRecord>> by_year;
    for (const auto& e : a.events) by_year[utc_year(e.created_utc)].push_back(e);
    for (const auto& [year, events] : by_year) {
      const auto v = build_topic_vector(a.user, events, {}, num_topics);
      topics[i].yearly[year] = v.counts;
    }
  });

  const auto act_dir = options.out_dir / "activity";
  ensure_dir(act_dir);
  LabelingStats total;
  std::vector<std::string> topic_lines;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto path = act_dir / files[i].path.filename();
    write_activity_file(path, files[i].activity);
    out.written.push_back(path);
    total += stats[i];
    const auto& t = topics[i];
    json yearly = json::object();
    for (const auto& [year, counts] : t.yearly) yearly[std::to_string(year)] = vector_json(counts);
    topic_lines.push_back(json{{"user", t.total.user},
                               {"num_topics", num_topics},
                               {"counts", vector_json(t.total.counts)},
                               {"labeled", t.total.labeled},
                               {"unlabeled", t.total.unlabeled},
                               {"yearly", yearly}}
                              .dump());
  }
  write_output(out, options.out_dir / kTopicsFile, join_lines(topic_lines));
  out.summary = {{"users", files.size()},
                 {"num_topics", num_topics},
                 {"stance_external", total.external},
                 {"stance_lexicon", total.lexicon},
                 {"stance_unlabeled", total.unlabeled},
                 {"topics_rejected", total.rejected_topic},
                 {"label_records", labels.labels.size()},
                 {"label_errors", labels.errors.size()},
                 {"label_warnings", labels.warnings.size()}};
  write_output(out, options.out_dir / kLabelSummaryFile, out.summary.dump(2) + "\n");
  return out;
}

std::map<std::string, TopicRecord> read_topics(const fs::path& path) {
  std::map<std::string, TopicRecord> out;
  auto to_vec = [](const json& arr) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    return v;
  };
  for_each_json_line(path, [&](const json& j, std::size_t) {
    TopicRecord r;
    r.total.user = j.at("user").get<std::string>();
    r.total.num_topics = j.at("num_topics").get<int>();
    r.total.counts = to_vec(j.at("counts"));
    r.total.labeled = j.at("labeled").get<std::size_t>();
    r.total.unlabeled = j.value("unlabeled", std::size_t{0});
    if (r.total.counts.size() != r.total.num_topics) throw Error("topic count vector does not match num_topics");
    if (const auto it = j.find("yearly"); it != j.end())
      for (const auto& [year, counts] : it->items()) r.yearly[std::stoi(year)] = to_vec(counts);
    out[r.total.user] = std::move(r);
  });
  return out;
}

// ---- encode ---------------------------------------------------------------

json trajectory_header() {
  json states = json::array();
  for (const auto n : kStateNames) states.push_back(std::string(n));
  json actions = json::array();
  for (const auto n : kActionNames) actions.push_back(std::string(n));
  return {{"header", {{"states", states}, {"actions", actions}}}};
}

json trajectory_to_json(const Trajectory& t) {
  json pairs = json::array();
  for (const auto& p : t.pairs) pairs.push_back({index(p.state), index(p.action)});
  json years = json::object();
  for (const auto& [year, range] : t.year_marks) years[std::to_string(year)] = {range.first, range.second};
  return {{"user", t.user}, {"pairs", pairs}, {"years", years}};
}

void write_trajectories(const fs::path& path, const std::vector<Trajectory>& trajectories) {
  std::string content = trajectory_header().dump() + "\n";
  for (const auto& t : trajectories) content += trajectory_to_json(t).dump() + "\n";
  io::write_file(path, content);
}

std::vector<Trajectory> read_trajectories(const fs::path& path) {
  std::vector<Trajectory> out;
  for_each_json_line(path, [&](const json& j, std::size_t) {
    if (!j.is_object()) throw Error("record is not an object");
    if (j.contains("header")) return;
    Trajectory t;
    t.user = j.at("user").get<std::string>();
    for (const auto& p : j.at("pairs")) {
      if (!p.is_array() || p.size() != 2) throw Error("pair must be [state, action]");
      const int s = p[0].get<int>();
      const int a = p[1].get<int>();
      if (s < 0 || s >= kNumStates || a < 0 || a >= kNumActions)
        throw Error(fmt::format("pair [{}, {}] out of range", s, a));
      t.pairs.push_back({static_cast<State>(s), static_cast<Action>(a)});
    }
    if (const auto it = j.find("years"); it != j.end()) {
      for (const auto& [year, range] : it->items()) {
        const auto b = range.at(0).get<std::size_t>();
        const auto e = range.at(1).get<std::size_t>();
        if (b > e || e > t.pairs.size()) throw Error(fmt::format("year range for {} out of bounds", year));
        t.year_marks[std::stoi(year)] = {b, e};
      }
    }
    out.push_back(std::move(t));
  });
  return out;
}

json transitions_to_json(const TransitionModel& P) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < P.kernel.rows(); ++r) rows.push_back(vector_json(P.kernel.row(r)));
  json header = trajectory_header()["header"];
  return {{"states", header["states"]}, {"actions", header["actions"]}, {"alpha", P.smoothing_alpha},
          {"layout", "row = state * 6 + action, column = next state"}, {"kernel", rows}};
}

TransitionModel transitions_from_json(const json& j) {
  TransitionModel P(kNumStates, kNumActions);
  P.smoothing_alpha = j.value("alpha", 0.0);
  const auto& rows = j.at("kernel");
  if (!rows.is_array() || rows.size() != static_cast<std::size_t>(kNumStates * kNumActions))
    throw Error("transition kernel must have 72 rows");
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != kNumStates) throw Error("transition kernel rows must have 12 entries");
    for (std::size_t c = 0; c < kNumStates; ++c)
      P.kernel(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
  }
  if (!P.valid(1e-9)) throw Error("transition kernel rows must be probability distributions");
  return P;
}

StageOutput run_encode(const EncodeOptions& options) {
  StageOutput out;
  const auto files = read_activity_dir(options.activity_dir);
  std::vector<EncodeResult> results(files.size());
  parallel_for(files.size(), options.jobs, [&](std::size_t i) { results[i] = encode_trajectory(files[i].activity); });

  std::vector<Trajectory> trajectories;
  std::size_t missing_stance = 0;
  std::size_t trimmed = 0;
  json excluded = json::array();
  for (auto& r : results) {
    missing_stance += r.missing_stance;
    auto& t = r.trajectory;
    std::size_t lead = 0;
    while (lead < t.pairs.size() && !is_initial(t.pairs[lead].state)) ++lead;
    if (lead > 0 && lead < t.pairs.size()) {
      // Re-slice so the trajectory starts in the Initial family.
      Trajectory s;
      s.user = t.user;
      s.pairs.assign(t.pairs.begin() + static_cast<std::ptrdiff_t>(lead), t.pairs.end());
      for (const auto& [year, range] : t.year_marks) {
        const auto b = std::max(range.first, lead);
        if (range.second > b) s.year_marks[year] = {b - lead, range.second - lead};
      }
      trimmed += lead;
      t = std::move(s);
    } else if (lead == t.pairs.size()) {
      t.pairs.clear();
    }
    if (t.empty()) {
      excluded.push_back(t.user);
      continue;
    }
    if (const auto violation = check_trajectory(t))
      throw Error(fmt::format("encoded trajectory of '{}' is invalid: {}", t.user, *violation));
    trajectories.push_back(std::move(t));
  }
  if (missing_stance > 0) spdlog::warn("encode: {} stance-bearing events had no stance; encoded as neutral", missing_stance);
  std::sort(trajectories.begin(), trajectories.end(), [](const auto& a, const auto& b) { return a.user < b.user; });

  ensure_dir(options.out_dir);
  write_trajectories(options.out_dir / kTrajectoriesFile, trajectories);
  out.written.push_back(options.out_dir / kTrajectoriesFile);
  const auto estimate = estimate_transitions(trajectories, options.alpha);
  write_output(out, options.out_dir / kTransitionsFile, transitions_to_json(estimate.model).dump(1) + "\n");
  std::size_t pairs = 0;
  for (const auto& t : trajectories) pairs += t.size();
  out.summary = {{"users", trajectories.size()}, {"pairs", pairs}, {"excluded_empty", excluded},
                 {"missing_stance", missing_stance}, {"trimmed_leading_pairs", trimmed},
                 {"unseen_rows", estimate.unseen_rows}};
  return out;
}

// ---- learn ----------------------------------------------------------------

namespace {

std::string_view to_string(StartMode m) {
  switch (m) {
    case StartMode::LikelihoodMatched: return "likelihood-matched";
    case StartMode::EmpiricalStates: return "empirical-states";
    case StartMode::InitialFamily: break;
  }
  return "initial-family";
}

StartMode parse_start_mode(const std::string& s) {
  if (s == "likelihood-matched") return StartMode::LikelihoodMatched;
  if (s == "empirical-states") return StartMode::EmpiricalStates;
  if (s == "initial-family") return StartMode::InitialFamily;
  throw ConfigError(fmt::format("unknown start mode '{}'", s));
}

}  // namespace

json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"epochs", c.epochs},         {"gamma", c.gamma},
          {"epsilon", c.epsilon},             {"init_stddev", c.init_stddev}, {"seed", c.rng_seed},
          {"start_mode", to_string(c.start_mode)}, {"visitation_tol", c.visitation_tol},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.gamma = j.value("gamma", c.gamma);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.init_stddev = j.value("init_stddev", c.init_stddev);
    c.visitation_tol = j.value("visitation_tol", c.visitation_tol);
    if (j.contains("start_mode")) c.start_mode = parse_start_mode(j.at("start_mode").get<std::string>());
    if (const auto it = j.find("adam"); it != j.end()) {
      c.adam.beta1 = it->value("beta1", c.adam.beta1);
      c.adam.beta2 = it->value("beta2", c.adam.beta2);
      c.adam.eps = it->value("eps", c.adam.eps);
    }
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("invalid training configuration: {}", e.what()));
  }
  if (!(c.learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (c.epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (!(c.gamma > 0 && c.gamma < 1)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(c.epsilon > 0)) throw ConfigError("epsilon must be positive");
  return c;
}

std::string train_config_hash(const TrainConfig& config) {
  return io::sha256_hex(train_config_to_json(config).dump()).substr(0, 16);
}

json policy_to_json(const PolicyEntry& e) {
  json j = {{"user", e.record.user},
            {"policy", policy_matrix_json(e.record.policy)},
            {"state_weights", vector_json(e.record.weights)},
            {"config_hash", e.config_hash}};
  if (e.year) j["year"] = *e.year;
  return j;
}

std::vector<PolicyEntry> read_policies(const fs::path& path) {
  std::vector<PolicyEntry> out;
  for_each_json_line(path, [&](const json& j, std::size_t) {
    PolicyEntry e;
    e.record.user = j.at("user").get<std::string>();
    e.record.policy = policy_from_json(j.at("policy"));
    if (!is_row_stochastic(e.record.policy, 1e-9)) throw Error(fmt::format("policy of '{}' is not row-stochastic", e.record.user));
    const auto& w = j.at("state_weights");
    if (!w.is_array() || w.size() != kNumStates) throw Error("state_weights must have 12 entries");
    for (int s = 0; s < kNumStates; ++s) e.record.weights[s] = w.at(static_cast<std::size_t>(s)).get<double>();
    e.config_hash = j.value("config_hash", std::string{});
    if (j.contains("year")) e.year = j.at("year").get<int>();
    out.push_back(std::move(e));
  });
  return out;
}

StageOutput run_learn(const LearnOptions& options) {
  StageOutput out;
  const auto traj_path = options.trajectories_dir / kTrajectoriesFile;
  const auto trajectories = read_trajectories(traj_path);
  TransitionModel P;
  const auto trans_path = options.trajectories_dir / kTransitionsFile;
  if (fs::exists(trans_path)) {
    try {
      P = transitions_from_json(json::parse(io::read_file(trans_path)));
    } catch (const json::exception& e) {
      throw Error(fmt::format("{}: malformed transitions ({})", trans_path.string(), e.what()));
    } catch (const Error& e) {
      throw Error(fmt::format("{}: {}", trans_path.string(), e.what()));
    }
  } else {
    P = estimate_transitions(trajectories, 1.0).model;
  }
  const auto hash = train_config_hash(options.train);

  struct Job {
    std::size_t traj;
    std::optional<int> year;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    if (trajectories[i].empty()) throw Error(fmt::format("{}: empty trajectory for '{}'", traj_path.string(), trajectories[i].user));
    jobs.push_back({i, std::nullopt});
    if (!options.yearly) continue;
    for (const auto& [year, range] : trajectories[i].year_marks)
      if (range.second - range.first >= options.min_year_pairs) jobs.push_back({i, year});
  }

  std::vector<PolicyEntry> results(jobs.size());
  parallel_for(jobs.size(), options.jobs, [&](std::size_t j) {
    const auto& full = trajectories[jobs[j].traj];
    const Trajectory t = jobs[j].year ? full.slice_year(*jobs[j].year) : full;
    TrainConfig cfg = options.train;
    cfg.rng_seed = derive_seed(options.train.rng_seed,
                               stable_hash(full.user) ^ (jobs[j].year ? mix_seed(static_cast<std::uint64_t>(*jobs[j].year)) : 0));
    try {
      const auto trained = train_irl(t, P, cfg);
      results[j] = {{full.user, trained.policy, state_weights(t)}, jobs[j].year, hash};
    } catch (const Error& e) {
      throw Error(fmt::format("training '{}'{} failed: {}", full.user,
                              jobs[j].year ? fmt::format(" ({})", *jobs[j].year) : std::string{}, e.what()));
    }
  });

  ensure_dir(options.out_dir);
  std::vector<std::string> overall;
  std::vector<std::string> yearly;
  for (const auto& r : results) (r.year ? yearly : overall).push_back(policy_to_json(r).dump());
  write_output(out, options.out_dir / kPoliciesFile, join_lines(overall));
  write_output(out, options.out_dir / kYearlyPoliciesFile, join_lines(yearly));
  out.summary = {{"users", overall.size()}, {"yearly_policies", yearly.size()}, {"config_hash", hash},
                 {"train", train_config_to_json(options.train)}};
  return out;
}

// ---- homophily ------------------------------------------------------------

std::map<std::string, std::string> read_groups(const fs::path& path) {
  const auto lines = io::read_lines(path);
  if (lines.empty()) throw Error(fmt::format("groups file '{}' is empty", path.string()));
  const auto header = io::split_csv_line(lines.front());
  const auto col = [&](std::string_view name) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto user_col = col("user");
  auto group_col = col("home_subreddit");
  if (!group_col) group_col = col("group");
  if (!user_col || !group_col)
    throw Error(fmt::format("groups file '{}' needs 'user' and 'home_subreddit' (or 'group') columns", path.string()));
  std::map<std::string, std::string> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = io::split_csv_line(lines[i]);
    if (fields.size() <= std::max(*user_col, *group_col))
      throw Error(fmt::format("{}:{}: too few columns", path.string(), i + 1));
    out[fields[*user_col]] = fields[*group_col];
  }
  return out;
}

void write_matrix_csv(const fs::path& path, const HomophilyMatrix& m) {
  std::string s;
  for (const auto& l : m.labels) s += "," + io::csv_field(l);
  s += "\n";
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    s += io::csv_field(m.labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) s += "," + (m.defined(i, j) ? num(m.values(i, j)) : std::string{});
    s += "\n";
  }
  io::write_file(path, s);
}

StageOutput run_homophily(const HomophilyOptions& options) {
  StageOutput out;
  std::map<std::string, PolicyRecord> policies;
  for (auto& e : read_policies(options.policies_dir / kPoliciesFile)) policies[e.record.user] = std::move(e.record);
  std::map<std::string, std::map<int, PolicyRecord>> yearly_policies;
  if (const auto yp = options.policies_dir / kYearlyPoliciesFile; fs::exists(yp))
    for (auto& e : read_policies(yp))
      if (e.year) yearly_policies[e.record.user][*e.year] = std::move(e.record);
  std::map<std::string, TopicRecord> topics;
  if (const auto tp = options.topics_dir / kTopicsFile; fs::exists(tp)) topics = read_topics(tp);
  else spdlog::warn("homophily: no topic vectors at '{}'; cosine metrics undefined", tp.string());
  const auto membership = read_groups(options.groups_csv);

  Groups groups;
  std::map<std::string, std::string> group_of;
  for (const auto& [user, group] : membership) {
    if (!policies.contains(user)) continue;
    groups[group].push_back(user);
    group_of[user] = group;
  }
  if (groups.empty()) throw Error("no user has both a group and a policy");

  const PairMetric swkl_metric = [&](const std::string& a, const std::string& b) -> std::optional<double> {
    return swkl(policies.at(a), policies.at(b));
  };
  const PairMetric cosine_metric = [&](const std::string& a, const std::string& b) -> std::optional<double> {
    const auto ta = topics.find(a);
    const auto tb = topics.find(b);
    if (ta == topics.end() || tb == topics.end()) return std::nullopt;
    if (!ta->second.total.defined_for_cosine() || !tb->second.total.defined_for_cosine()) return std::nullopt;
    return cosine_distance(ta->second.total.counts, tb->second.total.counts);
  };
  const auto swkl_m = group_mean_matrix(groups, swkl_metric, Metric::Swkl, options.jobs);
  const auto cos_m = group_mean_matrix(groups, cosine_metric, Metric::Cosine, options.jobs);
  ensure_dir(options.out_dir);
  write_matrix_csv(options.out_dir / kSwklMatrixFile, swkl_m);
  out.written.push_back(options.out_dir / kSwklMatrixFile);
  write_matrix_csv(options.out_dir / kCosineMatrixFile, cos_m);
  out.written.push_back(options.out_dir / kCosineMatrixFile);

  // Correlation of user-pair SWKL against user-pair cosine per group pair.
  const auto pairs = group_pairs(swkl_m.labels);
  struct Test {
    SpearmanResult result;
    bool tested = false;
  };
  std::vector<Test> tests(pairs.size());
  parallel_for(pairs.size(), options.jobs, [&](std::size_t c) {
    const auto& ga = groups.at(pairs[c].first);
    const auto& gb = groups.at(pairs[c].second);
    std::vector<double> xs;
    std::vector<double> ys;
    auto add = [&](const std::string& a, const std::string& b) {
      if (const auto cv = cosine_metric(a, b)) {
        xs.push_back(*swkl_metric(a, b));
        ys.push_back(*cv);
      }
    };
    if (pairs[c].first == pairs[c].second) {
      for (std::size_t i = 0; i < ga.size(); ++i)
        for (std::size_t j = i + 1; j < ga.size(); ++j) add(ga[i], ga[j]);
    } else {
      for (const auto& a : ga)
        for (const auto& b : gb) add(a, b);
    }
    if (xs.size() < 3) return;
    tests[c].result = spearman_test(xs, ys, derive_seed(options.seed, c));
    tests[c].tested = tests[c].result.defined;
    if (!tests[c].tested) tests[c].result.n = xs.size();
  });
  std::vector<double> pvals;
  for (const auto& t : tests)
    if (t.tested) pvals.push_back(t.result.p_value);
  const auto flags = pvals.empty() ? std::vector<bool>{} : bonferroni(pvals, options.alpha);
  json rows = json::array();
  std::size_t flag_i = 0;
  for (std::size_t c = 0; c < pairs.size(); ++c) {
    const auto& t = tests[c];
    json row = {{"pair", {pairs[c].first, pairs[c].second}}, {"n", t.result.n}};
    if (t.tested) {
      row["rho"] = t.result.rho;
      row["p"] = t.result.p_value;
      row["method"] = to_string(t.result.method);
      row["significant"] = static_cast<bool>(flags[flag_i++]);
    } else {
      row["rho"] = nullptr;
      row["p"] = nullptr;
      row["method"] = "untested";
      row["significant"] = false;
    }
    rows.push_back(std::move(row));
  }
  const json corr = {{"alpha", options.alpha},
                     {"tests", pvals.size()},
                     {"bonferroni_threshold", pvals.empty() ? json(nullptr) : json(bonferroni_threshold(pvals.size(), options.alpha))},
                     {"correlations", rows}};
  write_output(out, options.out_dir / kCorrelationsFile, corr.dump(2) + "\n");

  // Temporal stability: per-year mean metric to the user's cohort (or everyone).
  std::vector<std::string> users;
  for (const auto& [u, g] : group_of) users.push_back(u);
  struct CvRow {
    std::string user;
    std::string metric;
    CVStats stats;
    std::size_t years = 0;
  };
  std::vector<std::vector<CvRow>> cv_rows(users.size());
  parallel_for(users.size(), options.jobs, [&](std::size_t i) {
    const auto& u = users[i];
    auto peers = [&](const std::string& v) {
      return v != u && (options.cv_mode == CvMode::Global || group_of.at(v) == group_of.at(u));
    };
    std::map<int, double> policy_h;
    if (const auto it = yearly_policies.find(u); it != yearly_policies.end()) {
      for (const auto& [year, rec] : it->second) {
        double sum = 0.0;
        int n = 0;
        for (const auto& v : users) {
          if (!peers(v)) continue;
          const auto other = yearly_policies.find(v);
          if (other == yearly_policies.end()) continue;
          const auto yr = other->second.find(year);
          if (yr == other->second.end()) continue;
          sum += swkl(rec, yr->second);
          ++n;
        }
        if (n > 0) policy_h[year] = sum / n;
      }
    }
    std::map<int, double> topic_h;
    if (const auto it = topics.find(u); it != topics.end()) {
      for (const auto& [year, counts] : it->second.yearly) {
        if (counts.sum() <= 0.0) continue;
        double sum = 0.0;
        int n = 0;
        for (const auto& v : users) {
          if (!peers(v)) continue;
          const auto other = topics.find(v);
          if (other == topics.end()) continue;
          const auto yr = other->second.yearly.find(year);
          if (yr == other->second.yearly.end() || yr->second.sum() <= 0.0) continue;
          sum += cosine_distance(counts, yr->second);
          ++n;
        }
        if (n > 0) topic_h[year] = sum / n;
      }
    }
    for (const auto& [metric, values] : {std::pair{"policy", &policy_h}, std::pair{"topic", &topic_h}}) {
      if (values->size() < 3) continue;
      auto stats = temporal_cv(*values);
      stats.user = u;
      stats.metric = metric;
      cv_rows[i].push_back({u, metric, std::move(stats), values->size()});
    }
  });
  std::vector<std::string> cv_lines = {"user,group,metric,years,mu,sigma,cv,cv_defined"};
  std::size_t cv_count = 0;
  for (const auto& per_user : cv_rows) {
    for (const auto& r : per_user) {
      cv_lines.push_back(fmt::format("{},{},{},{},{},{},{},{}", io::csv_field(r.user), io::csv_field(group_of.at(r.user)),
                                     r.metric, r.years, num(r.stats.mu), num(r.stats.sigma),
                                     r.stats.cv_defined ? num(r.stats.cv) : std::string{}, r.stats.cv_defined));
      ++cv_count;
    }
  }
  write_output(out, options.out_dir / kTemporalCvFile, join_lines(cv_lines));
  out.summary = {{"groups", groups.size()}, {"users", users.size()}, {"correlation_tests", pvals.size()},
                 {"cv_rows", cv_count}, {"cv_mode", options.cv_mode == CvMode::Cohort ? "cohort" : "global"}};
  return out;
}

// ---- personas -------------------------------------------------------------

StageOutput run_personas(const PersonaOptions& options) {
  StageOutput out;
  const auto entries = read_policies(options.policies_dir / kPoliciesFile);
  std::vector<Policy> policies;
  std::vector<StateWeights> weights;
  std::vector<std::string> users;
  for (const auto& e : entries) {
    users.push_back(e.record.user);
    policies.push_back(e.record.policy);
    weights.push_back(e.record.weights);
  }
  const auto n = static_cast<int>(users.size());
  const auto X = flatten_policies(policies);

  KSelectionReport report;
  auto sel = options.selection;
  if (options.k) {
    if (*options.k < 1 || *options.k > n)
      throw Error(fmt::format("k = {} is invalid for {} users", *options.k, n));
    report.chosen_k = *options.k;
    report.path = SelectionPath::Fixed;
  } else {
    sel.k_max = std::min(sel.k_max, n - 1);
    if (sel.k_max <= sel.k_min)
      throw Error(fmt::format("automatic k selection needs more than {} users, got {}", sel.k_min + 1, n));
    report = evaluate_k_range(X, options.seed, sel, options.jobs);
  }
  const auto model = kmeans(X, report.chosen_k, derive_seed(options.seed, 999), sel.restarts);

  ensure_dir(options.out_dir);
  std::vector<std::string> assign_lines = {"user,cluster"};
  for (std::size_t i = 0; i < users.size(); ++i)
    assign_lines.push_back(fmt::format("{},{}", io::csv_field(users[i]), model.assignments[i]));
  write_output(out, options.out_dir / kAssignmentsFile, join_lines(assign_lines));

  json centroids = json::array();
  for (Eigen::Index c = 0; c < model.centroids.rows(); ++c) {
    Policy p = Eigen::Map<const Policy>(model.centroids.row(c).data(), kNumStates, kNumActions);
    centroids.push_back({{"cluster", c}, {"policy", policy_matrix_json(p)}});
  }
  write_output(out, options.out_dir / kCentroidsFile,
               json{{"k", model.k}, {"seed", options.seed}, {"inertia", model.inertia},
                    {"flattening", "row-major by state"}, {"centroids", centroids}}
                       .dump(2) + "\n");

  json curves = json::array();
  for (const auto& [k, s] : report.silhouette) {
    json row = {{"k", k}, {"silhouette", s}};
    if (const auto g = report.gap.find(k); g != report.gap.end()) {
      row["gap"] = g->second.gap;
      row["gap_std_error"] = g->second.std_error;
    }
    curves.push_back(std::move(row));
  }
  write_output(out, options.out_dir / kSelectionFile,
               json{{"k_range", {sel.k_min, sel.k_max}}, {"curves", curves},
                    {"candidates", report.candidates}, {"chosen_k", report.chosen_k},
                    {"path", to_string(report.path)}, {"gap_threshold", sel.gap_threshold},
                    {"min_informative_k", sel.min_informative_k}, {"gap_references", sel.gap_references},
                    {"seed", options.seed}}
                       .dump(2) + "\n");

  std::string comp = "cluster,members";
  for (const auto a : kActionNames) comp += fmt::format(",{}", a);
  comp += "\n";
  for (int c = 0; c < model.k; ++c) {
    std::vector<Policy> ps;
    std::vector<StateWeights> ws;
    for (std::size_t i = 0; i < users.size(); ++i) {
      if (model.assignments[i] != c) continue;
      ps.push_back(policies[i]);
      ws.push_back(weights[i]);
    }
    comp += fmt::format("{},{}", c, ps.size());
    if (!ps.empty()) {
      const auto profile = action_composition(ps, ws);
      for (Eigen::Index a = 0; a < profile.size(); ++a) comp += "," + num(profile[a]);
    } else {
      for (int a = 0; a < kNumActions; ++a) comp += ",";
    }
    comp += "\n";
  }
  write_output(out, options.out_dir / kCompositionFile, comp);
  out.summary = {{"users", users.size()}, {"k", model.k}, {"path", to_string(report.path)}};
  return out;
}

// ---- validate -------------------------------------------------------------

StageOutput run_validate(const ValidateOptions& options) {
  StageOutput out;
  const auto trajectories = read_trajectories(options.trajectories_dir / kTrajectoriesFile);
  std::map<std::string, Policy> policies;
  for (auto& e : read_policies(options.policies_dir / kPoliciesFile)) policies[e.record.user] = std::move(e.record.policy);
  std::vector<const Trajectory*> todo;
  for (const auto& t : trajectories)
    if (policies.contains(t.user) && !t.empty()) todo.push_back(&t);
  std::vector<RankResult> ranks(todo.size());
  parallel_for(todo.size(), options.jobs, [&](std::size_t i) {
    ranks[i] = rank_policy(*todo[i], policies.at(todo[i]->user), options.n_random,
                           derive_seed(options.seed, stable_hash(todo[i]->user)));
  });
  std::vector<std::string> lines = {"user,own_ll,rank,competitors"};
  std::size_t first = 0;
  for (const auto& r : ranks) {
    lines.push_back(fmt::format("{},{},{},{}", io::csv_field(r.user), num(r.own_ll), r.rank, r.competitors));
    first += r.rank == 1;
  }
  if (options.out_file.has_parent_path()) ensure_dir(options.out_file.parent_path());
  write_output(out, options.out_file, join_lines(lines));
  out.summary = {{"users", ranks.size()}, {"rank_one", first},
                 {"rank_one_share", ranks.empty() ? 0.0 : static_cast<double>(first) / static_cast<double>(ranks.size())}};
  return out;
}

// ---- simulate -------------------------------------------------------------

std::vector<Archetype> read_archetypes(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: malformed archetypes ({})", path.string(), e.what()));
  }
  if (!j.is_array() || j.empty()) throw ConfigError(fmt::format("{}: expected a nonempty list of archetypes", path.string()));
  std::vector<Archetype> out;
  for (const auto& a : j) {
    Archetype arch;
    arch.name = a.value("name", fmt::format("archetype{}", out.size()));
    arch.count = a.value("count", std::size_t{1});
    if (a.contains("policy")) {
      arch.policy = policy_from_json(a.at("policy"));
    } else if (a.contains("row")) {
      const auto& row = a.at("row");
      if (row.size() != kNumActions) throw ConfigError("archetype row must have 6 entries");
      arch.policy.resize(kNumStates, kNumActions);
      for (int s = 0; s < kNumStates; ++s)
        for (int c = 0; c < kNumActions; ++c) arch.policy(s, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    } else {
      throw ConfigError(fmt::format("archetype '{}' needs 'policy' or 'row'", arch.name));
    }
    for (int s = 0; s < kNumStates; ++s) {
      const double total = arch.policy.row(s).sum();
      if (!(total > 0.0) || (arch.policy.row(s).array() < 0.0).any())
        throw ConfigError(fmt::format("archetype '{}' has an invalid row {}", arch.name, s));
      arch.policy.row(s) /= total;
    }
    out.push_back(std::move(arch));
  }
  return out;
}

StageOutput run_simulate(const SimulateOptions& options) {
  StageOutput out;
  auto archetypes = options.archetypes_file ? read_archetypes(*options.archetypes_file) : persona_archetypes(options.count);
  const auto P = structured_kernel();
  SynthOptions so;
  so.length = options.length;
  so.seed = options.seed;
  so.concentration = options.concentration;
  const auto agents = synth_corpus(archetypes, P, initial_family_start(), so);

  ensure_dir(options.out_dir);
  std::vector<Trajectory> trajectories;
  std::vector<std::string> truth = {"user,archetype,label"};
  std::vector<std::string> true_policies;
  for (const auto& a : agents) {
    trajectories.push_back(a.trajectory);
    truth.push_back(fmt::format("{},{},{}", a.user, io::csv_field(archetypes[static_cast<std::size_t>(a.label)].name), a.label));
    true_policies.push_back(policy_to_json({{a.user, a.policy, state_weights(a.trajectory)}, std::nullopt, {}}).dump());
  }
  write_trajectories(options.out_dir / kTrajectoriesFile, trajectories);
  out.written.push_back(options.out_dir / kTrajectoriesFile);
  write_output(out, options.out_dir / kTransitionsFile,
               transitions_to_json(estimate_transitions(trajectories, 1.0).model).dump(1) + "\n");
  write_output(out, options.out_dir / "true_transitions.json", transitions_to_json(P).dump(1) + "\n");
  write_output(out, options.out_dir / "truth.csv", join_lines(truth));
  write_output(out, options.out_dir / "true_policies.jsonl", join_lines(true_policies));
  out.summary = {{"agents", agents.size()}, {"length", options.length}};
  return out;
}

// ---- sample / synthetic events ---------------------------------------------

StageOutput run_sample(const SampleOptions& options) {
  StageOutput out;
  const auto parsed = read_event_files(options.input_glob);
  const auto sampled = sample_users(rank_yearly_activity(parsed.records), options.seed);
  for (const auto& s : sampled.shortfalls) spdlog::info("sample: {}", s);
  std::vector<std::string> lines(sampled.users.begin(), sampled.users.end());
  if (options.out_file.has_parent_path()) ensure_dir(options.out_file.parent_path());
  write_output(out, options.out_file, join_lines(lines));
  out.summary = {{"users", lines.size()}, {"shortfalls", sampled.shortfalls}};
  return out;
}

StageOutput run_synth_events(const SynthEventsOptions& options) {
  StageOutput out;
  const auto archetypes = persona_archetypes();
  std::vector<EventCorpusUser> users;
  std::size_t n = 0;
  for (const auto& g : options.subreddits) {
    for (std::size_t i = 0; i < options.users_per_group; ++i, ++n) {
      const auto persona = static_cast<int>(n % archetypes.size());
      users.push_back({fmt::format("user_{}_{:02d}", g, i), g,
                       perturb_policy(archetypes[static_cast<std::size_t>(persona)].policy, 300.0,
                                      derive_seed(options.seed, n)),
                       persona});
    }
  }
  EventCorpusOptions eo;
  eo.subreddits = options.subreddits;
  eo.states_per_user = options.states_per_user;
  eo.years = options.years;
  eo.num_topics = options.num_topics;
  eo.unlabeled_share = options.unlabeled_share;
  eo.seed = options.seed;
  const auto corpus = render_event_corpus(users, structured_kernel(), eo);

  ensure_dir(options.out_dir);
  write_output(out, options.out_dir / "events.jsonl", join_lines(corpus_event_lines(corpus)));
  write_output(out, options.out_dir / "labels.jsonl", join_lines(corpus_label_lines(corpus)));
  std::vector<std::string> names;
  std::vector<std::string> truth = {"user,home_subreddit,persona"};
  for (const auto& u : users) {
    names.push_back(u.user);
    truth.push_back(fmt::format("{},{},{}", u.user, u.home, archetypes[static_cast<std::size_t>(u.persona)].name));
  }
  write_output(out, options.out_dir / "users.txt", join_lines(names));
  write_output(out, options.out_dir / "truth.csv", join_lines(truth));
  out.summary = {{"users", users.size()}, {"events", corpus.events.size()}, {"labels", corpus.labels.size()}};
  return out;
}

}  // namespace homophily
