#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "homophily/clustering.hpp"
#include "homophily/irl.hpp"
#include "homophily/labeling.hpp"
#include "homophily/metrics.hpp"
#include "homophily/mdp.hpp"
#include "homophily/validation.hpp"

namespace homophily {

namespace fs = std::filesystem;
using nlohmann::json;

// Artifact file names shared by the stages and the orchestrator.
inline constexpr const char* kHomesFile = "homes.csv";
inline constexpr const char* kIngestSummaryFile = "ingest_summary.json";
inline constexpr const char* kTopicsFile = "topics.jsonl";
inline constexpr const char* kLabelSummaryFile = "label_summary.json";
inline constexpr const char* kTrajectoriesFile = "trajectories.jsonl";
inline constexpr const char* kTransitionsFile = "transitions.json";
inline constexpr const char* kPoliciesFile = "policies.jsonl";
inline constexpr const char* kYearlyPoliciesFile = "yearly_policies.jsonl";
inline constexpr const char* kSwklMatrixFile = "swkl_matrix.csv";
inline constexpr const char* kCosineMatrixFile = "cosine_matrix.csv";
inline constexpr const char* kCorrelationsFile = "correlations.json";
inline constexpr const char* kTemporalCvFile = "temporal_cv.csv";
inline constexpr const char* kAssignmentsFile = "assignments.csv";
inline constexpr const char* kCentroidsFile = "centroids.json";
inline constexpr const char* kSelectionFile = "selection.json";
inline constexpr const char* kCompositionFile = "composition.csv";

/// Files of one stage; `written` is in the order the stage produced them.
struct StageOutput {
  std::vector<fs::path> written;
  json summary = json::object();
};

// ---- ingest ---------------------------------------------------------------

struct IngestOptions {
  std::string input_glob;
  /// One user id per line; all authors (minus "[deleted]") when empty.
  std::optional<fs::path> users_file;
  fs::path out_dir;
  unsigned jobs = 1;
};

/// <out>/<user>.jsonl per user (own events and responses merged in stream
/// order, each tagged with "direction": "own" | "response") and
/// <out>/homes.csv `user,home_subreddit,total_comments`.
StageOutput run_ingest(const IngestOptions& options);

struct ActivityFile {
  UserActivity activity;
  fs::path path;
};

std::vector<ActivityFile> read_activity_dir(const fs::path& dir);
void write_activity_file(const fs::path& path, const UserActivity& activity);

std::vector<std::string> read_user_list(const fs::path& path);

// ---- label ----------------------------------------------------------------

struct LabelOptions {
  fs::path activity_dir;
  std::optional<fs::path> labels_file;
  bool lexicon_fallback = false;
  /// Corpus topic count; inferred as 1 + the largest topic id when absent.
  std::optional<int> num_topics;
  fs::path out_dir;
  unsigned jobs = 1;
};

/// Labeled activity files plus <out>/topics.jsonl
/// {user, num_topics, counts, labeled, unlabeled, yearly: {year: counts}}.
StageOutput run_label(const LabelOptions& options);

struct TopicRecord {
  TopicVector total;
  std::map<int, Eigen::VectorXd> yearly;
};

std::map<std::string, TopicRecord> read_topics(const fs::path& path);

// ---- encode ---------------------------------------------------------------

struct EncodeOptions {
  fs::path activity_dir;
  fs::path out_dir;
  double alpha = 1.0;
  unsigned jobs = 1;
};

/// <out>/trajectories.jsonl (header line with the index tables, then
/// {user, pairs, years}) and <out>/transitions.json.
StageOutput run_encode(const EncodeOptions& options);

json trajectory_header();
json trajectory_to_json(const Trajectory& t);
void write_trajectories(const fs::path& path, const std::vector<Trajectory>& trajectories);
/// Throws Error naming the file and line on any malformed record.
std::vector<Trajectory> read_trajectories(const fs::path& path);

json transitions_to_json(const TransitionModel& P);
TransitionModel transitions_from_json(const json& j);

// ---- learn ----------------------------------------------------------------

struct LearnOptions {
  fs::path trajectories_dir;
  fs::path out_dir;
  TrainConfig train;
  bool yearly = true;
  /// Years with fewer pairs are not modeled.
  std::size_t min_year_pairs = 20;
  unsigned jobs = 1;
};

/// <out>/policies.jsonl {user, policy (12 rows of 6), state_weights,
/// config_hash} and <out>/yearly_policies.jsonl (same plus year).
StageOutput run_learn(const LearnOptions& options);

std::string train_config_hash(const TrainConfig& config);
json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const json& j, TrainConfig base = {});

struct PolicyEntry {
  PolicyRecord record;
  std::optional<int> year;
  std::string config_hash;
};

json policy_to_json(const PolicyEntry& entry);
std::vector<PolicyEntry> read_policies(const fs::path& path);

// ---- homophily ------------------------------------------------------------

enum class CvMode { Cohort, Global };

struct HomophilyOptions {
  fs::path policies_dir;
  fs::path topics_dir;
  fs::path groups_csv;
  fs::path out_dir;
  CvMode cv_mode = CvMode::Cohort;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

/// SWKL and cosine group matrices, per-group-pair Spearman correlations
/// with Bonferroni flags, and per-user temporal CV.
StageOutput run_homophily(const HomophilyOptions& options);

/// user -> group from a CSV with a header containing `user` and either
/// `home_subreddit` or `group`.
std::map<std::string, std::string> read_groups(const fs::path& path);

void write_matrix_csv(const fs::path& path, const HomophilyMatrix& m);

// ---- personas -------------------------------------------------------------

struct PersonaOptions {
  fs::path policies_dir;
  fs::path out_dir;
  /// Fixed k; automatic selection when absent.
  std::optional<int> k;
  std::uint64_t seed = 0;
  SelectionOptions selection;
  unsigned jobs = 1;
};

StageOutput run_personas(const PersonaOptions& options);

// ---- validate -------------------------------------------------------------

struct ValidateOptions {
  fs::path trajectories_dir;
  fs::path policies_dir;
  std::size_t n_random = 1000;
  std::uint64_t seed = 0;
  fs::path out_file;
  unsigned jobs = 1;
};

/// CSV `user,own_ll,rank,competitors`.
StageOutput run_validate(const ValidateOptions& options);

// ---- simulate -------------------------------------------------------------

struct SimulateOptions {
  /// JSON list of {name, count, policy (12 x 6) | row (6)}; built-in
  /// personas when absent.
  std::optional<fs::path> archetypes_file;
  std::size_t count = 10;
  std::size_t length = 2000;
  double concentration = 0.0;
  std::uint64_t seed = 0;
  fs::path out_dir;
};

/// <out>/trajectories.jsonl, <out>/truth.csv `user,archetype,label`,
/// <out>/true_policies.jsonl and <out>/transitions.json.
StageOutput run_simulate(const SimulateOptions& options);

std::vector<Archetype> read_archetypes(const fs::path& path);

// ---- sample / synthetic events ---------------------------------------------

struct SampleOptions {
  std::string input_glob;
  std::uint64_t seed = 0;
  fs::path out_file;
};

StageOutput run_sample(const SampleOptions& options);

struct SynthEventsOptions {
  std::vector<std::string> subreddits = {"alpha", "beta", "gamma"};
  std::size_t users_per_group = 4;
  std::size_t states_per_user = 200;
  int years = 3;
  int num_topics = 12;
  double unlabeled_share = 0.1;
  std::uint64_t seed = 0;
  fs::path out_dir;
};

/// events.jsonl, labels.jsonl, users.txt and truth.csv for a persona-mixed corpus.
StageOutput run_synth_events(const SynthEventsOptions& options);

}  // namespace homophily
