#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "homophily/clustering.hpp"
#include "homophily/irl.hpp"
#include "homophily/stages.hpp"

namespace homophily {

enum class LabelMode { External, Lexicon, SidecarFile };

struct PipelineConfig {
  /// Glob of event dumps.
  std::string input;
  std::optional<fs::path> users;
  LabelMode label_source = LabelMode::External;
  std::optional<fs::path> labels;
  bool lexicon_fallback = false;
  std::optional<int> num_topics;
  double transition_alpha = 1.0;
  TrainConfig train;
  bool yearly = true;
  std::size_t min_year_pairs = 20;
  CvMode cv_mode = CvMode::Cohort;
  double significance = 0.05;
  bool personas = true;
  std::optional<int> k;
  SelectionOptions selection;
  std::size_t n_random = 1000;
  std::uint64_t seed = 0;
  fs::path output;
};

/// Parses a JSON config; relative paths resolve against `base_dir`.
/// Unknown keys, bad values and missing inputs throw ConfigError.
PipelineConfig parse_pipeline_config(const json& j, const fs::path& base_dir);
PipelineConfig load_pipeline_config(const fs::path& path);

/// Canonical JSON of everything that influences outputs (not `jobs`).
json canonical_config(const PipelineConfig& config);
std::string config_hash(const PipelineConfig& config);

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kCacheEnv = "HOMOPHILY_CACHE_DIR";

struct StageRecord {
  std::string name;
  bool skipped = false;
  bool ran = false;
  std::string key;
  /// Paths relative to the output directory with their sha256.
  std::vector<std::pair<std::string, std::string>> artifacts;
};

struct ReportBundle {
  fs::path output;
  std::string config_hash;
  std::vector<StageRecord> stages;
  std::vector<std::string> absent;
  fs::path manifest;
};

/// ingest, label, encode, learn, homophily, personas and validate in order,
/// each into <output>/<stage>/. A stage is skipped when its stamp (keyed by
/// stage options and the checksums of its inputs) matches and its outputs
/// exist. Stamps live in $HOMOPHILY_CACHE_DIR or <output>/.cache. A failing
/// stage raises StageError; files already written are kept.
ReportBundle run_pipeline(const PipelineConfig& config, unsigned jobs = 1);

/// Collects the report bundle into <output>/report/. Missing artifacts are
/// listed under "absent" in report.json.
json emit_report(const fs::path& output, const std::string& config_hash);

}  // namespace homophily
