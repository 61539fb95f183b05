#include <gtest/gtest.h>

#include <cstdlib>

#include <fmt/format.h>

#include "homophily/error.hpp"
#include "homophily/io.hpp"
#include "homophily/pipeline.hpp"
#include "support.hpp"

namespace homophily {
namespace {

using testing::TempDir;

std::vector<std::string> group_names(std::size_t n) {
  std::vector<std::string> g;
  for (std::size_t i = 0; i < n; ++i) g.push_back(fmt::format("g{:02d}", i));
  return g;
}

void write_corpus(const fs::path& dir, std::size_t groups, std::size_t users_per_group, std::size_t states) {
  SynthEventsOptions o;
  o.subreddits = group_names(groups);
  o.users_per_group = users_per_group;
  o.states_per_user = states;
  o.seed = 5;
  o.out_dir = dir;
  run_synth_events(o);
}

json base_config() {
  return {{"input", "events.jsonl"},
          {"users", "users.txt"},
          {"labels", {{"source", "external"}, {"path", "labels.jsonl"}, {"lexicon_fallback", true}, {"num_topics", 12}}},
          {"train", {{"epochs", 150}}},
          {"validation", {{"n_random", 200}}},
          {"seed", 3},
          {"output", "out"}};
}

json read_json(const fs::path& p) { return json::parse(io::read_file(p)); }

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override { ::unsetenv(kCacheEnv); }
};

TEST_F(PipelineTest, ManifestRerunAndCorruption) {
  TempDir dir("pipeline");
  write_corpus(dir.path(), 3, 3, 120);
  const auto config = parse_pipeline_config(base_config(), dir.path());

  const auto first = run_pipeline(config);
  ASSERT_EQ(first.stages.size(), 7u);
  for (const auto& s : first.stages) EXPECT_TRUE(s.ran) << s.name;
  EXPECT_TRUE(first.absent.empty());
  const auto manifest = read_json(first.manifest);
  ASSERT_EQ(manifest.at("stages").size(), 7u);
  const std::vector<std::string> names = {"ingest", "label", "encode", "learn", "homophily", "personas", "validate"};
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& s = manifest["stages"][i];
    EXPECT_EQ(s["name"], names[i]);
    EXPECT_EQ(s["status"], "complete");
    EXPECT_FALSE(s["artifacts"].empty());
    for (const auto& a : s["artifacts"]) EXPECT_EQ(io::sha256_file(config.output / a["path"].get<std::string>()), a["sha256"]);
  }
  EXPECT_EQ(manifest["config_hash"], config_hash(config));
  EXPECT_EQ(read_json(config.output / "learn" / "stage.json")["config_hash"], config_hash(config));
  for (const char* f : {"swkl_matrix.csv", "cosine_matrix.csv", "composition.csv", "correlations.csv",
                        "cv_distribution.csv", "report.json"})
    EXPECT_TRUE(fs::exists(config.output / "report" / f)) << f;

  const auto before = io::read_file(first.manifest);
  const auto second = run_pipeline(config);
  for (const auto& s : second.stages) EXPECT_TRUE(s.skipped) << s.name;
  EXPECT_EQ(io::read_file(second.manifest), before);

  io::write_file(config.output / "encode" / kTrajectoriesFile, "{\"header\":{}}\n{\"user\": 3}\n");
  try {
    run_pipeline(config);
    FAIL() << "corrupt trajectories were accepted";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "learn");
    EXPECT_NE(std::string(e.what()).find(kTrajectoriesFile), std::string::npos);
  }
}

TEST_F(PipelineTest, ChangedOptionRerunsDownstreamOnly) {
  TempDir dir("pipeline");
  write_corpus(dir.path(), 2, 3, 80);
  auto j = base_config();
  const auto config = parse_pipeline_config(j, dir.path());
  run_pipeline(config);
  j["validation"]["n_random"] = 100;
  const auto changed = run_pipeline(parse_pipeline_config(j, dir.path()));
  for (const auto& s : changed.stages) EXPECT_EQ(s.ran, s.name == "validate") << s.name;
}

TEST_F(PipelineTest, CacheDirectoryFromEnvironment) {
  TempDir dir("pipeline");
  TempDir cache("cache");
  write_corpus(dir.path(), 2, 3, 80);
  ::setenv(kCacheEnv, cache.path().c_str(), 1);
  const auto config = parse_pipeline_config(base_config(), dir.path());
  run_pipeline(config);
  EXPECT_FALSE(fs::exists(config.output / ".cache"));
  EXPECT_FALSE(fs::is_empty(cache.path()));
  for (const auto& s : run_pipeline(config).stages) EXPECT_TRUE(s.skipped) << s.name;
  ::unsetenv(kCacheEnv);
}

TEST_F(PipelineTest, PersonasDisabledAreAbsent) {
  TempDir dir("pipeline");
  write_corpus(dir.path(), 2, 3, 80);
  auto j = base_config();
  j["personas"] = {{"enabled", false}};
  const auto bundle = run_pipeline(parse_pipeline_config(j, dir.path()));
  EXPECT_FALSE(bundle.stages[5].ran);
  EXPECT_NE(std::find(bundle.absent.begin(), bundle.absent.end(), "personas"), bundle.absent.end());
  const auto manifest = read_json(bundle.manifest);
  EXPECT_EQ(manifest["stages"][5]["status"], "disabled");
  const auto report = read_json(bundle.output / "report" / "report.json");
  EXPECT_TRUE(report["artifacts"]["persona_composition"].is_null());
  EXPECT_NE(io::read_file(bundle.output / "report" / "cv_distribution.csv").find("\nnone,"), std::string::npos);
}

TEST_F(PipelineTest, FifteenGroups) {
  TempDir dir("pipeline");
  write_corpus(dir.path(), 15, 3, 60);
  auto j = base_config();
  j["personas"] = {{"enabled", false}};
  j["train"]["epochs"] = 60;
  j["validation"]["n_random"] = 10;
  const auto bundle = run_pipeline(parse_pipeline_config(j, dir.path()));
  const auto corr = read_json(bundle.output / "homophily" / kCorrelationsFile);
  EXPECT_EQ(corr["correlations"].size(), 120u);
  EXPECT_EQ(corr["tests"], 120u);
  EXPECT_NEAR(corr["bonferroni_threshold"].get<double>(), 0.05 / 120, 1e-18);
  const auto lines = io::read_lines(bundle.output / "homophily" / kSwklMatrixFile);
  std::size_t rows = 0;
  for (const auto& l : lines) rows += !l.empty();
  EXPECT_EQ(rows, 16u);
  EXPECT_EQ(io::split_csv_line(lines[0]).size(), 16u);
}

TEST(PipelineConfig, Validation) {
  TempDir dir("config");
  write_corpus(dir.path(), 2, 2, 20);
  EXPECT_NO_THROW(parse_pipeline_config(base_config(), dir.path()));

  const auto rejects = [&](const std::function<void(json&)>& edit) {
    auto j = base_config();
    edit(j);
    EXPECT_THROW(parse_pipeline_config(j, dir.path()), ConfigError) << j.dump();
  };
  rejects([](json& j) { j["bogus"] = 1; });
  rejects([](json& j) { j["train"]["gamma"] = 1.5; });
  rejects([](json& j) { j["train"]["learning_rate"] = "fast"; });
  rejects([](json& j) { j["labels"]["source"] = "oracle"; });
  rejects([](json& j) { j["labels"]["path"] = "missing.jsonl"; });
  rejects([](json& j) { j["input"] = "nothing-*.jsonl"; });
  rejects([](json& j) { j.erase("input"); });
  rejects([](json& j) { j["personas"] = {{"k", 0}}; });
  rejects([](json& j) { j["homophily"] = {{"cv_mode", "weekly"}}; });
  rejects([](json& j) { j["homophily"] = {{"alpha", 1.0}}; });

  io::write_file(dir / "c.toml", "input = 'x'\n");
  EXPECT_THROW(load_pipeline_config(dir / "c.toml"), ConfigError);
  io::write_file(dir / "c.json", "{oops");
  EXPECT_THROW(load_pipeline_config(dir / "c.json"), ConfigError);
  EXPECT_THROW(load_pipeline_config(dir / "none.json"), ConfigError);
}

TEST(PipelineConfig, HashTracksOutputsNotLocation) {
  TempDir dir("config");
  write_corpus(dir.path(), 2, 2, 20);
  auto j = base_config();
  const auto a = parse_pipeline_config(j, dir.path());
  j["output"] = "elsewhere";
  EXPECT_EQ(config_hash(parse_pipeline_config(j, dir.path())), config_hash(a));
  j["seed"] = 4;
  EXPECT_NE(config_hash(parse_pipeline_config(j, dir.path())), config_hash(a));
  EXPECT_EQ(a.train.rng_seed, 3u);
}

}  // namespace
}  // namespace homophily
