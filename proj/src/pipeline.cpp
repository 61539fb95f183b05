#include "homophily/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "homophily/error.hpp"
#include "homophily/io.hpp"
#include "homophily/random.hpp"

namespace homophily {

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!j.is_object()) throw ConfigError(fmt::format("'{}' must be an object", where));
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError(fmt::format("unknown key '{}{}'", where.empty() ? "" : fmt::format("{}.", where), key));
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, std::string_view where) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("'{}{}' has the wrong type", where.empty() ? "" : fmt::format("{}.", where), key));
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string_view to_string(LabelMode m) {
  switch (m) {
    case LabelMode::External: return "external";
    case LabelMode::Lexicon: return "lexicon";
    case LabelMode::SidecarFile: break;
  }
  return "sidecar-file";
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  return p.lexically_relative(base).generic_string();
}

}  // namespace

PipelineConfig parse_pipeline_config(const json& j, const fs::path& base_dir) {
  reject_unknown(j, {"input", "users", "labels", "transitions", "train", "homophily", "personas", "validation", "seed",
                     "output"},
                 "");
  PipelineConfig c;
  const auto input = get_or<std::string>(j, "input", "", "");
  if (input.empty()) throw ConfigError("'input' is required");
  c.input = resolve(base_dir, input).string();
  if (io::glob(c.input).empty()) throw ConfigError(fmt::format("input '{}' matches no files", c.input));
  if (const auto users = get_or<std::string>(j, "users", "", ""); !users.empty()) {
    c.users = resolve(base_dir, users);
    if (!fs::exists(*c.users)) throw ConfigError(fmt::format("users file '{}' does not exist", c.users->string()));
  }

  const json labels = j.value("labels", json::object());
  reject_unknown(labels, {"source", "path", "lexicon_fallback", "num_topics"}, "labels");
  const auto source = get_or<std::string>(labels, "source", "external", "labels");
  if (source == "external") c.label_source = LabelMode::External;
  else if (source == "lexicon") c.label_source = LabelMode::Lexicon;
  else if (source == "sidecar-file") c.label_source = LabelMode::SidecarFile;
  else throw ConfigError(fmt::format("labels.source '{}' is not one of external, lexicon, sidecar-file", source));
  if (const auto path = get_or<std::string>(labels, "path", "", "labels"); !path.empty())
    c.labels = resolve(base_dir, path);
  if (c.label_source != LabelMode::Lexicon) {
    if (!c.labels) throw ConfigError(fmt::format("labels.path is required for source '{}'", source));
    if (!fs::exists(*c.labels)) throw ConfigError(fmt::format("label file '{}' does not exist", c.labels->string()));
    c.lexicon_fallback = get_or(labels, "lexicon_fallback", false, "labels");
  } else {
    c.labels.reset();
    c.lexicon_fallback = true;
  }
  if (labels.contains("num_topics")) {
    c.num_topics = get_or(labels, "num_topics", 0, "labels");
    if (*c.num_topics <= 0) throw ConfigError("labels.num_topics must be positive");
  }

  const json transitions = j.value("transitions", json::object());
  reject_unknown(transitions, {"alpha"}, "transitions");
  c.transition_alpha = get_or(transitions, "alpha", 1.0, "transitions");
  if (!(c.transition_alpha >= 0)) throw ConfigError("transitions.alpha must be nonnegative");

  json train = j.value("train", json::object());
  reject_unknown(train, {"learning_rate", "epochs", "gamma", "epsilon", "init_stddev", "start_mode", "visitation_tol",
                         "adam", "yearly", "min_year_pairs"},
                 "train");
  c.yearly = get_or(train, "yearly", true, "train");
  c.min_year_pairs = get_or<std::size_t>(train, "min_year_pairs", 20, "train");
  train.erase("yearly");
  train.erase("min_year_pairs");
  c.train = train_config_from_json(train);

  const json hom = j.value("homophily", json::object());
  reject_unknown(hom, {"cv_mode", "alpha"}, "homophily");
  const auto cv = get_or<std::string>(hom, "cv_mode", "cohort", "homophily");
  if (cv == "cohort") c.cv_mode = CvMode::Cohort;
  else if (cv == "global") c.cv_mode = CvMode::Global;
  else throw ConfigError(fmt::format("homophily.cv_mode '{}' is not one of cohort, global", cv));
  c.significance = get_or(hom, "alpha", 0.05, "homophily");
  if (!(c.significance > 0 && c.significance < 1)) throw ConfigError("homophily.alpha must lie in (0, 1)");

  const json per = j.value("personas", json::object());
  reject_unknown(per, {"enabled", "k", "k_min", "k_max", "gap_threshold", "min_informative_k", "gap_references",
                       "restarts", "gap_restarts"},
                 "personas");
  c.personas = get_or(per, "enabled", true, "personas");
  if (const auto it = per.find("k"); it != per.end() && !(it->is_string() && *it == "auto")) {
    if (!it->is_number_integer() || it->get<int>() < 1) throw ConfigError("personas.k must be \"auto\" or a positive integer");
    c.k = it->get<int>();
  }
  auto& s = c.selection;
  s.k_min = get_or(per, "k_min", s.k_min, "personas");
  s.k_max = get_or(per, "k_max", s.k_max, "personas");
  s.gap_threshold = get_or(per, "gap_threshold", s.gap_threshold, "personas");
  s.min_informative_k = get_or(per, "min_informative_k", s.min_informative_k, "personas");
  s.gap_references = get_or(per, "gap_references", s.gap_references, "personas");
  s.restarts = get_or(per, "restarts", s.restarts, "personas");
  s.gap_restarts = get_or(per, "gap_restarts", s.gap_restarts, "personas");
  if (s.k_min < 2 || s.k_max < s.k_min) throw ConfigError("personas needs 2 <= k_min <= k_max");
  if (s.gap_references < 1 || s.restarts < 1 || s.gap_restarts < 1)
    throw ConfigError("personas restart and reference counts must be positive");

  const json val = j.value("validation", json::object());
  reject_unknown(val, {"n_random"}, "validation");
  c.n_random = get_or<std::size_t>(val, "n_random", 1000, "validation");

  c.seed = get_or<std::uint64_t>(j, "seed", 0, "");
  c.train.rng_seed = c.seed;
  c.output = resolve(base_dir, get_or<std::string>(j, "output", "out", ""));
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError(fmt::format("config file '{}' does not exist", path.string()));
  const auto ext = path.extension().string();
  if (ext == ".toml") throw ConfigError("TOML configs are not supported; use JSON");
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: malformed JSON ({})", path.string(), e.what()));
  }
  return parse_pipeline_config(j, fs::absolute(path).parent_path());
}

json canonical_config(const PipelineConfig& c) {
  const auto& s = c.selection;
  return {{"input", c.input},
          {"users", c.users ? json(c.users->string()) : json(nullptr)},
          {"labels",
           {{"source", to_string(c.label_source)},
            {"path", c.labels ? json(c.labels->string()) : json(nullptr)},
            {"lexicon_fallback", c.lexicon_fallback},
            {"num_topics", c.num_topics ? json(*c.num_topics) : json(nullptr)}}},
          {"transitions", {{"alpha", c.transition_alpha}}},
          {"train", train_config_to_json(c.train)},
          {"yearly", c.yearly},
          {"min_year_pairs", c.min_year_pairs},
          {"homophily", {{"cv_mode", c.cv_mode == CvMode::Cohort ? "cohort" : "global"}, {"alpha", c.significance}}},
          {"personas",
           {{"enabled", c.personas},
            {"k", c.k ? json(*c.k) : json("auto")},
            {"k_min", s.k_min},
            {"k_max", s.k_max},
            {"gap_threshold", s.gap_threshold},
            {"min_informative_k", s.min_informative_k},
            {"gap_references", s.gap_references},
            {"restarts", s.restarts},
            {"gap_restarts", s.gap_restarts}}},
          {"validation", {{"n_random", c.n_random}}},
          {"seed", c.seed}};
}

std::string config_hash(const PipelineConfig& config) {
  return io::sha256_hex(canonical_config(config).dump());
}

// ---- orchestration --------------------------------------------------------

namespace {

struct StageDef {
  std::string name;
  json options;
  /// External input files; upstream artifacts are added from `depends`.
  std::vector<fs::path> inputs;
  std::vector<std::string> depends;
  bool enabled = true;
  std::function<StageOutput(const fs::path& dir)> run;
};

fs::path cache_dir(const fs::path& output) {
  if (const char* env = std::getenv(kCacheEnv); env && *env) return fs::path(env);
  return output / ".cache";
}

fs::path stamp_path(const fs::path& output, const std::string& stage) {
  if (const char* env = std::getenv(kCacheEnv); env && *env)
    return fs::path(env) /
           fmt::format("{}-{}.json", stage, io::sha256_hex(fs::weakly_canonical(output).string()).substr(0, 12));
  return cache_dir(output) / fmt::format("{}.json", stage);
}

std::vector<std::pair<std::string, std::string>> checksum_files(const std::vector<fs::path>& files, const fs::path& base) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : files) out.emplace_back(relative_to(f, base), io::sha256_file(f));
  std::sort(out.begin(), out.end());
  return out;
}

json artifacts_json(const std::vector<std::pair<std::string, std::string>>& artifacts) {
  json a = json::array();
  for (const auto& [path, sum] : artifacts) a.push_back({{"path", path}, {"sha256", sum}});
  return a;
}

std::optional<std::vector<std::string>> cached_artifacts(const fs::path& stamp, const std::string& key,
                                                         const fs::path& output) {
  if (!fs::exists(stamp)) return std::nullopt;
  try {
    const auto j = json::parse(io::read_file(stamp));
    if (j.value("key", std::string{}) != key) return std::nullopt;
    std::vector<std::string> paths;
    for (const auto& a : j.at("artifacts")) {
      const auto p = a.get<std::string>();
      if (!fs::exists(output / p)) return std::nullopt;
      paths.push_back(p);
    }
    return paths;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

ReportBundle run_pipeline(const PipelineConfig& c, unsigned jobs) {
  ReportBundle bundle;
  bundle.output = c.output;
  bundle.config_hash = config_hash(c);
  const auto& out = c.output;
  fs::create_directories(out);

  const auto dir = [&](const char* stage) { return out / stage; };
  std::vector<StageDef> stages;
  {
    StageDef s{"ingest", {{"users", c.users.has_value()}}, io::glob(c.input), {}, true, {}};
    if (c.users) s.inputs.push_back(*c.users);
    s.run = [&](const fs::path& d) { return run_ingest({c.input, c.users, d, jobs}); };
    stages.push_back(std::move(s));
  }
  {
    StageDef s{"label",
               {{"source", to_string(c.label_source)},
                {"lexicon_fallback", c.lexicon_fallback},
                {"num_topics", c.num_topics ? json(*c.num_topics) : json(nullptr)}},
               {},
               {"ingest"},
               true,
               {}};
    if (c.labels) s.inputs.push_back(*c.labels);
    s.run = [&](const fs::path& d) {
      return run_label({dir("ingest"), c.labels, c.lexicon_fallback, c.num_topics, d, jobs});
    };
    stages.push_back(std::move(s));
  }
  stages.push_back({"encode", {{"alpha", c.transition_alpha}}, {}, {"label"}, true, [&](const fs::path& d) {
                      return run_encode({dir("label"), d, c.transition_alpha, jobs});
                    }});
  stages.push_back({"learn",
                    {{"train", train_config_to_json(c.train)}, {"yearly", c.yearly}, {"min_year_pairs", c.min_year_pairs}},
                    {},
                    {"encode"},
                    true,
                    [&](const fs::path& d) {
                      return run_learn({dir("encode"), d, c.train, c.yearly, c.min_year_pairs, jobs});
                    }});
  const auto hom_seed = derive_seed(c.seed, 4);
  stages.push_back({"homophily",
                    {{"cv_mode", c.cv_mode == CvMode::Cohort ? "cohort" : "global"},
                     {"alpha", c.significance},
                     {"seed", hom_seed}},
                    {},
                    {"learn", "label", "ingest"},
                    true,
                    [&](const fs::path& d) {
                      return run_homophily({dir("learn"), dir("label"), dir("ingest") / kHomesFile, d, c.cv_mode,
                                            c.significance, hom_seed, jobs});
                    }});
  const auto per_seed = derive_seed(c.seed, 5);
  stages.push_back({"personas",
                    canonical_config(c)["personas"],
                    {},
                    {"learn"},
                    c.personas,
                    [&](const fs::path& d) { return run_personas({dir("learn"), d, c.k, per_seed, c.selection, jobs}); }});
  const auto val_seed = derive_seed(c.seed, 6);
  stages.push_back({"validate",
                    {{"n_random", c.n_random}, {"seed", val_seed}},
                    {},
                    {"encode", "learn"},
                    true,
                    [&](const fs::path& d) {
                      return run_validate({dir("encode"), dir("learn"), c.n_random, val_seed, d / "ranks.csv", jobs});
                    }});

  std::map<std::string, std::vector<fs::path>> produced;
  json manifest_stages = json::array();
  for (const auto& s : stages) {
    StageRecord rec;
    rec.name = s.name;
    if (!s.enabled) {
      spdlog::info("stage {}: disabled", s.name);
      manifest_stages.push_back({{"name", s.name}, {"status", "disabled"}, {"artifacts", json::array()}});
      bundle.stages.push_back(std::move(rec));
      continue;
    }
    try {
      std::vector<fs::path> inputs = s.inputs;
      std::vector<std::pair<std::string, std::string>> input_sums;
      for (const auto& p : inputs) input_sums.emplace_back(p.string(), io::sha256_file(p));
      for (const auto& d : s.depends)
        for (const auto& p : produced.at(d)) input_sums.emplace_back(relative_to(p, out), io::sha256_file(p));
      std::sort(input_sums.begin(), input_sums.end());
      const json key_material = {{"stage", s.name}, {"options", s.options}, {"inputs", artifacts_json(input_sums)}};
      rec.key = io::sha256_hex(key_material.dump());

      const auto stamp = stamp_path(out, s.name);
      std::vector<fs::path> files;
      if (const auto cached = cached_artifacts(stamp, rec.key, out)) {
        rec.skipped = true;
        for (const auto& p : *cached) files.push_back(out / p);
        spdlog::info("stage {}: up to date, skipped", s.name);
      } else {
        const auto stage_dir = dir(s.name.c_str());
        std::error_code ec;
        fs::remove_all(stage_dir, ec);
        fs::create_directories(stage_dir);
        spdlog::info("stage {}: running", s.name);
        const auto result = s.run(stage_dir);
        files = result.written;
        const auto stage_json = stage_dir / "stage.json";
        io::write_file(stage_json, json{{"stage", s.name}, {"config_hash", bundle.config_hash}, {"key", rec.key},
                                        {"options", s.options}, {"summary", result.summary}}
                                       .dump(2) + "\n");
        files.push_back(stage_json);
        json paths = json::array();
        for (const auto& f : files) paths.push_back(relative_to(f, out));
        fs::create_directories(stamp.parent_path());
        io::write_file(stamp, json{{"stage", s.name}, {"key", rec.key}, {"artifacts", paths}}.dump(2) + "\n");
        rec.ran = true;
      }
      produced[s.name] = files;
      rec.artifacts = checksum_files(files, out);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(s.name, e.what());
    }
    manifest_stages.push_back({{"name", s.name}, {"status", "complete"}, {"key", rec.key},
                               {"artifacts", artifacts_json(rec.artifacts)}});
    bundle.stages.push_back(std::move(rec));
  }

  json report;
  try {
    report = emit_report(out, bundle.config_hash);
  } catch (const std::exception& e) {
    throw StageError("report", e.what());
  }
  for (const auto& a : report.at("absent")) bundle.absent.push_back(a.get<std::string>());
  std::vector<fs::path> report_files;
  for (const auto& [name, path] : report.at("artifacts").items())
    if (path.is_string()) report_files.push_back(out / path.get<std::string>());
  report_files.push_back(out / "report" / "report.json");

  const json manifest = {{"config_hash", bundle.config_hash},
                         {"config", canonical_config(c)},
                         {"stages", manifest_stages},
                         {"report", artifacts_json(checksum_files(report_files, out))}};
  bundle.manifest = out / kManifestFile;
  io::write_file(bundle.manifest, manifest.dump(2) + "\n");
  return bundle;
}

// ---- report ---------------------------------------------------------------

namespace {

json summarize(std::vector<double> v) {
  if (v.empty()) return {{"n", 0}};
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  double sum = 0;
  for (const double x : v) sum += x;
  const double median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return {{"n", n}, {"mean", sum / static_cast<double>(n)}, {"median", median}, {"min", v.front()}, {"max", v.back()}};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& line : io::read_lines(path))
    if (!line.empty()) rows.push_back(io::split_csv_line(line));
  return rows;
}

}  // namespace

json emit_report(const fs::path& output, const std::string& hash) {
  const auto report_dir = output / "report";
  fs::create_directories(report_dir);
  json artifacts = json::object();
  json absent = json::array();
  json report = {{"config_hash", hash}};

  const auto copy = [&](const std::string& name, const fs::path& src) {
    if (!fs::exists(src)) {
      artifacts[name] = nullptr;
      absent.push_back(name);
      return false;
    }
    io::write_file(report_dir / src.filename(), io::read_file(src));
    artifacts[name] = relative_to(report_dir / src.filename(), output);
    return true;
  };
  copy("swkl_matrix", output / "homophily" / kSwklMatrixFile);
  copy("cosine_matrix", output / "homophily" / kCosineMatrixFile);
  const bool have_personas = copy("persona_composition", output / "personas" / kCompositionFile);
  if (!have_personas) absent.push_back("personas");

  const auto corr_path = output / "homophily" / kCorrelationsFile;
  if (fs::exists(corr_path)) {
    const auto corr = json::parse(io::read_file(corr_path));
    std::string csv = "group_a,group_b,n,rho,p,significant,method\n";
    std::size_t significant = 0;
    for (const auto& row : corr.at("correlations")) {
      const auto num = [](const json& v) { return v.is_null() ? std::string{} : fmt::format("{:.17g}", v.get<double>()); };
      csv += fmt::format("{},{},{},{},{},{},{}\n", io::csv_field(row["pair"][0].get<std::string>()),
                         io::csv_field(row["pair"][1].get<std::string>()), row["n"].get<std::size_t>(), num(row["rho"]),
                         num(row["p"]), row["significant"].get<bool>(), row["method"].get<std::string>());
      significant += row["significant"].get<bool>();
    }
    io::write_file(report_dir / "correlations.csv", csv);
    artifacts["correlations"] = relative_to(report_dir / "correlations.csv", output);
    report["correlations"] = {{"pairs", corr.at("correlations").size()}, {"tests", corr.at("tests")},
                              {"significant", significant}, {"bonferroni_threshold", corr.at("bonferroni_threshold")}};
  } else {
    artifacts["correlations"] = nullptr;
    absent.push_back("correlations");
  }

  const auto cv_path = output / "homophily" / kTemporalCvFile;
  if (fs::exists(cv_path)) {
    std::map<std::string, std::string> cluster_of;
    if (const auto a = output / "personas" / kAssignmentsFile; fs::exists(a)) {
      const auto rows = read_csv(a);
      for (std::size_t i = 1; i < rows.size(); ++i) cluster_of[rows[i].at(0)] = rows[i].at(1);
    }
    const auto rows = read_csv(cv_path);
    std::string csv = "cluster,user,metric,cv\n";
    std::map<std::string, std::map<std::string, std::vector<double>>> by_cluster;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() < 8 || r[7] != "true") continue;
      const auto it = cluster_of.find(r[0]);
      const std::string cluster = it == cluster_of.end() ? "none" : it->second;
      csv += fmt::format("{},{},{},{}\n", cluster, io::csv_field(r[0]), r[2], r[6]);
      by_cluster[cluster][r[2]].push_back(std::stod(r[6]));
    }
    io::write_file(report_dir / "cv_distribution.csv", csv);
    artifacts["cv_distribution"] = relative_to(report_dir / "cv_distribution.csv", output);
    json summary = json::object();
    for (const auto& [cluster, metrics] : by_cluster)
      for (const auto& [metric, values] : metrics) summary[cluster][metric] = summarize(values);
    report["cv_by_cluster"] = summary;
  } else {
    artifacts["cv_distribution"] = nullptr;
    absent.push_back("cv_distribution");
  }

  const auto ranks_path = output / "validate" / "ranks.csv";
  if (fs::exists(ranks_path)) {
    const auto rows = read_csv(ranks_path);
    std::size_t first = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) first += rows[i].at(2) == "1";
    const auto users = rows.empty() ? 0 : rows.size() - 1;
    report["validation"] = {{"users", users},
                            {"rank_one", first},
                            {"rank_one_share", users ? static_cast<double>(first) / static_cast<double>(users) : 0.0}};
  } else {
    absent.push_back("validation");
  }

  report["artifacts"] = artifacts;
  report["absent"] = absent;
  io::write_file(report_dir / "report.json", report.dump(2) + "\n");
  return report;
}

}  // namespace homophily
