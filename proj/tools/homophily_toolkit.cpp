#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "homophily/error.hpp"
#include "homophily/pipeline.hpp"
#include "homophily/stages.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

using namespace homophily;

void print_summary(const StageOutput& out) { std::cout << out.summary.dump(2) << "\n"; }

std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavioral and topical homophily toolkit"};
  app.require_subcommand(1);
  unsigned jobs = 1;
  bool verbose = false;
  app.add_option("--jobs,-j", jobs, "Worker threads per stage")->check(CLI::PositiveNumber);
  app.add_flag("--verbose,-v", verbose, "Debug logging");

  std::function<void()> action;

  // ingest
  IngestOptions ingest;
  std::string ingest_users;
  auto* ingest_cmd = app.add_subcommand("ingest", "Build per-user activity files and home assignments");
  ingest_cmd->add_option("--input", ingest.input_glob, "Glob of event dumps (.jsonl, .jsonl.gz)")->required();
  ingest_cmd->add_option("--users", ingest_users, "File with one user id per line");
  ingest_cmd->add_option("--out", ingest.out_dir, "Output directory")->required();
  ingest_cmd->callback([&] {
    action = [&] {
      ingest.users_file = opt_path(ingest_users);
      ingest.jobs = jobs;
      print_summary(run_ingest(ingest));
    };
  });

  // label
  LabelOptions label;
  std::string label_file;
  int num_topics = 0;
  auto* label_cmd = app.add_subcommand("label", "Attach stance and topic labels");
  label_cmd->add_option("--activity", label.activity_dir, "Activity directory from ingest")->required();
  label_cmd->add_option("--labels", label_file, "Label JSONL {event_id, stance, topic_id}");
  label_cmd->add_flag("--lexicon-fallback", label.lexicon_fallback, "Fill missing stances with the lexicon");
  label_cmd->add_option("--num-topics", num_topics, "Topic count (default: largest id + 1)");
  label_cmd->add_option("--out", label.out_dir, "Output directory")->required();
  label_cmd->callback([&] {
    action = [&] {
      label.labels_file = opt_path(label_file);
      if (num_topics > 0) label.num_topics = num_topics;
      label.jobs = jobs;
      print_summary(run_label(label));
    };
  });

  // encode
  EncodeOptions encode;
  auto* encode_cmd = app.add_subcommand("encode", "Encode activity into state-action trajectories");
  encode_cmd->add_option("--activity", encode.activity_dir, "Labeled activity directory")->required();
  encode_cmd->add_option("--alpha", encode.alpha, "Transition smoothing pseudo-count");
  encode_cmd->add_option("--out", encode.out_dir, "Output directory")->required();
  encode_cmd->callback([&] {
    action = [&] {
      encode.jobs = jobs;
      print_summary(run_encode(encode));
    };
  });

  // learn
  LearnOptions learn;
  bool no_yearly = false;
  std::string start_mode = "likelihood-matched";
  auto* learn_cmd = app.add_subcommand("learn", "Fit per-user policies by maximum-entropy deep IRL");
  learn_cmd->add_option("--trajectories", learn.trajectories_dir, "Directory with trajectories.jsonl")->required();
  learn_cmd->add_option("--out", learn.out_dir, "Output directory")->required();
  learn_cmd->add_option("--seed", learn.train.rng_seed, "Master seed");
  learn_cmd->add_option("--lr", learn.train.learning_rate, "Adam learning rate");
  learn_cmd->add_option("--epochs", learn.train.epochs, "Training epochs");
  learn_cmd->add_option("--gamma", learn.train.gamma, "Discount factor");
  learn_cmd->add_option("--epsilon", learn.train.epsilon, "Soft value iteration tolerance");
  learn_cmd->add_option("--start-mode", start_mode, "likelihood-matched | empirical-states | initial-family");
  learn_cmd->add_option("--min-year-pairs", learn.min_year_pairs, "Smallest year slice that is modeled");
  learn_cmd->add_flag("--no-yearly", no_yearly, "Skip per-year policies");
  learn_cmd->callback([&] {
    action = [&] {
      learn.train = train_config_from_json({{"start_mode", start_mode}}, learn.train);
      learn.yearly = !no_yearly;
      learn.jobs = jobs;
      print_summary(run_learn(learn));
    };
  });

  // homophily
  HomophilyOptions hom;
  std::string cv_mode = "cohort";
  auto* hom_cmd = app.add_subcommand("homophily", "Group homophily matrices, correlations and temporal CV");
  hom_cmd->add_option("--policies", hom.policies_dir, "Directory with policies.jsonl")->required();
  hom_cmd->add_option("--topics", hom.topics_dir, "Directory with topics.jsonl")->required();
  hom_cmd->add_option("--groups", hom.groups_csv, "CSV with user and home_subreddit columns")->required();
  hom_cmd->add_option("--out", hom.out_dir, "Output directory")->required();
  hom_cmd->add_option("--cv-mode", cv_mode, "cohort | global")->check(CLI::IsMember({"cohort", "global"}));
  hom_cmd->add_option("--alpha", hom.alpha, "Family-wise significance level");
  hom_cmd->add_option("--seed", hom.seed, "Seed for permutation p-values");
  hom_cmd->callback([&] {
    action = [&] {
      hom.cv_mode = cv_mode == "global" ? CvMode::Global : CvMode::Cohort;
      hom.jobs = jobs;
      print_summary(run_homophily(hom));
    };
  });

  // personas
  PersonaOptions per;
  std::string k_text = "auto";
  auto* per_cmd = app.add_subcommand("personas", "Cluster policies into personas");
  per_cmd->add_option("--policies", per.policies_dir, "Directory with policies.jsonl")->required();
  per_cmd->add_option("--k", k_text, "auto or a fixed cluster count");
  per_cmd->add_option("--seed", per.seed, "Seed");
  per_cmd->add_option("--k-max", per.selection.k_max, "Largest k considered");
  per_cmd->add_option("--gap-references", per.selection.gap_references, "Reference datasets for the gap statistic");
  per_cmd->add_option("--out", per.out_dir, "Output directory")->required();
  per_cmd->callback([&] {
    action = [&] {
      if (k_text != "auto") {
        try {
          std::size_t pos = 0;
          per.k = std::stoi(k_text, &pos);
          if (pos != k_text.size()) throw std::invalid_argument(k_text);
        } catch (const std::exception&) {
          throw ConfigError(fmt::format("--k must be 'auto' or an integer, got '{}'", k_text));
        }
      }
      per.jobs = jobs;
      print_summary(run_personas(per));
    };
  });

  // validate
  ValidateOptions val;
  auto* val_cmd = app.add_subcommand("validate", "Rank learned policies against random policies");
  val_cmd->add_option("--trajectories", val.trajectories_dir, "Directory with trajectories.jsonl")->required();
  val_cmd->add_option("--policies", val.policies_dir, "Directory with policies.jsonl")->required();
  val_cmd->add_option("--n-random", val.n_random, "Random competitors per user");
  val_cmd->add_option("--seed", val.seed, "Seed");
  val_cmd->add_option("--out", val.out_file, "Ranks CSV")->required();
  val_cmd->callback([&] {
    action = [&] {
      val.jobs = jobs;
      print_summary(run_validate(val));
    };
  });

  // simulate
  SimulateOptions sim;
  std::string archetypes;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate trajectories from known policies");
  sim_cmd->add_option("--archetypes", archetypes, "JSON list of archetype policies (built-in personas if omitted)");
  sim_cmd->add_option("--count", sim.count, "Agents per built-in persona");
  sim_cmd->add_option("--length", sim.length, "Steps per agent");
  sim_cmd->add_option("--concentration", sim.concentration, "Dirichlet jitter around each archetype (0 = none)");
  sim_cmd->add_option("--seed", sim.seed, "Seed");
  sim_cmd->add_option("--out", sim.out_dir, "Output directory")->required();
  sim_cmd->callback([&] {
    action = [&] {
      sim.archetypes_file = opt_path(archetypes);
      print_summary(run_simulate(sim));
    };
  });

  // sample
  SampleOptions sample;
  auto* sample_cmd = app.add_subcommand("sample", "Draw the activity-stratified user sample");
  sample_cmd->add_option("--input", sample.input_glob, "Glob of event dumps")->required();
  sample_cmd->add_option("--seed", sample.seed, "Seed");
  sample_cmd->add_option("--out", sample.out_file, "User list file")->required();
  sample_cmd->callback([&] { action = [&] { print_summary(run_sample(sample)); }; });

  // synth-events
  SynthEventsOptions synth;
  auto* synth_cmd = app.add_subcommand("synth-events", "Render a synthetic event dump with labels");
  synth_cmd->add_option("--subreddits", synth.subreddits, "Group names");
  synth_cmd->add_option("--users-per-group", synth.users_per_group, "Users per group");
  synth_cmd->add_option("--states", synth.states_per_user, "Rendered states per user");
  synth_cmd->add_option("--years", synth.years, "Years spanned");
  synth_cmd->add_option("--num-topics", synth.num_topics, "Topic count");
  synth_cmd->add_option("--unlabeled-share", synth.unlabeled_share, "Share of stances left out of the label file");
  synth_cmd->add_option("--seed", synth.seed, "Seed");
  synth_cmd->add_option("--out", synth.out_dir, "Output directory")->required();
  synth_cmd->callback([&] { action = [&] { print_summary(run_synth_events(synth)); }; });

  // run
  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Run the full pipeline from a JSON config");
  run_cmd->add_option("--config", config_path, "Pipeline config (JSON)")->required();
  run_cmd->callback([&] {
    action = [&] {
      const auto config = load_pipeline_config(config_path);
      const auto bundle = run_pipeline(config, jobs);
      json stages = json::array();
      for (const auto& s : bundle.stages)
        stages.push_back({{"name", s.name}, {"status", s.ran ? "ran" : s.skipped ? "skipped" : "disabled"}});
      std::cout << json{{"manifest", bundle.manifest.string()}, {"config_hash", bundle.config_hash},
                        {"stages", stages}, {"absent", bundle.absent}}
                       .dump(2)
                << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("homophily"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    action();
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kExitConfig;
  } catch (const StageError& e) {
    spdlog::error("{}", e.what());
    return kExitStage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitStage;
  }
  return EXIT_SUCCESS;
}
