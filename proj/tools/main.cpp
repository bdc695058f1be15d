#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "relearn/checkpoint.hpp"
#include "relearn/eval.hpp"
#include "relearn/experiment.hpp"

namespace {

// Exit codes: 0 success, 1 bad configuration or arguments, 2 run failure.
constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRunFailure = 2;

relearn::RewardFn reward_from_spec(const std::string& spec, const relearn::TabularMDP& mdp,
                                   const std::string& env_name) {
  if (spec == "gt") return relearn::gt_reward_fn(mdp);
  const relearn::Checkpoint checkpoint = relearn::load_checkpoint(spec);
  if (checkpoint.env != env_name)
    throw relearn::ConfigError("checkpoint '" + spec + "' was trained on env '" +
                               checkpoint.env + "', not '" + env_name + "'");
  return relearn::state_reward_fn(checkpoint.ensemble.state_values());
}

int cmd_run(const std::string& config_path) {
  relearn::ExperimentConfig config = relearn::parse_config(config_path);
  const relearn::ResultsTable table = relearn::run_experiment(config);
  const std::vector<relearn::ArmSummary> arms = relearn::summarize(table);
  std::cout << relearn::summary_text(arms);
  relearn::write_text_file(config.output_dir + "/summary.csv", relearn::summary_csv(arms));
  std::cout << "results written to " << config.output_dir << "/results.csv\n";
  for (const relearn::ResultRow& row : table.rows) {
    if (!row.error.empty()) {
      std::cerr << "run failed (env=" << row.env << " seed=" << row.seed << "): " << row.error
                << "\n";
      return kExitRunFailure;
    }
  }
  return kExitOk;
}

int cmd_summarize(const std::string& results_path) {
  const std::string text = relearn::read_text_file(results_path);
  relearn::ResultsTable table;
  try {
    table = relearn::results_from_csv(text);
  } catch (const std::invalid_argument& e) {
    throw relearn::ConfigError(e.what());
  }
  std::cout << relearn::summary_text(relearn::summarize(table));
  return kExitOk;
}

int cmd_dump_env(const std::string& env_name) {
  if (!relearn::is_known_env(env_name))
    throw relearn::ConfigError("unknown environment '" + env_name + "'");
  std::cout << relearn::reward_map_csv(relearn::make_grid(env_name));
  return kExitOk;
}

int cmd_epic(const std::string& spec_a, const std::string& spec_b, const std::string& env_name,
             const std::string& coverage_kind, std::uint64_t seed) {
  if (!relearn::is_known_env(env_name))
    throw relearn::ConfigError("unknown environment '" + env_name + "'");
  const relearn::TabularMDP mdp = relearn::make_env(env_name);
  const relearn::RewardFn reward_a = reward_from_spec(spec_a, mdp, env_name);
  const relearn::RewardFn reward_b = reward_from_spec(spec_b, mdp, env_name);
  relearn::CoverageDistribution coverage;
  if (coverage_kind == "uniform") {
    coverage = relearn::uniform_coverage(mdp);
  } else if (coverage_kind == "expert") {
    relearn::SplitMix64 rng(relearn::derive_seed(seed, 3));
    coverage = relearn::expert_coverage(mdp, 10.0, 200, rng);
  } else {
    throw relearn::ConfigError("unknown coverage '" + coverage_kind +
                               "' (expected uniform or expert)");
  }
  const double distance =
      relearn::epic_distance(reward_a, reward_b, mdp, {coverage, mdp.discount});
  std::printf("%.17g\n", distance);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based reward learning experiments on tabular gridworlds"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("config", config_path, "Path to the experiment config")->required();

  std::string results_path;
  CLI::App* summarize =
      app.add_subcommand("summarize", "Summarize a results.csv written by 'run'");
  summarize->add_option("results", results_path, "Path to results.csv")->required();

  std::string env_name;
  CLI::App* dump_env = app.add_subcommand("dump-env", "Print an environment's reward map as CSV");
  dump_env->add_option("env", env_name, "Environment name")->required();

  std::string spec_a, spec_b, epic_env = "tiny_room", coverage = "uniform";
  std::uint64_t epic_seed = 0;
  CLI::App* epic = app.add_subcommand(
      "epic", "EPIC distance between two rewards ('gt' or a reward checkpoint path)");
  epic->add_option("reward_a", spec_a, "'gt' or checkpoint path")->required();
  epic->add_option("reward_b", spec_b, "'gt' or checkpoint path")->required();
  epic->add_option("--env", epic_env, "Environment name");
  epic->add_option("--coverage", coverage, "Coverage distribution: uniform or expert");
  epic->add_option("--seed", epic_seed, "Seed for expert coverage rollouts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (run->parsed()) return cmd_run(config_path);
    if (summarize->parsed()) return cmd_summarize(results_path);
    if (dump_env->parsed()) return cmd_dump_env(env_name);
    if (epic->parsed()) return cmd_epic(spec_a, spec_b, epic_env, coverage, epic_seed);
  } catch (const relearn::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailure;
  }
  return kExitConfigError;
}
