#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "relearn/drlhp.hpp"

namespace relearn {

// Raised for anything wrong with a config file: syntax, unknown keys or
// sections, bad values. The CLI maps it to exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

struct ExperimentConfig {
  std::string experiment = "single_run";  // ensemble_study | budget_sweep | single_run
  std::string env;                        // default depends on the experiment
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "results";
  int parallelism = 1;
  LoopConfig loop;
  std::vector<long long> sweep_budgets = {100000, 200000, 400000, 800000};

  void validate() const;  // throws ConfigError
  // The environment actually used: `env` if set, else the experiment default
  // (ensemble_study: stay_inside; budget_sweep and single_run: tiny_room).
  std::string resolved_env() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);
// Canonical form; parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

struct ResultRow {
  std::string experiment;
  std::string env;
  std::uint64_t seed = 0;  // user-facing seed
  int ensemble_size = 1;
  long long rl_budget = 0;
  double sampler_return = 0.0;
  double relearner_return = 0.0;
  double epic_uniform = 0.0;
  double epic_expert = 0.0;
  std::string error;  // empty on success; numeric fields are NaN on failure
};

struct ResultsTable {
  std::vector<ResultRow> rows;
};

std::string results_to_csv(const ResultsTable& table);
ResultsTable results_from_csv(const std::string& text);

// One unit of work: a fully derived LoopConfig plus its row skeleton.
struct RunSpec {
  std::string experiment;
  std::string env;
  std::uint64_t seed = 0;
  LoopConfig loop;              // loop.seed already derived
  std::string artifact_dir;     // non-empty: dump checkpoint/policies/stats here
};

std::vector<RunSpec> plan_runs(const ExperimentConfig& config);

using RunnerFn = std::function<ResultRow(const RunSpec&)>;

// Executes a single RunSpec end to end, including any artifact dump.
ResultRow default_runner(const RunSpec& spec);

// Dispatches the planned runs to a bounded worker pool (config.parallelism)
// and appends completed rows to <output_dir>/results.csv in plan order, so a
// partial sweep is recoverable and re-runs are byte-identical. A failed run
// yields a row with the error column set; other runs are unaffected.
ResultsTable run_experiment_with_runner(const ExperimentConfig& config, const RunnerFn& runner);
ResultsTable run_experiment(const ExperimentConfig& config);

// Per-arm aggregates. An arm is one (env, ensemble_size, rl_budget) cell.
struct ArmSummary {
  std::string env;
  int ensemble_size = 1;
  long long rl_budget = 0;
  int num_seeds = 0;
  int num_failed = 0;
  double sampler_mean = 0.0;
  double sampler_stderr = 0.0;
  double relearner_mean = 0.0;
  double relearner_stderr = 0.0;
  double epic_uniform_mean = 0.0;
  double epic_expert_mean = 0.0;
  double fraction_relearner_ok = 0.0;  // relearner >= sampler - 5% |sampler|
};

std::vector<ArmSummary> summarize(const ResultsTable& table);
std::string summary_text(const std::vector<ArmSummary>& arms);
// Long-format CSV for plotting.
std::string summary_csv(const std::vector<ArmSummary>& arms);

}  // namespace relearn
