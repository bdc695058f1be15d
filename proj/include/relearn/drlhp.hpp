#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "relearn/env.hpp"
#include "relearn/preference.hpp"
#include "relearn/reward_model.hpp"
#include "relearn/soft_q.hpp"

namespace relearn {

struct RewardTrainConfig {
  double learning_rate = 1e-3;
  std::vector<int> hidden = {32, 32};
  int batch_size = 32;
};

struct LoopConfig {
  long long total_comparisons = 2500;
  int num_iterations = 100;
  long long rl_budget = 500000;   // sampler env steps across the whole run
  int fragment_length = 30;
  double initial_random_fraction = 0.1;  // share of comparisons from random trajectories
  int ensemble_size = 1;
  int reward_epochs = 1;          // reward training epochs per iteration
  int segments_per_episode = 2;
  SoftQConfig solver;
  RewardTrainConfig reward;
  std::uint64_t seed = 0;

  void validate() const;
};

struct IterationStats {
  int iteration = 0;
  long long env_steps = 0;    // cumulative sampler steps
  long long comparisons = 0;  // cumulative labeled pairs
  // NaN when the iteration trained on no data (possible at iteration 0).
  double mean_loss = std::numeric_limits<double>::quiet_NaN();
  double sampler_gt_return = 0.0;  // exact expected return of the current sampler
};

struct RunArtifacts {
  RewardEnsemble reward;  // frozen
  SoftQPolicy sampler;
  SegmentBuffer segments;
  std::vector<PreferenceRecord> dataset;
  std::vector<IterationStats> stats;
};

// Read-only view of the loop state at the end of each iteration, after
// relabeling. For tests and diagnostics.
struct IterationView {
  int iteration;
  const TabularMDP& mdp;
  const ReplayBuffer& buffer;
  const RewardEnsemble& reward;
  const SoftQPolicy& sampler;
  const std::vector<PreferenceRecord>& dataset;
  const IterationStats& stats;
};

using LoopObserver = std::function<void(const IterationView&)>;

// Splits total into `parts` non-negative chunks differing by at most 1 and
// summing exactly to total, in a fixed order.
std::vector<long long> budget_split(long long total, int parts);

// Per-iteration comparison counts, length num_iterations + 1. Index 0 is the
// initial random phase: round(initial_random_fraction * total_comparisons).
// The remainder is spread evenly over iterations 1..num_iterations. Sums to
// total_comparisons exactly.
std::vector<long long> query_schedule(const LoopConfig& config);

// The iterated loop: collect trajectories, label pairs, train the reward,
// relabel the replay buffer, optimize the sampler. Iteration 0 collects from
// a uniform-random policy and consumes no sampler budget; iterations
// 1..num_iterations each run the sampler for its share of rl_budget. The
// returned reward is frozen. Deterministic given (mdp, config).
RunArtifacts run_reward_learning(const TabularMDP& mdp, const LoopConfig& config,
                                 const LoopObserver& observer = {});

std::string stats_to_csv(const std::vector<IterationStats>& stats);

// Fixed mixing of the user-facing seed with the arm parameters, so adding
// seeds or budgets to a sweep never changes existing rows.
std::uint64_t derive_run_seed(std::uint64_t seed, int ensemble_size, long long rl_budget);

struct RunOutcome {
  double sampler_return = 0.0;    // Monte Carlo, 100 episodes
  double relearner_return = 0.0;
  double epic_uniform = 0.0;      // learned reward vs ground truth
  double epic_expert = 0.0;
};

struct RunResult {
  RunOutcome outcome;
  RunArtifacts artifacts;
};

// One full experiment pipeline: reward learning, sampler evaluation,
// relearning, EPIC against ground truth under both coverage kinds.
// config.seed must already be the derived per-run seed.
RunResult execute_run(const TabularMDP& mdp, const std::string& env_name,
                      const LoopConfig& config, const LoopObserver& observer = {});

struct SweepRow {
  long long rl_budget = 0;
  std::uint64_t seed = 0;  // user-facing seed, before derivation
  double sampler_return = 0.0;
  double relearner_return = 0.0;
  double epic_uniform = 0.0;
  double epic_expert = 0.0;
};

// Runs the full pipeline for every (budget, seed), in budget-major order.
std::vector<SweepRow> rl_budget_sweep(const TabularMDP& mdp, const LoopConfig& base,
                                      const std::vector<long long>& budgets,
                                      const std::vector<std::uint64_t>& seeds);

}  // namespace relearn
