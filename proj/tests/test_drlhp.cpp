#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <vector>

#include "relearn/drlhp.hpp"
#include "relearn/env.hpp"
#include "relearn/preference.hpp"

using namespace relearn;

namespace {

LoopConfig small_config() {
  LoopConfig config;
  config.total_comparisons = 20;
  config.num_iterations = 2;
  config.rl_budget = 600;
  config.fragment_length = 5;
  config.ensemble_size = 2;
  config.seed = 5;
  return config;
}

}  // namespace

TEST_CASE("budget_split spreads the total evenly in a fixed order") {
  CHECK(budget_split(10, 3) == std::vector<long long>{3, 3, 4});
  CHECK(budget_split(9, 3) == std::vector<long long>{3, 3, 3});
  CHECK(budget_split(2, 3) == std::vector<long long>{0, 1, 1});
  long long total = 0;
  for (long long part : budget_split(500000, 100)) total += part;
  CHECK(total == 500000);
}

TEST_CASE("query_schedule front-loads the random phase and spreads the rest") {
  LoopConfig config;  // defaults: 2500 comparisons, 100 iterations, 10% random
  const auto schedule = query_schedule(config);
  REQUIRE(schedule.size() == 101);
  CHECK(schedule[0] == 250);
  long long total = schedule[0];
  int heavy = 0, light = 0;
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    CHECK((schedule[i] == 22 || schedule[i] == 23));
    heavy += schedule[i] == 23 ? 1 : 0;
    light += schedule[i] == 22 ? 1 : 0;
    total += schedule[i];
  }
  CHECK(total == 2500);
  CHECK(heavy == 50);
  CHECK(light == 50);
}

TEST_CASE("the loop walks its schedule and freezes the reward") {
  const TabularMDP mdp = build_tiny_room();
  const LoopConfig config = small_config();
  std::vector<long long> observed_steps, observed_comparisons, buffer_sizes;
  const RunArtifacts artifacts = run_reward_learning(mdp, config, [&](const IterationView& view) {
    observed_steps.push_back(view.stats.env_steps);
    observed_comparisons.push_back(view.stats.comparisons);
    buffer_sizes.push_back(static_cast<long long>(view.buffer.size()));
    CHECK(view.reward.size() == 2);
  });
  // Observer fires once per iteration including the random phase.
  CHECK(observed_steps == std::vector<long long>{0, 300, 600});
  CHECK(observed_comparisons.back() == 20);
  // The random phase never touches the replay buffer.
  CHECK(buffer_sizes[0] == 0);
  CHECK(buffer_sizes[1] == 300);
  CHECK(buffer_sizes[2] == 600);

  CHECK(artifacts.dataset.size() == 20);
  CHECK(artifacts.reward.frozen());
  CHECK(artifacts.stats.size() == 3);
  CHECK(artifacts.sampler.num_states == mdp.num_states);
  CHECK(artifacts.segments.size() >= 2);
  // Segment bookkeeping: iteration tags are within range and non-decreasing.
  for (std::size_t i = 1; i < artifacts.segments.size(); ++i)
    CHECK(artifacts.segments.iteration[i] >= artifacts.segments.iteration[i - 1]);
  CHECK(artifacts.segments.iteration.front() == 0);
  CHECK(artifacts.segments.iteration.back() <= config.num_iterations);
}

TEST_CASE("replay rewards always match a fresh evaluation of the current reward") {
  const TabularMDP mdp = build_tiny_room();
  LoopConfig config = small_config();
  config.rl_budget = 900;
  config.num_iterations = 3;
  int checked = 0;
  run_reward_learning(mdp, config, [&](const IterationView& view) {
    for (std::size_t i = 0; i < view.buffer.size(); ++i) {
      // Exact equality: relabeling and evaluation must share one code path.
      CHECK(view.buffer.rewards[i] == view.reward.evaluate(view.buffer.transitions[i]));
      checked += 1;
    }
  });
  CHECK(checked == 300 + 600 + 900);
}

TEST_CASE("the loop is deterministic and seed-sensitive") {
  const TabularMDP mdp = build_tiny_room();
  const LoopConfig config = small_config();
  const RunArtifacts a = run_reward_learning(mdp, config);
  const RunArtifacts b = run_reward_learning(mdp, config);
  CHECK(dataset_to_jsonl(a.dataset) == dataset_to_jsonl(b.dataset));
  CHECK(a.sampler.q == b.sampler.q);
  CHECK(a.reward.state_values() == b.reward.state_values());

  LoopConfig other = config;
  other.seed = 6;
  const RunArtifacts c = run_reward_learning(mdp, other);
  CHECK(dataset_to_jsonl(a.dataset) != dataset_to_jsonl(c.dataset));
}

TEST_CASE("iteration stats accumulate budget and comparisons") {
  const TabularMDP mdp = build_tiny_room();
  LoopConfig config = small_config();
  config.total_comparisons = 30;
  config.num_iterations = 4;
  config.rl_budget = 1000;
  const RunArtifacts artifacts = run_reward_learning(mdp, config);
  REQUIRE(artifacts.stats.size() == 5);
  CHECK(artifacts.stats[0].iteration == 0);
  CHECK(artifacts.stats[0].env_steps == 0);
  CHECK(artifacts.stats.back().env_steps == 1000);
  CHECK(artifacts.stats.back().comparisons == 30);
  for (std::size_t i = 1; i < artifacts.stats.size(); ++i) {
    CHECK(artifacts.stats[i].env_steps > artifacts.stats[i - 1].env_steps);
    CHECK(artifacts.stats[i].comparisons >= artifacts.stats[i - 1].comparisons);
    CHECK(std::isfinite(artifacts.stats[i].sampler_gt_return));
  }
}

TEST_CASE("stats_to_csv emits a header and one row per iteration") {
  const TabularMDP mdp = build_tiny_room();
  const RunArtifacts artifacts = run_reward_learning(mdp, small_config());
  const std::string csv = stats_to_csv(artifacts.stats);
  std::istringstream lines(csv);
  std::string line;
  int rows = 0;
  std::getline(lines, line);
  CHECK(line == "iteration,env_steps,comparisons,mean_loss,sampler_gt_return");
  while (std::getline(lines, line)) rows += 1;
  CHECK(rows == 3);
}

TEST_CASE("derive_run_seed separates arms and stays put as sweeps grow") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL})
    for (int k : {1, 5})
      for (long long budget : {100000LL, 500000LL})
        seen.insert(derive_run_seed(seed, k, budget));
  CHECK(seen.size() == 12);
  CHECK(derive_run_seed(3, 5, 500000) == derive_run_seed(3, 5, 500000));
}

TEST_CASE("execute_run produces a finite, frozen, scored outcome") {
  const TabularMDP mdp = build_tiny_room();
  LoopConfig config = small_config();
  config.total_comparisons = 60;
  config.num_iterations = 5;
  config.rl_budget = 5000;
  config.seed = derive_run_seed(0, config.ensemble_size, config.rl_budget);
  const RunResult result = execute_run(mdp, "tiny_room", config);
  CHECK(std::isfinite(result.outcome.sampler_return));
  CHECK(std::isfinite(result.outcome.relearner_return));
  CHECK(result.outcome.epic_uniform >= 0.0);
  CHECK(result.outcome.epic_uniform <= 1.0);
  CHECK(result.outcome.epic_expert >= 0.0);
  CHECK(result.outcome.epic_expert <= 1.0);
  CHECK(result.artifacts.reward.frozen());
  // Returns on tiny_room are bounded by entering the goal every step.
  CHECK(result.outcome.sampler_return <= 1000.0);
  CHECK(result.outcome.relearner_return <= 1000.0);
}

TEST_CASE("rl_budget_sweep walks budgets major and seeds minor") {
  const TabularMDP mdp = build_tiny_room();
  LoopConfig base = small_config();
  base.total_comparisons = 16;
  base.num_iterations = 2;
  const std::vector<long long> budgets = {400, 800};
  const std::vector<std::uint64_t> seeds = {0, 1, 2};
  const auto rows = rl_budget_sweep(mdp, base, budgets, seeds);
  REQUIRE(rows.size() == 6);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].rl_budget == budgets[i / 3]);
    CHECK(rows[i].seed == seeds[i % 3]);
    CHECK(std::isfinite(rows[i].sampler_return));
    CHECK(std::isfinite(rows[i].relearner_return));
  }
}

TEST_CASE("loop config validation rejects nonsense") {
  LoopConfig config;
  config.total_comparisons = -1;
  CHECK_THROWS(config.validate());
  config = LoopConfig{};
  config.fragment_length = 0;
  CHECK_THROWS(config.validate());
  config = LoopConfig{};
  config.ensemble_size = 0;
  CHECK_THROWS(config.validate());
  config = LoopConfig{};
  config.initial_random_fraction = 1.5;
  CHECK_THROWS(config.validate());
  config = LoopConfig{};
  config.rl_budget = 0;
  CHECK_THROWS(config.validate());
}
