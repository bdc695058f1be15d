#include "relearn/drlhp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "relearn/eval.hpp"

namespace relearn {

void LoopConfig::validate() const {
  if (total_comparisons < 0) throw std::invalid_argument("total_comparisons must be >= 0");
  if (num_iterations < 1) throw std::invalid_argument("num_iterations must be >= 1");
  if (rl_budget < 1) throw std::invalid_argument("rl_budget must be >= 1");
  if (fragment_length < 1) throw std::invalid_argument("fragment_length must be >= 1");
  if (initial_random_fraction < 0.0 || initial_random_fraction > 1.0)
    throw std::invalid_argument("initial_random_fraction must lie in [0, 1]");
  if (ensemble_size < 1) throw std::invalid_argument("ensemble_size must be >= 1");
  if (reward_epochs < 1) throw std::invalid_argument("reward_epochs must be >= 1");
  if (segments_per_episode < 1) throw std::invalid_argument("segments_per_episode must be >= 1");
  if (solver.discount <= 0.0 || solver.discount >= 1.0)
    throw std::invalid_argument("solver discount must lie in (0, 1)");
  if (solver.learning_rate <= 0.0 || solver.temperature <= 0.0)
    throw std::invalid_argument("solver learning rate and temperature must be positive");
  if (solver.grad_steps_per_env_step < 0)
    throw std::invalid_argument("grad_steps_per_env_step must be >= 0");
  if (reward.learning_rate <= 0.0)
    throw std::invalid_argument("reward learning rate must be positive");
  if (reward.batch_size < 1) throw std::invalid_argument("reward batch size must be >= 1");
  if (reward.hidden.empty()) throw std::invalid_argument("reward net needs hidden layers");
}

std::vector<long long> budget_split(long long total, int parts) {
  if (parts < 1) throw std::invalid_argument("parts must be >= 1");
  if (total < 0) throw std::invalid_argument("total must be >= 0");
  std::vector<long long> chunks(parts);
  long long prev = 0;
  for (int i = 0; i < parts; ++i) {
    const long long cut = total * (i + 1) / parts;
    chunks[i] = cut - prev;
    prev = cut;
  }
  return chunks;
}

std::vector<long long> query_schedule(const LoopConfig& config) {
  const long long initial =
      std::llround(config.initial_random_fraction * static_cast<double>(config.total_comparisons));
  std::vector<long long> schedule;
  schedule.reserve(config.num_iterations + 1);
  schedule.push_back(initial);
  const std::vector<long long> rest =
      budget_split(config.total_comparisons - initial, config.num_iterations);
  schedule.insert(schedule.end(), rest.begin(), rest.end());
  return schedule;
}

RunArtifacts run_reward_learning(const TabularMDP& mdp, const LoopConfig& config,
                                 const LoopObserver& observer) {
  config.validate();
  mdp.validate();
  if (mdp.horizon < config.fragment_length)
    throw std::invalid_argument("horizon shorter than fragment_length");

  SplitMix64 rng(config.seed);
  RewardEnsemble ensemble(mdp.num_states, config.reward.hidden, config.ensemble_size,
                          config.reward.learning_rate, rng);
  SoftQPolicy sampler(mdp.num_states, mdp.num_actions, config.solver.temperature,
                      config.solver.initial_q);
  ReplayBuffer buffer;
  SegmentBuffer segments;
  std::vector<PreferenceRecord> dataset;
  std::vector<IterationStats> stats;
  const std::vector<long long> schedule = query_schedule(config);
  const std::vector<long long> steps = budget_split(config.rl_budget, config.num_iterations);

  auto collect = [&](const std::vector<Transition>& episode, int iteration) {
    // The final episode of an iteration can be cut short by the step budget.
    if (episode.size() < static_cast<std::size_t>(config.fragment_length)) return;
    std::vector<TrajectorySegment> fragments =
        extract_fragments(episode, mdp.gt_reward, config.fragment_length,
                          config.segments_per_episode, rng);
    for (TrajectorySegment& fragment : fragments) segments.push(std::move(fragment), iteration);
  };

  auto label_pairs = [&](long long count) {
    if (count <= 0) return;
    const auto pairs = select_pair_indices(segments.size(), count, rng);
    for (const auto& [i, j] : pairs)
      dataset.push_back(synthetic_label(segments.segments[i], segments.segments[j], rng));
  };

  // Trains on the whole dataset, then relabels the buffer from a fresh
  // post-training evaluation table. Returns the mean training loss.
  auto train_and_relabel = [&]() {
    if (dataset.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto traces = train_reward_epoch(ensemble, dataset, config.reward_epochs,
                                           config.reward.batch_size, rng);
    const std::vector<double> table = ensemble.state_values();
    relabel_buffer(buffer,
                   [&table](const Transition& t) { return table[reward_input_state(t)]; });
    double total = 0.0;
    std::size_t batches = 0;
    for (const auto& trace : traces) {
      for (double loss : trace) total += loss;
      batches += trace.size();
    }
    return batches > 0 ? total / static_cast<double>(batches)
                       : std::numeric_limits<double>::quiet_NaN();
  };

  auto record = [&](int iteration, long long env_steps, double mean_loss) {
    IterationStats entry;
    entry.iteration = iteration;
    entry.env_steps = env_steps;
    entry.comparisons = static_cast<long long>(dataset.size());
    entry.mean_loss = mean_loss;
    entry.sampler_gt_return = exact_policy_return(mdp, sampler);
    stats.push_back(entry);
    if (observer)
      observer(IterationView{iteration, mdp, buffer, ensemble, sampler, dataset, stats.back()});
  };

  // Iteration 0: uniform-random trajectories seed the segment buffer. These
  // steps are outside the sampler's rl_budget and never enter the replay
  // buffer. The phase is a fixed 5,000 env steps (one iteration's worth at
  // the default budget) so varying rl_budget never changes the bootstrap
  // data a sweep arm starts from.
  constexpr long long kInitialRandomSteps = 5000;
  const long long random_episodes = std::max<long long>(1, kInitialRandomSteps / mdp.horizon);
  const ActionSampler random_policy = uniform_random_sampler(mdp.num_actions);
  for (long long e = 0; e < random_episodes; ++e) collect(rollout(mdp, random_policy, rng), 0);
  label_pairs(schedule[0]);
  record(0, 0, train_and_relabel());

  const TransitionReward observe = [&ensemble](const Transition& t) {
    const double value = ensemble.observe(t);
    if (!std::isfinite(value))
      throw std::runtime_error("non-finite learned reward during sampling");
    return value;
  };
  long long env_steps_done = 0;
  for (int iteration = 1; iteration <= config.num_iterations; ++iteration) {
    const long long iteration_steps = steps[iteration - 1];
    if (iteration_steps > 0) {
      train_sampler(mdp, observe, config.solver, iteration_steps, buffer, sampler, rng,
                    [&](const std::vector<Transition>& episode) { collect(episode, iteration); });
      env_steps_done += iteration_steps;
    }
    label_pairs(schedule[iteration]);
    record(iteration, env_steps_done, train_and_relabel());
  }

  ensemble.freeze();
  return RunArtifacts{std::move(ensemble), std::move(sampler), std::move(segments),
                      std::move(dataset), std::move(stats)};
}

std::string stats_to_csv(const std::vector<IterationStats>& stats) {
  std::string out = "iteration,env_steps,comparisons,mean_loss,sampler_gt_return\n";
  char buf[160];
  for (const IterationStats& s : stats) {
    std::snprintf(buf, sizeof(buf), "%d,%lld,%lld,%.17g,%.17g\n", s.iteration, s.env_steps,
                  s.comparisons, s.mean_loss, s.sampler_gt_return);
    out += buf;
  }
  return out;
}

std::uint64_t derive_run_seed(std::uint64_t seed, int ensemble_size, long long rl_budget) {
  const std::uint64_t with_ensemble =
      derive_seed(seed, 0x656E73ULL ^ static_cast<std::uint64_t>(ensemble_size));
  return derive_seed(with_ensemble, 0x627564ULL ^ static_cast<std::uint64_t>(rl_budget));
}

RunResult execute_run(const TabularMDP& mdp, const std::string& env_name,
                      const LoopConfig& config, const LoopObserver& observer) {
  RunArtifacts artifacts = run_reward_learning(mdp, config, observer);

  SplitMix64 sampler_eval_rng(derive_seed(config.seed, 1));
  SplitMix64 relearn_rng(derive_seed(config.seed, 2));
  SplitMix64 coverage_rng(derive_seed(config.seed, 3));

  RunOutcome outcome;
  outcome.sampler_return = evaluate_return(mdp, artifacts.sampler, 100, sampler_eval_rng);

  char config_id[96];
  std::snprintf(config_id, sizeof(config_id), "K=%d,budget=%lld,seed=%llu",
                config.ensemble_size, config.rl_budget,
                static_cast<unsigned long long>(config.seed));
  RelearnOptions options;
  options.temperature = 0.1;
  options.discount = 0.99;
  options.eval_episodes = 100;
  options.sampler_return = outcome.sampler_return;
  options.env_name = env_name;
  options.config_id = config_id;
  const RelearnReport report = relearn(mdp, artifacts.reward, options, relearn_rng);
  outcome.relearner_return = report.relearner_return;

  const RewardFn learned = state_reward_fn(artifacts.reward.state_values());
  const RewardFn truth = gt_reward_fn(mdp);
  EpicConfig epic;
  epic.discount = mdp.discount;
  epic.coverage = uniform_coverage(mdp);
  outcome.epic_uniform = epic_distance(learned, truth, mdp, epic);
  epic.coverage = expert_coverage(mdp, 10.0, 200, coverage_rng);
  outcome.epic_expert = epic_distance(learned, truth, mdp, epic);

  return RunResult{outcome, std::move(artifacts)};
}

std::vector<SweepRow> rl_budget_sweep(const TabularMDP& mdp, const LoopConfig& base,
                                      const std::vector<long long>& budgets,
                                      const std::vector<std::uint64_t>& seeds) {
  if (budgets.empty()) throw std::invalid_argument("budgets must be non-empty");
  if (seeds.empty()) throw std::invalid_argument("seeds must be non-empty");
  std::vector<SweepRow> rows;
  rows.reserve(budgets.size() * seeds.size());
  for (long long budget : budgets) {
    for (std::uint64_t seed : seeds) {
      LoopConfig config = base;
      config.rl_budget = budget;
      config.seed = derive_run_seed(seed, config.ensemble_size, budget);
      const RunResult result = execute_run(mdp, "", config);
      rows.push_back(SweepRow{budget, seed, result.outcome.sampler_return,
                              result.outcome.relearner_return, result.outcome.epic_uniform,
                              result.outcome.epic_expert});
    }
  }
  return rows;
}

}  // namespace relearn
