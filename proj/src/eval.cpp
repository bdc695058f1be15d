#include "relearn/eval.hpp"

#include <cmath>
#include <stdexcept>

namespace relearn {

RewardFn gt_reward_fn(const TabularMDP& mdp) {
  std::vector<double> values = mdp.gt_reward;
  return state_reward_fn(std::move(values));
}

RewardFn state_reward_fn(std::vector<double> values) {
  return [values = std::move(values)](int, int, int next_state) {
    return values.at(next_state);
  };
}

CoverageDistribution uniform_coverage(const TabularMDP& mdp) {
  CoverageDistribution coverage;
  coverage.kind = CoverageDistribution::Kind::uniform;
  const std::size_t total = static_cast<std::size_t>(mdp.num_states) * mdp.num_actions;
  coverage.transitions.reserve(total);
  coverage.weights.assign(total, 1.0 / static_cast<double>(total));
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      coverage.transitions.push_back(Transition{s, a, mdp.next(s, a)});
  return coverage;
}

CoverageDistribution expert_coverage(const TabularMDP& mdp, double temperature,
                                     int num_rollouts, SplitMix64& rng) {
  if (num_rollouts < 1) throw std::invalid_argument("num_rollouts must be >= 1");
  std::vector<double> reward(static_cast<std::size_t>(mdp.num_states) * mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      reward[static_cast<std::size_t>(s) * mdp.num_actions + a] = mdp.gt_reward[mdp.next(s, a)];
  const SoftQPolicy expert =
      soft_value_iteration(mdp, reward, mdp.discount, temperature);

  CoverageDistribution coverage;
  coverage.kind = CoverageDistribution::Kind::expert;
  const ActionSampler sampler = expert.sampler();
  for (int episode = 0; episode < num_rollouts; ++episode) {
    const std::vector<Transition> rolled = rollout(mdp, sampler, rng);
    coverage.transitions.insert(coverage.transitions.end(), rolled.begin(), rolled.end());
  }
  coverage.weights.assign(coverage.transitions.size(),
                          1.0 / static_cast<double>(coverage.transitions.size()));
  return coverage;
}

double CanonicalReward::operator()(int state, int action, int next_state) const {
  return base(state, action, next_state) + discount * state_mean[next_state] -
         state_mean[state] - discount * grand_mean;
}

CanonicalReward canonicalize(const RewardFn& reward, const TabularMDP& mdp, double discount) {
  CanonicalReward canonical;
  canonical.base = reward;
  canonical.discount = discount;
  canonical.state_mean.assign(mdp.num_states, 0.0);
  const double inv = 1.0 / static_cast<double>(mdp.num_states * mdp.num_actions);
  for (int x = 0; x < mdp.num_states; ++x) {
    double total = 0.0;
    for (int a = 0; a < mdp.num_actions; ++a)
      for (int y = 0; y < mdp.num_states; ++y) total += reward(x, a, y);
    canonical.state_mean[x] = total * inv;
  }
  double grand = 0.0;
  for (double g : canonical.state_mean) grand += g;
  canonical.grand_mean = grand / static_cast<double>(mdp.num_states);
  return canonical;
}

namespace {

// Mean-centered, unit weighted-L2 values of the canonical reward on the
// coverage support. Throws if the reward is constant there.
std::vector<double> normalized_values(const CanonicalReward& canonical,
                                      const CoverageDistribution& coverage) {
  const std::size_t n = coverage.transitions.size();
  std::vector<double> values(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& t = coverage.transitions[i];
    values[i] = canonical(t.state, t.action, t.next_state);
    if (!std::isfinite(values[i])) throw std::runtime_error("non-finite canonical reward");
    mean += coverage.weights[i] * values[i];
  }
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    values[i] -= mean;
    norm_sq += coverage.weights[i] * values[i] * values[i];
  }
  const double norm = std::sqrt(norm_sq);
  if (norm < 1e-12) throw std::runtime_error("degenerate reward");
  for (double& v : values) v /= norm;
  return values;
}

}  // namespace

double epic_distance(const RewardFn& reward_a, const RewardFn& reward_b,
                     const TabularMDP& mdp, const EpicConfig& config) {
  if (config.coverage.transitions.empty())
    throw std::invalid_argument("coverage distribution is empty");
  const CanonicalReward canonical_a = canonicalize(reward_a, mdp, config.discount);
  const CanonicalReward canonical_b = canonicalize(reward_b, mdp, config.discount);
  const std::vector<double> a = normalized_values(canonical_a, config.coverage);
  const std::vector<double> b = normalized_values(canonical_b, config.coverage);
  double dist_sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    dist_sq += config.coverage.weights[i] * d * d;
  }
  return std::sqrt(dist_sq) / 2.0;
}

SoftQPolicy relearn_policy(const TabularMDP& mdp, const std::vector<double>& reward,
                           double temperature, double discount) {
  return soft_value_iteration(mdp, reward, discount, temperature);
}

RelearnReport relearn(const TabularMDP& mdp, const RewardEnsemble& reward,
                      const RelearnOptions& options, SplitMix64& rng) {
  if (!reward.frozen())
    throw std::runtime_error("relearn requires a frozen reward source");
  const std::vector<double> state_values = reward.state_values();
  std::vector<double> table(static_cast<std::size_t>(mdp.num_states) * mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      const double value = state_values[mdp.next(s, a)];
      if (!std::isfinite(value)) throw std::runtime_error("non-finite learned reward");
      table[static_cast<std::size_t>(s) * mdp.num_actions + a] = value;
    }
  }
  const SoftQPolicy policy = relearn_policy(mdp, table, options.temperature, options.discount);

  RelearnReport report;
  report.relearner_return = evaluate_return(mdp, policy, options.eval_episodes, rng);
  report.sampler_return = options.sampler_return;
  report.within_sampler =
      report.relearner_return >= report.sampler_return - 0.05 * std::abs(report.sampler_return);
  report.env_name = options.env_name;
  report.config_id = options.config_id;
  return report;
}

}  // namespace relearn
