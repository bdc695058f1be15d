#pragma once

#include <functional>
#include <string>
#include <vector>

#include "relearn/env.hpp"
#include "relearn/reward_model.hpp"
#include "relearn/rng.hpp"
#include "relearn/soft_q.hpp"

namespace relearn {

// Reward evaluable on arbitrary (state, action, next_state) triples, feasible
// or not. Canonicalization averages over auxiliary transitions, so rewards
// must be defined off the dynamics manifold too; every reward in this project
// depends on the entered state only, which makes that trivial.
using RewardFn = std::function<double(int state, int action, int next_state)>;

RewardFn gt_reward_fn(const TabularMDP& mdp);
// r(s, a, s') = values[s'].
RewardFn state_reward_fn(std::vector<double> values);

struct CoverageDistribution {
  enum class Kind { uniform, expert };
  Kind kind = Kind::uniform;
  std::vector<Transition> transitions;
  std::vector<double> weights;  // sum to 1
};

// All feasible (s, a) pairs with their deterministic successor, equal weight.
CoverageDistribution uniform_coverage(const TabularMDP& mdp);

// Occupancy of the ground-truth soft-optimal policy at the given temperature:
// solved exactly, then rolled out num_rollouts times for mdp.horizon steps,
// with equal weight per visited transition.
CoverageDistribution expert_coverage(const TabularMDP& mdp, double temperature,
                                     int num_rollouts, SplitMix64& rng);

// Shaping-invariant canonical form. With A uniform over actions and Y uniform
// over ALL states, g(x) = E[R(x, A, Y)] and
//   C(R)(s, a, s') = R(s, a, s') + discount * g(s') - g(s) - discount * mean(g),
// computed by exact enumeration. Adding any potential shaping
// discount * phi(s') - phi(s) leaves C(R) unchanged, and C is idempotent.
struct CanonicalReward {
  RewardFn base;
  std::vector<double> state_mean;  // g
  double grand_mean = 0.0;         // mean over states of g
  double discount = 0.99;

  double operator()(int state, int action, int next_state) const;
};

CanonicalReward canonicalize(const RewardFn& reward, const TabularMDP& mdp, double discount);

struct EpicConfig {
  CoverageDistribution coverage;
  double discount = 0.99;
};

// Canonicalize both rewards, mean-center and scale each to unit weighted L2
// norm under the coverage weights, and return half the weighted L2 distance:
// a value in [0, 1] equal to sqrt((1 - rho)/2) for weighted Pearson rho.
// Throws std::runtime_error("degenerate reward") if either canonicalized
// reward is constant under the coverage.
double epic_distance(const RewardFn& reward_a, const RewardFn& reward_b,
                     const TabularMDP& mdp, const EpicConfig& config);

struct RelearnOptions {
  double temperature = 0.1;
  double discount = 0.99;
  int eval_episodes = 100;
  double sampler_return = 0.0;  // supplied by the caller for the comparison
  std::string env_name;
  std::string config_id;
};

struct RelearnReport {
  double relearner_return = 0.0;
  double sampler_return = 0.0;
  // relearner >= sampler - 5% of the sampler's value
  bool within_sampler = false;
  std::string env_name;
  std::string config_id;
};

// Exact soft-optimal solve of the per-(state, action) reward table.
SoftQPolicy relearn_policy(const TabularMDP& mdp, const std::vector<double>& reward,
                           double temperature, double discount);

// Freeze-and-retrain evaluation: builds the learned-reward table over all
// feasible (s, a), solves the soft-optimal policy, scores it under ground
// truth. Requires the reward source to be frozen; throws std::runtime_error
// on a non-frozen source or non-finite reward values.
RelearnReport relearn(const TabularMDP& mdp, const RewardEnsemble& reward,
                      const RelearnOptions& options, SplitMix64& rng);

}  // namespace relearn
