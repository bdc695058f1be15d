#pragma once

#include <functional>
#include <string>
#include <vector>

#include "relearn/env.hpp"
#include "relearn/rng.hpp"

namespace relearn {

struct SoftQConfig {
  double discount = 0.99;
  double learning_rate = 5e-2;
  double temperature = 0.1;        // entropy-regularization weight
  int grad_steps_per_env_step = 10;
  double initial_q = 200.0;        // optimistic start, the only exploration pressure
};

// Entropy-regularized value of a row of q-values: temperature * logsumexp(q/temperature).
double soft_value(const double* q, int num_actions, double temperature);

// Tabular softmax(q / temperature) policy.
struct SoftQPolicy {
  int num_states = 0;
  int num_actions = 0;
  double temperature = 0.1;
  std::vector<double> q;  // [state * num_actions + action]

  SoftQPolicy() = default;
  SoftQPolicy(int num_states, int num_actions, double temperature, double initial_q);

  double& q_at(int state, int action) {
    return q[static_cast<std::size_t>(state) * num_actions + action];
  }
  double q_at(int state, int action) const {
    return q[static_cast<std::size_t>(state) * num_actions + action];
  }

  double state_value(int state) const;
  // Softmax over the state's q-row; writes num_actions probabilities.
  void action_probabilities(int state, double* out) const;
  std::vector<double> action_probabilities(int state) const;
  int sample_action(int state, SplitMix64& rng) const;
  int greedy_action(int state) const;
  ActionSampler sampler() const;
};

// Per-transition reward source seen by the solver. During reward learning this
// is always the learned model; ground truth never flows through here.
using TransitionReward = std::function<double(const Transition&)>;

struct ReplayBuffer {
  std::vector<Transition> transitions;
  std::vector<double> rewards;  // labels under the CURRENT learned reward

  void push(const Transition& t, double reward);
  std::size_t size() const { return transitions.size(); }
};

// One tabular update toward reward + discount * soft_value(next). Returns the
// updated q entry.
double soft_bellman_backup(SoftQPolicy& policy, const Transition& t, double reward,
                           const SoftQConfig& config);

using EpisodeCallback = std::function<void(const std::vector<Transition>&)>;

// Online soft Q-learning for exactly env_steps steps. Actions come from the
// policy's own softmax; every transition lands in the buffer labeled by
// observe_reward; each env step triggers grad_steps_per_env_step uniform
// replay backups. Episodes respect mdp.horizon; on_episode fires per episode
// (including a final partial one if the step budget ends mid-episode).
void train_sampler(const TabularMDP& mdp, const TransitionReward& observe_reward,
                   const SoftQConfig& config, long long env_steps, ReplayBuffer& buffer,
                   SoftQPolicy& policy, SplitMix64& rng,
                   const EpisodeCallback& on_episode = {});

// Exact solve of the entropy-regularized Bellman equations by synchronous
// sweeps. reward is per-(state, action): reward[s * num_actions + a].
// Throws std::runtime_error if the residual is still >= tol after max_sweeps.
SoftQPolicy soft_value_iteration(const TabularMDP& mdp, const std::vector<double>& reward,
                                 double discount, double temperature, double tol = 1e-10,
                                 long long max_sweeps = 100000);

// Rewrites every stored reward as reward_source(transition), exactly.
void relabel_buffer(ReplayBuffer& buffer, const TransitionReward& reward_source);

// Mean undiscounted ground-truth return over Monte Carlo episodes.
double evaluate_return(const TabularMDP& mdp, const SoftQPolicy& policy, int num_episodes,
                       SplitMix64& rng);

// Exact expected undiscounted ground-truth return of the softmax policy over
// mdp.horizon steps, by forward recursion on the state distribution.
double exact_policy_return(const TabularMDP& mdp, const SoftQPolicy& policy);

std::string policy_to_json(const SoftQPolicy& policy);
SoftQPolicy policy_from_json(const std::string& text);

}  // namespace relearn
