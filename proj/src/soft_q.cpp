#include "relearn/soft_q.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace relearn {

double soft_value(const double* q, int num_actions, double temperature) {
  double max_q = q[0];
  for (int a = 1; a < num_actions; ++a) max_q = std::max(max_q, q[a]);
  double sum = 0.0;
  for (int a = 0; a < num_actions; ++a) sum += std::exp((q[a] - max_q) / temperature);
  return max_q + temperature * std::log(sum);
}

SoftQPolicy::SoftQPolicy(int num_states_, int num_actions_, double temperature_,
                         double initial_q)
    : num_states(num_states_), num_actions(num_actions_), temperature(temperature_) {
  if (num_states <= 0 || num_actions <= 0)
    throw std::invalid_argument("policy dimensions must be positive");
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  q.assign(static_cast<std::size_t>(num_states) * num_actions, initial_q);
}

double SoftQPolicy::state_value(int state) const {
  return soft_value(&q[static_cast<std::size_t>(state) * num_actions], num_actions,
                    temperature);
}

void SoftQPolicy::action_probabilities(int state, double* out) const {
  const double* row = &q[static_cast<std::size_t>(state) * num_actions];
  double max_q = row[0];
  for (int a = 1; a < num_actions; ++a) max_q = std::max(max_q, row[a]);
  double sum = 0.0;
  for (int a = 0; a < num_actions; ++a) {
    out[a] = std::exp((row[a] - max_q) / temperature);
    sum += out[a];
  }
  for (int a = 0; a < num_actions; ++a) out[a] /= sum;
}

std::vector<double> SoftQPolicy::action_probabilities(int state) const {
  std::vector<double> probs(num_actions);
  action_probabilities(state, probs.data());
  return probs;
}

int SoftQPolicy::sample_action(int state, SplitMix64& rng) const {
  std::vector<double> probs(num_actions);
  action_probabilities(state, probs.data());
  const double u = rng.next_double();
  double cumulative = 0.0;
  for (int a = 0; a < num_actions; ++a) {
    cumulative += probs[a];
    if (u < cumulative) return a;
  }
  return num_actions - 1;
}

int SoftQPolicy::greedy_action(int state) const {
  const double* row = &q[static_cast<std::size_t>(state) * num_actions];
  int best = 0;
  for (int a = 1; a < num_actions; ++a)
    if (row[a] > row[best]) best = a;
  return best;
}

ActionSampler SoftQPolicy::sampler() const {
  return [this](int state, SplitMix64& rng) { return sample_action(state, rng); };
}

void ReplayBuffer::push(const Transition& t, double reward) {
  transitions.push_back(t);
  rewards.push_back(reward);
}

double soft_bellman_backup(SoftQPolicy& policy, const Transition& t, double reward,
                           const SoftQConfig& config) {
  const double target = reward + config.discount * policy.state_value(t.next_state);
  double& entry = policy.q_at(t.state, t.action);
  entry += config.learning_rate * (target - entry);
  return entry;
}

void train_sampler(const TabularMDP& mdp, const TransitionReward& observe_reward,
                   const SoftQConfig& config, long long env_steps, ReplayBuffer& buffer,
                   SoftQPolicy& policy, SplitMix64& rng, const EpisodeCallback& on_episode) {
  if (env_steps < 1) throw std::invalid_argument("env_steps must be >= 1");
  std::vector<Transition> episode;
  episode.reserve(mdp.horizon);
  long long steps_done = 0;
  while (steps_done < env_steps) {
    int state = draw_initial_state(mdp, rng);
    episode.clear();
    for (int t = 0; t < mdp.horizon && steps_done < env_steps; ++t) {
      const int action = policy.sample_action(state, rng);
      const int next = mdp.next(state, action);
      const Transition transition{state, action, next};
      buffer.push(transition, observe_reward(transition));
      episode.push_back(transition);
      ++steps_done;
      for (int k = 0; k < config.grad_steps_per_env_step; ++k) {
        const std::size_t idx = rng.next_below(buffer.size());
        soft_bellman_backup(policy, buffer.transitions[idx], buffer.rewards[idx], config);
      }
      state = next;
    }
    if (on_episode) on_episode(episode);
  }
}

SoftQPolicy soft_value_iteration(const TabularMDP& mdp, const std::vector<double>& reward,
                                 double discount, double temperature, double tol,
                                 long long max_sweeps) {
  if (discount <= 0.0 || discount >= 1.0)
    throw std::invalid_argument("discount must lie in (0, 1)");
  if (tol <= 0.0) throw std::invalid_argument("tol must be positive");
  const std::size_t table = static_cast<std::size_t>(mdp.num_states) * mdp.num_actions;
  if (reward.size() != table) throw std::invalid_argument("reward table size mismatch");

  SoftQPolicy policy(mdp.num_states, mdp.num_actions, temperature, 0.0);
  std::vector<double> values(mdp.num_states);
  std::vector<double> next_q(table);
  for (long long sweep = 0; sweep < max_sweeps; ++sweep) {
    for (int s = 0; s < mdp.num_states; ++s) values[s] = policy.state_value(s);
    double residual = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        const std::size_t i = static_cast<std::size_t>(s) * mdp.num_actions + a;
        next_q[i] = reward[i] + discount * values[mdp.transition[i]];
        residual = std::max(residual, std::abs(next_q[i] - policy.q[i]));
      }
    }
    policy.q.swap(next_q);
    if (residual < tol) return policy;
  }
  throw std::runtime_error("soft value iteration failed to converge");
}

void relabel_buffer(ReplayBuffer& buffer, const TransitionReward& reward_source) {
  for (std::size_t i = 0; i < buffer.transitions.size(); ++i)
    buffer.rewards[i] = reward_source(buffer.transitions[i]);
}

double evaluate_return(const TabularMDP& mdp, const SoftQPolicy& policy, int num_episodes,
                       SplitMix64& rng) {
  if (num_episodes < 1) throw std::invalid_argument("num_episodes must be >= 1");
  double total = 0.0;
  for (int e = 0; e < num_episodes; ++e) {
    int state = draw_initial_state(mdp, rng);
    for (int t = 0; t < mdp.horizon; ++t) {
      const int action = policy.sample_action(state, rng);
      state = mdp.next(state, action);
      total += mdp.gt_reward[state];
    }
  }
  return total / num_episodes;
}

double exact_policy_return(const TabularMDP& mdp, const SoftQPolicy& policy) {
  std::vector<double> occupancy = mdp.initial_states;
  std::vector<double> next_occupancy(mdp.num_states);
  std::vector<double> probs(mdp.num_actions);
  double expected_return = 0.0;
  for (int t = 0; t < mdp.horizon; ++t) {
    std::fill(next_occupancy.begin(), next_occupancy.end(), 0.0);
    for (int s = 0; s < mdp.num_states; ++s) {
      if (occupancy[s] == 0.0) continue;
      policy.action_probabilities(s, probs.data());
      for (int a = 0; a < mdp.num_actions; ++a) {
        const int next = mdp.transition[static_cast<std::size_t>(s) * mdp.num_actions + a];
        const double mass = occupancy[s] * probs[a];
        next_occupancy[next] += mass;
        expected_return += mass * mdp.gt_reward[next];
      }
    }
    occupancy.swap(next_occupancy);
  }
  return expected_return;
}

std::string policy_to_json(const SoftQPolicy& policy) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["kind"] = "soft_q_policy";
  doc["num_states"] = policy.num_states;
  doc["num_actions"] = policy.num_actions;
  doc["temperature"] = policy.temperature;
  nlohmann::json rows = nlohmann::json::array();
  for (int s = 0; s < policy.num_states; ++s) {
    nlohmann::json row = nlohmann::json::array();
    for (int a = 0; a < policy.num_actions; ++a) row.push_back(policy.q_at(s, a));
    rows.push_back(std::move(row));
  }
  doc["q"] = std::move(rows);
  return doc.dump();
}

SoftQPolicy policy_from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  if (doc.at("kind").get<std::string>() != "soft_q_policy")
    throw std::invalid_argument("not a soft_q_policy document");
  SoftQPolicy policy(doc.at("num_states").get<int>(), doc.at("num_actions").get<int>(),
                     doc.at("temperature").get<double>(), 0.0);
  const auto& rows = doc.at("q");
  if (rows.size() != static_cast<std::size_t>(policy.num_states))
    throw std::invalid_argument("q table row count mismatch");
  for (int s = 0; s < policy.num_states; ++s) {
    const auto& row = rows[s];
    if (row.size() != static_cast<std::size_t>(policy.num_actions))
      throw std::invalid_argument("q table column count mismatch");
    for (int a = 0; a < policy.num_actions; ++a) policy.q_at(s, a) = row[a].get<double>();
  }
  return policy;
}

}  // namespace relearn
