#include <doctest.h>

#include <cmath>
#include <vector>

#include "relearn/env.hpp"
#include "relearn/rng.hpp"
#include "relearn/soft_q.hpp"

using namespace relearn;

namespace {

// Self-loop MDP with one state and the given number of actions.
TabularMDP loop_mdp(int num_actions) {
  TabularMDP mdp;
  mdp.num_states = 1;
  mdp.num_actions = num_actions;
  mdp.transition.assign(num_actions, 0);
  mdp.gt_reward = {0.0};
  mdp.initial_states = {1.0};
  mdp.horizon = 10;
  return mdp;
}

// Test-local hard value iteration for the alpha -> 0 comparison.
std::vector<double> hard_q_iteration(const TabularMDP& mdp, const std::vector<double>& reward,
                                     double discount) {
  std::vector<double> q(static_cast<std::size_t>(mdp.num_states) * mdp.num_actions, 0.0);
  std::vector<double> v(mdp.num_states, 0.0);
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double residual = 0.0;
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a) {
        const std::size_t i = static_cast<std::size_t>(s) * mdp.num_actions + a;
        const double target = reward[i] + discount * v[mdp.next(s, a)];
        residual = std::max(residual, std::abs(q[i] - target));
        q[i] = target;
      }
    for (int s = 0; s < mdp.num_states; ++s) {
      double best = q[static_cast<std::size_t>(s) * mdp.num_actions];
      for (int a = 1; a < mdp.num_actions; ++a)
        best = std::max(best, q[static_cast<std::size_t>(s) * mdp.num_actions + a]);
      v[s] = best;
    }
    if (residual < 1e-12) break;
  }
  return q;
}

std::vector<double> gt_sa_reward(const TabularMDP& mdp) {
  std::vector<double> reward(static_cast<std::size_t>(mdp.num_states) * mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      reward[static_cast<std::size_t>(s) * mdp.num_actions + a] = mdp.gt_reward[mdp.next(s, a)];
  return reward;
}

}  // namespace

TEST_CASE("soft_value of a single action is the q-value itself") {
  const double q = 3.75;
  CHECK(soft_value(&q, 1, 0.1) == doctest::Approx(3.75).epsilon(1e-15));
}

TEST_CASE("soft_value of two equal actions adds temperature times ln 2") {
  const double q[2] = {0.0, 0.0};
  CHECK(soft_value(q, 2, 0.1) == doctest::Approx(0.06931471805599453).epsilon(1e-14));
  // Stability far above the exp range.
  const double big[2] = {1000.0, 1000.0};
  CHECK(soft_value(big, 2, 0.1) ==
        doctest::Approx(1000.0 + 0.06931471805599453).epsilon(1e-14));
}

TEST_CASE("action probabilities are the softmax of q over temperature") {
  SoftQPolicy policy(1, 2, 0.1, 0.0);
  policy.q_at(0, 0) = 0.06931471805599453;  // exp(q/alpha) ratio of exactly 2
  const auto probs = policy.action_probabilities(0);
  CHECK(probs[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(policy.greedy_action(0) == 0);
}

TEST_CASE("sample_action follows the softmax distribution") {
  SoftQPolicy policy(1, 2, 0.1, 0.0);
  policy.q_at(0, 0) = 0.06931471805599453;
  SplitMix64 rng(6);
  const int n = 30000;
  int first = 0;
  for (int i = 0; i < n; ++i) first += policy.sample_action(0, rng) == 0 ? 1 : 0;
  const double sigma = std::sqrt((2.0 / 3.0) * (1.0 / 3.0) / n);
  CHECK(std::abs(double(first) / n - 2.0 / 3.0) < 4.0 * sigma);
}

TEST_CASE("soft_bellman_backup moves q toward the soft target") {
  SoftQPolicy policy(2, 2, 0.1, 0.0);
  SoftQConfig config;
  config.learning_rate = 1.0;  // full step exposes the target itself
  const Transition t{0, 0, 1};
  const double updated = soft_bellman_backup(policy, t, 0.5, config);
  CHECK(updated == doctest::Approx(0.5686215708754345).epsilon(1e-14));
  CHECK(policy.q_at(0, 0) == updated);

  // Partial step: convex blend of old value and target.
  SoftQPolicy partial(2, 2, 0.1, 1.0);
  SoftQConfig half;
  half.learning_rate = 0.25;
  const double target = 0.5 + 0.99 * soft_value(&partial.q[2], 2, 0.1);
  const double expected = 0.75 * 1.0 + 0.25 * target;
  CHECK(soft_bellman_backup(partial, t, 0.5, half) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("soft value iteration solves the single-action self-loop exactly") {
  const TabularMDP mdp = loop_mdp(1);
  const std::vector<double> reward = {1.0};
  const SoftQPolicy policy = soft_value_iteration(mdp, reward, 0.99, 0.1);
  CHECK(std::abs(policy.state_value(0) - 100.0) < 1e-8);
}

TEST_CASE("soft value iteration prices the entropy of two identical actions") {
  const TabularMDP mdp = loop_mdp(2);
  const std::vector<double> reward = {0.0, 0.0};
  const SoftQPolicy policy = soft_value_iteration(mdp, reward, 0.99, 0.1);
  CHECK(std::abs(policy.state_value(0) - 0.1 * std::log(2.0) / (1.0 - 0.99)) < 1e-8);
}

TEST_CASE("soft value iteration converges to a tiny Bellman residual") {
  const TabularMDP mdp = build_tiny_room();
  const std::vector<double> reward = gt_sa_reward(mdp);
  const SoftQPolicy policy = soft_value_iteration(mdp, reward, 0.99, 0.1, 1e-10);
  double residual = 0.0;
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a) {
      const double target = reward[static_cast<std::size_t>(s) * mdp.num_actions + a] +
                            0.99 * policy.state_value(mdp.next(s, a));
      residual = std::max(residual, std::abs(policy.q_at(s, a) - target));
    }
  CHECK(residual < 1e-10);
}

TEST_CASE("low-temperature soft policy matches hard value iteration") {
  const TabularMDP mdp = build_tiny_room();
  const std::vector<double> reward = gt_sa_reward(mdp);
  const SoftQPolicy policy = soft_value_iteration(mdp, reward, 0.99, 1e-4, 1e-12);
  const std::vector<double> hard_q = hard_q_iteration(mdp, reward, 0.99);
  for (int s = 0; s < mdp.num_states; ++s) {
    double best = hard_q[static_cast<std::size_t>(s) * mdp.num_actions];
    for (int a = 1; a < mdp.num_actions; ++a)
      best = std::max(best, hard_q[static_cast<std::size_t>(s) * mdp.num_actions + a]);
    const int chosen = policy.greedy_action(s);
    // Ties are fine; the chosen action must be hard-optimal up to tolerance.
    CHECK(hard_q[static_cast<std::size_t>(s) * mdp.num_actions + chosen] >= best - 1e-6);
  }
}

TEST_CASE("train_sampler consumes exactly its budget and labels via the reward source") {
  const TabularMDP mdp = build_tiny_room();
  SoftQConfig config;
  ReplayBuffer buffer;
  SoftQPolicy policy(mdp.num_states, mdp.num_actions, config.temperature, config.initial_q);
  SplitMix64 rng(19);
  int episodes = 0;
  long long callback_steps = 0;
  train_sampler(
      mdp, [](const Transition& t) { return 0.01 * t.next_state; }, config, 250, buffer, policy,
      rng, [&](const std::vector<Transition>& episode) {
        episodes += 1;
        callback_steps += static_cast<long long>(episode.size());
      });
  CHECK(buffer.size() == 250);
  CHECK(episodes == 3);  // two full 100-step episodes and one 50-step remainder
  CHECK(callback_steps == 250);
  for (std::size_t i = 0; i < buffer.size(); ++i)
    CHECK(buffer.rewards[i] == 0.01 * buffer.transitions[i].next_state);
}

TEST_CASE("train_sampler is deterministic for a fixed seed") {
  const TabularMDP mdp = build_tiny_room();
  SoftQConfig config;
  auto run = [&](std::uint64_t seed) {
    ReplayBuffer buffer;
    SoftQPolicy policy(mdp.num_states, mdp.num_actions, config.temperature, config.initial_q);
    SplitMix64 rng(seed);
    train_sampler(
        mdp, [](const Transition& t) { return t.next_state == 99 ? 1.0 : 0.0; }, config, 500,
        buffer, policy, rng);
    return policy.q;
  };
  CHECK(run(7) == run(7));
  CHECK(run(7) != run(8));
}

TEST_CASE("relabel_buffer rewrites every stored reward exactly") {
  ReplayBuffer buffer;
  buffer.push({0, 1, 2}, 0.5);
  buffer.push({2, 0, 3}, -1.0);
  relabel_buffer(buffer, [](const Transition& t) { return 2.5 * t.next_state; });
  CHECK(buffer.rewards[0] == 5.0);
  CHECK(buffer.rewards[1] == 7.5);
}

TEST_CASE("exact and Monte Carlo returns agree on a single-action chain") {
  TabularMDP mdp = loop_mdp(1);
  mdp.gt_reward = {1.0};
  mdp.horizon = 100;
  SoftQPolicy policy(1, 1, 0.1, 0.0);
  CHECK(exact_policy_return(mdp, policy) == doctest::Approx(100.0).epsilon(1e-12));
  SplitMix64 rng(3);
  CHECK(evaluate_return(mdp, policy, 5, rng) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("exact_policy_return scores entered states") {
  // Two states; every action leads to state 1, which pays 1 per entry.
  TabularMDP mdp;
  mdp.num_states = 2;
  mdp.num_actions = 2;
  mdp.transition = {1, 1, 1, 1};
  mdp.gt_reward = {0.0, 1.0};
  mdp.initial_states = {1.0, 0.0};
  mdp.horizon = 3;
  SoftQPolicy policy(2, 2, 0.1, 0.0);
  CHECK(exact_policy_return(mdp, policy) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("policy json round-trips bit-exactly") {
  SoftQPolicy policy(3, 2, 0.1, 0.0);
  SplitMix64 rng(21);
  for (double& q : policy.q) q = rng.uniform(-5.0, 205.0);
  const SoftQPolicy loaded = policy_from_json(policy_to_json(policy));
  CHECK(loaded.num_states == policy.num_states);
  CHECK(loaded.num_actions == policy.num_actions);
  CHECK(loaded.temperature == policy.temperature);
  CHECK(loaded.q == policy.q);
}
