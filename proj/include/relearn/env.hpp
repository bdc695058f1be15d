#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "relearn/rng.hpp"

namespace relearn {

// One environment step: the agent was in `state`, took `action`, landed in
// `next_state`. Reward is credited on the entered state throughout.
struct Transition {
  int state = 0;
  int action = 0;
  int next_state = 0;
};

// Rectangular gridworld description. Cells are indexed row-major
// (cell = row * width + col); row 0 is the top row.
struct GridSpec {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> wall;  // per cell, 1 = blocked
  std::vector<double> cell_reward; // per cell, ignored for wall cells
  std::vector<int> start_cells;    // uniform start distribution support

  int num_cells() const { return width * height; }
  int cell(int row, int col) const { return row * width + col; }
};

// Finite MDP with deterministic dynamics. Wall cells are excluded from the
// state space, so every index in [0, num_states) is a real, occupiable state.
struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  std::vector<int> transition;       // [state * num_actions + action] -> next state
  std::vector<double> gt_reward;     // ground-truth reward of ENTERING each state
  double discount = 0.99;
  std::vector<double> initial_states; // probability per state, sums to 1
  int horizon = 100;

  int next(int state, int action) const;
  void validate() const;  // throws std::invalid_argument on any broken invariant
};

// Actions, shared by every gridworld here.
inline constexpr int kActionUp = 0;
inline constexpr int kActionDown = 1;
inline constexpr int kActionLeft = 2;
inline constexpr int kActionRight = 3;
inline constexpr int kNumGridActions = 4;

GridSpec stay_inside_spec();
GridSpec tiny_room_spec();
void validate_grid(const GridSpec& spec);

// Row-major rank of each non-wall cell; -1 for walls.
std::vector<int> state_of_cell(const GridSpec& spec);

TabularMDP grid_to_mdp(const GridSpec& spec, double discount = 0.99, int horizon = 100);

TabularMDP build_stay_inside();
TabularMDP build_tiny_room();

// Environment registry used by the CLI and the experiment harness.
// Throws std::invalid_argument for unknown names.
TabularMDP make_env(const std::string& name);
GridSpec make_grid(const std::string& name);
bool is_known_env(const std::string& name);

std::pair<int, double> step(const TabularMDP& mdp, int state, int action);

std::vector<double> one_hot(int state, int num_states);

// Draws an action for the given state. Policies and random baselines both
// reduce to this shape, keeping rollout code independent of the solver.
using ActionSampler = std::function<int(int state, SplitMix64& rng)>;

ActionSampler uniform_random_sampler(int num_actions);

int draw_initial_state(const TabularMDP& mdp, SplitMix64& rng);

// Runs one episode of mdp.horizon (or the given number of) steps. Never
// terminates early.
std::vector<Transition> rollout(const TabularMDP& mdp, const ActionSampler& sampler,
                                SplitMix64& rng);
std::vector<Transition> rollout(const TabularMDP& mdp, const ActionSampler& sampler,
                                SplitMix64& rng, int horizon);

// Reward map as CSV, one grid row per line, wall cells rendered as "nan".
std::string reward_map_csv(const GridSpec& spec);

}  // namespace relearn
