#include "relearn/env.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace relearn {

int TabularMDP::next(int state, int action) const {
  if (state < 0 || state >= num_states) throw std::out_of_range("state index out of range");
  if (action < 0 || action >= num_actions) throw std::out_of_range("action index out of range");
  return transition[static_cast<std::size_t>(state) * num_actions + action];
}

void TabularMDP::validate() const {
  if (num_states <= 0 || num_actions <= 0)
    throw std::invalid_argument("MDP must have positive state and action counts");
  if (discount <= 0.0 || discount >= 1.0)
    throw std::invalid_argument("discount must lie in (0, 1)");
  if (horizon <= 0) throw std::invalid_argument("horizon must be positive");
  if (transition.size() != static_cast<std::size_t>(num_states) * num_actions)
    throw std::invalid_argument("transition table size mismatch");
  if (gt_reward.size() != static_cast<std::size_t>(num_states))
    throw std::invalid_argument("gt_reward size mismatch");
  if (initial_states.size() != static_cast<std::size_t>(num_states))
    throw std::invalid_argument("initial_states size mismatch");
  for (int t : transition)
    if (t < 0 || t >= num_states) throw std::invalid_argument("transition leaves state space");
  double total = 0.0;
  for (double p : initial_states) {
    if (p < 0.0) throw std::invalid_argument("negative initial-state probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("initial-state distribution does not sum to 1");
}

void validate_grid(const GridSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0)
    throw std::invalid_argument("grid dimensions must be positive");
  const auto cells = static_cast<std::size_t>(spec.num_cells());
  if (spec.wall.size() != cells || spec.cell_reward.size() != cells)
    throw std::invalid_argument("grid field sizes do not match dimensions");
  if (spec.start_cells.empty()) throw std::invalid_argument("grid has no start cells");
  for (int c : spec.start_cells) {
    if (c < 0 || c >= spec.num_cells()) throw std::invalid_argument("start cell out of range");
    if (spec.wall[c]) throw std::invalid_argument("start cell is a wall");
  }
  for (int c = 0; c < spec.num_cells(); ++c)
    if (spec.wall[c] && spec.cell_reward[c] != 0.0)
      throw std::invalid_argument("reward-bearing cell is a wall");
}

GridSpec stay_inside_spec() {
  GridSpec spec;
  spec.width = 20;
  spec.height = 20;
  spec.wall.assign(400, 0);
  spec.cell_reward.assign(400, 0.0);

  // A wall across row 9 splits the grid into a top "outside" half and a
  // bottom "inside" half, breached only by a two-cell gap at columns 9-10.
  const int wall_row = 9;
  for (int col = 0; col < 20; ++col) {
    const int c = spec.cell(wall_row, col);
    if (col == 9 || col == 10) {
      spec.cell_reward[c] = 0.0;  // gap
    } else {
      spec.wall[c] = 1;
    }
  }
  for (int row = 0; row < 20; ++row) {
    if (row == wall_row) continue;
    for (int col = 0; col < 20; ++col)
      spec.cell_reward[spec.cell(row, col)] = row < wall_row ? -1.0 : 10.0;
  }
  // Episodes start uniformly over the inside half. Starting outside as well
  // would fill the preference dataset with outside-half segments and leave no
  // room for the off-distribution reward errors this environment exists to
  // expose.
  for (int row = wall_row + 1; row < 20; ++row)
    for (int col = 0; col < 20; ++col) spec.start_cells.push_back(spec.cell(row, col));
  validate_grid(spec);
  return spec;
}

GridSpec tiny_room_spec() {
  GridSpec spec;
  spec.width = 10;
  spec.height = 10;
  spec.wall.assign(100, 0);
  spec.cell_reward.assign(100, 0.0);
  spec.cell_reward[spec.cell(9, 9)] = 10.0;  // lower-right goal
  spec.start_cells.push_back(spec.cell(9, 0));  // lower-left corner
  validate_grid(spec);
  return spec;
}

std::vector<int> state_of_cell(const GridSpec& spec) {
  std::vector<int> map(spec.num_cells(), -1);
  int next_index = 0;
  for (int c = 0; c < spec.num_cells(); ++c)
    if (!spec.wall[c]) map[c] = next_index++;
  return map;
}

TabularMDP grid_to_mdp(const GridSpec& spec, double discount, int horizon) {
  validate_grid(spec);
  const std::vector<int> state_of = state_of_cell(spec);
  int num_states = 0;
  for (int s : state_of)
    if (s >= 0) ++num_states;

  TabularMDP mdp;
  mdp.num_states = num_states;
  mdp.num_actions = kNumGridActions;
  mdp.discount = discount;
  mdp.horizon = horizon;
  mdp.transition.assign(static_cast<std::size_t>(num_states) * kNumGridActions, 0);
  mdp.gt_reward.assign(num_states, 0.0);
  mdp.initial_states.assign(num_states, 0.0);

  const int drow[kNumGridActions] = {-1, 1, 0, 0};
  const int dcol[kNumGridActions] = {0, 0, -1, 1};
  for (int row = 0; row < spec.height; ++row) {
    for (int col = 0; col < spec.width; ++col) {
      const int c = spec.cell(row, col);
      if (spec.wall[c]) continue;
      const int s = state_of[c];
      mdp.gt_reward[s] = spec.cell_reward[c];
      for (int a = 0; a < kNumGridActions; ++a) {
        const int nrow = row + drow[a];
        const int ncol = col + dcol[a];
        int target = c;  // bumping the boundary or a wall leaves the agent in place
        if (nrow >= 0 && nrow < spec.height && ncol >= 0 && ncol < spec.width) {
          const int nc = spec.cell(nrow, ncol);
          if (!spec.wall[nc]) target = nc;
        }
        mdp.transition[static_cast<std::size_t>(s) * kNumGridActions + a] = state_of[target];
      }
    }
  }
  const double p = 1.0 / static_cast<double>(spec.start_cells.size());
  for (int c : spec.start_cells) mdp.initial_states[state_of[c]] = p;
  mdp.validate();
  return mdp;
}

TabularMDP build_stay_inside() { return grid_to_mdp(stay_inside_spec()); }

TabularMDP build_tiny_room() { return grid_to_mdp(tiny_room_spec()); }

TabularMDP make_env(const std::string& name) {
  if (name == "stay_inside") return build_stay_inside();
  if (name == "tiny_room") return build_tiny_room();
  throw std::invalid_argument("unknown environment: " + name);
}

GridSpec make_grid(const std::string& name) {
  if (name == "stay_inside") return stay_inside_spec();
  if (name == "tiny_room") return tiny_room_spec();
  throw std::invalid_argument("unknown environment: " + name);
}

bool is_known_env(const std::string& name) {
  return name == "stay_inside" || name == "tiny_room";
}

std::pair<int, double> step(const TabularMDP& mdp, int state, int action) {
  const int next = mdp.next(state, action);
  return {next, mdp.gt_reward[next]};
}

std::vector<double> one_hot(int state, int num_states) {
  if (state < 0 || state >= num_states) throw std::out_of_range("one_hot index out of range");
  std::vector<double> v(num_states, 0.0);
  v[state] = 1.0;
  return v;
}

ActionSampler uniform_random_sampler(int num_actions) {
  return [num_actions](int, SplitMix64& rng) { return rng.next_index(num_actions); };
}

int draw_initial_state(const TabularMDP& mdp, SplitMix64& rng) {
  const double u = rng.next_double();
  double cumulative = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    cumulative += mdp.initial_states[s];
    if (u < cumulative) return s;
  }
  // Rounding can leave the final cumulative fractionally below 1.
  for (int s = mdp.num_states - 1; s >= 0; --s)
    if (mdp.initial_states[s] > 0.0) return s;
  throw std::invalid_argument("initial-state distribution is empty");
}

std::vector<Transition> rollout(const TabularMDP& mdp, const ActionSampler& sampler,
                                SplitMix64& rng) {
  return rollout(mdp, sampler, rng, mdp.horizon);
}

std::vector<Transition> rollout(const TabularMDP& mdp, const ActionSampler& sampler,
                                SplitMix64& rng, int horizon) {
  std::vector<Transition> episode;
  episode.reserve(horizon);
  int state = draw_initial_state(mdp, rng);
  for (int t = 0; t < horizon; ++t) {
    const int action = sampler(state, rng);
    const int next = mdp.next(state, action);
    episode.push_back(Transition{state, action, next});
    state = next;
  }
  return episode;
}

std::string reward_map_csv(const GridSpec& spec) {
  std::string out;
  char buf[64];
  for (int row = 0; row < spec.height; ++row) {
    for (int col = 0; col < spec.width; ++col) {
      if (col > 0) out += ',';
      const int c = spec.cell(row, col);
      if (spec.wall[c]) {
        out += "nan";
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g", spec.cell_reward[c]);
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace relearn
