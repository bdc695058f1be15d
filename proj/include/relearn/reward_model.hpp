#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "relearn/preference.hpp"
#include "relearn/rng.hpp"

namespace relearn {

// The state a reward source is evaluated on for a transition. Matches the
// ground-truth convention of crediting the entered state.
inline int reward_input_state(const Transition& t) { return t.next_state; }

// Fully-connected net over a one-hot state input: dims = [num_states,
// hidden..., 1], ReLU between layers, linear output. Weights are row-major
// [out x in], so the one-hot forward pass reduces to a column read.
struct MlpParams {
  std::vector<int> dims;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static MlpParams init(int input_dim, const std::vector<int>& hidden, SplitMix64& rng);

  int input_dim() const { return dims.front(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
  bool finite() const;
};

double mlp_forward_state(const MlpParams& params, int state);

struct MlpGrads {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static MlpGrads zeros_like(const MlpParams& params);
  void reset();
};

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long long step = 0;
  std::vector<std::vector<double>> m_weights, v_weights;
  std::vector<std::vector<double>> m_biases, v_biases;

  static AdamState init(const MlpParams& params, double learning_rate);
};

void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state);

// Streaming mean/variance (Welford). apply() normalizes by the population
// standard deviation with a 1e-8 floor; a never-updated norm is the identity.
struct RunningNorm {
  long long count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  bool frozen = false;

  void update(double value);
  double variance() const { return count > 0 ? m2 / static_cast<double>(count) : 0.0; }
  double apply(double value) const;
  // Ingests the value first (unless frozen), then normalizes it.
  double update_apply(double value);
};

// Exponential-moving-average normalizer. Library component: the tabular
// pipeline normalizes with RunningNorm only.
struct EmaNorm {
  double decay = 0.99;
  double mean = 0.0;
  double mean_sq = 0.0;
  bool initialized = false;

  void update(double value);
  double variance() const;
  double apply(double value) const;
  double update_apply(double value);
};

struct RewardModel {
  MlpParams params;
  AdamState adam;
  RunningNorm norm;

  static RewardModel init(int input_dim, const std::vector<int>& hidden, double learning_rate,
                          SplitMix64& rng);

  double raw(int state) const { return mlp_forward_state(params, state); }
  double observe_state(int state) { return norm.update_apply(raw(state)); }
  double evaluate_state(int state) const { return norm.apply(raw(state)); }
};

// K separately-normalized reward networks aggregated by their mean. Raw
// outputs are cached per state (pure function of the params) so the DRLHP
// loop's per-step observations and whole-buffer relabeling stay cheap.
class RewardEnsemble {
 public:
  RewardEnsemble(int input_dim, const std::vector<int>& hidden, int num_members,
                 double learning_rate, SplitMix64& rng);
  static RewardEnsemble from_members(std::vector<RewardModel> members);

  int size() const { return static_cast<int>(members_.size()); }
  int input_dim() const { return members_.front().params.input_dim(); }

  const RewardModel& member(int k) const { return members_[k]; }
  // Mutable access assumes the caller may change params; drops the raw cache.
  RewardModel& member(int k) {
    cache_valid_ = false;
    return members_[k];
  }

  // Updates every member's normalizer with its raw output, returns the mean
  // of the normalized outputs.
  double observe_state(int state);
  double observe(const Transition& t) { return observe_state(reward_input_state(t)); }

  // Pure: never touches normalizer statistics.
  double evaluate_state(int state) const;
  double evaluate(const Transition& t) const { return evaluate_state(reward_input_state(t)); }

  // evaluate_state for every state, in one pass.
  std::vector<double> state_values() const;

  void freeze();
  bool frozen() const;

 private:
  RewardEnsemble() = default;
  void ensure_cache() const;

  std::vector<RewardModel> members_;
  mutable std::vector<std::vector<double>> raw_cache_;  // [member][state]
  mutable bool cache_valid_ = false;
};

// Preference negative log likelihood: mean over records of
// -log logistic(sum_pref - sum_rej), where each segment's sum is the raw
// network output over its entered states.
double nll_loss(const MlpParams& params, const std::vector<PreferenceRecord>& dataset,
                std::span<const int> indices);

// Reusable buffers for batched loss/gradient evaluation. Each distinct state
// in a batch is forwarded once; output cotangents accumulate per state and
// a single backward pass per state yields the exact batch gradient.
class NllWorkspace {
 public:
  explicit NllWorkspace(const MlpParams& params);

  double loss_and_gradient(const MlpParams& params,
                           const std::vector<PreferenceRecord>& dataset,
                           std::span<const int> indices, MlpGrads& grads);

 private:
  int forward_slot(const MlpParams& params, int state);

  std::vector<int> slot_of_state_;   // -1 when untouched
  std::vector<int> touched_states_;
  std::vector<double> outputs_;      // per slot
  std::vector<double> cotangents_;   // per slot
  std::vector<std::vector<double>> activations_;  // per hidden layer, slot-major
  std::vector<double> delta_, delta_next_;
};

std::pair<double, MlpGrads> nll_gradient(const MlpParams& params,
                                         const std::vector<PreferenceRecord>& batch);

// K lists of n indices drawn uniformly with replacement from [0, n).
std::vector<std::vector<int>> bootstrap_indices(std::size_t n, int num_members,
                                                SplitMix64& rng);

// Shuffled mini-batch passes of nll gradient + Adam per member. Members of an
// ensemble (size >= 2) each train on a fresh with-replacement resample of the
// dataset; a single model trains on the dataset itself. Returns per-member,
// per-batch loss traces. Throws std::runtime_error on non-finite loss.
std::vector<std::vector<double>> train_reward_epoch(RewardEnsemble& ensemble,
                                                    const std::vector<PreferenceRecord>& dataset,
                                                    int epochs, int batch_size,
                                                    SplitMix64& rng);

}  // namespace relearn
