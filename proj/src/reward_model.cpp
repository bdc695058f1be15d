#include "relearn/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace relearn {

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

MlpParams MlpParams::init(int input_dim, const std::vector<int>& hidden, SplitMix64& rng) {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("hidden sizes must be >= 1");
  MlpParams params;
  params.dims.push_back(input_dim);
  for (int h : hidden) params.dims.push_back(h);
  params.dims.push_back(1);
  for (std::size_t layer = 0; layer + 1 < params.dims.size(); ++layer) {
    const int in = params.dims[layer];
    const int out = params.dims[layer + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(static_cast<std::size_t>(out) * in);
    for (double& v : w) v = rng.uniform(-bound, bound);
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(out, 0.0);
  }
  return params;
}

bool MlpParams::finite() const {
  for (const auto& layer : weights)
    for (double v : layer)
      if (!std::isfinite(v)) return false;
  for (const auto& layer : biases)
    for (double v : layer)
      if (!std::isfinite(v)) return false;
  return true;
}

double mlp_forward_state(const MlpParams& params, int state) {
  if (state < 0 || state >= params.input_dim())
    throw std::out_of_range("state index out of range for reward net");
  const int num_layers = params.num_layers();
  // One-hot input: the first layer is a column read plus bias.
  const int h0 = params.dims[1];
  std::vector<double> current(h0);
  const std::vector<double>& w0 = params.weights[0];
  const int in0 = params.dims[0];
  for (int j = 0; j < h0; ++j)
    current[j] = w0[static_cast<std::size_t>(j) * in0 + state] + params.biases[0][j];
  std::vector<double> next;
  for (int layer = 1; layer < num_layers; ++layer) {
    for (double& v : current) v = std::max(v, 0.0);
    const int in = params.dims[layer];
    const int out = params.dims[layer + 1];
    next.assign(out, 0.0);
    const std::vector<double>& w = params.weights[layer];
    for (int j = 0; j < out; ++j) {
      double acc = params.biases[layer][j];
      const double* row = &w[static_cast<std::size_t>(j) * in];
      for (int i = 0; i < in; ++i) acc += row[i] * current[i];
      next[j] = acc;
    }
    current.swap(next);
  }
  return current[0];
}

MlpGrads MlpGrads::zeros_like(const MlpParams& params) {
  MlpGrads grads;
  for (const auto& layer : params.weights) grads.weights.emplace_back(layer.size(), 0.0);
  for (const auto& layer : params.biases) grads.biases.emplace_back(layer.size(), 0.0);
  return grads;
}

void MlpGrads::reset() {
  for (auto& layer : weights) std::fill(layer.begin(), layer.end(), 0.0);
  for (auto& layer : biases) std::fill(layer.begin(), layer.end(), 0.0);
}

AdamState AdamState::init(const MlpParams& params, double learning_rate) {
  AdamState state;
  state.learning_rate = learning_rate;
  for (const auto& layer : params.weights) {
    state.m_weights.emplace_back(layer.size(), 0.0);
    state.v_weights.emplace_back(layer.size(), 0.0);
  }
  for (const auto& layer : params.biases) {
    state.m_biases.emplace_back(layer.size(), 0.0);
    state.v_biases.emplace_back(layer.size(), 0.0);
  }
  return state;
}

namespace {

void adam_update_array(std::vector<double>& p, const std::vector<double>& g,
                       std::vector<double>& m, std::vector<double>& v, const AdamState& s,
                       double bias1, double bias2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    p[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

}  // namespace

void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state) {
  if (grads.weights.size() != params.weights.size() ||
      grads.biases.size() != params.biases.size())
    throw std::invalid_argument("gradient shape mismatch");
  state.step += 1;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t layer = 0; layer < params.weights.size(); ++layer) {
    adam_update_array(params.weights[layer], grads.weights[layer], state.m_weights[layer],
                      state.v_weights[layer], state, bias1, bias2);
    adam_update_array(params.biases[layer], grads.biases[layer], state.m_biases[layer],
                      state.v_biases[layer], state, bias1, bias2);
  }
}

void RunningNorm::update(double value) {
  count += 1;
  const double delta = value - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (value - mean);
}

double RunningNorm::apply(double value) const {
  if (count == 0) return value;
  const double std_dev = std::sqrt(variance());
  return (value - mean) / std::max(std_dev, 1e-8);
}

double RunningNorm::update_apply(double value) {
  if (!frozen) update(value);
  return apply(value);
}

void EmaNorm::update(double value) {
  if (!initialized) {
    mean = value;
    mean_sq = value * value;
    initialized = true;
    return;
  }
  mean = decay * mean + (1.0 - decay) * value;
  mean_sq = decay * mean_sq + (1.0 - decay) * value * value;
}

double EmaNorm::variance() const { return std::max(mean_sq - mean * mean, 0.0); }

double EmaNorm::apply(double value) const {
  if (!initialized) return value;
  return (value - mean) / std::max(std::sqrt(variance()), 1e-8);
}

double EmaNorm::update_apply(double value) {
  update(value);
  return apply(value);
}

RewardModel RewardModel::init(int input_dim, const std::vector<int>& hidden,
                              double learning_rate, SplitMix64& rng) {
  RewardModel model;
  model.params = MlpParams::init(input_dim, hidden, rng);
  model.adam = AdamState::init(model.params, learning_rate);
  return model;
}

RewardEnsemble::RewardEnsemble(int input_dim, const std::vector<int>& hidden, int num_members,
                               double learning_rate, SplitMix64& rng) {
  if (num_members < 1) throw std::invalid_argument("ensemble needs at least 1 member");
  members_.reserve(num_members);
  for (int k = 0; k < num_members; ++k)
    members_.push_back(RewardModel::init(input_dim, hidden, learning_rate, rng));
}

RewardEnsemble RewardEnsemble::from_members(std::vector<RewardModel> members) {
  if (members.empty()) throw std::invalid_argument("ensemble needs at least 1 member");
  RewardEnsemble ensemble;
  ensemble.members_ = std::move(members);
  return ensemble;
}

void RewardEnsemble::ensure_cache() const {
  if (cache_valid_) return;
  const int states = input_dim();
  raw_cache_.assign(members_.size(), std::vector<double>(states));
  for (std::size_t k = 0; k < members_.size(); ++k)
    for (int s = 0; s < states; ++s) raw_cache_[k][s] = members_[k].raw(s);
  cache_valid_ = true;
}

double RewardEnsemble::observe_state(int state) {
  ensure_cache();
  double sum = 0.0;
  for (std::size_t k = 0; k < members_.size(); ++k)
    sum += members_[k].norm.update_apply(raw_cache_[k][state]);
  return sum / static_cast<double>(members_.size());
}

double RewardEnsemble::evaluate_state(int state) const {
  ensure_cache();
  double sum = 0.0;
  for (std::size_t k = 0; k < members_.size(); ++k)
    sum += members_[k].norm.apply(raw_cache_[k][state]);
  return sum / static_cast<double>(members_.size());
}

std::vector<double> RewardEnsemble::state_values() const {
  std::vector<double> values(input_dim());
  for (int s = 0; s < input_dim(); ++s) values[s] = evaluate_state(s);
  return values;
}

void RewardEnsemble::freeze() {
  for (RewardModel& member : members_) member.norm.frozen = true;
}

bool RewardEnsemble::frozen() const {
  for (const RewardModel& member : members_)
    if (!member.norm.frozen) return false;
  return true;
}

double nll_loss(const MlpParams& params, const std::vector<PreferenceRecord>& dataset,
                std::span<const int> indices) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  // Forward each distinct state once; segment sums are linear in the outputs.
  std::vector<double> output_of(params.input_dim(),
                                std::numeric_limits<double>::quiet_NaN());
  std::vector<int> touched;
  auto output = [&](int state) {
    if (std::isnan(output_of[state])) {
      output_of[state] = mlp_forward_state(params, state);
      touched.push_back(state);
    }
    return output_of[state];
  };
  double total = 0.0;
  for (int idx : indices) {
    const PreferenceRecord& record = dataset.at(idx);
    double diff = 0.0;
    for (const Transition& t : record.preferred().transitions)
      diff += output(reward_input_state(t));
    for (const Transition& t : record.rejected().transitions)
      diff -= output(reward_input_state(t));
    total += softplus(-diff);
  }
  return total / static_cast<double>(indices.size());
}

NllWorkspace::NllWorkspace(const MlpParams& params) {
  const int states = params.input_dim();
  slot_of_state_.assign(states, -1);
  outputs_.reserve(states);
  cotangents_.reserve(states);
  touched_states_.reserve(states);
  activations_.resize(params.num_layers() - 1);
  for (int layer = 0; layer + 1 < params.num_layers(); ++layer)
    activations_[layer].resize(static_cast<std::size_t>(states) * params.dims[layer + 1]);
  int max_width = 1;
  for (int d : params.dims) max_width = std::max(max_width, d);
  delta_.resize(max_width);
  delta_next_.resize(max_width);
}

int NllWorkspace::forward_slot(const MlpParams& params, int state) {
  int slot = slot_of_state_[state];
  if (slot >= 0) return slot;
  slot = static_cast<int>(touched_states_.size());
  slot_of_state_[state] = slot;
  touched_states_.push_back(state);
  outputs_.push_back(0.0);
  cotangents_.push_back(0.0);

  const int num_layers = params.num_layers();
  const int h0 = params.dims[1];
  double* act0 = &activations_[0][static_cast<std::size_t>(slot) * h0];
  const std::vector<double>& w0 = params.weights[0];
  const int in0 = params.dims[0];
  for (int j = 0; j < h0; ++j) {
    const double z = w0[static_cast<std::size_t>(j) * in0 + state] + params.biases[0][j];
    act0[j] = std::max(z, 0.0);
  }
  const double* prev = act0;
  for (int layer = 1; layer < num_layers; ++layer) {
    const int in = params.dims[layer];
    const int out = params.dims[layer + 1];
    const std::vector<double>& w = params.weights[layer];
    const bool is_output = layer == num_layers - 1;
    double* act = is_output ? nullptr
                            : &activations_[layer][static_cast<std::size_t>(slot) * out];
    for (int j = 0; j < out; ++j) {
      double acc = params.biases[layer][j];
      const double* row = &w[static_cast<std::size_t>(j) * in];
      for (int i = 0; i < in; ++i) acc += row[i] * prev[i];
      if (is_output) {
        outputs_[slot] = acc;
      } else {
        act[j] = std::max(acc, 0.0);
      }
    }
    prev = act;
  }
  return slot;
}

double NllWorkspace::loss_and_gradient(const MlpParams& params,
                                       const std::vector<PreferenceRecord>& dataset,
                                       std::span<const int> indices, MlpGrads& grads) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  grads.reset();
  double total = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(indices.size());
  for (int idx : indices) {
    const PreferenceRecord& record = dataset.at(idx);
    double diff = 0.0;
    for (const Transition& t : record.preferred().transitions)
      diff += outputs_[forward_slot(params, reward_input_state(t))];
    for (const Transition& t : record.rejected().transitions)
      diff -= outputs_[forward_slot(params, reward_input_state(t))];
    total += softplus(-diff);
    const double g = (logistic(diff) - 1.0) * inv_batch;
    for (const Transition& t : record.preferred().transitions)
      cotangents_[slot_of_state_[reward_input_state(t)]] += g;
    for (const Transition& t : record.rejected().transitions)
      cotangents_[slot_of_state_[reward_input_state(t)]] -= g;
  }

  // Backprop per touched state, in sorted state order so accumulation order
  // is independent of batch layout.
  std::vector<int> order = touched_states_;
  std::sort(order.begin(), order.end());
  const int num_layers = params.num_layers();
  for (int state : order) {
    const int slot = slot_of_state_[state];
    const double g_out = cotangents_[slot];
    if (g_out == 0.0) continue;
    // Output layer: delta starts as the scalar cotangent.
    delta_[0] = g_out;
    for (int layer = num_layers - 1; layer >= 1; --layer) {
      const int in = params.dims[layer];
      const int out = params.dims[layer + 1];
      const std::vector<double>& w = params.weights[layer];
      const double* act = &activations_[layer - 1][static_cast<std::size_t>(slot) * in];
      std::vector<double>& gw = grads.weights[layer];
      std::vector<double>& gb = grads.biases[layer];
      for (int i = 0; i < in; ++i) delta_next_[i] = 0.0;
      for (int j = 0; j < out; ++j) {
        const double d = delta_[j];
        gb[j] += d;
        double* gw_row = &gw[static_cast<std::size_t>(j) * in];
        const double* w_row = &w[static_cast<std::size_t>(j) * in];
        for (int i = 0; i < in; ++i) {
          gw_row[i] += d * act[i];
          delta_next_[i] += d * w_row[i];
        }
      }
      // ReLU mask: a stored activation of 0 means the unit was inactive.
      for (int i = 0; i < in; ++i) delta_next_[i] = act[i] > 0.0 ? delta_next_[i] : 0.0;
      delta_.swap(delta_next_);
    }
    // First layer sees a one-hot input: only column `state` gets gradient.
    const int h0 = params.dims[1];
    const int in0 = params.dims[0];
    std::vector<double>& gw0 = grads.weights[0];
    std::vector<double>& gb0 = grads.biases[0];
    for (int j = 0; j < h0; ++j) {
      gw0[static_cast<std::size_t>(j) * in0 + state] += delta_[j];
      gb0[j] += delta_[j];
    }
  }

  // Reset touch marks for the next batch.
  for (int state : touched_states_) slot_of_state_[state] = -1;
  touched_states_.clear();
  outputs_.clear();
  cotangents_.clear();
  return total * inv_batch;
}

std::pair<double, MlpGrads> nll_gradient(const MlpParams& params,
                                         const std::vector<PreferenceRecord>& batch) {
  std::vector<int> indices(batch.size());
  std::iota(indices.begin(), indices.end(), 0);
  NllWorkspace workspace(params);
  MlpGrads grads = MlpGrads::zeros_like(params);
  const double loss = workspace.loss_and_gradient(params, batch, indices, grads);
  return {loss, std::move(grads)};
}

std::vector<std::vector<int>> bootstrap_indices(std::size_t n, int num_members,
                                                SplitMix64& rng) {
  if (n < 1) throw std::invalid_argument("dataset must be non-empty");
  if (num_members < 1) throw std::invalid_argument("num_members must be >= 1");
  std::vector<std::vector<int>> lists(num_members);
  for (auto& list : lists) {
    list.resize(n);
    for (std::size_t i = 0; i < n; ++i) list[i] = static_cast<int>(rng.next_below(n));
  }
  return lists;
}

std::vector<std::vector<double>> train_reward_epoch(RewardEnsemble& ensemble,
                                                    const std::vector<PreferenceRecord>& dataset,
                                                    int epochs, int batch_size,
                                                    SplitMix64& rng) {
  if (dataset.empty()) throw std::invalid_argument("dataset must be non-empty");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const std::size_t n = dataset.size();
  const int num_members = ensemble.size();

  // Size >= 2 is a bootstrap ensemble; a single model sees the dataset as is.
  std::vector<std::vector<int>> member_indices;
  if (num_members >= 2) {
    member_indices = bootstrap_indices(n, num_members, rng);
  } else {
    member_indices.emplace_back(n);
    std::iota(member_indices[0].begin(), member_indices[0].end(), 0);
  }

  std::vector<std::vector<double>> traces(num_members);
  for (int k = 0; k < num_members; ++k) {
    RewardModel& model = ensemble.member(k);
    NllWorkspace workspace(model.params);
    MlpGrads grads = MlpGrads::zeros_like(model.params);
    std::vector<int>& indices = member_indices[k];
    for (int epoch = 0; epoch < epochs; ++epoch) {
      shuffle(indices, rng);
      for (std::size_t begin = 0; begin < indices.size(); begin += batch_size) {
        const std::size_t end = std::min(begin + batch_size, indices.size());
        const std::span<const int> batch(indices.data() + begin, end - begin);
        const double loss = workspace.loss_and_gradient(model.params, dataset, batch, grads);
        if (!std::isfinite(loss)) throw std::runtime_error("reward training loss diverged");
        adam_step(model.params, grads, model.adam);
        traces[k].push_back(loss);
      }
    }
    if (!model.params.finite())
      throw std::runtime_error("reward parameters diverged during training");
  }
  return traces;
}

}  // namespace relearn
