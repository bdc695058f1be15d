#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>
#include <vector>

#include "relearn/reward_model.hpp"
#include "relearn/rng.hpp"

using namespace relearn;

namespace {

// [2, 2, 1] net with hand-picked parameters; forward values are exact.
//   state 0: relu([1.5, -0.25]) = [1.5, 0]   -> 2*1.5 + 0.1          = 3.1
//   state 1: relu([0.5, 0.75])  = [0.5, .75] -> 2*0.5 + 3*0.75 + 0.1 = 3.35
MlpParams tiny_net() {
  MlpParams params;
  params.dims = {2, 2, 1};
  params.weights = {{1.0, 0.0, 0.0, 1.0}, {2.0, 3.0}};
  params.biases = {{0.5, -0.25}, {0.1}};
  return params;
}

TrajectorySegment segment_entering(int state, int length = 1) {
  TrajectorySegment segment;
  for (int i = 0; i < length; ++i) segment.transitions.push_back({0, 0, state});
  return segment;
}

PreferenceRecord record_pair(int preferred_state, int rejected_state, int length = 1) {
  PreferenceRecord record;
  record.first = segment_entering(preferred_state, length);
  record.second = segment_entering(rejected_state, length);
  record.label = Preference::first;
  return record;
}

std::vector<int> all_indices(std::size_t n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// Pre-activations of every hidden layer for a one-hot input.
std::vector<double> preactivations(const MlpParams& params, int state) {
  std::vector<double> zs;
  std::vector<double> activation(params.dims[0], 0.0);
  activation[state] = 1.0;
  for (int layer = 0; layer + 1 < params.num_layers(); ++layer) {
    const int out_dim = params.dims[layer + 1];
    const int in_dim = params.dims[layer];
    std::vector<double> next(out_dim);
    for (int o = 0; o < out_dim; ++o) {
      double z = params.biases[layer][o];
      for (int i = 0; i < in_dim; ++i) z += params.weights[layer][o * in_dim + i] * activation[i];
      zs.push_back(z);
      next[o] = std::max(0.0, z);
    }
    activation = std::move(next);
  }
  return zs;
}

}  // namespace

TEST_CASE("mlp_forward_state reads one-hot columns exactly") {
  const MlpParams params = tiny_net();
  CHECK(mlp_forward_state(params, 0) == 3.1);
  CHECK(mlp_forward_state(params, 1) == 3.35);
}

TEST_CASE("init builds the requested architecture with finite parameters") {
  SplitMix64 rng(51);
  const MlpParams params = MlpParams::init(40, {32, 32}, rng);
  CHECK(params.dims == std::vector<int>{40, 32, 32, 1});
  CHECK(params.num_layers() == 3);
  CHECK(params.input_dim() == 40);
  REQUIRE(params.weights[0].size() == 32u * 40u);
  REQUIRE(params.weights[2].size() == 32u);
  CHECK(params.finite());
  double magnitude = 0.0;
  for (double w : params.weights[0]) magnitude += std::abs(w);
  CHECK(magnitude > 0.0);
}

TEST_CASE("nll_loss matches the hand-computed softplus") {
  const MlpParams params = tiny_net();
  // Preferred sum 3.1, rejected 3.35: loss = softplus(0.25).
  const std::vector<PreferenceRecord> dataset = {record_pair(0, 1)};
  const std::vector<int> idx = all_indices(1);
  CHECK(nll_loss(params, dataset, idx) ==
        doctest::Approx(0.8259394198788436).epsilon(1e-14));
  // Flipping the label gives softplus(-0.25).
  std::vector<PreferenceRecord> flipped = dataset;
  flipped[0].label = Preference::second;
  CHECK(nll_loss(params, flipped, idx) ==
        doctest::Approx(0.5759394198788436).epsilon(1e-12));
}

TEST_CASE("workspace gradient equals the convenience gradient") {
  SplitMix64 rng(53);
  const MlpParams params = MlpParams::init(6, {5, 4}, rng);
  std::vector<PreferenceRecord> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(record_pair(rng.next_index(6), rng.next_index(6), 2));
  const auto [loss, grads] = nll_gradient(params, batch);

  NllWorkspace workspace(params);
  MlpGrads other = MlpGrads::zeros_like(params);
  const std::vector<int> idx = all_indices(batch.size());
  const double other_loss = workspace.loss_and_gradient(params, batch, idx, other);
  CHECK(loss == doctest::Approx(other_loss).epsilon(1e-15));
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    for (std::size_t i = 0; i < grads.weights[l].size(); ++i)
      CHECK(grads.weights[l][i] == doctest::Approx(other.weights[l][i]).epsilon(1e-13));
    for (std::size_t i = 0; i < grads.biases[l].size(); ++i)
      CHECK(grads.biases[l][i] == doctest::Approx(other.biases[l][i]).epsilon(1e-13));
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  SplitMix64 rng(57);
  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 5; ++trial) {
    MlpParams params;
    std::vector<PreferenceRecord> batch;
    // Redraw until every pre-activation clears the ReLU kink by a margin
    // safely above the finite-difference step.
    for (int attempt = 0; attempt < 100; ++attempt) {
      params = MlpParams::init(6, {5, 4}, rng);
      batch.clear();
      for (int i = 0; i < 4; ++i) {
        const int a = rng.next_index(6);
        int b = rng.next_index(5);
        if (b >= a) ++b;
        batch.push_back(record_pair(a, b, 2));
      }
      double min_margin = 1e9;
      for (int s = 0; s < 6; ++s)
        for (double z : preactivations(params, s)) min_margin = std::min(min_margin, std::abs(z));
      if (min_margin > 1e-3) break;
    }
    const auto [loss, grads] = nll_gradient(params, batch);
    const std::vector<int> idx = all_indices(batch.size());

    double diff_sq = 0.0, analytic_sq = 0.0;
    auto probe = [&](std::vector<double>& values, const std::vector<double>& grad) {
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + h;
        const double up = nll_loss(params, batch, idx);
        values[i] = saved - h;
        const double down = nll_loss(params, batch, idx);
        values[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        diff_sq += (fd - grad[i]) * (fd - grad[i]);
        analytic_sq += grad[i] * grad[i];
        checked += 1;
      }
    };
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
      probe(params.weights[l], grads.weights[l]);
      probe(params.biases[l], grads.biases[l]);
    }
    REQUIRE(analytic_sq > 0.0);
    CHECK(std::sqrt(diff_sq) / std::sqrt(analytic_sq) < 1e-4);
  }
  CHECK(checked > 300);
}

TEST_CASE("adam takes the bias-corrected step") {
  MlpParams params;
  params.dims = {1, 1};
  params.weights = {{1.0}};
  params.biases = {{0.0}};
  AdamState state = AdamState::init(params, 1e-3);
  MlpGrads grads = MlpGrads::zeros_like(params);
  grads.weights[0][0] = 2.0;
  adam_step(params, grads, state);
  CHECK(state.step == 1);
  CHECK(params.weights[0][0] == doctest::Approx(0.999000000005).epsilon(1e-12));
  adam_step(params, grads, state);
  CHECK(params.weights[0][0] == doctest::Approx(0.99800000001).epsilon(1e-12));
}

TEST_CASE("running norm tracks mean and population variance") {
  RunningNorm norm;
  CHECK(norm.apply(5.0) == 5.0);  // identity before any update
  norm.update(1.0);
  norm.update(2.0);
  norm.update(3.0);
  CHECK(norm.count == 3);
  CHECK(norm.mean == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(norm.variance() == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(norm.apply(3.0) == doctest::Approx(1.224744871391589).epsilon(1e-12));
}

TEST_CASE("running norm floors the deviation and respects freezing") {
  RunningNorm constant;
  constant.update(7.0);
  constant.update(7.0);
  CHECK(constant.apply(7.0) == 0.0);
  CHECK(constant.apply(7.0 + 1e-8) == doctest::Approx(1.0).epsilon(1e-6));

  RunningNorm norm;
  norm.update(1.0);
  norm.update(3.0);
  norm.frozen = true;
  const double before_mean = norm.mean;
  const long long before_count = norm.count;
  const double frozen_value = norm.update_apply(100.0);
  CHECK(norm.count == before_count);
  CHECK(norm.mean == before_mean);
  CHECK(frozen_value == norm.apply(100.0));
}

TEST_CASE("ema norm seeds itself with the first value") {
  EmaNorm norm;
  norm.update(5.0);
  CHECK(norm.mean == 5.0);
  CHECK(norm.variance() == 0.0);
  CHECK(norm.apply(5.0) == 0.0);
  norm.update(7.0);
  const double mean = 0.99 * 5.0 + 0.01 * 7.0;
  const double mean_sq = 0.99 * 25.0 + 0.01 * 49.0;
  CHECK(norm.apply(7.0) ==
        doctest::Approx((7.0 - mean) / std::sqrt(mean_sq - mean * mean)).epsilon(1e-9));
}

TEST_CASE("bootstrap resamples with replacement at the expected collision rate") {
  SplitMix64 rng(61);
  const std::size_t n = 10000;
  const auto draws = bootstrap_indices(n, 1, rng);
  REQUIRE(draws.size() == 1);
  REQUIRE(draws[0].size() == n);
  std::set<int> unique;
  for (int i : draws[0]) {
    REQUIRE(i >= 0);
    REQUIRE(i < static_cast<int>(n));
    unique.insert(i);
  }
  // Expected unique fraction 1 - 1/e.
  CHECK(std::abs(double(unique.size()) / n - 0.6321205588285577) < 0.02);

  SplitMix64 rng_a(62), rng_b(62);
  CHECK(bootstrap_indices(100, 3, rng_a) == bootstrap_indices(100, 3, rng_b));
}

TEST_CASE("reward model observes through its normalizer") {
  SplitMix64 rng(63);
  RewardModel model = RewardModel::init(4, {3}, 1e-3, rng);
  CHECK(model.raw(2) == mlp_forward_state(model.params, 2));
  model.observe_state(2);
  model.observe_state(3);
  CHECK(model.norm.count == 2);
  CHECK(model.evaluate_state(2) == model.norm.apply(model.raw(2)));
}

TEST_CASE("ensemble aggregates normalized member outputs by their mean") {
  RewardModel a;
  a.params = tiny_net();
  RewardModel b;
  b.params = tiny_net();
  b.params.weights[1] = {4.0, 6.0};  // doubles the output path: 6.1 and 6.6 minus bias shift
  b.params.biases[1] = {0.2};
  RewardEnsemble ensemble = RewardEnsemble::from_members({a, b});
  CHECK(ensemble.size() == 2);
  CHECK(ensemble.input_dim() == 2);
  // Norms are untouched, so members contribute raw outputs.
  const double expected_0 = (3.1 + (4.0 * 1.5 + 0.2)) / 2.0;
  CHECK(ensemble.evaluate_state(0) == doctest::Approx(expected_0).epsilon(1e-15));
  const auto values = ensemble.state_values();
  REQUIRE(values.size() == 2);
  CHECK(values[0] == ensemble.evaluate_state(0));
  CHECK(values[1] == ensemble.evaluate_state(1));
}

TEST_CASE("ensemble observation updates every member and freezing stops it") {
  SplitMix64 rng(67);
  RewardEnsemble ensemble(5, {4}, 3, 1e-3, rng);
  CHECK(!ensemble.frozen());
  ensemble.observe_state(1);
  ensemble.observe_state(2);
  for (int k = 0; k < 3; ++k) CHECK(ensemble.member(k).norm.count == 2);
  const double pure = ensemble.evaluate_state(3);
  for (int k = 0; k < 3; ++k) CHECK(ensemble.member(k).norm.count == 2);

  ensemble.freeze();
  CHECK(ensemble.frozen());
  const double frozen_observe = ensemble.observe_state(3);
  CHECK(frozen_observe == pure);
  for (int k = 0; k < 3; ++k) CHECK(ensemble.member(k).norm.count == 2);
}

TEST_CASE("mutable member access invalidates the forward cache") {
  RewardModel a;
  a.params = tiny_net();
  RewardEnsemble ensemble = RewardEnsemble::from_members({a});
  CHECK(ensemble.evaluate_state(0) == 3.1);
  ensemble.member(0).params.biases[1][0] += 1.0;
  CHECK(ensemble.evaluate_state(0) == doctest::Approx(4.1).epsilon(1e-15));
}

TEST_CASE("training reduces preference loss on separable data") {
  SplitMix64 rng(71);
  std::vector<PreferenceRecord> dataset;
  for (int i = 0; i < 64; ++i) dataset.push_back(record_pair(3, i % 3, 2));
  RewardEnsemble ensemble(4, {8}, 1, 1e-2, rng);
  const std::vector<int> idx = all_indices(dataset.size());
  const double before = nll_loss(ensemble.member(0).params, dataset, idx);
  const auto losses = train_reward_epoch(ensemble, dataset, 150, 32, rng);
  REQUIRE(losses.size() == 1);
  CHECK(losses[0].size() == 300u);  // 150 epochs times two 32-record batches
  const double after = nll_loss(ensemble.member(0).params, dataset, idx);
  CHECK(after < before);
  CHECK(after < 0.2);
  // The preferred state now scores above the alternatives.
  for (int s = 0; s < 3; ++s)
    CHECK(ensemble.member(0).raw(3) > ensemble.member(0).raw(s));
}

TEST_CASE("ensemble members diverge through bootstrapping") {
  SplitMix64 rng(73);
  std::vector<PreferenceRecord> dataset;
  for (int i = 0; i < 32; ++i) dataset.push_back(record_pair((i % 3) + 1, 0, 2));
  RewardEnsemble ensemble(4, {6}, 2, 1e-3, rng);
  train_reward_epoch(ensemble, dataset, 5, 16, rng);
  CHECK(ensemble.member(0).params.weights[0] != ensemble.member(1).params.weights[0]);
  CHECK(ensemble.member(0).params.finite());
  CHECK(ensemble.member(1).params.finite());
}

TEST_CASE("reward training is deterministic for a fixed seed") {
  auto train = [](std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<PreferenceRecord> dataset;
    for (int i = 0; i < 16; ++i) dataset.push_back(record_pair(i % 4, (i + 1) % 4, 2));
    RewardEnsemble ensemble(4, {5}, 2, 1e-3, rng);
    train_reward_epoch(ensemble, dataset, 3, 8, rng);
    return ensemble.member(1).params.weights[0];
  };
  CHECK(train(9) == train(9));
  CHECK(train(9) != train(10));
}
