#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "relearn/env.hpp"
#include "relearn/rng.hpp"

namespace relearn {

// Fixed-length contiguous window of an episode. gt_return exists solely for
// the synthetic labeler and diagnostics; reward training reads only the
// transitions' states.
struct TrajectorySegment {
  std::vector<Transition> transitions;
  double gt_return = 0.0;

  // Consecutive transitions must chain: next_state of step i = state of i+1.
  void validate() const;
};

enum class Preference { first, second };

struct PreferenceRecord {
  TrajectorySegment first;
  TrajectorySegment second;
  Preference label = Preference::first;

  const TrajectorySegment& preferred() const {
    return label == Preference::first ? first : second;
  }
  const TrajectorySegment& rejected() const {
    return label == Preference::first ? second : first;
  }
};

// Append-only segment store; iteration[i] records when segments[i] was
// collected.
struct SegmentBuffer {
  std::vector<TrajectorySegment> segments;
  std::vector<int> iteration;

  void push(TrajectorySegment segment, int collected_at);
  std::size_t size() const { return segments.size(); }
};

// Cuts `count` windows of fragment_length transitions at uniformly random
// start offsets (windows may overlap). gt_reward scores each window's
// entered states. Throws std::invalid_argument if the episode is too short.
std::vector<TrajectorySegment> extract_fragments(const std::vector<Transition>& episode,
                                                 const std::vector<double>& gt_reward,
                                                 int fragment_length, int count,
                                                 SplitMix64& rng);

// num_pairs independent draws of two distinct buffer indices.
// Throws std::invalid_argument if the buffer holds fewer than 2 segments.
std::vector<std::pair<std::size_t, std::size_t>> select_pair_indices(std::size_t buffer_size,
                                                                     long long num_pairs,
                                                                     SplitMix64& rng);

// P(first preferred) = exp(r1) / (exp(r1) + exp(r2)) = logistic(r1 - r2),
// computed in the overflow-free logistic form.
double bt_probability(double return_1, double return_2);

// Samples the label from bt_probability of the segments' ground-truth returns.
PreferenceRecord synthetic_label(const TrajectorySegment& first,
                                 const TrajectorySegment& second, SplitMix64& rng);

// One record per line; segments stored as state/action index arrays.
std::string dataset_to_jsonl(const std::vector<PreferenceRecord>& dataset);
std::vector<PreferenceRecord> dataset_from_jsonl(const std::string& text);

}  // namespace relearn
