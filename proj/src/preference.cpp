#include "relearn/preference.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace relearn {

void TrajectorySegment::validate() const {
  for (std::size_t i = 1; i < transitions.size(); ++i)
    if (transitions[i].state != transitions[i - 1].next_state)
      throw std::invalid_argument("segment transitions do not chain");
}

void SegmentBuffer::push(TrajectorySegment segment, int collected_at) {
  segments.push_back(std::move(segment));
  iteration.push_back(collected_at);
}

std::vector<TrajectorySegment> extract_fragments(const std::vector<Transition>& episode,
                                                 const std::vector<double>& gt_reward,
                                                 int fragment_length, int count,
                                                 SplitMix64& rng) {
  if (fragment_length < 1) throw std::invalid_argument("fragment_length must be >= 1");
  if (count < 1) throw std::invalid_argument("count must be >= 1");
  if (episode.size() < static_cast<std::size_t>(fragment_length))
    throw std::invalid_argument("episode shorter than fragment_length");
  const std::size_t max_offset = episode.size() - fragment_length;
  std::vector<TrajectorySegment> fragments;
  fragments.reserve(count);
  for (int i = 0; i < count; ++i) {
    const std::size_t offset = rng.next_below(max_offset + 1);
    TrajectorySegment segment;
    segment.transitions.assign(episode.begin() + offset,
                               episode.begin() + offset + fragment_length);
    for (const Transition& t : segment.transitions)
      segment.gt_return += gt_reward.at(t.next_state);
    fragments.push_back(std::move(segment));
  }
  return fragments;
}

std::vector<std::pair<std::size_t, std::size_t>> select_pair_indices(std::size_t buffer_size,
                                                                     long long num_pairs,
                                                                     SplitMix64& rng) {
  if (num_pairs < 1) throw std::invalid_argument("num_pairs must be >= 1");
  if (buffer_size < 2) throw std::invalid_argument("need at least 2 segments to form pairs");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(num_pairs);
  for (long long i = 0; i < num_pairs; ++i) {
    const std::size_t first = rng.next_below(buffer_size);
    std::size_t second = rng.next_below(buffer_size - 1);
    if (second >= first) ++second;  // uniform over the remaining indices
    pairs.emplace_back(first, second);
  }
  return pairs;
}

double bt_probability(double return_1, double return_2) {
  if (!std::isfinite(return_1) || !std::isfinite(return_2))
    throw std::invalid_argument("bt_probability requires finite returns");
  const double diff = return_1 - return_2;
  if (diff >= 0.0) {
    return 1.0 / (1.0 + std::exp(-diff));
  }
  const double e = std::exp(diff);
  return e / (1.0 + e);
}

PreferenceRecord synthetic_label(const TrajectorySegment& first,
                                 const TrajectorySegment& second, SplitMix64& rng) {
  PreferenceRecord record;
  record.first = first;
  record.second = second;
  const double p_first = bt_probability(first.gt_return, second.gt_return);
  record.label = rng.bernoulli(p_first) ? Preference::first : Preference::second;
  return record;
}

namespace {

nlohmann::json segment_to_json(const TrajectorySegment& segment) {
  nlohmann::json doc;
  nlohmann::json states = nlohmann::json::array();
  nlohmann::json actions = nlohmann::json::array();
  if (!segment.transitions.empty()) states.push_back(segment.transitions.front().state);
  for (const Transition& t : segment.transitions) {
    states.push_back(t.next_state);
    actions.push_back(t.action);
  }
  doc["states"] = std::move(states);
  doc["actions"] = std::move(actions);
  doc["gt_return"] = segment.gt_return;
  return doc;
}

TrajectorySegment segment_from_json(const nlohmann::json& doc) {
  TrajectorySegment segment;
  const auto& states = doc.at("states");
  const auto& actions = doc.at("actions");
  if (states.size() != actions.size() + 1)
    throw std::invalid_argument("segment state/action arrays inconsistent");
  for (std::size_t i = 0; i < actions.size(); ++i)
    segment.transitions.push_back(Transition{states[i].get<int>(), actions[i].get<int>(),
                                             states[i + 1].get<int>()});
  segment.gt_return = doc.at("gt_return").get<double>();
  segment.validate();
  return segment;
}

}  // namespace

std::string dataset_to_jsonl(const std::vector<PreferenceRecord>& dataset) {
  std::string out;
  for (const PreferenceRecord& record : dataset) {
    nlohmann::json doc;
    doc["first"] = segment_to_json(record.first);
    doc["second"] = segment_to_json(record.second);
    doc["label"] = record.label == Preference::first ? "first" : "second";
    out += doc.dump();
    out += '\n';
  }
  return out;
}

std::vector<PreferenceRecord> dataset_from_jsonl(const std::string& text) {
  std::vector<PreferenceRecord> dataset;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) {
    if (line.empty()) continue;
    const nlohmann::json doc = nlohmann::json::parse(line);
    PreferenceRecord record;
    record.first = segment_from_json(doc.at("first"));
    record.second = segment_from_json(doc.at("second"));
    const std::string label = doc.at("label").get<std::string>();
    if (label == "first") {
      record.label = Preference::first;
    } else if (label == "second") {
      record.label = Preference::second;
    } else {
      throw std::invalid_argument("unknown preference label: " + label);
    }
    dataset.push_back(std::move(record));
  }
  return dataset;
}

}  // namespace relearn
