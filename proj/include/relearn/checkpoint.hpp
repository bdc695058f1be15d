#pragma once

#include <cstdint>
#include <string>

#include "relearn/reward_model.hpp"

namespace relearn {

// Frozen-reward checkpoint: architecture, per-member weights and normalizer
// statistics, plus run provenance. Optimizer state is deliberately not
// stored; checkpoints exist for evaluation, not resumption.
struct Checkpoint {
  std::string env;
  std::uint64_t seed = 0;
  RewardEnsemble ensemble;
};

// Doubles round-trip bit-exactly (17 significant digits).
std::string checkpoint_to_json(const RewardEnsemble& ensemble, const std::string& env,
                               std::uint64_t seed);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const RewardEnsemble& ensemble,
                     const std::string& env, std::uint64_t seed);
Checkpoint load_checkpoint(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace relearn
