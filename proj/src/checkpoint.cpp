#include "relearn/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace relearn {

std::string checkpoint_to_json(const RewardEnsemble& ensemble, const std::string& env,
                               std::uint64_t seed) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["kind"] = "reward_ensemble";
  doc["env"] = env;
  doc["seed"] = seed;
  const MlpParams& reference = ensemble.member(0).params;
  doc["input_dim"] = reference.input_dim();
  nlohmann::json hidden = nlohmann::json::array();
  for (std::size_t i = 1; i + 1 < reference.dims.size(); ++i) hidden.push_back(reference.dims[i]);
  doc["hidden"] = std::move(hidden);

  nlohmann::json members = nlohmann::json::array();
  for (int k = 0; k < ensemble.size(); ++k) {
    const RewardModel& model = ensemble.member(k);
    nlohmann::json member;
    member["weights"] = model.params.weights;
    member["biases"] = model.params.biases;
    member["norm"] = {{"count", model.norm.count},
                      {"mean", model.norm.mean},
                      {"m2", model.norm.m2},
                      {"frozen", model.norm.frozen}};
    members.push_back(std::move(member));
  }
  doc["members"] = std::move(members);
  return doc.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  if (doc.at("kind").get<std::string>() != "reward_ensemble")
    throw std::invalid_argument("not a reward_ensemble document");
  if (doc.at("format_version").get<int>() != 1)
    throw std::invalid_argument("unsupported checkpoint format version");

  const int input_dim = doc.at("input_dim").get<int>();
  const std::vector<int> hidden = doc.at("hidden").get<std::vector<int>>();
  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);

  std::vector<RewardModel> members;
  for (const auto& entry : doc.at("members")) {
    RewardModel model;
    model.params.dims = dims;
    model.params.weights = entry.at("weights").get<std::vector<std::vector<double>>>();
    model.params.biases = entry.at("biases").get<std::vector<std::vector<double>>>();
    for (std::size_t layer = 0; layer + 1 < dims.size(); ++layer) {
      const std::size_t expected_w =
          static_cast<std::size_t>(dims[layer]) * static_cast<std::size_t>(dims[layer + 1]);
      if (model.params.weights.at(layer).size() != expected_w ||
          model.params.biases.at(layer).size() != static_cast<std::size_t>(dims[layer + 1]))
        throw std::invalid_argument("checkpoint layer shape mismatch");
    }
    const auto& norm = entry.at("norm");
    model.norm.count = norm.at("count").get<long long>();
    model.norm.mean = norm.at("mean").get<double>();
    model.norm.m2 = norm.at("m2").get<double>();
    model.norm.frozen = norm.at("frozen").get<bool>();
    model.adam = AdamState::init(model.params, 1e-3);
    members.push_back(std::move(model));
  }
  if (members.empty()) throw std::invalid_argument("checkpoint has no members");

  Checkpoint checkpoint{doc.at("env").get<std::string>(), doc.at("seed").get<std::uint64_t>(),
                        RewardEnsemble::from_members(std::move(members))};
  return checkpoint;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void save_checkpoint(const std::string& path, const RewardEnsemble& ensemble,
                     const std::string& env, std::uint64_t seed) {
  write_text_file(path, checkpoint_to_json(ensemble, env, seed));
}

Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(read_text_file(path));
}

}  // namespace relearn
