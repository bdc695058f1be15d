#include "relearn/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "relearn/checkpoint.hpp"
#include "relearn/eval.hpp"

namespace relearn {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

std::vector<std::string> split_whitespace(const std::string& s) {
  std::vector<std::string> parts;
  std::istringstream stream(s);
  std::string token;
  while (stream >> token) parts.push_back(token);
  return parts;
}

template <typename T>
T parse_integer(const std::string& value, const std::string& key) {
  T result{};
  const char* begin = value.data();
  const char* end = begin + value.size();
  const auto [ptr, ec] = std::from_chars(begin, end, result);
  if (ec != std::errc{} || ptr != end)
    throw ConfigError("key '" + key + "': expected an integer, got '" + value + "'");
  return result;
}

double parse_real(const std::string& value, const std::string& key) {
  std::size_t consumed = 0;
  double result = 0.0;
  try {
    result = std::stod(value, &consumed);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  }
  if (consumed != value.size())
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  return result;
}

std::string format_real(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (experiment != "ensemble_study" && experiment != "budget_sweep" &&
      experiment != "single_run")
    throw ConfigError("unknown experiment '" + experiment +
                      "' (expected ensemble_study, budget_sweep, or single_run)");
  if (!env.empty() && !is_known_env(env)) throw ConfigError("unknown environment '" + env + "'");
  if (seeds.empty()) throw ConfigError("seeds must be non-empty");
  std::set<std::uint64_t> unique_seeds(seeds.begin(), seeds.end());
  if (unique_seeds.size() != seeds.size()) throw ConfigError("seeds must be distinct");
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (experiment == "budget_sweep") {
    if (sweep_budgets.empty()) throw ConfigError("budget_sweep requires at least one budget");
    for (long long b : sweep_budgets)
      if (b < 1) throw ConfigError("sweep budgets must be positive");
  }
  try {
    loop.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid loop configuration: ") + e.what());
  }
}

std::string ExperimentConfig::resolved_env() const {
  if (!env.empty()) return env;
  return experiment == "ensemble_study" ? "stay_inside" : "tiny_room";
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig config;
  std::istringstream stream(text);
  std::string line;
  std::string section;
  std::set<std::string> seen;
  int line_no = 0;

  static const std::set<std::string> known_sections = {"experiment", "loop", "solver", "reward",
                                                       "sweep"};

  while (std::getline(stream, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (!known_sections.count(section))
        throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" + section +
                          "]");
      continue;
    }
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    if (section.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    const std::string qualified = section + "." + key;
    if (!seen.insert(qualified).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + qualified +
                        "'");

    if (section == "experiment") {
      if (key == "name") {
        config.experiment = value;
      } else if (key == "env") {
        config.env = value;
      } else if (key == "seeds") {
        config.seeds.clear();
        for (const std::string& token : split_whitespace(value))
          config.seeds.push_back(parse_integer<std::uint64_t>(token, qualified));
        if (config.seeds.empty()) throw ConfigError("key '" + qualified + "': empty seed list");
      } else if (key == "output_dir") {
        config.output_dir = value;
      } else if (key == "parallelism") {
        config.parallelism = parse_integer<int>(value, qualified);
      } else {
        throw ConfigError("unknown key '" + key + "' in section [experiment] (line " +
                          std::to_string(line_no) + ")");
      }
    } else if (section == "loop") {
      if (key == "total_comparisons") {
        config.loop.total_comparisons = parse_integer<long long>(value, qualified);
      } else if (key == "num_iterations") {
        config.loop.num_iterations = parse_integer<int>(value, qualified);
      } else if (key == "rl_budget") {
        config.loop.rl_budget = parse_integer<long long>(value, qualified);
      } else if (key == "fragment_length") {
        config.loop.fragment_length = parse_integer<int>(value, qualified);
      } else if (key == "initial_random_fraction") {
        config.loop.initial_random_fraction = parse_real(value, qualified);
      } else if (key == "ensemble_size") {
        config.loop.ensemble_size = parse_integer<int>(value, qualified);
      } else if (key == "reward_epochs") {
        config.loop.reward_epochs = parse_integer<int>(value, qualified);
      } else if (key == "segments_per_episode") {
        config.loop.segments_per_episode = parse_integer<int>(value, qualified);
      } else {
        throw ConfigError("unknown key '" + key + "' in section [loop] (line " +
                          std::to_string(line_no) + ")");
      }
    } else if (section == "solver") {
      if (key == "discount") {
        config.loop.solver.discount = parse_real(value, qualified);
      } else if (key == "learning_rate") {
        config.loop.solver.learning_rate = parse_real(value, qualified);
      } else if (key == "temperature") {
        config.loop.solver.temperature = parse_real(value, qualified);
      } else if (key == "grad_steps_per_env_step") {
        config.loop.solver.grad_steps_per_env_step = parse_integer<int>(value, qualified);
      } else if (key == "initial_q") {
        config.loop.solver.initial_q = parse_real(value, qualified);
      } else {
        throw ConfigError("unknown key '" + key + "' in section [solver] (line " +
                          std::to_string(line_no) + ")");
      }
    } else if (section == "reward") {
      if (key == "learning_rate") {
        config.loop.reward.learning_rate = parse_real(value, qualified);
      } else if (key == "hidden") {
        config.loop.reward.hidden.clear();
        for (const std::string& token : split_whitespace(value))
          config.loop.reward.hidden.push_back(parse_integer<int>(token, qualified));
      } else if (key == "batch_size") {
        config.loop.reward.batch_size = parse_integer<int>(value, qualified);
      } else {
        throw ConfigError("unknown key '" + key + "' in section [reward] (line " +
                          std::to_string(line_no) + ")");
      }
    } else if (section == "sweep") {
      if (key == "budgets") {
        config.sweep_budgets.clear();
        for (const std::string& token : split_whitespace(value))
          config.sweep_budgets.push_back(parse_integer<long long>(token, qualified));
      } else {
        throw ConfigError("unknown key '" + key + "' in section [sweep] (line " +
                          std::to_string(line_no) + ")");
      }
    }
  }
  config.validate();
  return config;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "name = " << config.experiment << "\n";
  if (!config.env.empty()) out << "env = " << config.env << "\n";
  out << "seeds =";
  for (std::uint64_t s : config.seeds) out << " " << s;
  out << "\n";
  out << "output_dir = " << config.output_dir << "\n";
  out << "parallelism = " << config.parallelism << "\n\n";

  const LoopConfig& loop = config.loop;
  out << "[loop]\n";
  out << "total_comparisons = " << loop.total_comparisons << "\n";
  out << "num_iterations = " << loop.num_iterations << "\n";
  out << "rl_budget = " << loop.rl_budget << "\n";
  out << "fragment_length = " << loop.fragment_length << "\n";
  out << "initial_random_fraction = " << format_real(loop.initial_random_fraction) << "\n";
  out << "ensemble_size = " << loop.ensemble_size << "\n";
  out << "reward_epochs = " << loop.reward_epochs << "\n";
  out << "segments_per_episode = " << loop.segments_per_episode << "\n\n";

  out << "[solver]\n";
  out << "discount = " << format_real(loop.solver.discount) << "\n";
  out << "learning_rate = " << format_real(loop.solver.learning_rate) << "\n";
  out << "temperature = " << format_real(loop.solver.temperature) << "\n";
  out << "grad_steps_per_env_step = " << loop.solver.grad_steps_per_env_step << "\n";
  out << "initial_q = " << format_real(loop.solver.initial_q) << "\n\n";

  out << "[reward]\n";
  out << "learning_rate = " << format_real(loop.reward.learning_rate) << "\n";
  out << "hidden =";
  for (int h : loop.reward.hidden) out << " " << h;
  out << "\n";
  out << "batch_size = " << loop.reward.batch_size << "\n\n";

  out << "[sweep]\n";
  out << "budgets =";
  for (long long b : config.sweep_budgets) out << " " << b;
  out << "\n";
  return out.str();
}

namespace {

constexpr const char* kResultsHeader =
    "experiment,env,seed,ensemble_size,rl_budget,sampler_return,relearner_return,"
    "epic_uniform,epic_expert,error";

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

std::string row_to_csv(const ResultRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%llu,%d,%lld,%.17g,%.17g,%.17g,%.17g,",
                static_cast<unsigned long long>(row.seed), row.ensemble_size, row.rl_budget,
                row.sampler_return, row.relearner_return, row.epic_uniform, row.epic_expert);
  return csv_quote(row.experiment) + "," + csv_quote(row.env) + "," + buf +
         csv_quote(row.error) + "\n";
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

}  // namespace

std::string results_to_csv(const ResultsTable& table) {
  std::string out = "# relearn-results v1\n";
  out += kResultsHeader;
  out += '\n';
  for (const ResultRow& row : table.rows) out += row_to_csv(row);
  return out;
}

ResultsTable results_from_csv(const std::string& text) {
  ResultsTable table;
  std::istringstream stream(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(stream, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kResultsHeader) throw std::invalid_argument("unrecognized results header");
      header_seen = true;
      continue;
    }
    const std::vector<std::string> fields = parse_csv_line(line);
    if (fields.size() != 10) throw std::invalid_argument("results row has wrong field count");
    ResultRow row;
    row.experiment = fields[0];
    row.env = fields[1];
    row.seed = std::stoull(fields[2]);
    row.ensemble_size = std::stoi(fields[3]);
    row.rl_budget = std::stoll(fields[4]);
    row.sampler_return = std::stod(fields[5]);
    row.relearner_return = std::stod(fields[6]);
    row.epic_uniform = std::stod(fields[7]);
    row.epic_expert = std::stod(fields[8]);
    row.error = fields[9];
    table.rows.push_back(std::move(row));
  }
  if (!header_seen) throw std::invalid_argument("results file has no header");
  return table;
}

std::vector<RunSpec> plan_runs(const ExperimentConfig& config) {
  config.validate();
  const std::string env = config.resolved_env();
  std::vector<RunSpec> specs;
  if (config.experiment == "ensemble_study") {
    for (int ensemble_size : {1, 5}) {
      for (std::uint64_t seed : config.seeds) {
        RunSpec spec{config.experiment, env, seed, config.loop, ""};
        spec.loop.ensemble_size = ensemble_size;
        spec.loop.seed = derive_run_seed(seed, ensemble_size, spec.loop.rl_budget);
        specs.push_back(std::move(spec));
      }
    }
  } else if (config.experiment == "budget_sweep") {
    for (long long budget : config.sweep_budgets) {
      for (std::uint64_t seed : config.seeds) {
        RunSpec spec{config.experiment, env, seed, config.loop, ""};
        spec.loop.rl_budget = budget;
        spec.loop.seed = derive_run_seed(seed, spec.loop.ensemble_size, budget);
        specs.push_back(std::move(spec));
      }
    }
  } else {  // single_run
    for (std::uint64_t seed : config.seeds) {
      RunSpec spec{config.experiment, env, seed, config.loop, ""};
      spec.loop.seed = derive_run_seed(seed, spec.loop.ensemble_size, spec.loop.rl_budget);
      spec.artifact_dir = config.output_dir + "/run_" + std::to_string(seed);
      specs.push_back(std::move(spec));
    }
  }
  return specs;
}

namespace {

// Identity fields copied from the RunSpec, metrics NaN until a run fills them in.
ResultRow row_for_spec(const RunSpec& spec) {
  ResultRow row;
  row.experiment = spec.experiment;
  row.env = spec.env;
  row.seed = spec.seed;
  row.ensemble_size = spec.loop.ensemble_size;
  row.rl_budget = spec.loop.rl_budget;
  row.sampler_return = std::numeric_limits<double>::quiet_NaN();
  row.relearner_return = std::numeric_limits<double>::quiet_NaN();
  row.epic_uniform = std::numeric_limits<double>::quiet_NaN();
  row.epic_expert = std::numeric_limits<double>::quiet_NaN();
  return row;
}

}  // namespace

ResultRow default_runner(const RunSpec& spec) {
  ResultRow row = row_for_spec(spec);
  try {
    const TabularMDP mdp = make_env(spec.env);
    const RunResult result = execute_run(mdp, spec.env, spec.loop);
    row.sampler_return = result.outcome.sampler_return;
    row.relearner_return = result.outcome.relearner_return;
    row.epic_uniform = result.outcome.epic_uniform;
    row.epic_expert = result.outcome.epic_expert;
    if (!spec.artifact_dir.empty()) {
      std::filesystem::create_directories(spec.artifact_dir);
      save_checkpoint(spec.artifact_dir + "/reward_checkpoint.json", result.artifacts.reward,
                      spec.env, spec.loop.seed);
      write_text_file(spec.artifact_dir + "/sampler_policy.json",
                      policy_to_json(result.artifacts.sampler));
      const std::vector<double> values = result.artifacts.reward.state_values();
      std::vector<double> table(static_cast<std::size_t>(mdp.num_states) * mdp.num_actions);
      for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a)
          table[static_cast<std::size_t>(s) * mdp.num_actions + a] = values[mdp.next(s, a)];
      write_text_file(spec.artifact_dir + "/relearner_policy.json",
                      policy_to_json(relearn_policy(mdp, table, 0.1, 0.99)));
      write_text_file(spec.artifact_dir + "/preferences.jsonl",
                      dataset_to_jsonl(result.artifacts.dataset));
      write_text_file(spec.artifact_dir + "/iteration_stats.csv",
                      stats_to_csv(result.artifacts.stats));
    }
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

ResultsTable run_experiment_with_runner(const ExperimentConfig& config, const RunnerFn& runner) {
  config.validate();
  const std::vector<RunSpec> specs = plan_runs(config);
  std::filesystem::create_directories(config.output_dir);
  std::ofstream out(config.output_dir + "/results.csv", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + config.output_dir + "/results.csv");
  out << "# relearn-results v1\n" << kResultsHeader << "\n" << std::flush;

  ResultsTable table;
  // A runner that throws must cost only its own row, never the experiment.
  const auto guarded = [&runner](const RunSpec& spec) -> ResultRow {
    try {
      return runner(spec);
    } catch (const std::exception& e) {
      ResultRow row = row_for_spec(spec);
      row.error = e.what();
      return row;
    }
  };
  // Bounded pool: chunks of `parallelism` runs; rows commit in plan order so
  // output bytes are independent of scheduling.
  for (std::size_t begin = 0; begin < specs.size();
       begin += static_cast<std::size_t>(config.parallelism)) {
    const std::size_t end =
        std::min(begin + static_cast<std::size_t>(config.parallelism), specs.size());
    std::vector<std::future<ResultRow>> futures;
    futures.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      if (config.parallelism == 1) {
        futures.emplace_back();  // placeholder, run inline below
      } else {
        futures.push_back(
            std::async(std::launch::async, [&guarded, &specs, i] { return guarded(specs[i]); }));
      }
    }
    for (std::size_t i = begin; i < end; ++i) {
      ResultRow row =
          config.parallelism == 1 ? guarded(specs[i]) : futures[i - begin].get();
      out << row_to_csv(row) << std::flush;
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

ResultsTable run_experiment(const ExperimentConfig& config) {
  return run_experiment_with_runner(config, default_runner);
}

std::vector<ArmSummary> summarize(const ResultsTable& table) {
  if (table.rows.empty()) throw std::invalid_argument("results table is empty");
  std::vector<ArmSummary> arms;
  auto arm_for = [&](const ResultRow& row) -> ArmSummary& {
    for (ArmSummary& arm : arms)
      if (arm.env == row.env && arm.ensemble_size == row.ensemble_size &&
          arm.rl_budget == row.rl_budget)
        return arm;
    ArmSummary arm;
    arm.env = row.env;
    arm.ensemble_size = row.ensemble_size;
    arm.rl_budget = row.rl_budget;
    arms.push_back(std::move(arm));
    return arms.back();
  };

  struct Accumulator {
    std::vector<double> sampler, relearner, epic_uniform, epic_expert;
    int ok = 0;
  };
  std::vector<Accumulator> accs;
  for (const ResultRow& row : table.rows) {
    ArmSummary& arm = arm_for(row);
    const std::size_t index = &arm - arms.data();
    if (accs.size() <= index) accs.resize(index + 1);
    arm.num_seeds += 1;
    if (!row.error.empty()) {
      arm.num_failed += 1;
      continue;
    }
    Accumulator& acc = accs[index];
    acc.sampler.push_back(row.sampler_return);
    acc.relearner.push_back(row.relearner_return);
    acc.epic_uniform.push_back(row.epic_uniform);
    acc.epic_expert.push_back(row.epic_expert);
    if (row.relearner_return >= row.sampler_return - 0.05 * std::abs(row.sampler_return))
      acc.ok += 1;
  }

  auto mean_of = [](const std::vector<double>& v) {
    double total = 0.0;
    for (double x : v) total += x;
    return v.empty() ? 0.0 : total / static_cast<double>(v.size());
  };
  auto stderr_of = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mean = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1)) /
           std::sqrt(static_cast<double>(v.size()));
  };

  for (std::size_t i = 0; i < arms.size(); ++i) {
    const Accumulator& acc = accs[i];
    arms[i].sampler_mean = mean_of(acc.sampler);
    arms[i].sampler_stderr = stderr_of(acc.sampler);
    arms[i].relearner_mean = mean_of(acc.relearner);
    arms[i].relearner_stderr = stderr_of(acc.relearner);
    arms[i].epic_uniform_mean = mean_of(acc.epic_uniform);
    arms[i].epic_expert_mean = mean_of(acc.epic_expert);
    const int completed = arms[i].num_seeds - arms[i].num_failed;
    arms[i].fraction_relearner_ok =
        completed > 0 ? static_cast<double>(acc.ok) / completed : 0.0;
  }
  return arms;
}

std::string summary_text(const std::vector<ArmSummary>& arms) {
  std::ostringstream out;
  for (const ArmSummary& arm : arms) {
    out << "arm env=" << arm.env << " K=" << arm.ensemble_size << " budget=" << arm.rl_budget
        << ": seeds=" << arm.num_seeds << " failed=" << arm.num_failed << "\n";
    const int completed = arm.num_seeds - arm.num_failed;
    char buf[160];
    auto line = [&](const char* name, double mean, double se) {
      if (completed >= 2) {
        std::snprintf(buf, sizeof(buf), "  %-10s mean %.3f +/- %.3f\n", name, mean, se);
      } else {
        std::snprintf(buf, sizeof(buf), "  %-10s mean %.3f +/- n/a\n", name, mean);
      }
      out << buf;
    };
    line("sampler", arm.sampler_mean, arm.sampler_stderr);
    line("relearner", arm.relearner_mean, arm.relearner_stderr);
    std::snprintf(buf, sizeof(buf), "  relearner >= sampler-5%%: %.2f\n",
                  arm.fraction_relearner_ok);
    out << buf;
    std::snprintf(buf, sizeof(buf), "  epic uniform %.4f, expert %.4f\n", arm.epic_uniform_mean,
                  arm.epic_expert_mean);
    out << buf;
  }
  return out.str();
}

std::string summary_csv(const std::vector<ArmSummary>& arms) {
  std::string out =
      "env,ensemble_size,rl_budget,metric,mean,stderr,num_seeds,num_failed\n";
  char buf[256];
  for (const ArmSummary& arm : arms) {
    auto row = [&](const char* metric, double mean, double se) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%lld,%s,%.17g,%.17g,%d,%d\n", arm.env.c_str(),
                    arm.ensemble_size, arm.rl_budget, metric, mean, se, arm.num_seeds,
                    arm.num_failed);
      out += buf;
    };
    row("sampler_return", arm.sampler_mean, arm.sampler_stderr);
    row("relearner_return", arm.relearner_mean, arm.relearner_stderr);
    row("epic_uniform", arm.epic_uniform_mean, 0.0);
    row("epic_expert", arm.epic_expert_mean, 0.0);
    row("fraction_relearner_ok", arm.fraction_relearner_ok, 0.0);
  }
  return out;
}

}  // namespace relearn
