// Experiment configuration: a flat key = value text format with a canonical
// key order, parsed strictly (unknown keys are usage errors) and hashed into
// the fingerprint that reports carry.
#pragma once

#include <functional>
#include <map>
#include <sstream>

#include "pot/loop/evolve.hpp"

namespace pot::harness {

struct ExperimentConfig {
  std::string method = "pot";  // pot | search_only | greedy | best_of_n
  std::string snapshot;
  std::string snapshot_checksum;  // optional; verified against the file when set
  std::string tasks_path;
  std::string out_dir = "out";
  std::vector<std::uint64_t> seeds = {1};
  int best_of_n = 20;
  int workers = 1;
  bool dump_traces = false;
  bool dump_trees = false;
  loop::EvolutionConfig evo;
};

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(seeds[i]);
  }
  return out;
}

// Canonical order; both the emitter and the fingerprint walk this list.
inline void walk_fields(const ExperimentConfig& c,
                        const std::function<void(const char*, std::string)>& f) {
  f("adam.beta1", fmt_double(c.evo.adam.beta1));
  f("adam.beta2", fmt_double(c.evo.adam.beta2));
  f("adam.eps", fmt_double(c.evo.adam.eps));
  f("adam.lr", fmt_double(c.evo.adam.lr));
  f("adaptation_enabled", c.evo.adaptation_enabled ? "true" : "false");
  f("adapter.alpha", fmt_double(c.evo.adapter.alpha));
  f("adapter.init_std", fmt_double(c.evo.adapter.init_std));
  f("adapter.rank", std::to_string(c.evo.adapter.rank));
  f("best_of_n", std::to_string(c.best_of_n));
  f("dump_traces", c.dump_traces ? "true" : "false");
  f("dump_trees", c.dump_trees ? "true" : "false");
  f("grpo.adv_clip", fmt_double(c.evo.grpo.adv_clip));
  f("grpo.beta", fmt_double(c.evo.grpo.beta));
  f("grpo.epochs", std::to_string(c.evo.grpo.epochs));
  f("grpo.epsilon", fmt_double(c.evo.grpo.epsilon));
  f("grpo.eta", fmt_double(c.evo.grpo.eta));
  f("grpo.fixed_kl", fmt_double(c.evo.grpo.fixed_kl));
  f("grpo.ref_sync_every", std::to_string(c.evo.grpo.ref_sync_every));
  f("max_outer_steps", std::to_string(c.evo.max_outer_steps));
  f("method", c.method);
  f("out", c.out_dir);
  f("sample.max_new_tokens", std::to_string(c.evo.sample.max_new_tokens));
  f("sample.prefix_budget", std::to_string(c.evo.sample.prefix_budget));
  f("search.c_puct", fmt_double(c.evo.search.c_puct));
  f("search.k", std::to_string(c.evo.search.k));
  f("search.max_depth", std::to_string(c.evo.search.max_depth));
  f("search.max_simulations", std::to_string(c.evo.search.max_simulations));
  f("search.temperature", fmt_double(c.evo.search.temperature));
  f("seeds", join_seeds(c.seeds));
  f("snapshot", c.snapshot);
  f("snapshot_checksum", c.snapshot_checksum);
  f("tasks", c.tasks_path);
  f("workers", std::to_string(c.workers));
}

}  // namespace detail

inline std::string emit_config(const ExperimentConfig& c) {
  std::string out;
  detail::walk_fields(c, [&](const char* key, std::string value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  });
  return out;
}

inline std::string experiment_fingerprint(const ExperimentConfig& c) {
  Fnv1a h;
  detail::walk_fields(c, [&](const char* key, std::string value) {
    h.update(key);
    h.update("=");
    h.update(value);
    h.update("\n");
  });
  return hex64(h.digest());
}

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t comma = text.find(',', i);
    if (comma == std::string::npos) comma = text.size();
    const std::string tok = text.substr(i, comma - i);
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
    i = comma + 1;
  }
  if (seeds.empty()) throw ConfigError("seeds: empty list");
  return seeds;
}

inline void apply_config_entry(ExperimentConfig& c, const std::string& key,
                               const std::string& value) {
  auto as_bool = [&](const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected boolean, got '" + v + "'");
  };
  try {
    if (key == "method") {
      if (value != "pot" && value != "search_only" && value != "greedy" && value != "best_of_n")
        throw ConfigError("method: unknown method '" + value + "'");
      c.method = value;
    } else if (key == "snapshot") c.snapshot = value;
    else if (key == "snapshot_checksum") c.snapshot_checksum = value;
    else if (key == "tasks") c.tasks_path = value;
    else if (key == "out") c.out_dir = value;
    else if (key == "seeds") c.seeds = parse_seeds(value);
    else if (key == "best_of_n") c.best_of_n = std::stoi(value);
    else if (key == "workers") c.workers = std::stoi(value);
    else if (key == "dump_traces") c.dump_traces = as_bool(value);
    else if (key == "dump_trees") c.dump_trees = as_bool(value);
    else if (key == "adaptation_enabled") c.evo.adaptation_enabled = as_bool(value);
    else if (key == "max_outer_steps") c.evo.max_outer_steps = std::stoi(value);
    else if (key == "adam.lr") c.evo.adam.lr = std::stod(value);
    else if (key == "adam.beta1") c.evo.adam.beta1 = std::stod(value);
    else if (key == "adam.beta2") c.evo.adam.beta2 = std::stod(value);
    else if (key == "adam.eps") c.evo.adam.eps = std::stod(value);
    else if (key == "adapter.rank") c.evo.adapter.rank = std::stoi(value);
    else if (key == "adapter.alpha") c.evo.adapter.alpha = std::stod(value);
    else if (key == "adapter.init_std") c.evo.adapter.init_std = std::stod(value);
    else if (key == "grpo.epsilon") c.evo.grpo.epsilon = std::stod(value);
    else if (key == "grpo.beta") c.evo.grpo.beta = std::stod(value);
    else if (key == "grpo.fixed_kl") c.evo.grpo.fixed_kl = std::stod(value);
    else if (key == "grpo.eta") c.evo.grpo.eta = std::stod(value);
    else if (key == "grpo.adv_clip") c.evo.grpo.adv_clip = std::stod(value);
    else if (key == "grpo.epochs") c.evo.grpo.epochs = std::stoi(value);
    else if (key == "grpo.ref_sync_every") c.evo.grpo.ref_sync_every = std::stoi(value);
    else if (key == "sample.max_new_tokens") c.evo.sample.max_new_tokens = std::stoi(value);
    else if (key == "sample.prefix_budget") c.evo.sample.prefix_budget = std::stoi(value);
    else if (key == "search.c_puct") c.evo.search.c_puct = std::stod(value);
    else if (key == "search.k") c.evo.search.k = std::stoi(value);
    else if (key == "search.max_depth") c.evo.search.max_depth = std::stoi(value);
    else if (key == "search.max_simulations") c.evo.search.max_simulations = std::stoi(value);
    else if (key == "search.temperature") c.evo.search.temperature = std::stod(value);
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw ConfigError(key + ": malformed value '" + value + "'");
  }
}

inline ExperimentConfig parse_config_text(const std::string& text,
                                          ExperimentConfig c = ExperimentConfig{}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::size_t a = line.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    auto trim = [](std::string s) {
      const std::size_t b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const std::size_t e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    apply_config_entry(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path,
                                    ExperimentConfig base = ExperimentConfig{}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, std::move(base));
}

}  // namespace pot::harness
