// Per-task orchestration: adapter lifecycle, alternating search phases and
// GRPO internalization, greedy action commitment, termination, budget
// accounting and byte-exact replay.
#pragma once

#include "pot/dsl/task_io.hpp"
#include "pot/search/search.hpp"

namespace pot::loop {

using nlohmann::ordered_json;

struct EvolutionConfig {
  search::SearchConfig search;
  grpo::GrpoConfig grpo;
  model::SampleConfig sample;
  engine::AdamConfig adam;
  model::AdapterConfig adapter;
  bool adaptation_enabled = true;
  int max_outer_steps = 0;  // 0 derives the horizon from the simulation budget

  ordered_json canonical_json() const {
    ordered_json j;
    j["adaptation_enabled"] = adaptation_enabled;
    j["adam"] = {{"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}};
    j["adapter"] = {{"rank", adapter.rank}, {"alpha", adapter.alpha}, {"init_std", adapter.init_std}};
    j["grpo"] = {{"epsilon", grpo.epsilon},       {"beta", grpo.beta},
                 {"fixed_kl", grpo.fixed_kl},     {"eta", grpo.eta},
                 {"adv_clip", grpo.adv_clip},     {"epochs", grpo.epochs},
                 {"ref_sync_every", grpo.ref_sync_every}};
    j["max_outer_steps"] = max_outer_steps;
    j["sample"] = {{"max_new_tokens", sample.max_new_tokens},
                   {"prefix_budget", sample.prefix_budget}};
    j["search"] = {{"c_puct", search.c_puct},
                   {"k", search.k},
                   {"max_depth", search.max_depth},
                   {"max_simulations", search.max_simulations},
                   {"temperature", search.temperature}};
    return j;
  }

  static EvolutionConfig from_json(const ordered_json& j) {
    EvolutionConfig c;
    c.adaptation_enabled = j.at("adaptation_enabled");
    c.adam.lr = j.at("adam").at("lr");
    c.adam.beta1 = j.at("adam").at("beta1");
    c.adam.beta2 = j.at("adam").at("beta2");
    c.adam.eps = j.at("adam").at("eps");
    c.adapter.rank = j.at("adapter").at("rank");
    c.adapter.alpha = j.at("adapter").at("alpha");
    c.adapter.init_std = j.at("adapter").at("init_std");
    c.grpo.epsilon = j.at("grpo").at("epsilon");
    c.grpo.beta = j.at("grpo").at("beta");
    c.grpo.fixed_kl = j.at("grpo").at("fixed_kl");
    c.grpo.eta = j.at("grpo").at("eta");
    c.grpo.adv_clip = j.at("grpo").at("adv_clip");
    c.grpo.epochs = j.at("grpo").at("epochs");
    c.grpo.ref_sync_every = j.at("grpo").at("ref_sync_every");
    c.max_outer_steps = j.at("max_outer_steps");
    c.sample.max_new_tokens = j.at("sample").at("max_new_tokens");
    c.sample.prefix_budget = j.at("sample").at("prefix_budget");
    c.search.c_puct = j.at("search").at("c_puct");
    c.search.k = j.at("search").at("k");
    c.search.max_depth = j.at("search").at("max_depth");
    c.search.max_simulations = j.at("search").at("max_simulations");
    c.search.temperature = j.at("search").at("temperature");
    return c;
  }
};

inline std::string config_fingerprint(const EvolutionConfig& cfg, const std::string& weights_sum) {
  Fnv1a h;
  h.update(cfg.canonical_json().dump());
  h.update(weights_sum);
  return hex64(h.digest());
}

// Deterministic event log; one JSON document per line.
struct Trace {
  std::vector<std::string> lines;

  void emit(ordered_json ev) { lines.push_back(ev.dump()); }
  std::string digest() const {
    Fnv1a h;
    for (const std::string& l : lines) {
      h.update(l);
      h.update("\n");
    }
    return hex64(h.digest());
  }
  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace: " + path);
    for (const std::string& l : lines) out << l << '\n';
  }
};

struct CommitRecord {
  std::vector<int> tokens;
  std::string text;
  double reward = 0.0;
};

struct SolveReport {
  std::string task_id;
  bool solved = false;
  std::string final_program;  // best program seen (reward ties keep the first)
  double reward = 0.0;        // reward of final_program
  int outer_steps = 0;
  std::uint64_t rng_seed = 0;
  std::string config_fingerprint;
  std::string weights_checksum;
  std::string trace_digest;
  long updates = 0;             // internalize calls performed
  double mean_update_kl = 0.0;  // mean token KL(pi_phi || pi_ref) at the last epoch
  BudgetLedger ledger;
  std::vector<CommitRecord> commits;
  ordered_json config_json;  // full config; a report determines its replay
  ordered_json task_json;    // tests as shown to the solver

  ordered_json canonical_json() const {
    ordered_json j;
    j["task_id"] = task_id;
    j["solved"] = solved;
    j["final_program"] = final_program;
    j["reward"] = reward;
    j["outer_steps"] = outer_steps;
    j["rng_seed"] = rng_seed;
    j["config_fingerprint"] = config_fingerprint;
    j["weights_checksum"] = weights_checksum;
    j["trace_digest"] = trace_digest;
    j["updates"] = updates;
    j["mean_update_kl"] = mean_update_kl;
    j["ledger"] = ledger.canonical_json();
    ordered_json cs = ordered_json::array();
    for (const CommitRecord& c : commits) {
      ordered_json cj;
      cj["tokens"] = c.tokens;
      cj["text"] = c.text;
      cj["reward"] = c.reward;
      cs.push_back(std::move(cj));
    }
    j["commits"] = std::move(cs);
    j["config"] = config_json;
    j["task"] = task_json;
    return j;
  }

  static SolveReport from_json(const ordered_json& j) {
    SolveReport r;
    r.task_id = j.at("task_id");
    r.solved = j.at("solved");
    r.final_program = j.at("final_program");
    r.reward = j.at("reward");
    r.outer_steps = j.at("outer_steps");
    r.rng_seed = j.at("rng_seed");
    r.config_fingerprint = j.at("config_fingerprint");
    r.weights_checksum = j.at("weights_checksum");
    r.trace_digest = j.at("trace_digest");
    r.updates = j.at("updates");
    r.mean_update_kl = j.at("mean_update_kl");
    const auto& lj = j.at("ledger");
    r.ledger.simulations = lj.at("simulations");
    r.ledger.nodes_generated = lj.at("nodes_generated");
    r.ledger.tokens_generated = lj.at("tokens_generated");
    r.ledger.forward_count = lj.at("forward_count");
    r.ledger.backward_count = lj.at("backward_count");
    r.ledger.internalize_steps = lj.at("internalize_steps");
    r.ledger.commits = lj.at("commits");
    for (const auto& cj : j.at("commits")) {
      CommitRecord c;
      c.tokens = cj.at("tokens").get<std::vector<int>>();
      c.text = cj.at("text");
      c.reward = cj.at("reward");
      r.commits.push_back(std::move(c));
    }
    r.config_json = j.at("config");
    r.task_json = j.at("task");
    return r;
  }
};

namespace detail {
inline ordered_json expand_event(const search::Tree& tree, int child) {
  const search::SearchNode& n = tree.at(child);
  ordered_json ev;
  ev["ev"] = "expand";
  ev["node"] = n.id;
  ev["parent"] = n.parent;
  ev["depth"] = n.depth;
  ev["tokens"] = n.thought.tokens;
  ev["reward"] = n.reward;
  ev["fault"] = n.fault;
  ev["pruned"] = n.pruned;
  return ev;
}
}  // namespace detail

// The per-task cycle: initialize a transient adapter, alternate search phases
// with internalization, commit a greedy thought into the history each step,
// stop on a full-reward discovery or budget exhaustion, then discard the
// adapter. Fully deterministic given (task, config, seed, weights).
inline SolveReport solve(const dsl::TaskInstance& task, const model::BaseWeights& weights,
                         const EvolutionConfig& cfg, std::uint64_t seed, Trace* trace = nullptr,
                         search::Tree* out_tree = nullptr) {
  StopWatch total_watch;
  SolveReport report;
  report.task_id = task.task_id;
  report.rng_seed = seed;
  report.weights_checksum =
      weights.checksum.empty() ? model::weights_checksum(weights) : weights.checksum;
  report.config_fingerprint = config_fingerprint(cfg, report.weights_checksum);
  report.config_json = cfg.canonical_json();
  report.task_json = dsl::task_to_json(task);

  Rng rng(derive_seed(derive_seed(seed, task.task_id), "solve"));
  model::AdapterParams adapter =
      model::init_adapter(weights.cfg, derive_seed(seed, task.task_id + "/adapter"), cfg.adapter);
  const model::AdapterParams phi_init = adapter;
  grpo::RefSnapshot ref{adapter, 0};
  engine::OptimizerState opt = engine::OptimizerState::make(adapter, cfg.adam);

  search::Tree tree;
  std::vector<model::HistoryEntry> root_history;
  BudgetLedger& ledger = report.ledger;

  model::SampleConfig sample = cfg.sample;
  sample.temperature = cfg.search.temperature;

  double best_reward = -1.0;
  std::string best_program;
  auto consider = [&](const std::string& text, double r) {
    if (r > best_reward) {
      best_reward = r;
      best_program = text;
    }
  };

  auto emit = [&](ordered_json ev) {
    if (trace) trace->emit(std::move(ev));
  };
  emit({{"ev", "start"},
        {"task", task.task_id},
        {"seed", seed},
        {"fingerprint", report.config_fingerprint}});

  bool solved = false;
  const int max_outer =
      cfg.max_outer_steps > 0 ? cfg.max_outer_steps : cfg.search.max_simulations;
  int outer = 0;
  while (!solved && outer < max_outer && ledger.simulations < cfg.search.max_simulations) {
    ++outer;
    emit({{"ev", "phase"}, {"t", outer}});
    PhaseCost phase_cost;
    const double fwd_before = ledger.fwd_cost_ms;
    const double bwd_before = ledger.bwd_cost_ms;
    const long nodes_before = ledger.nodes_generated;
    const long tokens_before = ledger.tokens_generated;

    search::PhaseEnv env{weights, &adapter, task, root_history, sample, &ledger};
    search::PhaseOutcome out = search::run_phase(tree, env, cfg.search, rng);

    for (int child : out.new_children) {
      emit(detail::expand_event(tree, child));
      emit({{"ev", "backprop"}, {"leaf", child}, {"reward", tree.at(child).reward}});
      consider(tree.at(child).thought.text, tree.at(child).reward);
    }

    if (out.kind == search::PhaseOutcome::Kind::Exhausted) {
      emit({{"ev", "exhausted"}});
      break;
    }
    if (out.kind == search::PhaseOutcome::Kind::Solution) {
      solved = true;
      emit({{"ev", "solution"}, {"node", out.solution_node}});
      break;
    }

    if (cfg.adaptation_enabled) {
      StopWatch bwd_watch;
      grpo::InternalizeResult res =
          grpo::internalize(out.buffer, weights, adapter, opt, ref, phi_init, cfg.grpo);
      ledger.bwd_cost_ms += bwd_watch.ms();
      ledger.backward_count += static_cast<long>(res.epochs.size());
      ledger.internalize_steps += static_cast<long>(res.epochs.size());
      report.updates += 1;
      report.mean_update_kl += res.epochs.back().mean_token_kl_ref;
      for (std::size_t e = 0; e < res.epochs.size(); ++e) {
        const grpo::GrpoDiag& d = res.epochs[e];
        emit({{"ev", "update"},
              {"epoch", e},
              {"loss", d.loss},
              {"policy_term", d.policy_term},
              {"kl_ref_term", d.kl_ref_term},
              {"kl_init_term", d.kl_init_term},
              {"mean_ratio", d.mean_ratio},
              {"max_ratio", d.max_ratio},
              {"clip_fraction", d.clip_fraction},
              {"advantages", d.advantages}});
      }
      if (res.ref_syncs > 0)
        emit({{"ev", "ref_sync"}, {"step", ref.taken_at_step}});
    }

    // Action commitment: greedy decode from the (possibly evolved) policy,
    // evaluate it, and thread it into the root history as context.
    {
      StopWatch fwd_watch;
      model::ReasoningState root_state(task);
      root_state.history = root_history;
      model::Thought committed = model::greedy_decode(weights, &adapter, root_state, sample);
      ledger.fwd_cost_ms += fwd_watch.ms();
      ledger.forward_count += 1;
      ledger.commits += 1;
      ledger.tokens_generated += static_cast<long>(committed.tokens.size());

      dsl::RewardReport rep = dsl::evaluate_source(committed.text, task);
      consider(committed.text, rep.reward);
      emit({{"ev", "commit"},
            {"tokens", committed.tokens},
            {"reward", rep.reward}});
      report.commits.push_back({committed.tokens, committed.text, rep.reward});
      root_history.push_back({std::move(committed), model::make_feedback(rep)});
      if (rep.reward == 1.0) solved = true;
    }

    phase_cost.nodes = ledger.nodes_generated - nodes_before;
    phase_cost.tokens = ledger.tokens_generated - tokens_before;
    phase_cost.fwd_ms = ledger.fwd_cost_ms - fwd_before;
    phase_cost.bwd_ms = ledger.bwd_cost_ms - bwd_before;
    ledger.phases.push_back(phase_cost);
  }

  if (report.updates > 0) report.mean_update_kl /= static_cast<double>(report.updates);
  report.solved = best_reward == 1.0;
  report.reward = std::max(best_reward, 0.0);
  report.final_program = best_program;
  report.outer_steps = outer;
  emit({{"ev", "done"}, {"solved", report.solved}, {"reward", report.reward}});
  if (trace) report.trace_digest = trace->digest();
  ledger.total_wall_ms = total_watch.ms();

  if (ledger.nodes_generated >
      static_cast<long>(cfg.search.max_simulations) * static_cast<long>(cfg.search.k))
    throw std::logic_error("budget cap violated");
  if (out_tree) *out_tree = tree;
  return report;
}

struct BudgetEstimate {
  long phases = 0;
  double cost_fwd_per_phase_ms = 0.0;
  double cost_bwd_per_phase_ms = 0.0;
  double rho = 0.0;       // backward / forward cost ratio
  double rho_2dp = 0.0;   // rho rounded to two decimals, as reported
  double predicted_total_ms = 0.0;  // phases * (1 + rho) * cost_fwd
  double actual_total_ms = 0.0;
};

// Budget model: predicted total = M * (1 + rho) * Cost_fwd per phase, checked
// against the measured wall time.
inline BudgetEstimate estimate_budget(const BudgetLedger& ledger) {
  if (ledger.simulations <= 0) throw std::invalid_argument("estimate_budget: empty ledger");
  BudgetEstimate e;
  e.phases = ledger.simulations;
  e.cost_fwd_per_phase_ms = ledger.fwd_cost_ms / static_cast<double>(e.phases);
  e.cost_bwd_per_phase_ms = ledger.bwd_cost_ms / static_cast<double>(e.phases);
  e.rho = ledger.fwd_cost_ms > 0.0 ? ledger.bwd_cost_ms / ledger.fwd_cost_ms : 0.0;
  e.rho_2dp = std::round(e.rho * 100.0) / 100.0;
  e.predicted_total_ms =
      static_cast<double>(e.phases) * (1.0 + e.rho) * e.cost_fwd_per_phase_ms;
  e.actual_total_ms = ledger.total_wall_ms;
  return e;
}

struct ReplayResult {
  bool match = false;
  std::string detail;  // first divergence, when any
  SolveReport report;
};

// Re-executes a stored report's solve from (task, config, seed) and compares
// the canonical serializations byte for byte.
inline ReplayResult replay(const SolveReport& stored, const model::BaseWeights& weights,
                           const std::vector<std::string>* stored_trace = nullptr) {
  const std::string live_sum =
      weights.checksum.empty() ? model::weights_checksum(weights) : weights.checksum;
  if (live_sum != stored.weights_checksum)
    throw std::runtime_error("replay: weight snapshot checksum mismatch");

  const dsl::TaskInstance task = dsl::task_from_json(stored.task_json);
  const EvolutionConfig cfg = EvolutionConfig::from_json(stored.config_json);

  ReplayResult res;
  Trace trace;
  res.report = solve(task, weights, cfg, stored.rng_seed, &trace);
  const std::string a = stored.canonical_json().dump();
  const std::string b = res.report.canonical_json().dump();
  res.match = a == b;
  if (!res.match) {
    if (stored_trace) {
      const std::size_t n = std::min(stored_trace->size(), trace.lines.size());
      for (std::size_t i = 0; i < n; ++i) {
        if ((*stored_trace)[i] != trace.lines[i]) {
          res.detail = "first divergent event at line " + std::to_string(i + 1) + ": stored=" +
                       (*stored_trace)[i] + " replayed=" + trace.lines[i];
          return res;
        }
      }
      res.detail = "trace length mismatch: stored=" + std::to_string(stored_trace->size()) +
                   " replayed=" + std::to_string(trace.lines.size());
    } else {
      std::size_t i = 0;
      while (i < a.size() && i < b.size() && a[i] == b[i]) ++i;
      res.detail = "reports diverge at byte " + std::to_string(i);
    }
  }
  return res;
}

// Tree dump for offline inspection.
inline ordered_json tree_to_json(const search::Tree& tree) {
  ordered_json nodes = ordered_json::array();
  tree.for_each([&](const search::SearchNode& n) {
    ordered_json j;
    j["id"] = n.id;
    j["parent"] = n.parent;
    j["depth"] = n.depth;
    j["reward"] = n.reward;
    j["n"] = n.n;
    j["q"] = n.q;
    j["p"] = n.prior;
    j["pruned"] = n.pruned;
    j["thought_text"] = n.thought.text;
    nodes.push_back(std::move(j));
  });
  ordered_json out;
  out["nodes"] = std::move(nodes);
  return out;
}

}  // namespace pot::loop
