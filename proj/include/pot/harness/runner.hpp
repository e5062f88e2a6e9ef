// Batch experiment runner: the four method arms over a task suite, per-task
// JSONL reports, CSV summaries, timing sidecars, ablation grids and report
// recomputation.
#pragma once

#include <atomic>
#include <filesystem>
#include <thread>

#include "pot/harness/config.hpp"
#include "pot/pretrain/pretrain.hpp"

namespace pot::harness {

namespace fs = std::filesystem;
using loop::SolveReport;
using loop::Trace;

inline std::string suite_fingerprint(const std::vector<dsl::TaskInstance>& tasks) {
  Fnv1a h;
  for (const auto& t : tasks) {
    h.update(dsl::task_to_json(t).dump());
    h.update("\n");
  }
  return hex64(h.digest());
}

namespace detail {

inline void stamp_report(SolveReport& rep, const ExperimentConfig& cfg,
                         const std::string& weights_sum, int n_for_best_of_n) {
  nlohmann::ordered_json cj = cfg.evo.canonical_json();
  cj["method"] = cfg.method;
  if (cfg.method == "best_of_n") cj["best_of_n"] = n_for_best_of_n;
  rep.config_json = cj;
  Fnv1a h;
  h.update(cj.dump());
  h.update(weights_sum);
  rep.config_fingerprint = hex64(h.digest());
}

}  // namespace detail

// Single greedy decode, evaluated once.
inline SolveReport run_greedy(const dsl::TaskInstance& task, const model::BaseWeights& weights,
                              const loop::EvolutionConfig& evo, std::uint64_t seed,
                              Trace* trace = nullptr) {
  loop::StopWatch watch;
  SolveReport rep;
  rep.task_id = task.task_id;
  rep.rng_seed = seed;
  rep.weights_checksum = weights.checksum;
  rep.task_json = dsl::task_to_json(task);
  if (trace) trace->emit({{"ev", "start"}, {"task", task.task_id}, {"seed", seed}});

  model::ReasoningState state(task);
  model::Thought th = model::greedy_decode(weights, nullptr, state, evo.sample);
  dsl::RewardReport r = dsl::evaluate_source(th.text, task);
  rep.ledger.forward_count = 1;
  rep.ledger.nodes_generated = 1;
  rep.ledger.tokens_generated = static_cast<long>(th.tokens.size());
  rep.solved = r.reward == 1.0;
  rep.reward = r.reward;
  rep.final_program = th.text;
  if (trace) {
    trace->emit({{"ev", "candidate"}, {"tokens", th.tokens}, {"reward", r.reward}});
    trace->emit({{"ev", "done"}, {"solved", rep.solved}, {"reward", rep.reward}});
    rep.trace_digest = trace->digest();
  }
  rep.ledger.total_wall_ms = watch.ms();
  rep.ledger.fwd_cost_ms = rep.ledger.total_wall_ms;
  return rep;
}

// Up to n temperature samples from the empty-history state, stopping at the
// first candidate that passes every test.
inline SolveReport run_best_of_n(const dsl::TaskInstance& task, const model::BaseWeights& weights,
                                 const loop::EvolutionConfig& evo, int n, std::uint64_t seed,
                                 Trace* trace = nullptr) {
  loop::StopWatch watch;
  SolveReport rep;
  rep.task_id = task.task_id;
  rep.rng_seed = seed;
  rep.weights_checksum = weights.checksum;
  rep.task_json = dsl::task_to_json(task);
  if (trace) trace->emit({{"ev", "start"}, {"task", task.task_id}, {"seed", seed}});

  Rng rng(derive_seed(derive_seed(seed, task.task_id), "best_of_n"));
  model::ReasoningState state(task);
  model::SampleConfig sample = evo.sample;
  sample.temperature = evo.search.temperature;

  model::InferenceContext ctx(weights, nullptr);
  ctx.prefill(model::generation_prefix(state, sample));
  const int checkpoint = ctx.len();

  double best = -1.0;
  std::string best_text;
  for (int i = 0; i < n; ++i) {
    ctx.truncate(checkpoint);
    model::Thought th =
        model::sample_continuation(ctx, sample.temperature, sample.max_new_tokens, rng);
    dsl::RewardReport r = dsl::evaluate_source(th.text, task);
    rep.ledger.forward_count += 1;
    rep.ledger.nodes_generated += 1;
    rep.ledger.tokens_generated += static_cast<long>(th.tokens.size());
    if (trace) trace->emit({{"ev", "candidate"}, {"tokens", th.tokens}, {"reward", r.reward}});
    if (r.reward > best) {
      best = r.reward;
      best_text = th.text;
    }
    if (r.reward == 1.0) break;  // execution stops early on full acceptance
  }
  rep.solved = best == 1.0;
  rep.reward = std::max(best, 0.0);
  rep.final_program = best_text;
  if (trace) {
    trace->emit({{"ev", "done"}, {"solved", rep.solved}, {"reward", rep.reward}});
    rep.trace_digest = trace->digest();
  }
  rep.ledger.total_wall_ms = watch.ms();
  rep.ledger.fwd_cost_ms = rep.ledger.total_wall_ms;
  return rep;
}

// Dispatch on the configured method; every path stamps the same config
// envelope so replay can reconstruct the run from the report alone.
inline SolveReport run_method(const ExperimentConfig& cfg, const dsl::TaskInstance& task,
                              const model::BaseWeights& weights, std::uint64_t seed,
                              Trace* trace = nullptr, search::Tree* tree = nullptr) {
  loop::EvolutionConfig evo = cfg.evo;
  SolveReport rep;
  if (cfg.method == "pot" || cfg.method == "search_only") {
    evo.adaptation_enabled = cfg.method == "pot";
    rep = loop::solve(task, weights, evo, seed, trace, tree);
  } else if (cfg.method == "greedy") {
    rep = run_greedy(task, weights, evo, seed, trace);
  } else if (cfg.method == "best_of_n") {
    rep = run_best_of_n(task, weights, evo, cfg.best_of_n, seed, trace);
  } else {
    throw ConfigError("unknown method '" + cfg.method + "'");
  }
  detail::stamp_report(rep, cfg, weights.checksum, cfg.best_of_n);
  return rep;
}

// Replays any stored report by re-running its method and comparing the
// canonical serializations byte for byte.
inline loop::ReplayResult replay_report(const SolveReport& stored,
                                        const model::BaseWeights& weights,
                                        const std::vector<std::string>* stored_trace = nullptr) {
  const std::string live_sum =
      weights.checksum.empty() ? model::weights_checksum(weights) : weights.checksum;
  if (live_sum != stored.weights_checksum)
    throw std::runtime_error("replay: weight snapshot checksum mismatch");

  ExperimentConfig cfg;
  cfg.evo = loop::EvolutionConfig::from_json(stored.config_json);
  cfg.method = stored.config_json.value("method", "pot");
  if (stored.config_json.contains("best_of_n")) cfg.best_of_n = stored.config_json.at("best_of_n");

  loop::ReplayResult res;
  Trace trace;
  res.report = run_method(cfg, dsl::task_from_json(stored.task_json), weights, stored.rng_seed,
                          &trace);
  const std::string a = stored.canonical_json().dump();
  const std::string b = res.report.canonical_json().dump();
  res.match = a == b;
  if (!res.match) {
    if (stored_trace) {
      const std::size_t n = std::min(stored_trace->size(), trace.lines.size());
      for (std::size_t i = 0; i < n; ++i)
        if ((*stored_trace)[i] != trace.lines[i]) {
          res.detail = "first divergent event at line " + std::to_string(i + 1);
          return res;
        }
      res.detail = "trace length mismatch";
    } else {
      std::size_t i = 0;
      while (i < a.size() && i < b.size() && a[i] == b[i]) ++i;
      res.detail = "reports diverge at byte " + std::to_string(i);
    }
  }
  return res;
}

struct SuiteSummary {
  std::string method;
  std::uint64_t seed = 0;
  int tasks = 0;
  double solve_rate = 0.0;
  double mean_reward = 0.0;
  double mean_nodes = 0.0;
  double mean_wall_ms = 0.0;
  double mean_phase_cost_ms = 0.0;
  double mean_update_kl = 0.0;
  std::string fingerprint;
  std::string suite_sum;

  static const char* csv_header() {
    return "method,seed,solve_rate,mean_reward,nodes,wall_ms,phase_cost_ms,update_kl,"
           "fingerprint,suite";
  }
  std::string csv_row() const {
    std::ostringstream os;
    os.precision(17);
    os << method << ',' << seed << ',' << solve_rate << ',' << mean_reward << ',' << mean_nodes
       << ',' << mean_wall_ms << ',' << mean_phase_cost_ms << ',' << mean_update_kl << ','
       << fingerprint << ',' << suite_sum;
    return os.str();
  }
};

// Aggregates one seed's task rows. Everything except wall-clock columns is a
// pure function of the canonical reports.
inline SuiteSummary summarize(const std::string& method, std::uint64_t seed,
                              const std::vector<SolveReport>& reports,
                              const std::string& suite_sum) {
  SuiteSummary s;
  s.method = method;
  s.seed = seed;
  s.tasks = static_cast<int>(reports.size());
  s.suite_sum = suite_sum;
  long phases = 0;
  double phase_ms = 0.0;
  long kl_rows = 0;
  for (const SolveReport& r : reports) {
    s.solve_rate += r.solved ? 1.0 : 0.0;
    s.mean_reward += r.reward;
    s.mean_nodes += static_cast<double>(r.ledger.nodes_generated);
    s.mean_wall_ms += r.ledger.total_wall_ms;
    for (const auto& p : r.ledger.phases) {
      phase_ms += p.fwd_ms + p.bwd_ms;
      ++phases;
    }
    if (r.ledger.internalize_steps > 0) {
      s.mean_update_kl += r.mean_update_kl;
      ++kl_rows;
    }
    if (s.fingerprint.empty()) s.fingerprint = r.config_fingerprint;
    else if (s.fingerprint != r.config_fingerprint)
      throw std::runtime_error("summarize: mixed config fingerprints");
  }
  if (s.tasks > 0) {
    s.solve_rate /= s.tasks;
    s.mean_reward /= s.tasks;
    s.mean_nodes /= s.tasks;
    s.mean_wall_ms /= s.tasks;
  }
  if (phases > 0) s.mean_phase_cost_ms = phase_ms / static_cast<double>(phases);
  if (kl_rows > 0) s.mean_update_kl /= static_cast<double>(kl_rows);
  return s;
}

struct SuiteRun {
  std::vector<SuiteSummary> summaries;                  // one per seed
  std::vector<std::vector<SolveReport>> reports;        // [seed][task]
};

// Runs the configured method over tasks x seeds with a small worker pool.
// Results land in pre-indexed slots, so output is identical for any worker
// count; only wall-clock fields vary run to run.
inline SuiteRun run_suite(const ExperimentConfig& cfg, const model::BaseWeights& weights,
                          const std::vector<dsl::TaskInstance>& tasks,
                          bool write_files = true) {
  if (!cfg.snapshot_checksum.empty() && cfg.snapshot_checksum != weights.checksum)
    throw std::runtime_error("weight checksum mismatch: config expects " + cfg.snapshot_checksum +
                             ", snapshot has " + weights.checksum);

  const std::string suite_sum = suite_fingerprint(tasks);
  const int n_seeds = static_cast<int>(cfg.seeds.size());
  const int n_tasks = static_cast<int>(tasks.size());

  SuiteRun run;
  run.reports.assign(n_seeds, std::vector<SolveReport>(n_tasks));
  std::vector<std::vector<Trace>> traces;
  if (cfg.dump_traces) traces.assign(n_seeds, std::vector<Trace>(n_tasks));
  std::vector<std::vector<search::Tree>> trees;
  if (cfg.dump_trees) trees.assign(n_seeds, std::vector<search::Tree>(n_tasks));

  const int total = n_seeds * n_tasks;
  std::atomic<int> next{0};
  const int workers = std::max(1, cfg.workers);
  auto worker = [&]() {
    for (;;) {
      const int job = next.fetch_add(1);
      if (job >= total) return;
      const int si = job / n_tasks;
      const int ti = job % n_tasks;
      Trace local_trace;
      Trace* tr = cfg.dump_traces ? &traces[si][ti] : &local_trace;
      search::Tree* tp = cfg.dump_trees ? &trees[si][ti] : nullptr;
      run.reports[si][ti] = run_method(cfg, tasks[ti], weights, cfg.seeds[si], tr, tp);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (int si = 0; si < n_seeds; ++si)
    run.summaries.push_back(summarize(cfg.method, cfg.seeds[si], run.reports[si], suite_sum));

  if (write_files) {
    fs::create_directories(cfg.out_dir);
    {
      std::ofstream cf(cfg.out_dir + "/config.txt");
      cf << emit_config(cfg);
    }
    for (int si = 0; si < n_seeds; ++si) {
      const std::string tag = cfg.method + "_seed" + std::to_string(cfg.seeds[si]);
      std::ofstream rep(cfg.out_dir + "/reports_" + tag + ".jsonl");
      std::ofstream tim(cfg.out_dir + "/timings_" + tag + ".jsonl");
      for (int ti = 0; ti < n_tasks; ++ti) {
        const SolveReport& r = run.reports[si][ti];
        rep << r.canonical_json().dump() << '\n';
        nlohmann::ordered_json tj;
        tj["task_id"] = r.task_id;
        tj["timing"] = r.ledger.timing_json();
        tim << tj.dump() << '\n';
      }
    }
    std::ofstream sum(cfg.out_dir + "/summary.csv");
    sum << SuiteSummary::csv_header() << '\n';
    for (const SuiteSummary& s : run.summaries) sum << s.csv_row() << '\n';
    if (cfg.dump_traces) {
      fs::create_directories(cfg.out_dir + "/traces");
      for (int si = 0; si < n_seeds; ++si)
        for (int ti = 0; ti < n_tasks; ++ti)
          traces[si][ti].write(cfg.out_dir + "/traces/" + tasks[ti].task_id + "_seed" +
                               std::to_string(cfg.seeds[si]) + ".jsonl");
    }
    if (cfg.dump_trees) {
      fs::create_directories(cfg.out_dir + "/trees");
      for (int si = 0; si < n_seeds; ++si)
        for (int ti = 0; ti < n_tasks; ++ti) {
          std::ofstream tf(cfg.out_dir + "/trees/" + tasks[ti].task_id + "_seed" +
                           std::to_string(cfg.seeds[si]) + ".json");
          tf << loop::tree_to_json(trees[si][ti]).dump() << '\n';
        }
    }
  }
  return run;
}

}  // namespace pot::harness
