// pot: task-suite generation, pretraining, batch solving with baselines,
// ablation grids, report aggregation, gradient checking and replay.
#include <CLI11.hpp>
#include <iostream>

#include "pot/harness/report.hpp"

using namespace pot;

namespace {

int cmd_gen_tasks(int n, const std::string& mix_text, std::uint64_t seed, const std::string& out) {
  const pretrain::DifficultyMix mix = pretrain::parse_mix(mix_text);
  std::vector<dsl::TaskInstance> tasks;
  Rng rng(derive_seed(seed, "suite"));
  std::set<std::string> ids;
  std::uint64_t attempt = 0;
  while (static_cast<int>(tasks.size()) < n) {
    const int difficulty = pretrain::sample_difficulty(mix, rng);
    dsl::TaskInstance t =
        dsl::gen_task(derive_seed(seed, "suite_task/" + std::to_string(attempt)), difficulty);
    ++attempt;
    if (!ids.insert(t.task_id).second) continue;
    tasks.push_back(std::move(t));
  }
  dsl::write_task_file(out, tasks);
  dsl::write_solutions_manifest(out + ".solutions.jsonl", tasks);
  std::cout << "wrote " << tasks.size() << " tasks to " << out << "\n";
  return 0;
}

int cmd_pretrain(const std::string& corpus_path, int corpus_n, const std::string& mix_text,
                 std::uint64_t corpus_seed, int epochs, int batch, double lr,
                 std::uint64_t train_seed, std::uint64_t init_seed, const std::string& out,
                 int eval_n, std::uint64_t eval_seed, const std::string& eval_mix) {
  model::ModelConfig mc;
  std::vector<pretrain::CorpusExample> corpus;
  if (!corpus_path.empty()) {
    corpus = pretrain::read_corpus(corpus_path);
  } else {
    corpus = pretrain::gen_corpus(corpus_n, pretrain::parse_mix(mix_text), corpus_seed, mc);
    pretrain::write_corpus(out + ".corpus.jsonl", corpus);
  }
  std::cout << "corpus: " << corpus.size() << " examples\n";

  model::BaseWeights w = model::init_weights(mc, init_seed);
  pretrain::PretrainConfig pc;
  pc.epochs = epochs;
  pc.batch_size = batch;
  pc.lr = lr;
  pc.seed = train_seed;
  pretrain::PretrainResult res = pretrain::pretrain(w, corpus, pc, &std::cout);
  model::save_weights(w, out);
  model::BaseWeights loaded = model::load_weights(out);
  std::cout << "snapshot " << out << " checksum " << loaded.checksum << " final loss "
            << res.final_loss << "\n";

  if (eval_n > 0) {
    const pretrain::DifficultyMix mix = pretrain::parse_mix(eval_mix);
    std::vector<dsl::TaskInstance> tasks;
    Rng rng(derive_seed(eval_seed, "suite"));
    std::uint64_t attempt = 0;
    while (static_cast<int>(tasks.size()) < eval_n) {
      tasks.push_back(dsl::gen_task(
          derive_seed(eval_seed, "suite_task/" + std::to_string(attempt)),
          pretrain::sample_difficulty(mix, rng)));
      ++attempt;
    }
    model::SampleConfig sc;
    const double rate = pretrain::greedy_solve_rate(loaded, tasks, sc);
    std::cout << "held-out greedy solve rate (" << eval_n << " tasks, mix " << eval_mix
              << "): " << rate << "\n";
  }
  return 0;
}

harness::ExperimentConfig load_cfg_with_env(const std::string& path) {
  harness::ExperimentConfig base;
  if (const char* env = std::getenv("POT_SEED")) base.seeds = {std::stoull(env)};
  return harness::load_config(path, std::move(base));
}

int cmd_solve(harness::ExperimentConfig cfg) {
  if (cfg.snapshot.empty()) throw harness::ConfigError("snapshot is required");
  if (cfg.tasks_path.empty()) throw harness::ConfigError("tasks is required");
  model::BaseWeights w = model::load_weights(cfg.snapshot);
  std::vector<dsl::TaskInstance> tasks = dsl::read_task_file(cfg.tasks_path);
  harness::SuiteRun run = harness::run_suite(cfg, w, tasks);
  for (const harness::SuiteSummary& s : run.summaries)
    std::cout << s.method << " seed " << s.seed << ": solve_rate " << s.solve_rate
              << " mean_reward " << s.mean_reward << " nodes " << s.mean_nodes << "\n";
  std::cout << "reports in " << cfg.out_dir << "\n";
  return 0;
}

int cmd_ablate(const std::string& grid, harness::ExperimentConfig base) {
  if (base.snapshot.empty()) throw harness::ConfigError("snapshot is required");
  if (base.tasks_path.empty()) throw harness::ConfigError("tasks is required");
  model::BaseWeights w = model::load_weights(base.snapshot);
  std::vector<dsl::TaskInstance> tasks = dsl::read_task_file(base.tasks_path);
  harness::AblateResult res = harness::run_ablation(grid, base, w, tasks);
  for (std::size_t i = 0; i < res.cells.size(); ++i) {
    double sr = 0;
    for (const auto& s : res.summaries[i]) sr += s.solve_rate;
    std::cout << res.cells[i].label << ": mean solve_rate "
              << sr / static_cast<double>(res.summaries[i].size()) << "\n";
  }
  std::cout << "grid summary in " << base.out_dir << "/grid_summary.csv\n";
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& format, bool force,
               const std::string& out_path) {
  harness::StoredSuite suite = harness::load_suite_dir(in_dir);
  harness::verify_suite(suite, force);
  const std::string table = harness::aggregate_table(suite.stored, format);
  if (out_path.empty()) {
    std::cout << table;
  } else {
    std::ofstream out(out_path);
    out << table;
  }
  return 0;
}

int cmd_grad_check(const std::string& snapshot, std::uint64_t seed, int groups, int coords,
                   double step, double tol) {
  model::BaseWeights w = model::load_weights(snapshot);
  grpo::GrpoConfig gcfg;
  model::SampleConfig sc;
  double worst = 0.0;
  for (int g = 0; g < groups; ++g) {
    dsl::TaskInstance task = dsl::gen_task(derive_seed(seed, "gradcheck_task/" + std::to_string(g)),
                                           1 + g % 4);
    model::AdapterParams phi = model::init_adapter(w.cfg, derive_seed(seed, "phi") + g);
    Rng jitter(derive_seed(seed, "jitter") + g);
    for (auto& site : phi.sites) {
      for (int i = 0; i < site.a.size(); ++i) site.a(i) += 0.02 * jitter.normal();
      for (int i = 0; i < site.b.size(); ++i) site.b(i) = 0.02 * jitter.normal();
    }
    model::AdapterParams ref = model::init_adapter(w.cfg, derive_seed(seed, "ref") + g);
    model::AdapterParams init = model::init_adapter(w.cfg, derive_seed(seed, "init") + g);

    model::ReasoningState state(task);
    grpo::GroupBuffer buf;
    buf.prefix = model::generation_prefix(state, sc);
    Rng rng(derive_seed(seed, "sample") + g);
    model::InferenceContext ctx(w, &phi);
    ctx.prefill(buf.prefix);
    const int checkpoint = ctx.len();
    std::vector<double> rewards = {0.75, 0.25, 0.5};
    for (double r : rewards) {
      ctx.truncate(checkpoint);
      model::Thought th = model::sample_continuation(ctx, 0.8, 48, rng);
      buf.trajs.push_back({th.tokens, th.gen_logprobs, r});
    }
    buf.advantages = grpo::compute_advantages(rewards, gcfg);

    Rng probe(derive_seed(seed, "probe") + g);
    engine::FdReport rep = grpo::fd_check_grpo(buf, w, phi, ref, init, gcfg, step, coords, probe);
    std::cout << "group " << g << ": max rel err " << rep.max_rel_err << " (worst "
              << rep.worst_coord << ")\n";
    worst = std::max(worst, rep.max_rel_err);
  }
  std::cout << "overall max relative error: " << worst << " (tolerance " << tol << ")\n";
  return worst < tol ? 0 : 1;
}

int cmd_replay(const std::string& reports_path, const std::string& snapshot,
               const std::string& traces_dir) {
  model::BaseWeights w = model::load_weights(snapshot);
  std::ifstream in(reports_path);
  if (!in) throw std::runtime_error("cannot open reports: " + reports_path);
  std::string line;
  int row = 0, failures = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    loop::SolveReport stored =
        loop::SolveReport::from_json(nlohmann::ordered_json::parse(line));
    std::vector<std::string> trace_lines;
    const std::vector<std::string>* trace_ptr = nullptr;
    if (!traces_dir.empty()) {
      std::ifstream tf(traces_dir + "/" + stored.task_id + "_seed" +
                       std::to_string(stored.rng_seed) + ".jsonl");
      if (tf) {
        std::string tl;
        while (std::getline(tf, tl)) trace_lines.push_back(tl);
        trace_ptr = &trace_lines;
      }
    }
    loop::ReplayResult res = harness::replay_report(stored, w, trace_ptr);
    if (res.match) {
      std::cout << "row " << row << " (" << stored.task_id << "): replay matches\n";
    } else {
      std::cout << "row " << row << " (" << stored.task_id << "): DIVERGED — " << res.detail
                << "\n";
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"test-time policy evolution over a stack-machine DSL"};
  app.require_subcommand(1);

  // gen-tasks
  auto* gen = app.add_subcommand("gen-tasks", "generate a task suite and its solutions manifest");
  int gen_n = 100;
  std::string gen_mix = "2:0.4,3:0.3,4:0.3";
  std::uint64_t gen_seed = 1;
  std::string gen_out = "tasks.jsonl";
  gen->add_option("--n", gen_n, "number of tasks");
  gen->add_option("--difficulty-mix", gen_mix, "e.g. 1:0.5,2:0.5");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output task file");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "train a base-model snapshot");
  std::string pre_corpus, pre_out = "base.potw";
  int pre_n = 4000, pre_epochs = 20, pre_batch = 16;
  std::string pre_mix = "1:0.4,2:0.3,3:0.2,4:0.1";
  double pre_lr = 3e-3;
  std::uint64_t pre_cseed = 1, pre_tseed = 1, pre_iseed = 1, pre_eseed = 77;
  int pre_eval_n = 0;
  std::string pre_eval_mix = "1:1.0";
  pre->add_option("--corpus", pre_corpus, "existing corpus file (skips generation)");
  pre->add_option("--n", pre_n, "corpus size when generating");
  pre->add_option("--difficulty-mix", pre_mix, "corpus difficulty mix");
  pre->add_option("--corpus-seed", pre_cseed, "corpus generator seed");
  pre->add_option("--epochs", pre_epochs, "training epochs");
  pre->add_option("--batch", pre_batch, "batch size");
  pre->add_option("--lr", pre_lr, "learning rate");
  pre->add_option("--train-seed", pre_tseed, "shuffle seed");
  pre->add_option("--init-seed", pre_iseed, "weight init seed");
  pre->add_option("--out", pre_out, "snapshot output path");
  pre->add_option("--eval-n", pre_eval_n, "held-out greedy evaluation size (0 = skip)");
  pre->add_option("--eval-seed", pre_eseed, "held-out suite seed");
  pre->add_option("--eval-mix", pre_eval_mix, "held-out difficulty mix");

  // solve
  auto* sol = app.add_subcommand("solve", "run a method over a task suite");
  std::string sol_config;
  std::string sol_method, sol_tasks, sol_out, sol_seeds, sol_snapshot;
  bool sol_traces = false, sol_trees = false;
  int sol_workers = -1;
  sol->add_option("--config", sol_config, "experiment config file")->required();
  sol->add_option("--method", sol_method, "override method");
  sol->add_option("--tasks", sol_tasks, "override task file");
  sol->add_option("--out", sol_out, "override output directory");
  sol->add_option("--seeds", sol_seeds, "override seeds, comma separated");
  sol->add_option("--snapshot", sol_snapshot, "override snapshot path");
  sol->add_option("--workers", sol_workers, "override worker count");
  sol->add_flag("--dump-traces", sol_traces, "write per-task event traces");
  sol->add_flag("--dump-trees", sol_trees, "write per-task tree dumps");

  // ablate
  auto* abl = app.add_subcommand("ablate", "run an ablation grid");
  std::string abl_grid, abl_config, abl_out;
  abl->add_option("--grid", abl_grid, "k=1,2,3 | beta=... | rank_lr=8:1e-4,...")->required();
  abl->add_option("--config", abl_config, "base experiment config")->required();
  abl->add_option("--out", abl_out, "override output directory");

  // report
  auto* repc = app.add_subcommand("report", "recompute and aggregate stored results");
  std::string rep_in, rep_format = "csv", rep_out;
  bool rep_force = false;
  repc->add_option("--in", rep_in, "results directory")->required();
  repc->add_option("--format", rep_format, "csv|md")->check(CLI::IsMember({"csv", "md"}));
  repc->add_option("--out", rep_out, "write table here instead of stdout");
  repc->add_flag("--force", rep_force, "aggregate across mismatched suites");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of the GRPO gradients");
  std::string gc_snapshot;
  std::uint64_t gc_seed = 1;
  int gc_groups = 10, gc_coords = 100;
  double gc_step = 1e-4, gc_tol = 1e-4;
  gc->add_option("--snapshot", gc_snapshot, "weight snapshot")->required();
  gc->add_option("--seed", gc_seed, "probe seed");
  gc->add_option("--groups", gc_groups, "number of random groups");
  gc->add_option("--coords", gc_coords, "coordinates per group");
  gc->add_option("--step", gc_step, "finite-difference step");
  gc->add_option("--tol", gc_tol, "failure threshold on the relative error");

  // replay
  auto* rp = app.add_subcommand("replay", "re-execute stored reports and compare bytes");
  std::string rp_reports, rp_snapshot, rp_traces;
  rp->add_option("--reports", rp_reports, "reports_*.jsonl file")->required();
  rp->add_option("--snapshot", rp_snapshot, "weight snapshot")->required();
  rp->add_option("--traces", rp_traces, "trace directory for divergence location");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_tasks(gen_n, gen_mix, gen_seed, gen_out);
    if (pre->parsed())
      return cmd_pretrain(pre_corpus, pre_n, pre_mix, pre_cseed, pre_epochs, pre_batch, pre_lr,
                          pre_tseed, pre_iseed, pre_out, pre_eval_n, pre_eseed, pre_eval_mix);
    if (sol->parsed()) {
      harness::ExperimentConfig cfg = load_cfg_with_env(sol_config);
      if (!sol_method.empty()) harness::apply_config_entry(cfg, "method", sol_method);
      if (!sol_tasks.empty()) cfg.tasks_path = sol_tasks;
      if (!sol_out.empty()) cfg.out_dir = sol_out;
      if (!sol_seeds.empty()) cfg.seeds = harness::parse_seeds(sol_seeds);
      if (!sol_snapshot.empty()) cfg.snapshot = sol_snapshot;
      if (sol_workers >= 0) cfg.workers = sol_workers;
      cfg.dump_traces = cfg.dump_traces || sol_traces;
      cfg.dump_trees = cfg.dump_trees || sol_trees;
      return cmd_solve(std::move(cfg));
    }
    if (abl->parsed()) {
      harness::ExperimentConfig cfg = load_cfg_with_env(abl_config);
      if (!abl_out.empty()) cfg.out_dir = abl_out;
      return cmd_ablate(abl_grid, std::move(cfg));
    }
    if (repc->parsed()) return cmd_report(rep_in, rep_format, rep_force, rep_out);
    if (gc->parsed())
      return cmd_grad_check(gc_snapshot, gc_seed, gc_groups, gc_coords, gc_step, gc_tol);
    if (rp->parsed()) return cmd_replay(rp_reports, rp_snapshot, rp_traces);
  } catch (const harness::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
