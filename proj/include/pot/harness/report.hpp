// Report aggregation and the ablation grids. cmd_report recomputes every
// summary statistic from the raw per-task reports and refuses silently
// inconsistent inputs.
#pragma once

#include "pot/harness/runner.hpp"

namespace pot::harness {

struct StoredSuite {
  std::vector<SuiteSummary> stored;                 // parsed from summary.csv
  std::map<std::string, std::vector<SolveReport>> reports;  // key: method_seed tag
};

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i <= s.size()) {
    std::size_t j = s.find(sep, i);
    if (j == std::string::npos) j = s.size();
    out.push_back(s.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

inline StoredSuite load_suite_dir(const std::string& dir) {
  StoredSuite suite;
  const std::string summary_path = dir + "/summary.csv";
  std::ifstream sum(summary_path);
  if (!sum) throw std::runtime_error("missing summary file: " + summary_path);
  std::string line;
  std::getline(sum, line);
  if (line != SuiteSummary::csv_header())
    throw std::runtime_error("unexpected summary header in " + summary_path);
  while (std::getline(sum, line)) {
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 10) throw std::runtime_error("corrupt summary row: " + line);
    SuiteSummary s;
    s.method = cols[0];
    s.seed = std::stoull(cols[1]);
    s.solve_rate = std::stod(cols[2]);
    s.mean_reward = std::stod(cols[3]);
    s.mean_nodes = std::stod(cols[4]);
    s.mean_wall_ms = std::stod(cols[5]);
    s.mean_phase_cost_ms = std::stod(cols[6]);
    s.mean_update_kl = std::stod(cols[7]);
    s.fingerprint = cols[8];
    s.suite_sum = cols[9];
    suite.stored.push_back(std::move(s));
  }
  for (const SuiteSummary& s : suite.stored) {
    const std::string tag = s.method + "_seed" + std::to_string(s.seed);
    const std::string path = dir + "/reports_" + tag + ".jsonl";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing report file: " + path);
    std::vector<SolveReport> rows;
    std::string rline;
    while (std::getline(in, rline)) {
      if (rline.empty()) continue;
      try {
        rows.push_back(SolveReport::from_json(nlohmann::ordered_json::parse(rline)));
      } catch (const std::exception& e) {
        throw std::runtime_error("corrupt report in " + path + ": " + e.what());
      }
    }
    suite.reports[tag] = std::move(rows);
  }
  return suite;
}

// Recomputes each summary row from its raw reports and asserts equality of
// every deterministic column.
inline void verify_suite(const StoredSuite& suite, bool force = false) {
  std::string suite_sum;
  for (const SuiteSummary& s : suite.stored) {
    if (suite_sum.empty()) suite_sum = s.suite_sum;
    if (!force && s.suite_sum != suite_sum)
      throw std::runtime_error("summary rows reference different task suites (use force to override)");
    const std::string tag = s.method + "_seed" + std::to_string(s.seed);
    const auto& rows = suite.reports.at(tag);
    SuiteSummary re = summarize(s.method, s.seed, rows, s.suite_sum);
    if (re.solve_rate != s.solve_rate)
      throw std::runtime_error(tag + ": stored solve_rate " + std::to_string(s.solve_rate) +
                               " != recomputed " + std::to_string(re.solve_rate));
    if (re.mean_reward != s.mean_reward) throw std::runtime_error(tag + ": mean_reward mismatch");
    if (re.mean_nodes != s.mean_nodes) throw std::runtime_error(tag + ": nodes mismatch");
    if (re.mean_update_kl != s.mean_update_kl)
      throw std::runtime_error(tag + ": update_kl mismatch");
    if (re.fingerprint != s.fingerprint) throw std::runtime_error(tag + ": fingerprint mismatch");
  }
}

// Comparison table over methods (and ablation labels), mean over seeds,
// ordered weakest arm first the way the ablation tables read.
inline std::string aggregate_table(const std::vector<SuiteSummary>& rows, const std::string& format) {
  auto order_key = [](const std::string& m) {
    if (m == "greedy") return 0;
    if (m == "best_of_n") return 1;
    if (m == "search_only") return 2;
    if (m == "pot") return 3;
    return 4;
  };
  std::map<std::string, std::vector<const SuiteSummary*>> by_method;
  for (const SuiteSummary& s : rows) by_method[s.method].push_back(&s);
  std::vector<std::string> methods;
  for (auto& [m, _] : by_method) methods.push_back(m);
  std::sort(methods.begin(), methods.end(), [&](const std::string& a, const std::string& b) {
    if (order_key(a) != order_key(b)) return order_key(a) < order_key(b);
    return a < b;
  });

  std::ostringstream os;
  os.precision(6);
  const bool md = format == "md";
  if (md) {
    os << "| method | seeds | solve_rate | mean_reward | nodes | wall_ms |\n";
    os << "|---|---|---|---|---|---|\n";
  } else {
    os << "method,seeds,solve_rate,mean_reward,nodes,wall_ms\n";
  }
  for (const std::string& m : methods) {
    const auto& group = by_method[m];
    double sr = 0, mr = 0, nodes = 0, wall = 0;
    for (const SuiteSummary* s : group) {
      sr += s->solve_rate;
      mr += s->mean_reward;
      nodes += s->mean_nodes;
      wall += s->mean_wall_ms;
    }
    const double n = static_cast<double>(group.size());
    if (md)
      os << "| " << m << " | " << group.size() << " | " << sr / n << " | " << mr / n << " | "
         << nodes / n << " | " << wall / n << " |\n";
    else
      os << m << ',' << group.size() << ',' << sr / n << ',' << mr / n << ',' << nodes / n << ','
         << wall / n << '\n';
  }
  return os.str();
}

// --- ablation grids ---

struct AblateCell {
  std::string label;
  ExperimentConfig cfg;
};

// Grids: "k=1,2,3" | "beta=0.002,0.02,0.2" | "rank_lr=8:0.0001,4:0.00005"
inline std::vector<AblateCell> parse_grid(const std::string& grid, const ExperimentConfig& base) {
  const std::size_t eq = grid.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 >= grid.size())
    throw ConfigError("malformed grid '" + grid + "'");
  const std::string axis = grid.substr(0, eq);
  const auto values = split(grid.substr(eq + 1), ',');
  if (values.empty() || values[0].empty()) throw ConfigError("empty grid");

  std::vector<AblateCell> cells;
  for (const std::string& v : values) {
    AblateCell cell;
    cell.cfg = base;
    cell.cfg.method = "pot";
    if (axis == "k") {
      cell.cfg.evo.search.k = std::stoi(v);
      if (cell.cfg.evo.search.k < 1) throw ConfigError("grid k must be >= 1");
      cell.label = "k" + v;
    } else if (axis == "beta") {
      cell.cfg.evo.grpo.beta = std::stod(v);
      cell.label = "beta" + v;
    } else if (axis == "rank_lr") {
      const auto parts = split(v, ':');
      if (parts.size() != 2) throw ConfigError("rank_lr cells look like '8:0.0001'");
      cell.cfg.evo.adapter.rank = std::stoi(parts[0]);
      cell.cfg.evo.adam.lr = std::stod(parts[1]);
      cell.label = "r" + parts[0] + "_lr" + parts[1];
    } else {
      throw ConfigError("unknown grid axis '" + axis + "'");
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

struct AblateResult {
  std::vector<AblateCell> cells;
  std::vector<std::vector<SuiteSummary>> summaries;  // per cell, per seed
};

inline AblateResult run_ablation(const std::string& grid, const ExperimentConfig& base,
                                 const model::BaseWeights& weights,
                                 const std::vector<dsl::TaskInstance>& tasks,
                                 bool write_files = true) {
  AblateResult result;
  result.cells = parse_grid(grid, base);
  for (AblateCell& cell : result.cells) {
    cell.cfg.out_dir = base.out_dir + "/" + cell.label;
    SuiteRun run = run_suite(cell.cfg, weights, tasks, write_files);
    result.summaries.push_back(run.summaries);
  }
  if (write_files) {
    fs::create_directories(base.out_dir);
    std::ofstream grid_csv(base.out_dir + "/grid_summary.csv");
    grid_csv << "cell,seeds,solve_rate,mean_reward,phase_cost_ms,update_kl,fingerprint\n";
    grid_csv.precision(17);
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
      double sr = 0, mr = 0, pc = 0, kl = 0;
      for (const SuiteSummary& s : result.summaries[i]) {
        sr += s.solve_rate;
        mr += s.mean_reward;
        pc += s.mean_phase_cost_ms;
        kl += s.mean_update_kl;
      }
      const double n = static_cast<double>(result.summaries[i].size());
      grid_csv << result.cells[i].label << ',' << result.summaries[i].size() << ',' << sr / n
               << ',' << mr / n << ',' << pc / n << ',' << kl / n << ','
               << result.summaries[i][0].fingerprint << '\n';
    }
  }
  return result;
}

}  // namespace pot::harness
