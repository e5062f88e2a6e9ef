// Task instances, unit-test evaluation and the piecewise execution reward.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pot/dsl/program.hpp"

namespace pot::dsl {

struct UnitTest {
  std::vector<std::int64_t> input;  // bottom ... top
  std::int64_t expected;            // required stack top at halt
};

struct TaskInstance {
  std::string task_id;
  int difficulty = 1;  // 1..4
  std::vector<UnitTest> tests;
  // Generator-only; never serialized into task files, never shown to a solver.
  std::optional<Program> hidden_solution;
};

enum class TestOutcome : std::uint8_t { Pass, Fail, Error };

struct RewardReport {
  int n_pass = 0;
  int n_total = 0;
  double reward = 0.0;
  std::vector<TestOutcome> per_test;
  std::optional<Fault> fault;  // parse error, or first runtime fault seen
};

// Piecewise execution reward: 1.0 on full acceptance, the pass fraction on
// partial acceptance, 0 otherwise (no passes, no tests, or parse failure).
inline double reward_from_counts(int n_pass, int n_total, bool parse_fault = false) {
  if (parse_fault || n_total <= 0 || n_pass <= 0) return 0.0;
  if (n_pass == n_total) return 1.0;
  return static_cast<double>(n_pass) / static_cast<double>(n_total);
}

inline RewardReport evaluate(const Program& p, const TaskInstance& task,
                             int step_cap = kDefaultStepCap) {
  RewardReport rep;
  rep.n_total = static_cast<int>(task.tests.size());
  for (const UnitTest& t : task.tests) {
    ExecResult r = execute(p, t.input, step_cap);
    if (r.fault != Fault::None) {
      rep.per_test.push_back(TestOutcome::Error);
      if (!rep.fault) rep.fault = r.fault;  // a faulting test counts as failed
    } else if (*r.top == t.expected) {
      rep.per_test.push_back(TestOutcome::Pass);
      ++rep.n_pass;
    } else {
      rep.per_test.push_back(TestOutcome::Fail);
    }
  }
  rep.reward = reward_from_counts(rep.n_pass, rep.n_total);
  return rep;
}

// Parses then evaluates; unparseable text earns reward 0 with a parse fault
// and every test marked as an error.
inline RewardReport evaluate_source(std::string_view text, const TaskInstance& task,
                                    int step_cap = kDefaultStepCap) {
  std::string err;
  std::optional<Program> p = parse_program(text, &err);
  if (!p) {
    RewardReport rep;
    rep.n_total = static_cast<int>(task.tests.size());
    rep.per_test.assign(task.tests.size(), TestOutcome::Error);
    rep.fault = Fault::ParseError;
    rep.reward = 0.0;
    return rep;
  }
  return evaluate(*p, task, step_cap);
}

}  // namespace pot::dsl
