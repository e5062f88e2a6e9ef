// Synthetic task generation: depth-safe random programs with known solutions.
#pragma once

#include <algorithm>
#include <set>
#include <stdexcept>

#include "pot/common.hpp"
#include "pot/dsl/task.hpp"

namespace pot::dsl {

constexpr int kGenMaxAttempts = 100;
constexpr std::int64_t kGenInputLo = -5;
constexpr std::int64_t kGenInputHi = 9;
constexpr std::int64_t kGenMaxExpected = 999;  // keeps serialized outputs short

inline int max_solution_len(int difficulty) { return 2 * difficulty + 2; }
inline int min_solution_len(int difficulty) { return std::max(1, 2 * difficulty - 1); }

namespace detail {

// Emits instructions that are statically depth-safe for a stack of `depth`
// entries. Loop bodies are restricted to non-negative net stack effect so
// every iteration sees at least the entry depth. Returns the net effect.
inline int sample_block(Rng& rng, std::vector<Instr>& out, int budget, int depth,
                        int loop_depth, bool in_loop) {
  const int start_depth = depth;
  while (budget > 0) {
    struct Cand {
      Op op;
      double w;
    };
    std::vector<Cand> cands;
    cands.push_back({Op::Push, 3.0});
    if (depth >= 2) {
      cands.push_back({Op::Add, 2.2});
      cands.push_back({Op::Sub, 1.4});
      cands.push_back({Op::Mul, 1.2});
      cands.push_back({Op::Swap, 0.8});
      cands.push_back({Op::Over, 1.0});
    }
    if (depth >= 1) cands.push_back({Op::Dup, 1.4});
    if (depth >= 2 && !in_loop) cands.push_back({Op::Drop, 0.5});
    if (budget >= 3 && loop_depth < kMaxLoopDepth && depth >= 1 && !in_loop)
      cands.push_back({Op::Repeat, 1.0});

    std::vector<double> w;
    w.reserve(cands.size());
    for (const Cand& c : cands) w.push_back(c.w);
    const Op op = cands[rng.categorical(w)].op;

    switch (op) {
      case Op::Push:
        out.push_back({Op::Push, static_cast<int>(rng.uniform_int(-9, 9))});
        ++depth;
        --budget;
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
        out.push_back({op, 0});
        --depth;
        --budget;
        break;
      case Op::Dup:
      case Op::Over:
        out.push_back({op, 0});
        ++depth;
        --budget;
        break;
      case Op::Swap:
        out.push_back({Op::Swap, 0});
        --budget;
        break;
      case Op::Drop:
        out.push_back({Op::Drop, 0});
        --depth;
        --budget;
        break;
      case Op::Repeat: {
        const int k = static_cast<int>(rng.uniform_int(2, kMaxRepeat));
        out.push_back({Op::Repeat, k});
        const int body_budget = static_cast<int>(rng.uniform_int(1, std::max(1, budget - 2)));
        std::vector<Instr> body;
        const int delta = sample_block(rng, body, body_budget, depth, loop_depth + 1, true);
        if (delta < 0 || body.empty()) {
          out.pop_back();  // discard a shrinking or empty body and move on
          continue;
        }
        for (const Instr& in : body) out.push_back(in);
        out.push_back({Op::End, 0});
        depth += k * delta;
        budget -= static_cast<int>(body.size()) + 2;
        break;
      }
      case Op::End:
        break;
    }
  }
  return depth - start_depth;
}

inline Program sample_program(Rng& rng, int target_len, int input_depth) {
  std::vector<Instr> instrs;
  sample_block(rng, instrs, target_len, input_depth, 0, false);
  std::string text;
  {
    Program raw;
    raw.instrs = std::move(instrs);
    text = render(raw);
  }
  std::string err;
  std::optional<Program> p = parse_program(text, &err);
  if (!p) throw std::logic_error("generator produced unparseable program: " + err);
  return *p;
}

}  // namespace detail

// Single-edit neighbourhood of a program: immediate nudges, family swaps,
// deletions and simple insertions. Every mutant parses; some fault at run
// time, which is fine for callers that evaluate them.
inline std::vector<Program> enumerate_mutants(const Program& p) {
  std::vector<Program> out;
  auto add = [&](std::vector<Instr> v) {
    if (static_cast<int>(v.size()) > kMaxInstructions) return;
    Program raw;
    raw.instrs = std::move(v);
    if (auto q = parse_program(render(raw))) out.push_back(*q);
  };
  for (std::size_t i = 0; i < p.instrs.size(); ++i) {
    const Instr& in = p.instrs[i];
    if (in.op == Op::Push) {
      for (int d = -9; d <= 9; ++d)
        if (d != in.imm) {
          auto v = p.instrs;
          v[i].imm = d;
          add(std::move(v));
        }
    }
    if (in.op == Op::Repeat) {
      for (int k = 1; k <= kMaxRepeat; ++k)
        if (k != in.imm) {
          auto v = p.instrs;
          v[i].imm = k;
          add(std::move(v));
        }
    }
    if (in.op != Op::Push && in.op != Op::Repeat && in.op != Op::End) {
      for (Op o : {Op::Add, Op::Sub, Op::Mul, Op::Dup, Op::Over, Op::Swap, Op::Drop}) {
        if (o == in.op) continue;
        auto v = p.instrs;
        v[i] = {o, 0};
        add(std::move(v));
      }
      auto v = p.instrs;
      v.erase(v.begin() + i);
      add(std::move(v));
    }
    for (int imm : {-2, -1, 0, 1, 2, 3}) {
      auto v = p.instrs;
      v.insert(v.begin() + i, {Op::Push, imm});
      add(std::move(v));
    }
    for (Op o : {Op::Dup, Op::Add, Op::Sub, Op::Mul, Op::Over}) {
      auto v = p.instrs;
      v.insert(v.begin() + i, {o, 0});
      add(std::move(v));
    }
  }
  return out;
}

namespace detail {

// Ladder quality of a candidate test subset: how many solution mutants pass
// a strict, nonzero fraction of it. Unit-test suites graded this way reward
// incremental repair instead of all-or-nothing guessing.
inline int ladder_score(const std::vector<std::uint32_t>& mutant_pass_masks, std::uint32_t subset,
                        int subset_size) {
  int graded = 0;
  for (std::uint32_t mask : mutant_pass_masks) {
    const int passes = __builtin_popcount(mask & subset);
    if (passes > 0 && passes < subset_size) ++graded;
  }
  return graded;
}

}  // namespace detail

// Deterministic per (rng_seed, difficulty). Samples a hidden solution, then
// selects unit tests so that the solution's single-edit neighbourhood earns
// graded partial credit. Rejects constant-output tasks, faulting solutions
// and oversized outputs.
inline TaskInstance gen_task(std::uint64_t rng_seed, int difficulty) {
  if (difficulty < 1 || difficulty > 4) throw std::invalid_argument("difficulty must be 1..4");
  Rng rng(derive_seed(rng_seed, "gen_task"));

  for (int attempt = 0; attempt < kGenMaxAttempts; ++attempt) {
    const int stack_len = static_cast<int>(rng.uniform_int(1, difficulty == 1 ? 2 : 3));
    const int target_len =
        static_cast<int>(rng.uniform_int(min_solution_len(difficulty), max_solution_len(difficulty)));
    Program solution = detail::sample_program(rng, target_len, stack_len);
    if (solution.instrs.empty() || static_cast<int>(solution.size()) > max_solution_len(difficulty))
      continue;

    // candidate pool of distinct inputs the solution handles cleanly; anchor
    // values derived from the solution's immediates create coincidence points
    // where near-miss programs still agree with the solution
    constexpr int kPool = 24;
    std::set<std::vector<std::int64_t>> seen;
    std::vector<UnitTest> pool;
    std::vector<std::int64_t> anchors = {0, 1, -1, 2};
    for (const Instr& in : solution.instrs)
      if (in.op == Op::Push) {
        anchors.push_back(in.imm);
        anchors.push_back(-static_cast<std::int64_t>(in.imm));
      }
    auto try_input = [&](std::vector<std::int64_t> input) {
      if (static_cast<int>(pool.size()) >= kPool) return;
      if (!seen.insert(input).second) return;
      ExecResult r = execute(solution, input);
      if (r.fault != Fault::None || std::llabs(*r.top) > kGenMaxExpected) return;
      pool.push_back({std::move(input), *r.top});
    };
    for (std::int64_t a : anchors) {
      std::vector<std::int64_t> input;
      for (int i = 0; i + 1 < stack_len; ++i) input.push_back(rng.uniform_int(kGenInputLo, kGenInputHi));
      input.push_back(a);  // anchor on the stack top
      try_input(std::move(input));
    }
    for (int draws = 0; static_cast<int>(pool.size()) < kPool && draws < 200; ++draws) {
      std::vector<std::int64_t> input;
      for (int i = 0; i < stack_len; ++i) input.push_back(rng.uniform_int(kGenInputLo, kGenInputHi));
      try_input(std::move(input));
    }
    const int n_tests = static_cast<int>(rng.uniform_int(5, 8));
    if (static_cast<int>(pool.size()) < n_tests) continue;

    // pass masks of a sampled slice of the single-edit neighbourhood
    std::vector<Program> mutants = enumerate_mutants(solution);
    for (std::size_t i = mutants.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(i) - 1));
      std::swap(mutants[i - 1], mutants[j]);
    }
    if (mutants.size() > 48) mutants.resize(48);
    std::vector<std::uint32_t> masks;
    for (const Program& m : mutants) {
      std::uint32_t mask = 0;
      for (std::size_t t = 0; t < pool.size(); ++t) {
        ExecResult r = execute(m, pool[t].input);
        if (r.fault == Fault::None && *r.top == pool[t].expected) mask |= 1u << t;
      }
      if (mask != 0) masks.push_back(mask);
    }

    // pick the best of a few random subsets by ladder quality
    std::uint32_t best_subset = 0;
    int best_score = -1;
    for (int trial = 0; trial < 40; ++trial) {
      std::uint32_t subset = 0;
      std::vector<int> idx(pool.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
      for (int pick = 0; pick < n_tests; ++pick) {
        const int j = static_cast<int>(rng.uniform_int(pick, static_cast<long>(idx.size()) - 1));
        std::swap(idx[pick], idx[j]);
        subset |= 1u << idx[pick];
      }
      std::int64_t first = 0;
      bool have_first = false, constant = true;
      for (std::size_t t = 0; t < pool.size(); ++t) {
        if (!(subset & (1u << t))) continue;
        if (!have_first) {
          first = pool[t].expected;
          have_first = true;
        } else if (pool[t].expected != first) {
          constant = false;
        }
      }
      if (constant) continue;
      const int score = detail::ladder_score(masks, subset, n_tests);
      if (score > best_score) {
        best_score = score;
        best_subset = subset;
      }
    }
    if (best_score < 6) continue;  // no usable reward ladder: resample the task

    std::vector<UnitTest> tests;
    for (std::size_t t = 0; t < pool.size(); ++t)
      if (best_subset & (1u << t)) tests.push_back(pool[t]);

    TaskInstance task;
    task.task_id = "t" + std::to_string(rng_seed) + "d" + std::to_string(difficulty);
    task.difficulty = difficulty;
    task.tests = std::move(tests);
    task.hidden_solution = std::move(solution);
    return task;
  }
  throw std::runtime_error("gen_task: no valid task after 100 attempts");
}

}  // namespace pot::dsl
