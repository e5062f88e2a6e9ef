// Budget accounting. Deterministic counters are serialized into reports and
// traces; wall-clock costs stay out of canonical output and feed the budget
// model separately.
#pragma once

#include <chrono>
#include <nlohmann/json.hpp>

namespace pot::loop {

struct PhaseCost {
  long nodes = 0;
  long tokens = 0;
  double fwd_ms = 0.0;  // generation-side forward wall time
  double bwd_ms = 0.0;  // internalization wall time (incl. its recompute)
};

struct BudgetLedger {
  // deterministic
  long simulations = 0;
  long nodes_generated = 0;
  long tokens_generated = 0;
  long forward_count = 0;   // sequence-level generation/decode/rescore passes
  long backward_count = 0;  // reverse-mode sweeps
  long internalize_steps = 0;
  long commits = 0;
  // wall-clock
  double fwd_cost_ms = 0.0;
  double bwd_cost_ms = 0.0;
  double total_wall_ms = 0.0;
  std::vector<PhaseCost> phases;

  nlohmann::ordered_json canonical_json() const {
    nlohmann::ordered_json j;
    j["simulations"] = simulations;
    j["nodes_generated"] = nodes_generated;
    j["tokens_generated"] = tokens_generated;
    j["forward_count"] = forward_count;
    j["backward_count"] = backward_count;
    j["internalize_steps"] = internalize_steps;
    j["commits"] = commits;
    return j;
  }
  nlohmann::ordered_json timing_json() const {
    nlohmann::ordered_json j;
    j["fwd_cost_ms"] = fwd_cost_ms;
    j["bwd_cost_ms"] = bwd_cost_ms;
    j["total_wall_ms"] = total_wall_ms;
    return j;
  }
};

class StopWatch {
 public:
  StopWatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace pot::loop
