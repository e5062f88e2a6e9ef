// Reasoning-state serialization: task tests first, then (thought, feedback)
// history entries, oldest entries dropped first when over budget.
#pragma once

#include <stdexcept>

#include "pot/dsl/task.hpp"
#include "pot/model/vocab.hpp"

namespace pot::model {

struct Thought {
  std::vector<int> tokens;  // generated ids, ending in EOS unless the cap hit
  std::string text;         // rendered DSL source (tokens before EOS)
  std::vector<double> gen_logprobs;  // untempered, one per generated token
};

struct Feedback {
  std::vector<int> tokens;
};

inline Feedback make_feedback(const dsl::RewardReport& rep) {
  Feedback f;
  for (dsl::TestOutcome o : rep.per_test) {
    switch (o) {
      case dsl::TestOutcome::Pass: f.tokens.push_back(tok::PASS); break;
      case dsl::TestOutcome::Fail: f.tokens.push_back(tok::FAIL); break;
      case dsl::TestOutcome::Error: f.tokens.push_back(tok::ERR); break;
    }
  }
  append_number(f.tokens, rep.n_pass);
  f.tokens.push_back(tok::SLASH);
  append_number(f.tokens, rep.n_total);
  return f;
}

struct HistoryEntry {
  Thought thought;
  Feedback feedback;
};

struct ReasoningState {
  const dsl::TaskInstance* task = nullptr;
  std::vector<HistoryEntry> history;

  explicit ReasoningState(const dsl::TaskInstance& t) : task(&t) {}
};

inline std::vector<int> encode_task_header(const dsl::TaskInstance& task) {
  std::vector<int> out;
  out.push_back(tok::BOS);
  for (const dsl::UnitTest& t : task.tests) {
    out.push_back(tok::TEST);
    for (std::size_t i = 0; i < t.input.size(); ++i) {
      if (i > 0) out.push_back(tok::COMMA);
      append_number(out, t.input[i]);
    }
    out.push_back(tok::ARROW);
    append_number(out, t.expected);
  }
  return out;
}

inline std::vector<int> encode_entry(const HistoryEntry& e) {
  std::vector<int> out;
  out.push_back(tok::SEP);
  out.insert(out.end(), e.thought.tokens.begin(), e.thought.tokens.end());
  out.insert(out.end(), e.feedback.tokens.begin(), e.feedback.tokens.end());
  return out;
}

// Serializes the state into at most `budget` tokens by dropping whole history
// entries, oldest first. The task header is never dropped; a header that
// alone exceeds the budget is a hard error.
inline std::vector<int> encode_state(const ReasoningState& state, int budget) {
  std::vector<int> head = encode_task_header(*state.task);
  if (static_cast<int>(head.size()) > budget)
    throw std::runtime_error("encode_state: task header exceeds context budget");

  std::vector<std::vector<int>> entries;
  entries.reserve(state.history.size());
  for (const HistoryEntry& e : state.history) entries.push_back(encode_entry(e));

  std::size_t total = head.size();
  for (const auto& e : entries) total += e.size();
  std::size_t first = 0;
  while (first < entries.size() && total > static_cast<std::size_t>(budget)) {
    total -= entries[first].size();
    ++first;
  }
  if (total > static_cast<std::size_t>(budget))
    throw std::runtime_error("encode_state: cannot fit state into budget");

  std::vector<int> out = std::move(head);
  for (std::size_t i = first; i < entries.size(); ++i)
    out.insert(out.end(), entries[i].begin(), entries[i].end());
  return out;
}

}  // namespace pot::model
