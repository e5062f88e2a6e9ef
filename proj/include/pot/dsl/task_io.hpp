// Task-file serialization: one JSON object per line, hidden solutions in a
// separate generator manifest.
#pragma once

#include <fstream>
#include <nlohmann/json.hpp>

#include "pot/dsl/task.hpp"

namespace pot::dsl {

using ordered_json = nlohmann::ordered_json;

inline ordered_json task_to_json(const TaskInstance& t) {
  ordered_json j;
  j["task_id"] = t.task_id;
  j["difficulty"] = t.difficulty;
  ordered_json tests = ordered_json::array();
  for (const UnitTest& ut : t.tests) {
    ordered_json tj;
    tj["input"] = ut.input;
    tj["expected"] = ut.expected;
    tests.push_back(std::move(tj));
  }
  j["tests"] = std::move(tests);
  return j;
}

inline TaskInstance task_from_json(const ordered_json& j) {
  TaskInstance t;
  t.task_id = j.at("task_id").get<std::string>();
  t.difficulty = j.at("difficulty").get<int>();
  for (const auto& tj : j.at("tests")) {
    UnitTest ut;
    ut.input = tj.at("input").get<std::vector<std::int64_t>>();
    ut.expected = tj.at("expected").get<std::int64_t>();
    t.tests.push_back(std::move(ut));
  }
  return t;
}

inline void write_task_file(const std::string& path, const std::vector<TaskInstance>& tasks) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const TaskInstance& t : tasks) out << task_to_json(t).dump() << '\n';
}

// Manifest rows keep the hidden solutions next to their task ids; solvers
// must never read this file.
inline void write_solutions_manifest(const std::string& path, const std::vector<TaskInstance>& tasks) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const TaskInstance& t : tasks) {
    ordered_json j;
    j["task_id"] = t.task_id;
    j["difficulty"] = t.difficulty;
    j["solution"] = t.hidden_solution ? render(*t.hidden_solution) : "";
    out << j.dump() << '\n';
  }
}

inline std::vector<TaskInstance> read_task_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open task file: " + path);
  std::vector<TaskInstance> tasks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    tasks.push_back(task_from_json(ordered_json::parse(line)));
  }
  return tasks;
}

}  // namespace pot::dsl
