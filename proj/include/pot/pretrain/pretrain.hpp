// Base-model production: corpus sampling from the task generator and masked
// next-token pretraining. The solver never sees these gold programs; held-out
// evaluation splits by task seed range.
#pragma once

#include <iostream>
#include <set>

#include "pot/dsl/task_gen.hpp"
#include "pot/dsl/task_io.hpp"
#include "pot/model/sample.hpp"
#include "pot/model/train.hpp"

namespace pot::pretrain {

struct CorpusExample {
  std::vector<int> tokens;  // state encoding + SEP + gold program + EOS
  std::vector<int> mask;    // 1 on program tokens and the terminating EOS
};

using DifficultyMix = std::vector<std::pair<int, double>>;  // (difficulty, weight)

inline DifficultyMix parse_mix(const std::string& text) {
  // "1:0.5,2:0.5"
  DifficultyMix mix;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t colon = text.find(':', i);
    std::size_t comma = text.find(',', i);
    if (comma == std::string::npos) comma = text.size();
    if (colon == std::string::npos || colon > comma)
      throw std::invalid_argument("malformed difficulty mix: " + text);
    const int d = std::stoi(text.substr(i, colon - i));
    const double w = std::stod(text.substr(colon + 1, comma - colon - 1));
    if (d < 1 || d > 4 || w < 0) throw std::invalid_argument("malformed difficulty mix: " + text);
    mix.emplace_back(d, w);
    i = comma + 1;
  }
  if (mix.empty()) throw std::invalid_argument("empty difficulty mix");
  return mix;
}

inline int sample_difficulty(const DifficultyMix& mix, Rng& rng) {
  std::vector<double> w;
  for (const auto& [d, weight] : mix) w.push_back(weight);
  return mix[rng.categorical(w)].first;
}

// Random structure-preserving edits; the result always parses but may fault
// or miss tests, which is exactly what a near-miss attempt looks like.
inline dsl::Program mutate_program(const dsl::Program& gold, Rng& rng) {
  std::vector<dsl::Instr> instrs = gold.instrs;
  const int edits = static_cast<int>(rng.uniform_int(1, 3));
  for (int e = 0; e < edits && !instrs.empty(); ++e) {
    const int kind = static_cast<int>(rng.uniform_int(0, 3));
    const int at = static_cast<int>(rng.uniform_int(0, static_cast<long>(instrs.size()) - 1));
    dsl::Instr& in = instrs[at];
    switch (kind) {
      case 0:  // nudge an immediate
        if (in.op == dsl::Op::Push)
          in.imm = std::clamp<int>(in.imm + static_cast<int>(rng.uniform_int(-3, 3)), -9, 9);
        else if (in.op == dsl::Op::Repeat)
          in.imm = std::clamp<int>(in.imm + static_cast<int>(rng.uniform_int(-1, 1)), 2, dsl::kMaxRepeat);
        break;
      case 1: {  // swap an opcode within its family
        if (in.op == dsl::Op::Add || in.op == dsl::Op::Sub || in.op == dsl::Op::Mul) {
          const dsl::Op fam[] = {dsl::Op::Add, dsl::Op::Sub, dsl::Op::Mul};
          in.op = fam[rng.uniform_int(0, 2)];
        } else if (in.op == dsl::Op::Dup || in.op == dsl::Op::Over || in.op == dsl::Op::Swap) {
          const dsl::Op fam[] = {dsl::Op::Dup, dsl::Op::Over, dsl::Op::Swap};
          in.op = fam[rng.uniform_int(0, 2)];
        }
        break;
      }
      case 2:  // insert a simple instruction
        if (instrs.size() < dsl::kMaxInstructions - 1) {
          dsl::Instr extra = rng.u01() < 0.5
                                 ? dsl::Instr{dsl::Op::Push, static_cast<int>(rng.uniform_int(-9, 9))}
                                 : dsl::Instr{dsl::Op::Dup, 0};
          instrs.insert(instrs.begin() + at, extra);
        }
        break;
      case 3:  // drop a plain instruction (loop tokens stay paired)
        if (in.op != dsl::Op::Repeat && in.op != dsl::Op::End) instrs.erase(instrs.begin() + at);
        break;
    }
  }
  dsl::Program raw;
  raw.instrs = std::move(instrs);
  return *dsl::parse_program(dsl::render(raw));
}

// Draws a plausible attempt for the task and packages it with its genuine
// execution feedback, mirroring solve-time history entries. Most attempts are
// near-misses of the gold program, the rest unrelated samples, matching what
// a mid-solve history actually contains.
inline model::HistoryEntry synth_attempt(const dsl::TaskInstance& task, Rng& rng) {
  const int stack_len = static_cast<int>(task.tests[0].input.size());
  dsl::Program p;
  if (rng.u01() < 0.7) {
    p = mutate_program(*task.hidden_solution, rng);
  } else {
    const int len = static_cast<int>(rng.uniform_int(1, dsl::max_solution_len(task.difficulty)));
    p = dsl::detail::sample_program(rng, len, stack_len);
  }
  model::HistoryEntry entry;
  entry.thought.tokens = model::tokenize_program(p);
  entry.thought.tokens.push_back(model::tok::EOS);
  entry.thought.text = dsl::render(p);
  entry.feedback = model::make_feedback(dsl::evaluate(p, task));
  return entry;
}

// One training sequence: a reasoning state (task header plus `history_depth`
// prior attempts with feedback) and the gold program as the supervised
// continuation. The mask covers the gold program tokens and its EOS.
inline CorpusExample make_example(const dsl::TaskInstance& task, const model::ModelConfig& mc,
                                  int history_depth, Rng& rng) {
  model::ReasoningState state(task);
  for (int h = 0; h < history_depth; ++h) state.history.push_back(synth_attempt(task, rng));
  CorpusExample ex;
  ex.tokens = model::encode_state(state, mc.context - 64);  // reserve room for the program
  ex.tokens.push_back(model::tok::SEP);
  ex.mask.assign(ex.tokens.size(), 0);
  std::vector<int> prog = model::tokenize_program(*task.hidden_solution);
  for (int t : prog) {
    ex.tokens.push_back(t);
    ex.mask.push_back(1);
  }
  ex.tokens.push_back(model::tok::EOS);
  ex.mask.push_back(1);
  return ex;
}

inline CorpusExample make_example(const dsl::TaskInstance& task, const model::ModelConfig& mc) {
  Rng rng(0);
  return make_example(task, mc, 0, rng);
}

// Draws n unique examples (deduplicated on the (tests, solution) pair).
// Deterministic per seed; the seed also namespaces the task-generator streams
// so pretraining tasks never collide with a solve suite generated elsewhere.
// A slice of the corpus carries synthetic retry histories so the base model
// stays competent when the solve loop threads prior attempts into the state;
// gold programs never depend on the feedback, so the prior stays task-driven.
inline std::vector<CorpusExample> gen_corpus(int n, const DifficultyMix& mix, std::uint64_t seed,
                                             const model::ModelConfig& mc,
                                             double history_fraction = 0.55) {
  if (n < 1) throw std::invalid_argument("gen_corpus: n must be positive");
  std::vector<CorpusExample> out;
  std::set<std::uint64_t> seen;
  Rng rng(derive_seed(seed, "corpus"));
  std::uint64_t attempt = 0;
  while (static_cast<int>(out.size()) < n) {
    const int difficulty = sample_difficulty(mix, rng);
    dsl::TaskInstance task = dsl::gen_task(derive_seed(seed, "corpus_task/" + std::to_string(attempt)),
                                           difficulty);
    ++attempt;
    if (attempt > static_cast<std::uint64_t>(n) * 50)
      throw std::runtime_error("gen_corpus: too many rejected draws");

    int depth = 0;
    if (rng.u01() < history_fraction) depth = static_cast<int>(rng.uniform_int(1, 3));

    Fnv1a key;
    key.update(dsl::task_to_json(task).dump());
    key.update(dsl::render(*task.hidden_solution));
    key.update(std::to_string(depth));
    if (!seen.insert(key.digest()).second) continue;

    CorpusExample ex = make_example(task, mc, depth, rng);
    if (static_cast<int>(ex.tokens.size()) > mc.context) continue;
    out.push_back(std::move(ex));
  }
  return out;
}

inline void write_corpus(const std::string& path, const std::vector<CorpusExample>& corpus) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus: " + path);
  for (const CorpusExample& ex : corpus) {
    nlohmann::ordered_json j;
    j["tokens"] = ex.tokens;
    j["mask"] = ex.mask;
    out << j.dump() << '\n';
  }
}

inline std::vector<CorpusExample> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  std::vector<CorpusExample> corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::ordered_json::parse(line);
    CorpusExample ex;
    ex.tokens = j.at("tokens").get<std::vector<int>>();
    ex.mask = j.at("mask").get<std::vector<int>>();
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

struct PretrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double lr = 3e-3;
  double label_smoothing = 0.08;
  double lr_final_scale = 0.1;  // linear decay floor as a fraction of lr
  std::uint64_t seed = 1;
  int log_every_batches = 200;
};

struct PretrainResult {
  std::vector<double> epoch_losses;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

namespace detail {

struct FlatView {
  std::vector<double*> ptr;
  std::vector<const double*> grad;
  std::vector<Eigen::Index> size;
};

inline FlatView flatten(model::BaseWeights& w, model::ParamGrads& g) {
  FlatView v;
  w.for_each_tensor([&](const std::string&, auto& t) {
    v.ptr.push_back(t.data());
    v.size.push_back(t.size());
  });
  g.for_each_tensor([&](const std::string&, auto& t) { v.grad.push_back(t.data()); });
  return v;
}

}  // namespace detail

// Full-parameter masked next-token training with Adam. Gradients accumulate
// over each batch in example order, so a run is deterministic for a given
// (corpus, config) regardless of the host.
inline PretrainResult pretrain(model::BaseWeights& w, const std::vector<CorpusExample>& corpus,
                               const PretrainConfig& cfg, std::ostream* log = nullptr) {
  if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
  model::ParamGrads grads(w.cfg);
  model::ParamGrads m(w.cfg), v(w.cfg);
  detail::FlatView view = detail::flatten(w, grads);
  std::vector<const double*> mflat, vflat;
  m.for_each_tensor([&](const std::string&, auto& t) { mflat.push_back(t.data()); });
  v.for_each_tensor([&](const std::string&, auto& t) { vflat.push_back(t.data()); });

  Rng rng(derive_seed(cfg.seed, "pretrain"));
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  model::Trainer trainer(w, nullptr);
  PretrainResult result;
  long adam_t = 0;
  const long total_steps =
      static_cast<long>(cfg.epochs) *
      ((static_cast<long>(corpus.size()) + cfg.batch_size - 1) / cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // seeded Fisher-Yates
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      grads.zero();
      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < stop; ++bi) {
        const CorpusExample& ex = corpus[order[bi]];
        const model::Mat& logits = trainer.forward(model::StackedSeq::single(ex.tokens));
        model::Mat dlogits;
        const double loss =
            model::masked_ce_loss(logits, ex.tokens, ex.mask, dlogits, cfg.label_smoothing);
        if (!std::isfinite(loss))
          throw std::runtime_error("pretrain: non-finite loss at epoch " + std::to_string(epoch));
        batch_loss += loss;
        const double scale = 1.0 / static_cast<double>(stop - start);
        dlogits *= scale;
        trainer.backward(dlogits, &grads, nullptr);
      }
      batch_loss /= static_cast<double>(stop - start);
      if (result.epoch_losses.empty() && batches == 0) result.initial_loss = batch_loss;
      epoch_loss += batch_loss;
      ++batches;

      ++adam_t;
      const double progress = static_cast<double>(adam_t) / static_cast<double>(total_steps);
      const double lr = cfg.lr * (1.0 - (1.0 - cfg.lr_final_scale) * progress);
      const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(adam_t));
      for (std::size_t t = 0; t < view.ptr.size(); ++t) {
        double* p = view.ptr[t];
        const double* g = view.grad[t];
        double* mm = const_cast<double*>(mflat[t]);
        double* vv = const_cast<double*>(vflat[t]);
        for (Eigen::Index i = 0; i < view.size[t]; ++i) {
          mm[i] = 0.9 * mm[i] + 0.1 * g[i];
          vv[i] = 0.999 * vv[i] + 0.001 * g[i] * g[i];
          p[i] -= lr * (mm[i] / bc1) / (std::sqrt(vv[i] / bc2) + 1e-8);
        }
      }
      if (log && cfg.log_every_batches > 0 && batches % cfg.log_every_batches == 0)
        (*log) << "epoch " << epoch << " batch " << batches << " loss " << batch_loss << "\n";
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    if (log) (*log) << "epoch " << epoch << " mean loss " << result.epoch_losses.back() << "\n";
  }
  result.final_loss = result.epoch_losses.back();
  w.checksum = model::weights_checksum(w);
  return result;
}

// Fraction of tasks whose single greedy decode passes every test.
inline double greedy_solve_rate(const model::BaseWeights& w,
                                const std::vector<dsl::TaskInstance>& tasks,
                                const model::SampleConfig& sc) {
  if (tasks.empty()) return 0.0;
  int solved = 0;
  for (const dsl::TaskInstance& t : tasks) {
    model::ReasoningState state(t);
    model::Thought th = model::greedy_decode(w, nullptr, state, sc);
    if (dsl::evaluate_source(th.text, t).reward == 1.0) ++solved;
  }
  return static_cast<double>(solved) / static_cast<double>(tasks.size());
}

}  // namespace pot::pretrain
