// Thought generation: temperature sampling and greedy decoding on top of the
// incremental forward pass.
#pragma once

#include "pot/model/forward.hpp"

namespace pot::model {

struct SampleConfig {
  double temperature = 0.7;
  int max_new_tokens = 96;
  int prefix_budget = 256;  // encode_state budget; SEP is appended on top
};

// Builds the generation prefix for a state: serialized state plus a SEP that
// opens the program segment.
inline std::vector<int> generation_prefix(const ReasoningState& state, const SampleConfig& cfg) {
  std::vector<int> prefix = encode_state(state, cfg.prefix_budget);
  prefix.push_back(tok::SEP);
  return prefix;
}

namespace detail {

inline int draw_tempered(const RowVec& logits, double temperature, Rng& rng) {
  const int v = static_cast<int>(logits.size());
  double m = logits(0);
  for (int i = 1; i < v; ++i) m = std::max(m, logits(i));
  std::vector<double> w(v);
  double total = 0.0;
  for (int i = 0; i < v; ++i) {
    w[i] = std::exp((logits(i) - m) / temperature);
    total += w[i];
  }
  const double u = rng.u01() * total;
  double acc = 0.0;
  for (int i = 0; i < v; ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  return v - 1;
}

inline int argmax_lowest_id(const RowVec& logits) {
  int best = 0;
  for (int i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = i;
  return best;
}

template <typename PickToken>
Thought decode_continuation(InferenceContext& ctx, int max_new_tokens, PickToken&& pick) {
  Thought th;
  int pos = ctx.len() - 1;  // logits here predict the first new token
  for (int i = 0; i < max_new_tokens; ++i) {
    const RowVec logits = ctx.logits_row(pos);
    const int token = pick(logits);
    th.tokens.push_back(token);
    th.gen_logprobs.push_back(logits(token) - log_sum_exp(logits));
    if (token == tok::EOS) break;
    ctx.step(token);
    ++pos;
  }
  th.text = thought_text(th.tokens);
  return th;
}

}  // namespace detail

// Samples a continuation from an already-prefilled context. The context is
// left extended by the generated tokens except the terminal EOS; callers that
// reuse the context must truncate back to their checkpoint.
inline Thought sample_continuation(InferenceContext& ctx, double temperature, int max_new_tokens,
                                   Rng& rng) {
  return detail::decode_continuation(ctx, max_new_tokens, [&](const RowVec& logits) {
    return detail::draw_tempered(logits, temperature, rng);
  });
}

inline Thought greedy_continuation(InferenceContext& ctx, int max_new_tokens) {
  return detail::decode_continuation(ctx, max_new_tokens, [](const RowVec& logits) {
    return detail::argmax_lowest_id(logits);
  });
}

inline Thought sample_thought(const BaseWeights& w, const AdapterParams* adapter,
                              const ReasoningState& state, const SampleConfig& cfg, Rng& rng) {
  if (!(cfg.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  InferenceContext ctx(w, adapter);
  ctx.prefill(generation_prefix(state, cfg));
  return sample_continuation(ctx, cfg.temperature, cfg.max_new_tokens, rng);
}

inline Thought greedy_decode(const BaseWeights& w, const AdapterParams* adapter,
                             const ReasoningState& state, const SampleConfig& cfg) {
  InferenceContext ctx(w, adapter);
  ctx.prefill(generation_prefix(state, cfg));
  return greedy_continuation(ctx, cfg.max_new_tokens);
}

}  // namespace pot::model
