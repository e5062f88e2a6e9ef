// Thought-tree engine: PUCT selection, k-child expansion with immediate
// environment evaluation, mean-value backpropagation, early termination and
// sibling-group extraction.
#pragma once

#include "pot/grpo/grpo.hpp"
#include "pot/loop/ledger.hpp"
#include "pot/model/sample.hpp"

namespace pot::search {

struct SearchConfig {
  double c_puct = 1.414;
  int k = 3;                // children per expansion (group size G)
  int max_depth = 8;
  int max_simulations = 20;  // M
  double temperature = 0.7;
};

struct SearchNode {
  int id = 0;
  int parent = -1;
  int depth = 0;
  model::Thought thought;    // root carries none
  model::Feedback feedback;
  double reward = 0.0;
  bool fault = false;        // any parse or runtime fault during evaluation
  long n = 0;                // visit count
  double w_sum = 0.0;        // accumulated backpropagated reward
  double q = 0.0;            // w_sum / n
  double prior = 0.0;        // P among siblings
  std::vector<int> children;
  bool pruned = false;
};

class Tree {
 public:
  Tree() { nodes_.push_back(SearchNode{}); }

  SearchNode& at(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const SearchNode& at(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  int add_child(int parent) {
    SearchNode node;
    node.id = size();
    node.parent = parent;
    node.depth = at(parent).depth + 1;
    nodes_.push_back(std::move(node));
    at(parent).children.push_back(nodes_.back().id);
    return nodes_.back().id;
  }

  template <typename F>
  void for_each(F&& f) const {
    for (const SearchNode& n : nodes_) f(n);
  }

 private:
  std::vector<SearchNode> nodes_;
};

// PUCT over unpruned children: Q + c * P * sqrt(sum_b N_b) / (1 + N), with
// Q = 0 for unvisited children and sum_b running over all children. Ties go
// to the lowest child index.
inline int select_child(const Tree& tree, int node_id, double c_puct) {
  const SearchNode& node = tree.at(node_id);
  double total_n = 0.0;
  for (int c : node.children) total_n += static_cast<double>(tree.at(c).n);
  const double root_term = std::sqrt(total_n);

  int best = -1;
  double best_score = 0.0;
  for (int c : node.children) {
    const SearchNode& child = tree.at(c);
    if (child.pruned) continue;
    const double q = child.n > 0 ? child.q : 0.0;
    const double score = q + c_puct * child.prior * root_term / (1.0 + static_cast<double>(child.n));
    if (best < 0 || score > best_score) {
      best = c;
      best_score = score;
    }
  }
  if (best < 0) throw std::runtime_error("select_child: all children pruned");
  return best;
}

inline void backpropagate(Tree& tree, int leaf, double reward) {
  for (int cur = leaf; cur >= 0; cur = tree.at(cur).parent) {
    SearchNode& n = tree.at(cur);
    n.n += 1;
    n.w_sum += reward;
    n.q = n.w_sum / static_cast<double>(n.n);
  }
}

struct PhaseOutcome {
  enum class Kind { Group, Solution, Exhausted } kind = Kind::Exhausted;
  grpo::GroupBuffer buffer;        // Kind::Group
  int solution_node = -1;          // Kind::Solution
  int expanded_parent = -1;
  std::vector<int> new_children;
};

// Context the search needs from the evolution loop each phase.
struct PhaseEnv {
  const model::BaseWeights& weights;
  const model::AdapterParams* adapter;
  const dsl::TaskInstance& task;
  const std::vector<model::HistoryEntry>& root_history;
  model::SampleConfig sample;
  loop::BudgetLedger* ledger = nullptr;
};

namespace detail {

inline model::ReasoningState state_for_node(const Tree& tree, int node_id, const PhaseEnv& env) {
  model::ReasoningState state(env.task);
  state.history = env.root_history;
  std::vector<int> path;
  for (int cur = node_id; cur > 0; cur = tree.at(cur).parent) path.push_back(cur);
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    const SearchNode& n = tree.at(*it);
    state.history.push_back({n.thought, n.feedback});
  }
  return state;
}

// Sibling priors: softmax over the per-thought mean untempered token
// log-probs (length normalization keeps long programs competitive).
inline void assign_priors(Tree& tree, const std::vector<int>& children) {
  std::vector<double> mean_lp;
  mean_lp.reserve(children.size());
  for (int c : children) {
    const model::Thought& t = tree.at(c).thought;
    double s = 0.0;
    for (double lp : t.gen_logprobs) s += lp;
    mean_lp.push_back(s / static_cast<double>(t.gen_logprobs.size()));
  }
  double m = mean_lp[0];
  for (double v : mean_lp) m = std::max(m, v);
  double z = 0.0;
  for (double v : mean_lp) z += std::exp(v - m);
  for (std::size_t i = 0; i < children.size(); ++i)
    tree.at(children[i]).prior = std::exp(mean_lp[i] - m) / z;
}

}  // namespace detail

// Expands `node_id` with up to k sampled children, evaluating and
// backpropagating each. Stops generating the moment a child earns the full
// reward. Children that fault with zero reward are pruned from future
// selection.
inline PhaseOutcome expand(Tree& tree, int node_id, const PhaseEnv& env, const SearchConfig& cfg,
                           Rng& rng) {
  PhaseOutcome out;
  out.expanded_parent = node_id;

  const model::ReasoningState state = detail::state_for_node(tree, node_id, env);
  std::vector<int> prefix = model::generation_prefix(state, env.sample);

  loop::StopWatch fwd_watch;
  model::InferenceContext ctx(env.weights, env.adapter);
  ctx.prefill(prefix);
  const int checkpoint = ctx.len();

  out.buffer.prefix = prefix;
  out.buffer.parent_node = node_id;

  bool solved = false;
  for (int i = 0; i < cfg.k && !solved; ++i) {
    ctx.truncate(checkpoint);
    model::Thought th =
        model::sample_continuation(ctx, cfg.temperature, env.sample.max_new_tokens, rng);
    dsl::RewardReport rep = dsl::evaluate_source(th.text, env.task);

    const int child = tree.add_child(node_id);
    SearchNode& cn = tree.at(child);
    cn.reward = rep.reward;
    cn.fault = rep.fault.has_value();
    cn.feedback = model::make_feedback(rep);
    cn.pruned = rep.reward == 0.0 && rep.fault.has_value();

    grpo::TrajectoryRecord rec;
    rec.tokens = th.tokens;
    rec.old_logprobs = th.gen_logprobs;
    rec.reward = rep.reward;
    out.buffer.trajs.push_back(std::move(rec));

    cn.thought = std::move(th);
    out.new_children.push_back(child);

    if (env.ledger) {
      env.ledger->nodes_generated += 1;
      env.ledger->tokens_generated += static_cast<long>(cn.thought.tokens.size());
      env.ledger->forward_count += 1;
    }
    backpropagate(tree, child, cn.reward);
    if (rep.reward == 1.0) {
      out.kind = PhaseOutcome::Kind::Solution;
      out.solution_node = child;
      solved = true;
    }
  }
  detail::assign_priors(tree, out.new_children);
  if (env.ledger) env.ledger->fwd_cost_ms += fwd_watch.ms();
  if (!solved) out.kind = PhaseOutcome::Kind::Group;
  return out;
}

// One simulation: select a leaf, expand it, evaluate and backpropagate. Dead
// branches (max-depth leaves, fully pruned interiors) are pruned on sight and
// selection restarts; Exhausted means the whole tree is dead.
inline PhaseOutcome run_phase(Tree& tree, const PhaseEnv& env, const SearchConfig& cfg, Rng& rng) {
  for (;;) {
    int cur = 0;
    if (tree.at(0).pruned) return {};
    bool restart = false;
    for (;;) {
      SearchNode& node = tree.at(cur);
      if (node.children.empty()) {
        if (node.depth >= cfg.max_depth) {
          node.pruned = true;
          restart = true;
          break;
        }
        PhaseOutcome out = expand(tree, cur, env, cfg, rng);
        if (env.ledger) env.ledger->simulations += 1;
        return out;
      }
      bool any = false;
      for (int c : node.children)
        if (!tree.at(c).pruned) any = true;
      if (!any) {
        node.pruned = true;
        restart = true;
        break;
      }
      cur = select_child(tree, cur, cfg.c_puct);
    }
    if (restart && tree.at(0).pruned) return {};
  }
}

}  // namespace pot::search
