// Group-relative policy optimization over sibling thought groups: relative
// advantages, exact categorical KL, the clipped token-level objective with
// analytic adapter gradients, and the multi-epoch internalization step.
#pragma once

#include "pot/engine/adam.hpp"
#include "pot/engine/gradcheck.hpp"
#include "pot/model/train.hpp"

namespace pot::grpo {

using model::Mat;
using model::RowVec;

struct GrpoConfig {
  double epsilon = 0.3;     // PPO clip ratio
  double beta = 0.02;       // KL penalty vs the reference snapshot
  double fixed_kl = 0.005;  // always-on KL penalty vs the initial adapter state
  double eta = 1e-4;        // std floor in the advantage
  double adv_clip = 5.0;    // C_A
  int epochs = 3;           // E optimization passes per group
  int ref_sync_every = 10;  // reference refresh period in cumulative updates
};

// A_i = clip((r_i - mean) / max(std, eta), -C_A, C_A) with the population
// standard deviation. Groups with exactly equal rewards yield exact zeros.
inline std::vector<double> compute_advantages(const std::vector<double>& rewards,
                                              const GrpoConfig& cfg) {
  const std::size_t g = rewards.size();
  if (g == 0) return {};
  double lo = rewards[0], hi = rewards[0];
  double mean = 0.0;
  for (double r : rewards) {
    mean += r;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (lo == hi) return std::vector<double>(g, 0.0);
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);
  const double denom = std::max(std::sqrt(var), cfg.eta);
  std::vector<double> adv(g);
  for (std::size_t i = 0; i < g; ++i)
    adv[i] = std::clamp((rewards[i] - mean) / denom, -cfg.adv_clip, cfg.adv_clip);
  return adv;
}

// Exact KL(p || q) between the categorical distributions defined by two logit
// rows, evaluated over the full vocabulary in log space.
inline double kl_exact(const RowVec& p_logits, const RowVec& q_logits) {
  const double lse_p = model::log_sum_exp(p_logits);
  const double lse_q = model::log_sum_exp(q_logits);
  double kl = 0.0;
  for (int v = 0; v < p_logits.size(); ++v) {
    const double lp = p_logits(v) - lse_p;
    const double lq = q_logits(v) - lse_q;
    kl += std::exp(lp) * (lp - lq);
  }
  return kl;
}

struct TrajectoryRecord {
  std::vector<int> tokens;           // generated segment of the thought
  std::vector<double> old_logprobs;  // generation-time values under phi_t
  double reward = 0.0;
};

struct GroupBuffer {
  std::vector<int> prefix;  // shared state encoding incl. the opening SEP
  std::vector<TrajectoryRecord> trajs;
  int parent_node = -1;
  std::vector<double> advantages;  // filled by compute_advantages

  model::StackedSeq stacked() const {
    std::vector<std::vector<int>> segs;
    segs.reserve(trajs.size());
    for (const auto& t : trajs) segs.push_back(t.tokens);
    return model::StackedSeq::grouped(prefix, segs);
  }
};

struct GrpoDiag {
  double loss = 0.0;
  double policy_term = 0.0;   // loss contribution of the clipped surrogate
  double kl_ref_term = 0.0;   // beta-weighted loss contribution
  double kl_init_term = 0.0;  // fixed-kl-weighted loss contribution
  double mean_token_kl_ref = 0.0;  // unweighted mean token KL(pi_phi || pi_ref)
  double mean_ratio = 0.0;
  double max_ratio = 0.0;
  double clip_fraction = 0.0;  // fraction of tokens with |ratio - 1| > epsilon
  std::vector<double> advantages;
};

namespace detail {
// Flat row whose logits predict token j of trajectory i.
inline int predictor_row(const model::StackedSeq& seq, int traj, int j) {
  if (j == 0) return seq.prefix_len - 1;
  return seq.seg_start[traj] + j - 1;
}
}  // namespace detail

// Token-level GRPO loss (negated Eq. objective, so lower is better):
//   loss = -(1/G) sum_i (1/|tau_i|) sum_j [ min(r A, clip(r) A)
//            - beta KL(pi_phi||pi_ref) - fixed_kl KL(pi_phi||pi_init) ]
// Ref and init logit matrices may be supplied when already computed; they are
// constants with respect to phi.
inline GrpoDiag grpo_loss(const GroupBuffer& buffer, const model::BaseWeights& w,
                          const model::AdapterParams& phi, const model::AdapterParams& ref,
                          const model::AdapterParams& init, const GrpoConfig& cfg,
                          model::AdapterGrads* out_grads = nullptr,
                          const Mat* ref_logits_in = nullptr, const Mat* init_logits_in = nullptr) {
  const int g = static_cast<int>(buffer.trajs.size());
  if (g == 0) throw std::invalid_argument("grpo_loss: empty group");
  if (buffer.advantages.size() != buffer.trajs.size())
    throw std::invalid_argument("grpo_loss: advantages not computed");
  for (const auto& t : buffer.trajs) {
    if (t.tokens.empty()) throw std::invalid_argument("grpo_loss: empty trajectory");
    if (t.old_logprobs.size() != t.tokens.size())
      throw std::invalid_argument("grpo_loss: missing or mismatched old log-probs");
  }

  const model::StackedSeq seq = buffer.stacked();
  model::Trainer trainer(w, &phi);
  const Mat& logits = trainer.forward(seq);

  Mat ref_logits_local, init_logits_local;
  const Mat* ref_logits = ref_logits_in;
  const Mat* init_logits = init_logits_in;
  if (!ref_logits) {
    model::Trainer t(w, &ref);
    ref_logits_local = t.forward(seq);
    ref_logits = &ref_logits_local;
  }
  if (!init_logits) {
    model::Trainer t(w, &init);
    init_logits_local = t.forward(seq);
    init_logits = &init_logits_local;
  }

  const int V = w.cfg.vocab;
  Mat dlogits;
  if (out_grads) dlogits.setZero(seq.size(), V);

  GrpoDiag diag;
  diag.advantages = buffer.advantages;
  long n_tokens = 0;
  double ratio_sum = 0.0;
  long clipped = 0;
  double kl_ref_sum = 0.0;

  for (int i = 0; i < g; ++i) {
    const TrajectoryRecord& traj = buffer.trajs[i];
    const double adv = buffer.advantages[i];
    const int len = static_cast<int>(traj.tokens.size());
    const double coef = 1.0 / (static_cast<double>(g) * static_cast<double>(len));
    for (int j = 0; j < len; ++j) {
      const int row = detail::predictor_row(seq, i, j);
      const int y = traj.tokens[j];
      RowVec z = logits.row(row);
      RowVec zr = ref_logits->row(row);
      RowVec zi = init_logits->row(row);
      const double lse = model::log_sum_exp(z);
      const double new_lp = z(y) - lse;
      const double ratio = std::exp(new_lp - traj.old_logprobs[j]);
      const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
      const double surr_un = ratio * adv;
      const double surr_cl = clipped_ratio * adv;
      const bool unclipped_active = surr_un <= surr_cl;
      const double surr = unclipped_active ? surr_un : surr_cl;

      const double lse_r = model::log_sum_exp(zr);
      const double lse_i = model::log_sum_exp(zi);
      double kl_ref = 0.0, kl_init = 0.0;
      for (int v = 0; v < V; ++v) {
        const double lp = z(v) - lse;
        const double p = std::exp(lp);
        kl_ref += p * (lp - (zr(v) - lse_r));
        kl_init += p * (lp - (zi(v) - lse_i));
      }

      diag.policy_term += -coef * surr;
      diag.kl_ref_term += coef * cfg.beta * kl_ref;
      diag.kl_init_term += coef * cfg.fixed_kl * kl_init;
      kl_ref_sum += kl_ref;
      ratio_sum += ratio;
      diag.max_ratio = std::max(diag.max_ratio, ratio);
      if (std::abs(ratio - 1.0) > cfg.epsilon) ++clipped;
      ++n_tokens;

      if (out_grads) {
        // d loss / d z = -coef * [active r A (e_y - p)]
        //               + coef * beta  * p (log p - log q_ref  - KL_ref)
        //               + coef * fixed * p (log p - log q_init - KL_init)
        const double pol = unclipped_active ? coef * ratio * adv : 0.0;
        for (int v = 0; v < V; ++v) {
          const double lp = z(v) - lse;
          const double p = std::exp(lp);
          double dz = pol * p;  // from -(e_y - p) expanded below
          dz += coef * cfg.beta * p * ((lp - (zr(v) - lse_r)) - kl_ref);
          dz += coef * cfg.fixed_kl * p * ((lp - (zi(v) - lse_i)) - kl_init);
          dlogits(row, v) += dz;
        }
        dlogits(row, y) -= pol;
      }
    }
  }
  diag.loss = diag.policy_term + diag.kl_ref_term + diag.kl_init_term;
  diag.mean_ratio = ratio_sum / static_cast<double>(n_tokens);
  diag.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n_tokens);
  diag.mean_token_kl_ref = kl_ref_sum / static_cast<double>(n_tokens);
  if (!std::isfinite(diag.loss)) throw std::runtime_error("grpo_loss: non-finite loss");

  if (out_grads) {
    trainer.backward(dlogits, nullptr, out_grads);
    out_grads->for_each_matrix([](const std::string& name, const Mat& m) {
      if (!m.allFinite()) throw std::runtime_error("grpo_loss: non-finite gradient in " + name);
    });
  }
  return diag;
}

struct GradBundle {
  model::AdapterGrads grads;
  double loss = 0.0;
  GrpoDiag diag;
};

// Exact reverse-mode gradients of the group loss with respect to the adapter
// only; base weights receive no gradient by construction.
inline GradBundle backward_adapter(const GroupBuffer& buffer, const model::BaseWeights& w,
                                   const model::AdapterParams& phi, const model::AdapterParams& ref,
                                   const model::AdapterParams& init, const GrpoConfig& cfg) {
  GradBundle bundle{model::AdapterGrads(phi)};
  bundle.diag = grpo_loss(buffer, w, phi, ref, init, cfg, &bundle.grads);
  bundle.loss = bundle.diag.loss;
  return bundle;
}

// Central finite-difference probe of the analytic gradients; returns the
// worst relative error over n_coords random adapter coordinates.
inline engine::FdReport fd_check_grpo(const GroupBuffer& buffer, const model::BaseWeights& w,
                                      model::AdapterParams& phi, const model::AdapterParams& ref,
                                      const model::AdapterParams& init, const GrpoConfig& cfg,
                                      double step, int n_coords, Rng& rng) {
  GradBundle bundle = backward_adapter(buffer, w, phi, ref, init, cfg);
  auto loss_fn = [&]() { return grpo_loss(buffer, w, phi, ref, init, cfg).loss; };
  return engine::fd_check(phi, bundle.grads, loss_fn, step, n_coords, rng);
}

struct RefSnapshot {
  model::AdapterParams params;
  long taken_at_step = 0;
};

struct InternalizeResult {
  std::vector<GrpoDiag> epochs;
  int ref_syncs = 0;
};

// E optimization passes over one sibling group. Old log-probs stay frozen at
// their generation-time values; the reference snapshot is refreshed whenever
// the cumulative update count crosses a ref_sync_every boundary.
inline InternalizeResult internalize(GroupBuffer& buffer, const model::BaseWeights& w,
                                     model::AdapterParams& adapter, engine::OptimizerState& opt,
                                     RefSnapshot& ref, const model::AdapterParams& init,
                                     const GrpoConfig& cfg) {
  if (buffer.trajs.empty()) throw std::invalid_argument("internalize: empty buffer");
  for (const auto& t : buffer.trajs)
    if (t.reward >= 1.0) throw std::logic_error("internalize: solved trajectory in buffer");

  if (buffer.advantages.size() != buffer.trajs.size()) {
    std::vector<double> rewards;
    for (const auto& t : buffer.trajs) rewards.push_back(t.reward);
    buffer.advantages = compute_advantages(rewards, cfg);
  }

  const model::StackedSeq seq = buffer.stacked();
  Mat init_logits;
  {
    model::Trainer t(w, &init);
    init_logits = t.forward(seq);
  }
  Mat ref_logits;
  bool ref_fresh = false;

  InternalizeResult result;
  for (int e = 0; e < cfg.epochs; ++e) {
    if (!ref_fresh) {
      model::Trainer t(w, &ref.params);
      ref_logits = t.forward(seq);
      ref_fresh = true;
    }
    model::AdapterGrads grads(adapter);
    GrpoDiag diag =
        grpo_loss(buffer, w, adapter, ref.params, init, cfg, &grads, &ref_logits, &init_logits);
    engine::apply_update(adapter, grads, opt);
    result.epochs.push_back(std::move(diag));
    if (cfg.ref_sync_every > 0 && adapter.step_counter % cfg.ref_sync_every == 0) {
      ref.params = adapter;
      ref.taken_at_step = adapter.step_counter;
      ref_fresh = false;
      ++result.ref_syncs;
    }
  }
  return result;
}

}  // namespace pot::grpo
