// Incremental adapter-aware forward pass with KV caching. One token per step;
// logits for every step are retained so a shared prefix can be rolled back and
// resampled without recomputation.
#pragma once

#include "pot/model/adapter.hpp"
#include "pot/model/encode.hpp"
#include "pot/model/weights.hpp"

namespace pot::model {

using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// Low-rank path contribution for one adapted site: (alpha/r) * x * A * B.
inline RowVec adapter_delta(const AdapterParams& p, int site, const RowVec& x) {
  const AdapterParams::Site& s = p.sites[site];
  RowVec low = x * s.a;
  return p.cfg.scale() * (low * s.b);
}

inline void layernorm_row(const RowVec& x, const Vec& g, const Vec& b, RowVec& out) {
  const int d = static_cast<int>(x.size());
  const double mean = x.mean();
  double var = 0.0;
  for (int i = 0; i < d; ++i) {
    const double c = x(i) - mean;
    var += c * c;
  }
  var /= d;
  const double rstd = 1.0 / std::sqrt(var + kLnEps);
  out.resize(d);
  for (int i = 0; i < d; ++i) out(i) = (x(i) - mean) * rstd * g(i) + b(i);
}

inline double log_sum_exp(const RowVec& z) {
  double m = z(0);
  for (int i = 1; i < z.size(); ++i) m = std::max(m, z(i));
  double s = 0.0;
  for (int i = 0; i < z.size(); ++i) s += std::exp(z(i) - m);
  return m + std::log(s);
}

class InferenceContext {
 public:
  InferenceContext(const BaseWeights& w, const AdapterParams* adapter)
      : w_(w), adapter_(adapter) {
    const ModelConfig& c = w.cfg;
    k_cache_.resize(c.n_blocks);
    v_cache_.resize(c.n_blocks);
    for (int b = 0; b < c.n_blocks; ++b) {
      k_cache_[b].setZero(c.context, c.d_model);
      v_cache_[b].setZero(c.context, c.d_model);
    }
    logits_.setZero(c.context, c.vocab);
  }

  int len() const { return len_; }
  void truncate(int new_len) { len_ = new_len; }

  // Feeds one token at the current position; stores and returns the logits
  // row that predicts the next token.
  const Mat& step(int token) {
    const ModelConfig& c = w_.cfg;
    if (token < 0 || token >= c.vocab) throw std::runtime_error("token id out of vocabulary");
    if (len_ >= c.context) throw std::runtime_error("context window exceeded");
    const int pos = len_;

    RowVec x = w_.wte.row(token) + w_.wpe.row(pos);
    RowVec h, q, k, v, scratch;
    for (int b = 0; b < c.n_blocks; ++b) {
      const Block& blk = w_.blocks[b];
      layernorm_row(x, blk.ln1_g, blk.ln1_b, h);
      q.noalias() = h * blk.wq;
      k.noalias() = h * blk.wk;
      v.noalias() = h * blk.wv;
      if (adapter_) {
        apply_adapter(h, b == 0 ? kB0Q : kB1Q, q);
        apply_adapter(h, b == 0 ? kB0V : kB1V, v);
      }
      k_cache_[b].row(pos) = k;
      v_cache_[b].row(pos) = v;

      RowVec att(c.d_model);
      const int hd = c.head_dim();
      const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
      for (int head = 0; head < c.n_heads; ++head) {
        const int off = head * hd;
        auto kh = k_cache_[b].middleRows(0, pos + 1).middleCols(off, hd);
        auto vh = v_cache_[b].middleRows(0, pos + 1).middleCols(off, hd);
        Vec scores = kh * q.middleCols(off, hd).transpose() * scale;
        double m = scores(0);
        for (int t = 1; t <= pos; ++t) m = std::max(m, scores(t));
        double z = 0.0;
        for (int t = 0; t <= pos; ++t) {
          scores(t) = std::exp(scores(t) - m);
          z += scores(t);
        }
        scores /= z;
        att.middleCols(off, hd).noalias() = scores.transpose() * vh;
      }
      x.noalias() += att * blk.wo;

      layernorm_row(x, blk.ln2_g, blk.ln2_b, h);
      scratch.noalias() = h * blk.w1;
      scratch += blk.b1.transpose();
      scratch = scratch.cwiseMax(0.0);
      RowVec f = scratch * blk.w2;
      f += blk.b2.transpose();
      x += f;
    }
    layernorm_row(x, w_.lnf_g, w_.lnf_b, h);
    logits_.row(pos).noalias() = h * w_.wte.transpose();
    ++len_;
    return logits_;
  }

  void prefill(const std::vector<int>& tokens) {
    for (int t : tokens) step(t);
  }

  // Logits produced at step `pos` (they predict the token at pos+1).
  RowVec logits_row(int pos) const { return logits_.row(pos); }

  double logprob_at(int pos, int token) const {
    RowVec z = logits_.row(pos);
    return z(token) - log_sum_exp(z);
  }

 private:
  void apply_adapter(const RowVec& h, int site, RowVec& out) {
    out += adapter_delta(*adapter_, site, h);
  }

  const BaseWeights& w_;
  const AdapterParams* adapter_;
  std::vector<Mat> k_cache_, v_cache_;
  Mat logits_;
  int len_ = 0;
};

// Exact per-token log-probabilities of `tokens[prefix_len..]` given the
// preceding tokens, replaying the same incremental arithmetic used at
// generation time.
inline std::vector<double> rescore(const BaseWeights& w, const AdapterParams* adapter,
                                   const std::vector<int>& tokens, int prefix_len) {
  if (prefix_len <= 0 || prefix_len >= static_cast<int>(tokens.size()))
    throw std::invalid_argument("rescore: prefix_len out of range");
  InferenceContext ctx(w, adapter);
  ctx.prefill(tokens);
  std::vector<double> out;
  out.reserve(tokens.size() - prefix_len);
  for (std::size_t p = prefix_len; p < tokens.size(); ++p)
    out.push_back(ctx.logprob_at(static_cast<int>(p) - 1, tokens[p]));
  return out;
}

}  // namespace pot::model
