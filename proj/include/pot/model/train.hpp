// Batched forward/backward with activation caching. A StackedSeq packs a
// shared prefix and any number of continuation segments into one pass: a
// segment position attends to the prefix and to its own segment only, which
// reproduces the per-sequence logits exactly while paying for the prefix once.
//
// Reverse mode has two consumers: full-parameter gradients for pretraining and
// adapter-only gradients at solve time (base gradients are then never
// materialized; activations are recomputed per pass).
#pragma once

#include "pot/model/adapter.hpp"
#include "pot/model/forward.hpp"

namespace pot::model {

struct StackedSeq {
  std::vector<int> tokens;  // prefix ++ seg0 ++ seg1 ++ ...
  std::vector<int> pos;     // logical position of every flat index
  int prefix_len = 0;
  std::vector<int> seg_start;  // flat offsets
  std::vector<int> seg_len;

  int size() const { return static_cast<int>(tokens.size()); }
  int segments() const { return static_cast<int>(seg_start.size()); }

  static StackedSeq single(std::vector<int> toks) {
    StackedSeq s;
    s.pos.resize(toks.size());
    for (std::size_t i = 0; i < toks.size(); ++i) s.pos[i] = static_cast<int>(i);
    s.tokens = std::move(toks);
    s.prefix_len = s.size();
    return s;
  }

  static StackedSeq grouped(const std::vector<int>& prefix,
                            const std::vector<std::vector<int>>& segs) {
    StackedSeq s;
    s.tokens = prefix;
    s.prefix_len = static_cast<int>(prefix.size());
    for (int i = 0; i < s.prefix_len; ++i) s.pos.push_back(i);
    for (const auto& seg : segs) {
      s.seg_start.push_back(s.size());
      s.seg_len.push_back(static_cast<int>(seg.size()));
      for (std::size_t j = 0; j < seg.size(); ++j) {
        s.tokens.push_back(seg[j]);
        s.pos.push_back(s.prefix_len + static_cast<int>(j));
      }
    }
    return s;
  }

  // Segment index of a flat position, -1 for prefix positions.
  int segment_of(int f) const {
    for (int i = 0; i < segments(); ++i)
      if (f >= seg_start[i] && f < seg_start[i] + seg_len[i]) return i;
    return -1;
  }

  // Attention support of query f: [0, a_end) plus, for segment queries,
  // [b_begin, b_end). For prefix queries the second range is empty.
  void attend_ranges(int f, int& a_end, int& b_begin, int& b_end) const {
    if (f < prefix_len) {
      a_end = f + 1;
      b_begin = b_end = 0;
      return;
    }
    a_end = prefix_len;
    const int s = segment_of(f);
    b_begin = seg_start[s];
    b_end = f + 1;
  }
};

struct ParamGrads {
  Mat wte, wpe;
  struct BlockGrads {
    Vec ln1_g, ln1_b;
    Mat wq, wk, wv, wo;
    Vec ln2_g, ln2_b;
    Mat w1;
    Vec b1;
    Mat w2;
    Vec b2;
  };
  std::vector<BlockGrads> blocks;
  Vec lnf_g, lnf_b;

  explicit ParamGrads(const ModelConfig& c) {
    wte.setZero(c.vocab, c.d_model);
    wpe.setZero(c.context, c.d_model);
    blocks.resize(c.n_blocks);
    for (auto& b : blocks) {
      b.ln1_g.setZero(c.d_model);
      b.ln1_b.setZero(c.d_model);
      b.wq.setZero(c.d_model, c.d_model);
      b.wk.setZero(c.d_model, c.d_model);
      b.wv.setZero(c.d_model, c.d_model);
      b.wo.setZero(c.d_model, c.d_model);
      b.ln2_g.setZero(c.d_model);
      b.ln2_b.setZero(c.d_model);
      b.w1.setZero(c.d_model, c.d_ff());
      b.b1.setZero(c.d_ff());
      b.w2.setZero(c.d_ff(), c.d_model);
      b.b2.setZero(c.d_model);
    }
    lnf_g.setZero(c.d_model);
    lnf_b.setZero(c.d_model);
  }

  void zero() {
    wte.setZero();
    wpe.setZero();
    for (auto& b : blocks) {
      b.ln1_g.setZero();
      b.ln1_b.setZero();
      b.wq.setZero();
      b.wk.setZero();
      b.wv.setZero();
      b.wo.setZero();
      b.ln2_g.setZero();
      b.ln2_b.setZero();
      b.w1.setZero();
      b.b1.setZero();
      b.w2.setZero();
      b.b2.setZero();
    }
    lnf_g.setZero();
    lnf_b.setZero();
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("wte", wte);
    f("wpe", wpe);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "block" + std::to_string(i) + ".";
      auto& b = blocks[i];
      f(p + "ln1_g", b.ln1_g);
      f(p + "ln1_b", b.ln1_b);
      f(p + "wq", b.wq);
      f(p + "wk", b.wk);
      f(p + "wv", b.wv);
      f(p + "wo", b.wo);
      f(p + "ln2_g", b.ln2_g);
      f(p + "ln2_b", b.ln2_b);
      f(p + "w1", b.w1);
      f(p + "b1", b.b1);
      f(p + "w2", b.w2);
      f(p + "b2", b.b2);
    }
    f("lnf_g", lnf_g);
    f("lnf_b", lnf_b);
  }
};

struct AdapterGrads {
  struct Site {
    Mat da, db;
  };
  std::array<Site, kNumAdaptedSites> sites;

  explicit AdapterGrads(const AdapterParams& p) {
    for (int i = 0; i < kNumAdaptedSites; ++i) {
      sites[i].da.setZero(p.sites[i].a.rows(), p.sites[i].a.cols());
      sites[i].db.setZero(p.sites[i].b.rows(), p.sites[i].b.cols());
    }
  }
  void zero() {
    for (auto& s : sites) {
      s.da.setZero();
      s.db.setZero();
    }
  }
  template <typename F>
  void for_each_matrix(F&& f) {
    static const char* names[] = {"b0q", "b0v", "b1q", "b1v"};
    for (int i = 0; i < kNumAdaptedSites; ++i) {
      f(std::string(names[i]) + ".da", sites[i].da);
      f(std::string(names[i]) + ".db", sites[i].db);
    }
  }
};

// One forward/backward engine instance; owns the activation workspace.
class Trainer {
 public:
  Trainer(const BaseWeights& w, const AdapterParams* adapter) : w_(w), adapter_(adapter) {}

  const Mat& forward(const StackedSeq& seq) {
    seq_ = seq;  // copied; callers may pass temporaries
    const ModelConfig& c = w_.cfg;
    const int L = seq.size();
    if (L == 0) throw std::invalid_argument("forward: empty sequence");
    acts_.resize(c.n_blocks);

    x0_.resize(L, c.d_model);
    for (int f = 0; f < L; ++f) {
      if (seq.tokens[f] < 0 || seq.tokens[f] >= c.vocab)
        throw std::runtime_error("token id out of vocabulary");
      if (seq.pos[f] < 0 || seq.pos[f] >= c.context)
        throw std::runtime_error("context window exceeded");
      x0_.row(f) = w_.wte.row(seq.tokens[f]) + w_.wpe.row(seq.pos[f]);
    }

    Mat x = x0_;
    for (int b = 0; b < c.n_blocks; ++b) {
      BlockActs& a = acts_[b];
      a.x_in = x;
      layernorm_fwd(a.x_in, w_.blocks[b].ln1_g, w_.blocks[b].ln1_b, a.ln1_xhat, a.ln1_rstd,
                    a.ln1_out);
      a.q.noalias() = a.ln1_out * w_.blocks[b].wq;
      a.k.noalias() = a.ln1_out * w_.blocks[b].wk;
      a.v.noalias() = a.ln1_out * w_.blocks[b].wv;
      if (adapter_) {
        const auto& sq = adapter_->sites[b == 0 ? kB0Q : kB1Q];
        const auto& sv = adapter_->sites[b == 0 ? kB0V : kB1V];
        const double sc = adapter_->cfg.scale();
        a.low_q.noalias() = a.ln1_out * sq.a;
        a.q.noalias() += sc * (a.low_q * sq.b);
        a.low_v.noalias() = a.ln1_out * sv.a;
        a.v.noalias() += sc * (a.low_v * sv.b);
      }

      attention_fwd(a);
      x.noalias() = a.x_in + a.att_out * w_.blocks[b].wo;
      a.x_mid = x;

      layernorm_fwd(a.x_mid, w_.blocks[b].ln2_g, w_.blocks[b].ln2_b, a.ln2_xhat, a.ln2_rstd,
                    a.ln2_out);
      a.ffn_pre.noalias() = a.ln2_out * w_.blocks[b].w1;
      a.ffn_pre.rowwise() += w_.blocks[b].b1.transpose();
      a.ffn_relu = a.ffn_pre.cwiseMax(0.0);
      x.noalias() = a.x_mid + a.ffn_relu * w_.blocks[b].w2;
      x.rowwise() += w_.blocks[b].b2.transpose();
    }
    layernorm_fwd(x, w_.lnf_g, w_.lnf_b, lnf_xhat_, lnf_rstd_, h_final_);
    x_last_ = std::move(x);
    logits_.noalias() = h_final_ * w_.wte.transpose();
    return logits_;
  }

  const Mat& logits() const { return logits_; }

  // Reverse sweep from dlogits. Either grad target may be null; base
  // gradients are only formed when `pg` is non-null.
  void backward(const Mat& dlogits, ParamGrads* pg, AdapterGrads* ag) {
    const ModelConfig& c = w_.cfg;
    const StackedSeq& seq = seq_;
    const int L = seq.size();

    Mat dh = dlogits * w_.wte;  // through the tied head
    if (pg) pg->wte.noalias() += dlogits.transpose() * h_final_;

    Mat dx(L, c.d_model);
    layernorm_bwd(dh, lnf_xhat_, lnf_rstd_, w_.lnf_g, pg ? &pg->lnf_g : nullptr,
                  pg ? &pg->lnf_b : nullptr, dx);

    for (int b = c.n_blocks - 1; b >= 0; --b) {
      BlockActs& a = acts_[b];
      const Block& blk = w_.blocks[b];

      // FFN
      Mat dffn_relu = dx * blk.w2.transpose();
      if (pg) {
        pg->blocks[b].w2.noalias() += a.ffn_relu.transpose() * dx;
        pg->blocks[b].b2.noalias() += dx.colwise().sum().transpose();
      }
      Mat dffn_pre = ((a.ffn_pre.array() > 0.0).cast<double>() * dffn_relu.array()).matrix();
      Mat dln2_out = dffn_pre * blk.w1.transpose();
      if (pg) {
        pg->blocks[b].w1.noalias() += a.ln2_out.transpose() * dffn_pre;
        pg->blocks[b].b1.noalias() += dffn_pre.colwise().sum().transpose();
      }
      Mat dx_mid(L, c.d_model);
      layernorm_bwd(dln2_out, a.ln2_xhat, a.ln2_rstd, blk.ln2_g,
                    pg ? &pg->blocks[b].ln2_g : nullptr, pg ? &pg->blocks[b].ln2_b : nullptr,
                    dx_mid);
      dx_mid += dx;  // residual

      // attention output projection
      Mat datt_out = dx_mid * blk.wo.transpose();
      if (pg) pg->blocks[b].wo.noalias() += a.att_out.transpose() * dx_mid;

      Mat dq, dk, dv;
      attention_bwd(a, datt_out, dq, dk, dv);

      // projections (and adapter sites on q, v)
      Mat dln1_out = dq * blk.wq.transpose();
      dln1_out.noalias() += dk * blk.wk.transpose();
      dln1_out.noalias() += dv * blk.wv.transpose();
      if (pg) {
        pg->blocks[b].wq.noalias() += a.ln1_out.transpose() * dq;
        pg->blocks[b].wk.noalias() += a.ln1_out.transpose() * dk;
        pg->blocks[b].wv.noalias() += a.ln1_out.transpose() * dv;
      }
      if (adapter_) {
        const double sc = adapter_->cfg.scale();
        const auto& sq = adapter_->sites[b == 0 ? kB0Q : kB1Q];
        const auto& sv = adapter_->sites[b == 0 ? kB0V : kB1V];
        Mat dq_low = dq * sq.b.transpose();   // L x r
        Mat dv_low = dv * sv.b.transpose();
        if (ag) {
          auto& gq = ag->sites[b == 0 ? kB0Q : kB1Q];
          auto& gv = ag->sites[b == 0 ? kB0V : kB1V];
          gq.db.noalias() += sc * (a.low_q.transpose() * dq);
          gq.da.noalias() += sc * (a.ln1_out.transpose() * dq_low);
          gv.db.noalias() += sc * (a.low_v.transpose() * dv);
          gv.da.noalias() += sc * (a.ln1_out.transpose() * dv_low);
        }
        dln1_out.noalias() += sc * (dq_low * sq.a.transpose());
        dln1_out.noalias() += sc * (dv_low * sv.a.transpose());
      }

      Mat dx_in(L, c.d_model);
      layernorm_bwd(dln1_out, a.ln1_xhat, a.ln1_rstd, blk.ln1_g,
                    pg ? &pg->blocks[b].ln1_g : nullptr, pg ? &pg->blocks[b].ln1_b : nullptr,
                    dx_in);
      dx = dx_mid + dx_in;
    }

    if (pg) {
      for (int f = 0; f < L; ++f) {
        pg->wte.row(seq.tokens[f]) += dx.row(f);
        pg->wpe.row(seq.pos[f]) += dx.row(f);
      }
    }
  }

 private:
  struct BlockActs {
    Mat x_in;
    Mat ln1_xhat, ln1_out;
    Vec ln1_rstd;
    Mat q, k, v;
    Mat low_q, low_v;
    std::vector<Mat> att_w;  // per head, L x L, zero where masked
    Mat att_out;
    Mat x_mid;
    Mat ln2_xhat, ln2_out;
    Vec ln2_rstd;
    Mat ffn_pre, ffn_relu;
  };

  void layernorm_fwd(const Mat& x, const Vec& g, const Vec& b, Mat& xhat, Vec& rstd, Mat& out) {
    const int L = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    xhat.resize(L, d);
    rstd.resize(L);
    out.resize(L, d);
    for (int f = 0; f < L; ++f) {
      const double mean = x.row(f).mean();
      double var = 0.0;
      for (int i = 0; i < d; ++i) {
        const double c = x(f, i) - mean;
        var += c * c;
      }
      var /= d;
      const double r = 1.0 / std::sqrt(var + kLnEps);
      rstd(f) = r;
      for (int i = 0; i < d; ++i) {
        xhat(f, i) = (x(f, i) - mean) * r;
        out(f, i) = xhat(f, i) * g(i) + b(i);
      }
    }
  }

  void layernorm_bwd(const Mat& dout, const Mat& xhat, const Vec& rstd, const Vec& g, Vec* dg,
                     Vec* db, Mat& dx) {
    const int L = static_cast<int>(dout.rows());
    const int d = static_cast<int>(dout.cols());
    dx.resize(L, d);
    for (int f = 0; f < L; ++f) {
      double m1 = 0.0, m2 = 0.0;
      for (int i = 0; i < d; ++i) {
        const double dxh = dout(f, i) * g(i);
        m1 += dxh;
        m2 += dxh * xhat(f, i);
      }
      m1 /= d;
      m2 /= d;
      for (int i = 0; i < d; ++i) {
        const double dxh = dout(f, i) * g(i);
        dx(f, i) = rstd(f) * (dxh - m1 - xhat(f, i) * m2);
      }
      if (dg)
        for (int i = 0; i < d; ++i) (*dg)(i) += dout(f, i) * xhat(f, i);
      if (db)
        for (int i = 0; i < d; ++i) (*db)(i) += dout(f, i);
    }
  }

  void attention_fwd(BlockActs& a) {
    const ModelConfig& c = w_.cfg;
    const StackedSeq& seq = seq_;
    const int L = seq.size();
    const int hd = c.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    a.att_w.assign(c.n_heads, Mat());
    a.att_out.resize(L, c.d_model);
    for (int h = 0; h < c.n_heads; ++h) {
      const int off = h * hd;
      auto qh = a.q.middleCols(off, hd);
      auto kh = a.k.middleCols(off, hd);
      auto vh = a.v.middleCols(off, hd);
      Mat scores = qh * kh.transpose() * scale;  // L x L; masked entries unused
      Mat& wgt = a.att_w[h];
      wgt.setZero(L, L);
      for (int f = 0; f < L; ++f) {
        int a_end, b_begin, b_end;
        seq.attend_ranges(f, a_end, b_begin, b_end);
        double m = -std::numeric_limits<double>::infinity();
        for (int t = 0; t < a_end; ++t) m = std::max(m, scores(f, t));
        for (int t = b_begin; t < b_end; ++t) m = std::max(m, scores(f, t));
        double z = 0.0;
        for (int t = 0; t < a_end; ++t) {
          wgt(f, t) = std::exp(scores(f, t) - m);
          z += wgt(f, t);
        }
        for (int t = b_begin; t < b_end; ++t) {
          wgt(f, t) = std::exp(scores(f, t) - m);
          z += wgt(f, t);
        }
        const double inv = 1.0 / z;
        for (int t = 0; t < a_end; ++t) wgt(f, t) *= inv;
        for (int t = b_begin; t < b_end; ++t) wgt(f, t) *= inv;
      }
      a.att_out.middleCols(off, hd).noalias() = wgt * vh;
    }
  }

  void attention_bwd(BlockActs& a, const Mat& datt_out, Mat& dq, Mat& dk, Mat& dv) {
    const ModelConfig& c = w_.cfg;
    const StackedSeq& seq = seq_;
    const int L = seq.size();
    const int hd = c.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    dq.setZero(L, c.d_model);
    dk.setZero(L, c.d_model);
    dv.setZero(L, c.d_model);
    for (int h = 0; h < c.n_heads; ++h) {
      const int off = h * hd;
      auto qh = a.q.middleCols(off, hd);
      auto kh = a.k.middleCols(off, hd);
      auto vh = a.v.middleCols(off, hd);
      const Mat& wgt = a.att_w[h];
      auto dout_h = datt_out.middleCols(off, hd);

      dv.middleCols(off, hd).noalias() += wgt.transpose() * dout_h;
      Mat dwgt = dout_h * vh.transpose();  // L x L, valid on the support
      Mat dscores;
      dscores.setZero(L, L);
      for (int f = 0; f < L; ++f) {
        int a_end, b_begin, b_end;
        seq.attend_ranges(f, a_end, b_begin, b_end);
        double dot = 0.0;
        for (int t = 0; t < a_end; ++t) dot += wgt(f, t) * dwgt(f, t);
        for (int t = b_begin; t < b_end; ++t) dot += wgt(f, t) * dwgt(f, t);
        for (int t = 0; t < a_end; ++t) dscores(f, t) = wgt(f, t) * (dwgt(f, t) - dot);
        for (int t = b_begin; t < b_end; ++t) dscores(f, t) = wgt(f, t) * (dwgt(f, t) - dot);
      }
      dq.middleCols(off, hd).noalias() += scale * (dscores * kh);
      dk.middleCols(off, hd).noalias() += scale * (dscores.transpose() * qh);
    }
  }

  const BaseWeights& w_;
  const AdapterParams* adapter_;
  StackedSeq seq_;
  std::vector<BlockActs> acts_;
  Mat x0_, x_last_, h_final_, logits_, lnf_xhat_;
  Vec lnf_rstd_;
};

// Masked next-token cross entropy; returns mean loss over masked positions
// and writes dlogits for the backward sweep. Position f's logits predict
// token f+1; mask[f+1] gates whether that prediction is scored. `smoothing`
// spreads that fraction of the target mass uniformly over the vocabulary,
// which keeps the trained policy from saturating and preserves sampling
// diversity at decode time.
inline double masked_ce_loss(const Mat& logits, const std::vector<int>& tokens,
                             const std::vector<int>& mask, Mat& dlogits,
                             double smoothing = 0.0) {
  const int L = static_cast<int>(tokens.size());
  dlogits.setZero(logits.rows(), logits.cols());
  double total = 0.0;
  long count = 0;
  for (int f = 0; f + 1 < L; ++f) {
    if (!mask[f + 1]) continue;
    ++count;
  }
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  const int V = static_cast<int>(logits.cols());
  const double off = smoothing / static_cast<double>(V);
  const double on = 1.0 - smoothing + off;
  for (int f = 0; f + 1 < L; ++f) {
    if (!mask[f + 1]) continue;
    RowVec z = logits.row(f);
    const double lse = log_sum_exp(z);
    const int target = tokens[f + 1];
    double ce = on * (lse - z(target));
    if (off > 0.0)
      for (int vtok = 0; vtok < V; ++vtok)
        if (vtok != target) ce += off * (lse - z(vtok));
    total += ce * inv;
    for (int vtok = 0; vtok < V; ++vtok)
      dlogits(f, vtok) = (std::exp(z(vtok) - lse) - off) * inv;
    dlogits(f, target) -= (on - off) * inv;
  }
  return total;
}

}  // namespace pot::model
