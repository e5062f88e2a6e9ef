// Adam for adapter parameters (bias-corrected moments, per Kingma-Ba
// defaults). The paper-level configuration pins only the learning rate; the
// moment hyperparameters live here so runs are reproducible.
#pragma once

#include "pot/model/train.hpp"

namespace pot::engine {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig cfg;
  struct Site {
    model::Mat ma, va, mb, vb;
  };
  std::array<Site, model::kNumAdaptedSites> sites;
  long step = 0;

  static OptimizerState make(const model::AdapterParams& p, AdamConfig cfg = {}) {
    OptimizerState s;
    s.cfg = cfg;
    for (int i = 0; i < model::kNumAdaptedSites; ++i) {
      s.sites[i].ma.setZero(p.sites[i].a.rows(), p.sites[i].a.cols());
      s.sites[i].va.setZero(p.sites[i].a.rows(), p.sites[i].a.cols());
      s.sites[i].mb.setZero(p.sites[i].b.rows(), p.sites[i].b.cols());
      s.sites[i].vb.setZero(p.sites[i].b.rows(), p.sites[i].b.cols());
    }
    return s;
  }
};

namespace detail {
inline void adam_step_matrix(model::Mat& p, const model::Mat& g, model::Mat& m, model::Mat& v,
                             const AdamConfig& c, double bc1, double bc2) {
  if (p.rows() != g.rows() || p.cols() != g.cols())
    throw std::invalid_argument("adam: gradient shape mismatch");
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double gi = g(i);
    m(i) = c.beta1 * m(i) + (1.0 - c.beta1) * gi;
    v(i) = c.beta2 * v(i) + (1.0 - c.beta2) * gi * gi;
    const double mhat = m(i) / bc1;
    const double vhat = v(i) / bc2;
    p(i) -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}
}  // namespace detail

// One descending step; increments both the optimizer step and the adapter's
// cumulative update counter.
inline void apply_update(model::AdapterParams& p, const model::AdapterGrads& g,
                         OptimizerState& s) {
  ++s.step;
  const double bc1 = 1.0 - std::pow(s.cfg.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.cfg.beta2, static_cast<double>(s.step));
  for (int i = 0; i < model::kNumAdaptedSites; ++i) {
    detail::adam_step_matrix(p.sites[i].a, g.sites[i].da, s.sites[i].ma, s.sites[i].va, s.cfg,
                             bc1, bc2);
    detail::adam_step_matrix(p.sites[i].b, g.sites[i].db, s.sites[i].mb, s.sites[i].vb, s.cfg,
                             bc1, bc2);
  }
  ++p.step_counter;
}

}  // namespace pot::engine
