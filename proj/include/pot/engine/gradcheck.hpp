// Central finite-difference probe of analytic adapter gradients.
#pragma once

#include <functional>

#include "pot/model/train.hpp"

namespace pot::engine {

struct FdReport {
  double max_rel_err = 0.0;
  int coords_checked = 0;
  std::string worst_coord;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// `loss` must evaluate the objective at the adapter's current values; the
// adapter is restored exactly after each probe. Relative error uses an
// absolute floor so near-zero coordinates measure noise, not infinities.
inline FdReport fd_check(model::AdapterParams& adapter, const model::AdapterGrads& analytic,
                         const std::function<double()>& loss, double step, int n_coords, Rng& rng,
                         double floor = 1e-8) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_check: step must be positive");
  FdReport rep;
  static const char* names[] = {"b0q", "b0v", "b1q", "b1v"};
  for (int i = 0; i < n_coords; ++i) {
    const int site = static_cast<int>(rng.uniform_int(0, model::kNumAdaptedSites - 1));
    const bool pick_a = rng.uniform_int(0, 1) == 0;
    model::Mat& m = pick_a ? adapter.sites[site].a : adapter.sites[site].b;
    const model::Mat& g = pick_a ? analytic.sites[site].da : analytic.sites[site].db;
    const int r = static_cast<int>(rng.uniform_int(0, m.rows() - 1));
    const int c = static_cast<int>(rng.uniform_int(0, m.cols() - 1));

    const double saved = m(r, c);
    m(r, c) = saved + step;
    const double lp = loss();
    m(r, c) = saved - step;
    const double lm = loss();
    m(r, c) = saved;

    const double numeric = (lp - lm) / (2.0 * step);
    const double an = g(r, c);
    const double denom = std::max({std::abs(numeric), std::abs(an), floor});
    const double rel = std::abs(numeric - an) / denom;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_coord = std::string(names[site]) + (pick_a ? ".a(" : ".b(") + std::to_string(r) +
                        "," + std::to_string(c) + ")";
      rep.worst_analytic = an;
      rep.worst_numeric = numeric;
    }
    ++rep.coords_checked;
  }
  return rep;
}

}  // namespace pot::engine
