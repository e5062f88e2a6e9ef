// Transient low-rank adapter state: the only trainable parameters at solve
// time. Four adapted sites: the query and value projections of both blocks.
#pragma once

#include <array>
#include <atomic>

#include "pot/model/weights.hpp"

namespace pot::model {

enum AdaptedSite : int { kB0Q = 0, kB0V = 1, kB1Q = 2, kB1V = 3 };
constexpr int kNumAdaptedSites = 4;

inline std::atomic<long long>& adapter_live_doubles() {
  static std::atomic<long long> counter{0};
  return counter;
}

struct AdapterConfig {
  int rank = 8;
  double alpha = 16.0;  // effective delta is (alpha/rank) * B * A
  double init_std = 0.02;

  double scale() const { return alpha / static_cast<double>(rank); }
};

struct AdapterParams {
  AdapterConfig cfg;
  // Per site: a (d_in x r) and b (r x d_out), so delta_row = x_row * a * b.
  // b starts at zero, making the initial forward identical to the base model.
  struct Site {
    Mat a, b;
  };
  std::array<Site, kNumAdaptedSites> sites;
  long step_counter = 0;  // optimizer updates applied so far

  AdapterParams() = default;
  AdapterParams(const AdapterParams& o) : cfg(o.cfg), sites(o.sites), step_counter(o.step_counter) {
    adapter_live_doubles() += total_doubles();
  }
  AdapterParams(AdapterParams&& o) noexcept
      : cfg(o.cfg), sites(std::move(o.sites)), step_counter(o.step_counter) {
    for (auto& s : o.sites) {
      s.a.resize(0, 0);
      s.b.resize(0, 0);
    }
  }
  AdapterParams& operator=(const AdapterParams& o) {
    if (this != &o) {
      adapter_live_doubles() -= total_doubles();
      cfg = o.cfg;
      sites = o.sites;
      step_counter = o.step_counter;
      adapter_live_doubles() += total_doubles();
    }
    return *this;
  }
  AdapterParams& operator=(AdapterParams&& o) noexcept {
    if (this != &o) {
      adapter_live_doubles() -= total_doubles();
      cfg = o.cfg;
      sites = std::move(o.sites);
      step_counter = o.step_counter;
      for (auto& s : o.sites) {
        s.a.resize(0, 0);
        s.b.resize(0, 0);
      }
    }
    return *this;
  }
  ~AdapterParams() { adapter_live_doubles() -= total_doubles(); }

  long long total_doubles() const {
    long long n = 0;
    for (const Site& s : sites) n += s.a.size() + s.b.size();
    return n;
  }

  template <typename F>
  void for_each_matrix(F&& f) {
    static const char* names[] = {"b0q", "b0v", "b1q", "b1v"};
    for (int i = 0; i < kNumAdaptedSites; ++i) {
      f(std::string(names[i]) + ".a", sites[i].a);
      f(std::string(names[i]) + ".b", sites[i].b);
    }
  }
  template <typename F>
  void for_each_matrix(F&& f) const {
    const_cast<AdapterParams*>(this)->for_each_matrix(
        [&](const std::string& n, Mat& m) { f(n, const_cast<const Mat&>(m)); });
  }
};

inline AdapterParams init_adapter(const ModelConfig& mc, std::uint64_t rng_seed,
                                  AdapterConfig cfg = {}) {
  AdapterParams p;
  p.cfg = cfg;
  Rng rng(derive_seed(rng_seed, "adapter_init"));
  const int d = mc.d_model;
  for (int i = 0; i < kNumAdaptedSites; ++i) {
    Mat a(d, cfg.rank);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < cfg.rank; ++c) a(r, c) = rng.normal() * cfg.init_std;
    p.sites[i].a = std::move(a);
    p.sites[i].b = Mat::Zero(cfg.rank, d);
  }
  adapter_live_doubles() += p.total_doubles();
  return p;
}

// Optional adapter dump, same container format as weight snapshots.
inline void save_adapter(const AdapterParams& p, const std::string& path) {
  std::string payload;
  p.for_each_matrix([&](const std::string&, const Mat& m) { detail::payload_append(payload, m); });
  nlohmann::ordered_json header;
  header["format"] = "pota1";
  header["rank"] = p.cfg.rank;
  header["alpha"] = p.cfg.alpha;
  header["step_counter"] = p.step_counter;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  p.for_each_matrix([&](const std::string& name, const Mat& m) {
    nlohmann::ordered_json tj;
    tj["name"] = name;
    tj["shape"] = {m.rows(), m.cols()};
    tensors.push_back(std::move(tj));
  });
  header["tensors"] = std::move(tensors);
  header["checksum"] = hex64(fnv1a(payload.data(), payload.size()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write adapter dump: " + path);
  out << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

}  // namespace pot::model
