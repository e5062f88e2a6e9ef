// Frozen base network parameters plus the snapshot container format
// (JSON header line + little-endian float32 payload).
#pragma once

#include <Eigen/Core>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "pot/common.hpp"
#include "pot/model/vocab.hpp"

namespace pot::model {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct ModelConfig {
  int d_model = 64;
  int n_blocks = 2;
  int n_heads = 4;
  int ffn_mult = 4;
  int context = 512;
  int vocab = kVocabSize;

  int head_dim() const { return d_model / n_heads; }
  int d_ff() const { return d_model * ffn_mult; }
};

constexpr double kLnEps = 1e-5;

// All projection matrices are stored input-major: row_out = row_in * W.
struct Block {
  Vec ln1_g, ln1_b;
  Mat wq, wk, wv, wo;  // d x d
  Vec ln2_g, ln2_b;
  Mat w1;  // d x d_ff
  Vec b1;
  Mat w2;  // d_ff x d
  Vec b2;
};

struct BaseWeights {
  ModelConfig cfg;
  Mat wte;  // vocab x d, rows double as the tied output head
  Mat wpe;  // context x d
  std::vector<Block> blocks;
  Vec lnf_g, lnf_b;
  std::string checksum;  // over the float32 payload of the snapshot

  // Fixed iteration order; snapshot payload and checksums depend on it.
  template <typename F>
  void for_each_tensor(F&& f) {
    f("wte", wte);
    f("wpe", wpe);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "block" + std::to_string(i) + ".";
      Block& b = blocks[i];
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
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<BaseWeights*>(this)->for_each_tensor([&](const std::string& n, auto& t) {
      f(n, const_cast<const std::remove_reference_t<decltype(t)>&>(t));
    });
  }
};

namespace detail {
inline void payload_append(std::string& out, const Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float f = static_cast<float>(m(r, c));
      char buf[4];
      std::memcpy(buf, &f, 4);
      out.append(buf, 4);
    }
}
inline void payload_append(std::string& out, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const float f = static_cast<float>(v(i));
    char buf[4];
    std::memcpy(buf, &f, 4);
    out.append(buf, 4);
  }
}
inline void payload_read(const char*& p, Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      float f;
      std::memcpy(&f, p, 4);
      p += 4;
      m(r, c) = static_cast<double>(f);
    }
}
inline void payload_read(const char*& p, Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    float f;
    std::memcpy(&f, p, 4);
    p += 4;
    v(i) = static_cast<double>(f);
  }
}
}  // namespace detail

inline BaseWeights init_weights(const ModelConfig& cfg, std::uint64_t seed, double init_std = 0.08) {
  BaseWeights w;
  w.cfg = cfg;
  Rng rng(derive_seed(seed, "base_weights"));
  auto randm = [&](int r, int c) {
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = rng.normal() * init_std;
    return m;
  };
  w.wte = randm(cfg.vocab, cfg.d_model);
  w.wpe = randm(cfg.context, cfg.d_model);
  for (int b = 0; b < cfg.n_blocks; ++b) {
    Block blk;
    blk.ln1_g = Vec::Ones(cfg.d_model);
    blk.ln1_b = Vec::Zero(cfg.d_model);
    blk.wq = randm(cfg.d_model, cfg.d_model);
    blk.wk = randm(cfg.d_model, cfg.d_model);
    blk.wv = randm(cfg.d_model, cfg.d_model);
    blk.wo = randm(cfg.d_model, cfg.d_model);
    blk.ln2_g = Vec::Ones(cfg.d_model);
    blk.ln2_b = Vec::Zero(cfg.d_model);
    blk.w1 = randm(cfg.d_model, cfg.d_ff());
    blk.b1 = Vec::Zero(cfg.d_ff());
    blk.w2 = randm(cfg.d_ff(), cfg.d_model);
    blk.b2 = Vec::Zero(cfg.d_model);
    w.blocks.push_back(std::move(blk));
  }
  w.lnf_g = Vec::Ones(cfg.d_model);
  w.lnf_b = Vec::Zero(cfg.d_model);
  return w;
}

// Serializes every tensor to float32 in for_each_tensor order and returns the
// raw payload; the checksum is FNV-1a64 over these bytes.
inline std::string weights_payload(const BaseWeights& w) {
  std::string payload;
  w.for_each_tensor([&](const std::string&, const auto& t) { detail::payload_append(payload, t); });
  return payload;
}

inline std::string weights_checksum(const BaseWeights& w) {
  const std::string payload = weights_payload(w);
  return hex64(fnv1a(payload.data(), payload.size()));
}

inline void save_weights(const BaseWeights& w, const std::string& path) {
  const std::string payload = weights_payload(w);
  nlohmann::ordered_json header;
  header["format"] = "potw1";
  header["d_model"] = w.cfg.d_model;
  header["n_blocks"] = w.cfg.n_blocks;
  header["n_heads"] = w.cfg.n_heads;
  header["ffn_mult"] = w.cfg.ffn_mult;
  header["context"] = w.cfg.context;
  header["vocab_size"] = w.cfg.vocab;
  nlohmann::ordered_json vocab = nlohmann::ordered_json::array();
  for (auto name : token_names()) vocab.push_back(std::string(name));
  header["vocab"] = std::move(vocab);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  w.for_each_tensor([&](const std::string& name, const auto& t) {
    nlohmann::ordered_json tj;
    tj["name"] = name;
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Mat>)
      tj["shape"] = {t.rows(), t.cols()};
    else
      tj["shape"] = {t.size()};
    tensors.push_back(std::move(tj));
  });
  header["tensors"] = std::move(tensors);
  header["checksum"] = hex64(fnv1a(payload.data(), payload.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write snapshot: " + path);
  out << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

inline BaseWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open snapshot: " + path);
  std::string header_line;
  std::getline(in, header_line);
  const auto header = nlohmann::ordered_json::parse(header_line);
  if (header.at("format") != "potw1") throw std::runtime_error("unknown snapshot format");

  ModelConfig cfg;
  cfg.d_model = header.at("d_model");
  cfg.n_blocks = header.at("n_blocks");
  cfg.n_heads = header.at("n_heads");
  cfg.ffn_mult = header.at("ffn_mult");
  cfg.context = header.at("context");
  cfg.vocab = header.at("vocab_size");
  if (cfg.vocab != kVocabSize) throw std::runtime_error("snapshot vocabulary size mismatch");

  BaseWeights w;
  w.cfg = cfg;
  w.wte.resize(cfg.vocab, cfg.d_model);
  w.wpe.resize(cfg.context, cfg.d_model);
  w.blocks.resize(cfg.n_blocks);
  for (Block& b : w.blocks) {
    b.ln1_g.resize(cfg.d_model);
    b.ln1_b.resize(cfg.d_model);
    b.wq.resize(cfg.d_model, cfg.d_model);
    b.wk.resize(cfg.d_model, cfg.d_model);
    b.wv.resize(cfg.d_model, cfg.d_model);
    b.wo.resize(cfg.d_model, cfg.d_model);
    b.ln2_g.resize(cfg.d_model);
    b.ln2_b.resize(cfg.d_model);
    b.w1.resize(cfg.d_model, cfg.d_ff());
    b.b1.resize(cfg.d_ff());
    b.w2.resize(cfg.d_ff(), cfg.d_model);
    b.b2.resize(cfg.d_model);
  }
  w.lnf_g.resize(cfg.d_model);
  w.lnf_b.resize(cfg.d_model);

  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t expected = 0;
  w.for_each_tensor([&](const std::string&, const auto& t) { expected += static_cast<std::size_t>(t.size()) * 4; });
  if (payload.size() != expected) throw std::runtime_error("snapshot payload size mismatch");
  const std::string sum = hex64(fnv1a(payload.data(), payload.size()));
  if (sum != header.at("checksum").get<std::string>())
    throw std::runtime_error("snapshot checksum mismatch");

  const char* p = payload.data();
  w.for_each_tensor([&](const std::string&, auto& t) { detail::payload_read(p, t); });
  w.checksum = sum;
  return w;
}

}  // namespace pot::model
