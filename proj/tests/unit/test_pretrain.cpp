#include <doctest.h>

#include "pot/pretrain/pretrain.hpp"

using namespace pot;
using namespace pot::pretrain;

TEST_CASE("difficulty mix parsing and sampling proportions") {
  DifficultyMix mix = parse_mix("1:0.5,2:0.5");
  REQUIRE(mix.size() == 2);
  CHECK(mix[0].first == 1);
  CHECK(mix[1].second == 0.5);
  CHECK_THROWS(parse_mix(""));
  CHECK_THROWS(parse_mix("1;0.5"));
  CHECK_THROWS(parse_mix("9:1.0"));

  Rng rng(77);
  int ones = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    if (sample_difficulty(mix, rng) == 1) ++ones;
  CHECK(std::abs(static_cast<double>(ones) / n - 0.5) < 0.03);
}

TEST_CASE("corpus generation is deterministic and well-formed") {
  model::ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.context = 384;

  auto corpus = gen_corpus(120, parse_mix("1:0.6,2:0.4"), 42, cfg);
  REQUIRE(corpus.size() == 120);
  write_corpus("corpus_a.jsonl", corpus);
  write_corpus("corpus_b.jsonl", gen_corpus(120, parse_mix("1:0.6,2:0.4"), 42, cfg));
  std::ifstream fa("corpus_a.jsonl"), fb("corpus_b.jsonl");
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  auto back = read_corpus("corpus_a.jsonl");
  REQUIRE(back.size() == corpus.size());
  CHECK(back[0].tokens == corpus[0].tokens);
  std::remove("corpus_a.jsonl");
  std::remove("corpus_b.jsonl");

  std::set<std::string> unique;
  for (const auto& ex : corpus) {
    REQUIRE(ex.tokens.size() == ex.mask.size());
    REQUIRE(ex.tokens.size() <= static_cast<std::size_t>(cfg.context));
    CHECK(ex.tokens[0] == model::tok::BOS);
    CHECK(ex.tokens.back() == model::tok::EOS);
    CHECK(ex.mask.back() == 1);

    // the masked segment is exactly the gold program plus EOS, and the gold
    // program really is a program
    std::vector<int> masked;
    for (std::size_t i = 0; i < ex.tokens.size(); ++i)
      if (ex.mask[i]) masked.push_back(ex.tokens[i]);
    REQUIRE(!masked.empty());
    CHECK(masked.back() == model::tok::EOS);
    masked.pop_back();
    const std::string text = model::detokenize(masked);
    CHECK(dsl::parse_program(text).has_value());
    unique.insert(text + "|" + std::to_string(ex.tokens.size()));
  }
  CHECK(unique.size() > 40);  // dedup keeps the corpus diverse
}

TEST_CASE("masked positions contribute neither loss nor gradient") {
  model::ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_blocks = 1;
  cfg.n_heads = 2;
  cfg.context = 64;
  model::BaseWeights w = model::init_weights(cfg, 5);

  Rng rng(6);
  std::vector<int> toks;
  for (int i = 0; i < 20; ++i) toks.push_back(static_cast<int>(rng.uniform_int(0, model::kVocabSize - 1)));
  std::vector<int> mask(20, 0);
  for (int i = 12; i < 20; ++i) mask[i] = 1;

  model::Trainer tr(w, nullptr);
  const model::Mat logits = tr.forward(model::StackedSeq::single(toks));
  model::Mat dl;
  const double loss = model::masked_ce_loss(logits, toks, mask, dl);

  // prediction rows whose target is unmasked carry zero gradient
  for (int f = 0; f + 1 < 20; ++f)
    if (!mask[f + 1]) CHECK(dl.row(f).cwiseAbs().maxCoeff() == 0.0);

  // changing an unmasked target leaves the loss value untouched
  std::vector<int> mutated = toks;
  mutated[5] = (mutated[5] + 3) % model::kVocabSize;
  model::Mat dl2;
  const double loss2 = model::masked_ce_loss(logits, mutated, mask, dl2);
  CHECK(loss == loss2);
}

TEST_CASE("pretraining descends the loss on a small corpus") {
  model::ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.context = 384;
  model::BaseWeights w = model::init_weights(cfg, 17);

  auto corpus = gen_corpus(80, parse_mix("1:1.0"), 7, cfg);
  PretrainConfig pc;
  pc.epochs = 3;
  pc.batch_size = 16;
  pc.lr = 4e-3;
  PretrainResult res = pot::pretrain::pretrain(w, corpus, pc);
  CHECK(res.final_loss < res.initial_loss);
  CHECK(!w.checksum.empty());

  // snapshot round-trip preserves the checksum and the forward pass
  save_weights(w, "micro.potw");
  model::BaseWeights back = model::load_weights("micro.potw");
  CHECK(back.checksum == w.checksum);
  std::remove("micro.potw");
}
