#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "orthros/error.hpp"
#include "orthros/eval.hpp"
#include "orthros/train.hpp"

using namespace orthros;
namespace fs = std::filesystem;

TEST_CASE("corpus BLEU closed forms") {
  std::vector<std::vector<int>> refs = {{5, 6, 7, 8}, {9, 10}};
  CHECK(corpus_bleu(refs, refs) == doctest::Approx(100.0));

  std::vector<std::vector<int>> disjoint = {{11, 12, 13, 14}, {11, 12}};
  CHECK(corpus_bleu(disjoint, refs) == doctest::Approx(0.0));

  // hyp [a,b,c] vs ref [a,b,c,d]: p1=p2=p3=1, no 4-grams anywhere in the
  // hypothesis so order 4 drops out; BP = e^(1 - 4/3)
  std::vector<std::vector<int>> hyp = {{5, 6, 7}};
  std::vector<std::vector<int>> ref = {{5, 6, 7, 8}};
  CHECK(corpus_bleu(hyp, ref) == doctest::Approx(100.0 * std::exp(1.0 - 4.0 / 3.0)).epsilon(1e-12));

  CHECK_THROWS_AS(corpus_bleu(hyp, {{}}), UsageError);
  CHECK_THROWS_AS(corpus_bleu(hyp, {}), UsageError);
  // empty hypothesis is legal and scores zero
  CHECK(corpus_bleu({{}}, ref) == doctest::Approx(0.0));
}

TEST_CASE("sentence BLEU uses epsilon smoothing on zero precisions") {
  std::vector<int> hyp = {5, 6, 7};
  std::vector<int> ref = {5, 6, 7, 8};
  double eps = 1e-9;
  double want = 100.0 * std::exp(1.0 - 4.0 / 3.0) * std::exp(std::log(eps) / 4.0);
  CHECK(sentence_bleu(hyp, ref) == doctest::Approx(want).epsilon(1e-9));
  CHECK(sentence_bleu(ref, ref) == doctest::Approx(100.0));
  CHECK(sentence_bleu({}, ref) == doctest::Approx(0.0));
  CHECK_THROWS_AS(sentence_bleu(hyp, {}), UsageError);
}

TEST_CASE("corpus BLEU is invariant to sentence order") {
  SplitMix64 rng(12);
  std::vector<std::vector<int>> hyps, refs;
  for (int i = 0; i < 20; ++i) {
    std::vector<int> r, h;
    int n = 3 + static_cast<int>(rng.range(0, 6));
    for (int t = 0; t < n; ++t) r.push_back(5 + static_cast<int>(rng.range(0, 8)));
    h = r;
    for (int t = 0; t < n; ++t) {
      if (rng.uniform() < 0.3) h[static_cast<size_t>(t)] = 5 + static_cast<int>(rng.range(0, 8));
    }
    hyps.push_back(h);
    refs.push_back(r);
  }
  double base = corpus_bleu(hyps, refs);
  std::vector<int> order(20);
  for (int i = 0; i < 20; ++i) order[static_cast<size_t>(i)] = i;
  for (int i = 19; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.range(0, i))]);
  std::vector<std::vector<int>> ph, pr;
  for (int i : order) {
    ph.push_back(hyps[static_cast<size_t>(i)]);
    pr.push_back(refs[static_cast<size_t>(i)]);
  }
  CHECK(corpus_bleu(ph, pr) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("oracle selection: single candidate, per-sentence monotonicity") {
  std::vector<std::vector<int>> refs = {{5, 6, 7, 8}, {9, 10, 11}};
  std::vector<std::vector<std::vector<int>>> singles = {{{5, 6, 8}}, {{9, 10}}};
  EvalReport plain = evaluate({{5, 6, 8}, {9, 10}}, refs, {0, 1});
  EvalReport orac = oracle_select(singles, refs, {0, 1});
  CHECK(orac.corpus_bleu == doctest::Approx(plain.corpus_bleu));

  // adding a candidate never lowers the per-sentence pick
  SplitMix64 rng(13);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<int> ref;
    int n = 4 + static_cast<int>(rng.range(0, 4));
    for (int t = 0; t < n; ++t) ref.push_back(5 + static_cast<int>(rng.range(0, 6)));
    std::vector<std::vector<int>> cands;
    double best_so_far = -1.0;
    for (int c = 0; c < 5; ++c) {
      std::vector<int> cand = ref;
      for (int t = 0; t < n; ++t) {
        if (rng.uniform() < 0.4) cand[static_cast<size_t>(t)] = 5 + static_cast<int>(rng.range(0, 6));
      }
      cands.push_back(cand);
      double pick = 0.0;
      for (const auto& cc : cands) pick = std::max(pick, sentence_bleu(cc, ref));
      CHECK(pick >= best_so_far - 1e-12);
      best_so_far = pick;
    }
  }

  CHECK_THROWS_AS(oracle_select({{}}, {{5}}, {0}), UsageError);
}

TEST_CASE("per-sentence oracle dominates any fixed selection policy") {
  SplitMix64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> ref;
    int n = 5 + static_cast<int>(rng.range(0, 4));
    for (int t = 0; t < n; ++t) ref.push_back(5 + static_cast<int>(rng.range(0, 6)));
    std::vector<std::vector<int>> cands;
    for (int c = 0; c < 4; ++c) {
      std::vector<int> cand = ref;
      for (int t = 0; t < n; ++t) {
        if (rng.uniform() < 0.35) cand[static_cast<size_t>(t)] = 5 + static_cast<int>(rng.range(0, 6));
      }
      cands.push_back(cand);
    }
    double oracle_pick = -1.0;
    for (const auto& c : cands) oracle_pick = std::max(oracle_pick, sentence_bleu(c, ref));
    int arbitrary = static_cast<int>(rng.range(0, 3));
    CHECK(oracle_pick >= sentence_bleu(cands[static_cast<size_t>(arbitrary)], ref) - 1e-12);
  }
}

TEST_CASE("evaluate fills exact match and oracle columns") {
  std::vector<std::vector<int>> refs = {{5, 6}, {7, 8, 9}};
  std::vector<std::vector<int>> hyps = {{5, 6}, {7, 9, 9}};
  std::vector<std::vector<std::vector<int>>> cands = {{{5, 6}, {6, 5}}, {{7, 9, 9}, {7, 8, 9}}};
  EvalReport r = evaluate(hyps, refs, {3, 4}, &cands);
  CHECK(r.exact_match == doctest::Approx(0.5));
  CHECK(r.oracle_bleu >= r.corpus_bleu);
  REQUIRE(r.sentences.size() == 2);
  CHECK(r.sentences[0].id == 3);
  CHECK(r.sentences[0].sentence_bleu > r.sentences[1].sentence_bleu);
}

TEST_CASE("eval report and CSV write and read back") {
  EvalReport r;
  r.corpus_bleu = 43.25;
  r.exact_match = 0.125;
  r.oracle_bleu = 51.5;
  SentenceRecord s;
  s.id = 7;
  s.hyp = {5, 6};
  s.ref = {5, 6, 7};
  s.sentence_bleu = 31.0;
  r.sentences.push_back(s);
  std::string path = (fs::temp_directory_path() / "eval_rt.json").string();
  write_eval_report(r, path);
  EvalReport back = read_eval_report(path);
  CHECK(back.corpus_bleu == r.corpus_bleu);
  CHECK(back.exact_match == r.exact_match);
  CHECK(back.oracle_bleu == r.oracle_bleu);
  REQUIRE(back.sentences.size() == 1);
  CHECK(back.sentences[0].hyp == s.hyp);
  write_eval_csv(r, (fs::temp_directory_path() / "eval_rt.csv").string());
  CHECK(fs::exists(fs::temp_directory_path() / "eval_rt.csv"));
}

TEST_CASE("bench timing: self-speedup near one and lossless report round trip") {
  ModelConfig mc;
  mc.n_enc_blocks = 1;
  mc.n_dec_blocks = 0;
  mc.n_ar_blocks = 0;
  mc.d_model = 16;
  mc.d_ff = 32;
  mc.n_heads = 2;
  mc.frame_dim = 4;
  mc.vocab_size = 12;
  mc.dropout = 0.0;
  mc.use_ctc_head = true;
  mc.use_length_predictor = false;
  ModelParams p = ModelParams::init(mc, 3);
  Vocabulary vocab = Vocabulary::make(12);
  GenConfig gc;
  gc.seed = 5;
  gc.n_samples = 6;
  gc.vocab_size = 12;
  gc.len_min = 3;
  gc.len_max = 5;
  gc.frame_dim = 4;
  std::vector<Sample> data = gen_corpus(gc);

  DecodeConfig dcfg;
  dcfg.algorithm = Algo::ctc_greedy;
  BenchReport r = bench_decode(p, mc, data, dcfg, dcfg, vocab, 5);
  CHECK(r.speedup > 0.6);
  CHECK(r.speedup < 1.67);
  CHECK(r.mean_ms > 0.0);
  CHECK(r.runs == 5);

  std::string path = (fs::temp_directory_path() / "bench_rt.json").string();
  write_bench_report(r, path);
  BenchReport back = read_bench_report(path);
  CHECK(back.algorithm == r.algorithm);
  CHECK(back.mean_ms == r.mean_ms);
  CHECK(back.stdev_ms == r.stdev_ms);
  CHECK(back.speedup == r.speedup);

  CHECK_THROWS_AS(bench_time(p, mc, {}, dcfg, vocab), UsageError);
}
