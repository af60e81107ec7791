#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "orthros/data.hpp"
#include "orthros/error.hpp"

using namespace orthros;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool samples_equal(const Sample& a, const Sample& b) {
  return a.id == b.id && a.tgt == b.tgt && a.src == b.src && a.frames.shape == b.frames.shape &&
         a.frames.data == b.frames.data;
}

}  // namespace

TEST_CASE("vocabulary layout and round trip") {
  Vocabulary v = Vocabulary::make(32);
  CHECK(v.size() == 32);
  CHECK(v.blank_id == 0);
  CHECK(v.content_count() == 27);
  std::string path = temp_path("vocab_test.json");
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded.tokens == v.tokens);
  CHECK(loaded.mask_id == v.mask_id);
  CHECK_THROWS_AS(Vocabulary::make(5), ConfigError);
}

TEST_CASE("translation is substitution plus bigram swap") {
  const uint64_t seed = 99;
  const int vs = 32;
  int a = 7, b = 12;
  int pa = translate_tokens({a}, seed, vs)[0];  // odd length: substituted, not swapped
  int pb = translate_tokens({b}, seed, vs)[0];
  std::vector<int> y = translate_tokens({a, b}, seed, vs);
  CHECK(y == std::vector<int>{pb, pa});
  // odd tail stays in place
  int c = 20;
  int pc = translate_tokens({c}, seed, vs)[0];
  CHECK(translate_tokens({a, b, c}, seed, vs) == std::vector<int>{pb, pa, pc});
}

TEST_CASE("translation is invertible so exact match is well defined") {
  const uint64_t seed = 4242;
  const int vs = 32;
  // recover the permutation from singleton translations, then invert
  std::vector<int> inverse(vs, -1);
  for (int c = 5; c < vs; ++c) inverse[static_cast<size_t>(translate_tokens({c}, seed, vs)[0])] = c;
  SplitMix64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    int n = static_cast<int>(rng.range(1, 12));
    std::vector<int> z;
    for (int i = 0; i < n; ++i) z.push_back(5 + static_cast<int>(rng.range(0, vs - 6)));
    std::vector<int> y = translate_tokens(z, seed, vs);
    // invert: unswap bigrams, then apply the inverse substitution
    std::vector<int> back = y;
    for (size_t i = 0; i + 1 < back.size(); i += 2) std::swap(back[i], back[i + 1]);
    for (int& t : back) t = inverse[static_cast<size_t>(t)];
    CHECK(back == z);
  }
}

TEST_CASE("noiseless generation emits exact token embeddings") {
  GenConfig gc;
  gc.seed = 13;
  gc.n_samples = 20;
  gc.noise_std = 0.0;
  gc.repeat_min = 5;
  gc.repeat_max = 8;
  Array table = frame_embedding_table(gc.seed, gc.vocab_size, gc.frame_dim);
  for (const Sample& s : gen_corpus(gc)) {
    // every frame must be bit-equal to one of the sample's source embeddings
    for (int64_t t = 0; t < s.frames.dim(0); ++t) {
      bool matched = false;
      for (int tok : s.src) {
        bool eq = true;
        for (int d = 0; d < gc.frame_dim; ++d) {
          if (s.frames.at2(t, d) != table.at2(tok - 5, d)) {
            eq = false;
            break;
          }
        }
        matched = matched || eq;
      }
      CHECK(matched);
    }
  }
}

TEST_CASE("generation is deterministic and enforces the CTC length margin") {
  GenConfig gc;
  gc.seed = 77;
  gc.n_samples = 150;
  auto a = gen_corpus(gc);
  auto b = gen_corpus(gc);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(samples_equal(a[i], b[i]));
  for (const Sample& s : a) {
    int n = static_cast<int>(s.tgt.size());
    CHECK(s.frames.dim(0) >= 4 * n + 4);
    CHECK(s.src.size() == s.tgt.size());
  }
}

TEST_CASE("generator rejects invalid ranges") {
  GenConfig gc;
  gc.repeat_min = 0;
  CHECK_THROWS_AS(gen_corpus(gc), ConfigError);
  GenConfig g2;
  g2.vocab_size = 7;
  CHECK_THROWS_AS(gen_corpus(g2), ConfigError);
  GenConfig g3;
  g3.len_max = 65;
  CHECK_THROWS_AS(gen_corpus(g3), ConfigError);
}

TEST_CASE("dataset save/load round trip") {
  GenConfig gc;
  gc.seed = 3;
  gc.n_samples = 12;
  auto samples = gen_corpus(gc);
  std::string path = temp_path("dataset_roundtrip.jsonl");
  save_dataset(samples, path);
  auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) CHECK(samples_equal(samples[i], loaded[i]));
}

TEST_CASE("empty dataset round trips") {
  std::string path = temp_path("dataset_empty.jsonl");
  save_dataset({}, path);
  CHECK(load_dataset(path).empty());
}

TEST_CASE("truncated dataset reports the offending line") {
  std::string path = temp_path("dataset_truncated.jsonl");
  {
    std::ofstream out(path);
    out << R"({"id":0,"frames":[[0.0]],"tgt":[5],"src":[5]})" << "\n";
    out << R"({"id":1,"frames":[[0.0)" << "\n";
  }
  try {
    load_dataset(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("pad_batch shapes and length vectors") {
  GenConfig gc;
  gc.seed = 21;
  gc.n_samples = 1;
  auto one = gen_corpus(gc);
  Batch single = pad_batch(one, 1);
  CHECK(single.frames.dim(1) == one[0].frames.dim(0));  // no padding added
  CHECK(single.tgt_max == static_cast<int64_t>(one[0].tgt.size()));

  Sample s1;
  s1.id = 0;
  s1.frames = Array({12, 4}, 0.5);
  s1.tgt = {5, 6};
  s1.src = {7, 8};
  Sample s2;
  s2.id = 1;
  s2.frames = Array({20, 4}, 0.25);
  s2.tgt = {9, 10, 11, 12, 13};
  s2.src = {9, 10, 11, 12, 13};
  Batch b = pad_batch({s1, s2}, 1);
  CHECK(b.tgt_max == 5);
  CHECK(b.frame_lens == std::vector<int>{12, 20});
  CHECK(b.tgt_lens == std::vector<int>{2, 5});
  for (int i = 2; i < 5; ++i) CHECK(b.tgt[static_cast<size_t>(i)] == 1);  // pad_id fills row 0
  CHECK(b.frames.at3(0, 15, 0) == 0.0);  // frames zero padded

  CHECK_THROWS_AS(pad_batch({}, 1), UsageError);
}
