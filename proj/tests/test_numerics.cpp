#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "orthros/autograd.hpp"
#include "orthros/error.hpp"

using namespace orthros;

namespace {

Array random_array(std::vector<int64_t> shape, SplitMix64& rng, double scale = 1.0) {
  Array a(std::move(shape));
  for (double& v : a.data) v = scale * rng.normal();
  return a;
}

}  // namespace

TEST_CASE("affine identity and hand-summed cases") {
  Var x = Var::constant(Array::from({1, 2}, {1.0, 0.0}));
  Var w = Var::constant(Array::from({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  Var b = Var::constant(Array({2}, 0.0));
  Array y = affine(x, w, b).value();
  CHECK(y.data == std::vector<double>{1.0, 0.0});

  Var x2 = Var::constant(Array::from({1, 2}, {1.0, 2.0}));
  Var w2 = Var::constant(Array::from({2, 1}, {1.0, 1.0}));
  Var b2 = Var::constant(Array::from({1}, {1.0}));
  CHECK(affine(x2, w2, b2).value().data[0] == doctest::Approx(4.0));
}

TEST_CASE("affine matches the naive triple-loop definition") {
  SplitMix64 rng(11);
  Array xa = random_array({3, 4}, rng);
  Array wa = random_array({4, 2}, rng);
  Array ba = random_array({2}, rng);
  Array y = affine(Var::constant(xa), Var::constant(wa), Var::constant(ba)).value();
  for (int64_t i = 0; i < 3; ++i) {
    for (int64_t j = 0; j < 2; ++j) {
      double want = ba[j];
      for (int64_t k = 0; k < 4; ++k) want += xa.at2(i, k) * wa.at2(k, j);
      CHECK(y.at2(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("affine rejects mismatched inner dims naming both shapes") {
  Var x = Var::constant(Array({2, 3}, 1.0));
  Var w = Var::constant(Array({4, 2}, 1.0));
  Var b = Var::constant(Array({2}, 0.0));
  try {
    affine(x, w, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("softmax closed forms") {
  CHECK(softmax(Var::constant(Array::from({2}, {0.0, 0.0}))).value().data[0] == doctest::Approx(0.5));
  // stabilization: large equal logits must not overflow
  Array big = softmax(Var::constant(Array::from({2}, {1000.0, 1000.0}))).value();
  CHECK(big.data[0] == doctest::Approx(0.5));
  CHECK(big.data[1] == doctest::Approx(0.5));
  Array thirds = softmax(Var::constant(Array::from({2}, {0.0, std::log(3.0)}))).value();
  CHECK(thirds.data[0] == doctest::Approx(0.25));
  CHECK(thirds.data[1] == doctest::Approx(0.75));
}

TEST_CASE("softmax rows are probability vectors") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Array x = random_array({4, 7}, rng, 3.0);
    Array y = softmax(Var::constant(x)).value();
    for (int64_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (int64_t c = 0; c < 7; ++c) {
        CHECK(y.at2(r, c) >= 0.0);
        sum += y.at2(r, c);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("layer_norm closed forms and recomputation oracle") {
  Var g = Var::constant(Array({3}, 1.0));
  Var b = Var::constant(Array({3}, 0.0));
  Array constant_row = layer_norm(Var::constant(Array({1, 3}, 2.5)), g, b).value();
  for (double v : constant_row.data) CHECK(v == doctest::Approx(0.0));

  Var g2 = Var::constant(Array({2}, 1.0));
  Var b2 = Var::constant(Array({2}, 0.0));
  Array pm = layer_norm(Var::constant(Array::from({1, 2}, {1.0, -1.0})), g2, b2).value();
  CHECK(pm.data[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(pm.data[1] == doctest::Approx(-1.0).epsilon(1e-4));

  SplitMix64 rng(17);
  Array x = random_array({5, 16}, rng, 2.0);
  Var g3 = Var::constant(Array({16}, 1.0));
  Var b3 = Var::constant(Array({16}, 0.0));
  Array y = layer_norm(Var::constant(x), g3, b3).value();
  for (int64_t r = 0; r < 5; ++r) {
    double mean = 0.0, var = 0.0;
    for (int64_t c = 0; c < 16; ++c) mean += y.at2(r, c);
    mean /= 16.0;
    for (int64_t c = 0; c < 16; ++c) var += (y.at2(r, c) - mean) * (y.at2(r, c) - mean);
    var /= 16.0;
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs(var - 1.0) <= 1e-3);  // eps in the denominator shifts variance slightly
  }
}

TEST_CASE("depthwise_conv1d delta kernel is the identity") {
  SplitMix64 rng(23);
  Array x = random_array({2, 6, 3}, rng);
  Array k({5, 3}, 0.0);
  for (int64_t d = 0; d < 3; ++d) k.at2(2, d) = 1.0;  // delta at center
  Array y = depthwise_conv1d(Var::constant(x), Var::constant(k)).value();
  CHECK(y.data == x.data);
}

TEST_CASE("depthwise_conv1d moving average and nested-loop oracle") {
  Array x({1, 3, 1}, 0.0);
  x.data = {0.0, 3.0, 0.0};
  Array k({3, 1}, 1.0 / 3.0);
  Array y = depthwise_conv1d(Var::constant(x), Var::constant(k)).value();
  CHECK(y.data[0] == doctest::Approx(1.0));
  CHECK(y.data[1] == doctest::Approx(1.0));
  CHECK(y.data[2] == doctest::Approx(1.0));

  SplitMix64 rng(29);
  Array xr = random_array({2, 7, 4}, rng);
  Array kr = random_array({5, 4}, rng);
  Array yr = depthwise_conv1d(Var::constant(xr), Var::constant(kr)).value();
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t t = 0; t < 7; ++t)
      for (int64_t d = 0; d < 4; ++d) {
        double want = 0.0;
        for (int64_t kk = 0; kk < 5; ++kk) {
          int64_t src = t + kk - 2;
          if (src < 0 || src >= 7) continue;
          want += xr.at3(b, src, d) * kr.at2(kk, d);
        }
        CHECK(yr.at3(b, t, d) == doctest::Approx(want).epsilon(1e-12));
      }
}

TEST_CASE("depthwise_conv1d rejects even kernels") {
  Var x = Var::constant(Array({1, 4, 2}, 1.0));
  Var k = Var::constant(Array({4, 2}, 1.0));
  CHECK_THROWS_AS(depthwise_conv1d(x, k), ConfigError);
}

TEST_CASE("grad_check on a closed-form quadratic") {
  Var x = Var::param(Array::from({2}, {1.0, 2.0}));
  auto f = [&]() { return sum_all(mul(x, x)) ; };
  Var loss = f();
  x.zero_grad();
  loss.backward();
  CHECK(x.grad().data[0] == doctest::Approx(2.0));
  CHECK(x.grad().data[1] == doctest::Approx(4.0));
  CHECK(grad_check(f, {x}) < 1e-6);
}

TEST_CASE("grad_check on a masked CE toy batch") {
  SplitMix64 rng(31);
  Var logits = Var::param(random_array({1, 2, 5}, rng));
  auto f = [&]() { return smoothed_ce(logits, {3, 1}, {0.5, 0.5}, 0.1); };
  CHECK(grad_check(f, {logits}) < 1e-3);
}

TEST_CASE("reverse-mode matches finite differences on random composite graphs") {
  SplitMix64 rng(37);
  for (int trial = 0; trial < 5; ++trial) {
    Var a = Var::param(random_array({2, 3, 4}, rng, 0.5));
    Var w = Var::param(random_array({4, 6}, rng, 0.5));
    Var b = Var::param(random_array({6}, rng, 0.1));
    Var g = Var::param(Array({6}, 1.0));
    Var beta = Var::param(Array({6}, 0.0));
    Var kern = Var::param(random_array({3, 6}, rng, 0.5));
    auto f = [&]() {
      Var h = affine(a, w, b);
      h = layer_norm(h, g, beta);
      h = silu(depthwise_conv1d(h, kern));
      Var s = softmax(h);
      return mean_all(mul(s, h));
    };
    CHECK(grad_check(f, {a, w, b, g, beta, kern}, 1e-5) < 1e-3);
  }
}

TEST_CASE("bmm and attention-shaped ops differentiate correctly") {
  SplitMix64 rng(41);
  Var q = Var::param(random_array({2, 3, 4}, rng, 0.5));
  Var k = Var::param(random_array({2, 5, 4}, rng, 0.5));
  Var v = Var::param(random_array({2, 5, 4}, rng, 0.5));
  Var bias = Var::param(Array({2, 2 * 3 + 1}, 0.0));
  Array mask({1, 1, 5}, 0.0);
  mask.data[4] = -1e30;
  auto f = [&]() {
    Var scores = scale(bmm_nt(q, k), 0.5);
    scores = relative_bias_add(scores, bias, 2);
    scores = attn_mask_add(scores, mask, 2);
    Var ctx = bmm(softmax(scores), v);
    return mean_all(mul(ctx, ctx));
  };
  CHECK(grad_check(f, {q, k, v, bias}, 1e-5) < 1e-3);
}

TEST_CASE("embedding scatter gradient") {
  SplitMix64 rng(43);
  Var table = Var::param(random_array({6, 3}, rng));
  auto f = [&]() {
    Var e = embedding(table, {1, 1, 4, 0}, 2, 2);
    return mean_all(mul(e, e));
  };
  CHECK(grad_check(f, {table}, 1e-5) < 1e-3);
}

TEST_CASE("dropout scales kept activations and is deterministic per seed") {
  Array x({1000}, 1.0);
  SplitMix64 rng(51);
  Array y = dropout(Var::constant(x), 0.25, rng).value();
  int kept = 0;
  for (double v : y.data) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 650);
  CHECK(kept < 850);
  SplitMix64 rng2(51);
  Array y2 = dropout(Var::constant(x), 0.25, rng2).value();
  CHECK(y.data == y2.data);
}

TEST_CASE("non-finite loss is rejected") {
  Var x = Var::param(Array::from({1}, {-1.0}));
  auto f = [&]() {
    Array bad = Array::scalar(std::log(x.value().data[0]));  // NaN
    return Var::constant(bad);
  };
  CHECK_THROWS_AS(grad_check(f, {x}), NumericError);
}
