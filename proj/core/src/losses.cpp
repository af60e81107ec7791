#include "orthros/losses.hpp"

#include <algorithm>
#include <cmath>

#include "orthros/error.hpp"

namespace orthros {

namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

int adjacent_repeats(const int* y, int n) {
  int r = 0;
  for (int i = 1; i < n; ++i)
    if (y[i] == y[i - 1]) ++r;
  return r;
}

// Forward-backward over the blank-augmented lattice for one sample.
// logits: row-major [U,V] slice. Returns the loss; when grad is non-null,
// accumulates upstream * dloss/dlogits into it.
double ctc_single(const double* logits, int u, int v, const int* y, int n, double upstream,
                  double* grad) {
  if (u < 1) throw UsageError("ctc: empty input");
  int need = n + adjacent_repeats(y, n);
  if (u < need) {
    throw InfeasibleAlignmentError("ctc: input length " + std::to_string(u) +
                                   " cannot align target of length " + std::to_string(n) +
                                   " (needs >= " + std::to_string(need) + " frames)");
  }
  for (int i = 0; i < n; ++i) {
    if (y[i] <= 0 || y[i] >= v) {
      throw UsageError("ctc: label " + std::to_string(y[i]) + " out of range (blank is 0)");
    }
  }
  // log-softmax per frame
  std::vector<double> lp(static_cast<size_t>(u) * v);
  for (int t = 0; t < u; ++t) {
    const double* in = logits + static_cast<int64_t>(t) * v;
    double mx = in[0];
    for (int k = 1; k < v; ++k) mx = std::max(mx, in[k]);
    if (std::isnan(mx)) throw NumericError("ctc: NaN logits");
    double z = 0.0;
    for (int k = 0; k < v; ++k) z += std::exp(in[k] - mx);
    double logz = std::log(z) + mx;
    for (int k = 0; k < v; ++k) lp[static_cast<size_t>(t) * v + k] = in[k] - logz;
  }
  int s_len = 2 * n + 1;
  auto lab = [&](int s) { return (s % 2 == 0) ? 0 : y[s / 2]; };
  auto emit = [&](int t, int s) { return lp[static_cast<size_t>(t) * v + lab(s)]; };

  std::vector<double> alpha(static_cast<size_t>(u) * s_len, kLogZero);
  alpha[0] = emit(0, 0);
  if (s_len > 1) alpha[1] = emit(0, 1);
  for (int t = 1; t < u; ++t) {
    for (int s = 0; s < s_len; ++s) {
      double best = alpha[static_cast<size_t>(t - 1) * s_len + s];
      if (s >= 1) best = log_sum_exp(best, alpha[static_cast<size_t>(t - 1) * s_len + s - 1]);
      if (s >= 2 && lab(s) != 0 && lab(s) != lab(s - 2)) {
        best = log_sum_exp(best, alpha[static_cast<size_t>(t - 1) * s_len + s - 2]);
      }
      alpha[static_cast<size_t>(t) * s_len + s] = best == kLogZero ? kLogZero : best + emit(t, s);
    }
  }
  double logz = alpha[static_cast<size_t>(u - 1) * s_len + s_len - 1];
  if (s_len > 1) logz = log_sum_exp(logz, alpha[static_cast<size_t>(u - 1) * s_len + s_len - 2]);
  if (logz == kLogZero) throw InfeasibleAlignmentError("ctc: no feasible alignment path");
  double loss = -logz;

  if (grad) {
    // beta[t][s] excludes the emission at t, so alpha+beta is the posterior.
    std::vector<double> beta(static_cast<size_t>(u) * s_len, kLogZero);
    beta[static_cast<size_t>(u - 1) * s_len + s_len - 1] = 0.0;
    if (s_len > 1) beta[static_cast<size_t>(u - 1) * s_len + s_len - 2] = 0.0;
    for (int t = u - 2; t >= 0; --t) {
      for (int s = 0; s < s_len; ++s) {
        double acc = beta[static_cast<size_t>(t + 1) * s_len + s] + emit(t + 1, s);
        if (s + 1 < s_len) {
          acc = log_sum_exp(acc, beta[static_cast<size_t>(t + 1) * s_len + s + 1] + emit(t + 1, s + 1));
        }
        if (s + 2 < s_len && lab(s + 2) != 0 && lab(s + 2) != lab(s)) {
          acc = log_sum_exp(acc, beta[static_cast<size_t>(t + 1) * s_len + s + 2] + emit(t + 1, s + 2));
        }
        beta[static_cast<size_t>(t) * s_len + s] = acc;
      }
    }
    // dL/d logp[t][k] = -sum_{s: lab(s)=k} gamma[t][s]; chain through the
    // log-softmax gives dL/du[t][j] = dL/dlogp[t][j] + softmax[t][j].
    std::vector<double> dlp(static_cast<size_t>(v), 0.0);
    for (int t = 0; t < u; ++t) {
      std::fill(dlp.begin(), dlp.end(), 0.0);
      for (int s = 0; s < s_len; ++s) {
        double a = alpha[static_cast<size_t>(t) * s_len + s];
        double b = beta[static_cast<size_t>(t) * s_len + s];
        if (a == kLogZero || b == kLogZero) continue;
        dlp[static_cast<size_t>(lab(s))] -= std::exp(a + b - logz);
      }
      double* g = grad + static_cast<int64_t>(t) * v;
      const double* lpt = lp.data() + static_cast<size_t>(t) * v;
      for (int k = 0; k < v; ++k) g[k] += upstream * (dlp[static_cast<size_t>(k)] + std::exp(lpt[k]));
    }
  }
  return loss;
}


}  // namespace

void LossWeights::validate() const {
  if (lambda_lp < 0 || lambda_ar < 0 || lambda_mt < 0) throw ConfigError("loss weights must be >= 0");
  if (lambda_ctc < 0 || lambda_ctc > 1) throw ConfigError("lambda_ctc must be in [0,1]");
  if (mmt_passes < 1) throw ConfigError("mmt_passes (M) must be >= 1");
  if (label_smoothing < 0 || label_smoothing >= 1) throw ConfigError("label_smoothing must be in [0,1)");
  if (p_thres < 0 || p_thres > 1) throw ConfigError("p_thres must be in [0,1]");
}

MaskDraw draw_mask(int n, SplitMix64& rng) {
  if (n < 1) throw UsageError("draw_mask: target length must be >= 1");
  MaskDraw d;
  d.n_mask = static_cast<int>(rng.range(1, n));
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (int i = 0; i < d.n_mask; ++i) {
    int j = static_cast<int>(rng.range(i, n - 1));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  d.positions.assign(idx.begin(), idx.begin() + d.n_mask);
  std::sort(d.positions.begin(), d.positions.end());
  return d;
}

std::vector<int> apply_mask(const std::vector<int>& tokens, const std::vector<int>& lens,
                            int64_t len_max, const std::vector<MaskDraw>& draws, int mask_id) {
  if (draws.size() != lens.size()) {
    throw ShapeError("apply_mask: " + std::to_string(draws.size()) + " draws for " +
                     std::to_string(lens.size()) + " rows");
  }
  std::vector<int> out = tokens;
  for (size_t b = 0; b < draws.size(); ++b) {
    for (int pos : draws[b].positions) {
      if (pos < 0 || pos >= lens[b]) {
        throw UsageError("apply_mask: position " + std::to_string(pos) + " outside length " +
                         std::to_string(lens[b]));
      }
      out[b * static_cast<size_t>(len_max) + static_cast<size_t>(pos)] = mask_id;
    }
  }
  return out;
}

Var masked_ce(const Var& logits, const std::vector<int>& tgt, const std::vector<int>& tgt_lens,
              int64_t len_max, const std::vector<MaskDraw>& draws, double label_smoothing) {
  int64_t b = static_cast<int64_t>(tgt_lens.size());
  if (logits.value().rank() != 3 || logits.value().dim(0) != b || logits.value().dim(1) != len_max) {
    throw ShapeError("masked_ce: logits " + logits.value().shape_str() + " vs [" +
                     std::to_string(b) + "," + std::to_string(len_max) + ",V]");
  }
  if (static_cast<int64_t>(draws.size()) != b) {
    throw ShapeError("masked_ce: " + std::to_string(draws.size()) + " draws for batch " + std::to_string(b));
  }
  std::vector<double> weights(static_cast<size_t>(b * len_max), 0.0);
  for (int64_t i = 0; i < b; ++i) {
    const MaskDraw& d = draws[static_cast<size_t>(i)];
    if (d.n_mask < 1 || d.positions.empty()) throw UsageError("masked_ce: empty mask draw");
    double w = 1.0 / (static_cast<double>(d.positions.size()) * static_cast<double>(b));
    for (int pos : d.positions) {
      if (pos < 0 || pos >= tgt_lens[static_cast<size_t>(i)]) {
        throw UsageError("masked_ce: masked position " + std::to_string(pos) + " outside target");
      }
      weights[static_cast<size_t>(i * len_max + pos)] = w;
    }
  }
  return smoothed_ce(logits, tgt, weights, label_smoothing);
}

Var ar_ce(const Var& logits, const std::vector<int>& tgt, const std::vector<int>& tgt_lens,
          int64_t len_max, int eos_id, double label_smoothing) {
  int64_t b = static_cast<int64_t>(tgt_lens.size());
  int64_t steps = logits.value().dim(1);
  if (logits.value().rank() != 3 || logits.value().dim(0) != b || steps < len_max + 1) {
    throw ShapeError("ar_ce: logits " + logits.value().shape_str() + " vs targets [" +
                     std::to_string(b) + "," + std::to_string(len_max) + "]+eos");
  }
  std::vector<int> targets(static_cast<size_t>(b * steps), 0);
  std::vector<double> weights(static_cast<size_t>(b * steps), 0.0);
  for (int64_t i = 0; i < b; ++i) {
    int n = tgt_lens[static_cast<size_t>(i)];
    double w = 1.0 / (static_cast<double>(n + 1) * static_cast<double>(b));
    for (int t = 0; t < n; ++t) {
      targets[static_cast<size_t>(i * steps + t)] = tgt[static_cast<size_t>(i * len_max + t)];
      weights[static_cast<size_t>(i * steps + t)] = w;
    }
    targets[static_cast<size_t>(i * steps + n)] = eos_id;
    weights[static_cast<size_t>(i * steps + n)] = w;
  }
  return smoothed_ce(logits, targets, weights, label_smoothing);
}

namespace {

Var ctc_batch_op(const Var& logits, std::vector<int> input_lens, std::vector<int> flat_tgt,
                 std::vector<int> tgt_lens, int64_t len_max) {
  const Array& lv = logits.value();
  int64_t b = lv.dim(0), u = lv.dim(1), v = lv.dim(2);
  if (static_cast<int64_t>(input_lens.size()) != b || static_cast<int64_t>(tgt_lens.size()) != b) {
    throw ShapeError("ctc_loss: lengths do not match batch " + lv.shape_str());
  }
  double total = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    int ui = input_lens[static_cast<size_t>(i)];
    if (ui < 1 || ui > u) throw UsageError("ctc_loss: input length " + std::to_string(ui));
    total += ctc_single(lv.data.data() + i * u * v, ui, static_cast<int>(v),
                        flat_tgt.data() + i * len_max, tgt_lens[static_cast<size_t>(i)], 0.0, nullptr);
  }
  total /= static_cast<double>(b);
  auto parent = logits.node();
  auto n = std::make_shared<Node>();
  n->value = Array::scalar(total);
  if (GradMode::enabled() && parent->requires_grad) {
    n->requires_grad = true;
    n->parents = {parent};
    n->backward_fn = [input_lens = std::move(input_lens), flat_tgt = std::move(flat_tgt),
                      tgt_lens = std::move(tgt_lens), len_max, b, u, v](Node& self) {
      const Array& lv = self.parents[0]->value;
      double up = self.grad.data[0] / static_cast<double>(b);
      double* g = self.parents[0]->ensure_grad().data.data();
      for (int64_t i = 0; i < b; ++i) {
        ctc_single(lv.data.data() + i * u * v, input_lens[static_cast<size_t>(i)],
                   static_cast<int>(v), flat_tgt.data() + i * len_max,
                   tgt_lens[static_cast<size_t>(i)], up, g + i * u * v);
      }
    };
  }
  return Var::wrap(std::move(n));
}

}  // namespace

Var ctc_loss(const Var& logits, const std::vector<int>& y) {
  const Array& lv = logits.value();
  if (lv.rank() != 2) throw ShapeError("ctc_loss: expected [U,V] logits, got " + lv.shape_str());
  int64_t u = lv.dim(0), v = lv.dim(1);
  int n = static_cast<int>(y.size());
  if (u < n) {
    throw InfeasibleAlignmentError("ctc_loss: input length " + std::to_string(u) +
                                   " shorter than target length " + std::to_string(n));
  }
  Var batched = reshape(logits, {1, u, v});
  std::vector<int> flat = y;
  if (flat.empty()) flat.push_back(0);  // placeholder, len 0 never reads it
  return ctc_batch_op(batched, {static_cast<int>(u)}, std::move(flat), {n},
                      std::max<int64_t>(1, n));
}

Var ctc_loss_batch(const Var& logits, const std::vector<int>& input_lens,
                   const std::vector<int>& tgt, const std::vector<int>& tgt_lens, int64_t len_max) {
  for (size_t i = 0; i < tgt_lens.size(); ++i) {
    if (input_lens[i] < tgt_lens[i]) {
      throw InfeasibleAlignmentError("ctc_loss: input length " + std::to_string(input_lens[i]) +
                                     " shorter than target length " + std::to_string(tgt_lens[i]));
    }
  }
  return ctc_batch_op(logits, input_lens, tgt, tgt_lens, len_max);
}

Var length_loss(const Var& length_logits, const std::vector<int>& tgt_lens) {
  const Array& lv = length_logits.value();
  int64_t b = lv.dim(0), classes = lv.dim(1);
  if (static_cast<int64_t>(tgt_lens.size()) != b) {
    throw ShapeError("length_loss: " + std::to_string(tgt_lens.size()) + " lengths for logits " +
                     lv.shape_str());
  }
  for (int n : tgt_lens) {
    if (n >= classes) {
      throw ShapeError("length_loss: target length " + std::to_string(n) + " exceeds L_max " +
                       std::to_string(classes - 1));
    }
  }
  std::vector<double> weights(static_cast<size_t>(b), 1.0 / static_cast<double>(b));
  return smoothed_ce(length_logits, tgt_lens, weights, 0.0);
}

Var smart_loss(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
               const EncoderOutput& enc, double label_smoothing, int mask_id,
               SplitMix64& mask_rng, const Fwd& ctx) {
  if (!cfg.has_cmlm()) throw ConfigError("smart_loss: CMLM decoder is disabled");
  int64_t b = batch.size(), nmax = batch.tgt_max;
  std::vector<MaskDraw> draws1, draws2;
  for (int n : batch.tgt_lens) draws1.push_back(draw_mask(n, mask_rng));
  for (int n : batch.tgt_lens) draws2.push_back(draw_mask(n, mask_rng));

  // Pass 1: predictions at every position, gradients truncated.
  std::vector<int> predicted(batch.tgt);
  {
    NoGradGuard ng;
    std::vector<int> in1 = apply_mask(batch.tgt, batch.tgt_lens, nmax, draws1, mask_id);
    Var logits = cmlm_forward(p, cfg, in1, batch.tgt_lens, nmax, enc, ctx);
    const Array& lg = logits.value();
    int64_t v = lg.dim(2);
    for (int64_t i = 0; i < b; ++i) {
      for (int t = 0; t < batch.tgt_lens[static_cast<size_t>(i)]; ++t) {
        const double* row = lg.data.data() + (i * nmax + t) * v;
        int best = 0;
        for (int64_t k = 1; k < v; ++k)
          if (row[k] > row[best]) best = static_cast<int>(k);
        predicted[static_cast<size_t>(i * nmax + t)] = best;
      }
    }
  }

  // Pass 2: fresh masking of the predictions, CE at all non-pad positions.
  std::vector<int> in2 = apply_mask(predicted, batch.tgt_lens, nmax, draws2, mask_id);
  Var logits = cmlm_forward(p, cfg, in2, batch.tgt_lens, nmax, enc, ctx);
  std::vector<double> weights(static_cast<size_t>(b * nmax), 0.0);
  for (int64_t i = 0; i < b; ++i) {
    int n = batch.tgt_lens[static_cast<size_t>(i)];
    for (int t = 0; t < n; ++t) {
      weights[static_cast<size_t>(i * nmax + t)] = 1.0 / (static_cast<double>(n) * static_cast<double>(b));
    }
  }
  return smoothed_ce(logits, batch.tgt, weights, label_smoothing);
}

Var mmt_loss(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
             const EncoderOutput& enc, int m_passes, double label_smoothing, int mask_id,
             SplitMix64& mask_rng, const Fwd& ctx) {
  if (!cfg.has_cmlm()) throw ConfigError("mmt_loss: CMLM decoder is disabled");
  if (m_passes < 1) throw ConfigError("mmt_loss: M must be >= 1");
  Var acc;
  for (int m = 0; m < m_passes; ++m) {
    std::vector<MaskDraw> draws;
    for (int n : batch.tgt_lens) draws.push_back(draw_mask(n, mask_rng));
    std::vector<int> input = apply_mask(batch.tgt, batch.tgt_lens, batch.tgt_max, draws, mask_id);
    Var logits = cmlm_forward(p, cfg, input, batch.tgt_lens, batch.tgt_max, enc, ctx);
    Var l = masked_ce(logits, batch.tgt, batch.tgt_lens, batch.tgt_max, draws, label_smoothing);
    acc = acc.defined() ? add(acc, l) : l;
  }
  return scale(acc, 1.0 / static_cast<double>(m_passes));
}

Var nar_mt_loss(const ModelParams& p, const ModelConfig& cfg, const Batch& batch, int m_passes,
                double label_smoothing, int mask_id, SplitMix64& mask_rng, const Fwd& ctx) {
  if (!cfg.use_text_encoder) throw ConfigError("nar_mt_loss: text encoder is disabled");
  EncoderOutput enc = encode_text(p, cfg, batch.src, batch.src_lens, batch.src_max, ctx);
  return mmt_loss(p, cfg, batch, enc, m_passes, label_smoothing, mask_id, mask_rng, ctx);
}

namespace {

std::vector<int> bos_shifted(const Batch& batch, int bos_id) {
  int64_t b = batch.size(), nmax = batch.tgt_max;
  std::vector<int> out(static_cast<size_t>(b * (nmax + 1)), 0);
  for (int64_t i = 0; i < b; ++i) {
    out[static_cast<size_t>(i * (nmax + 1))] = bos_id;
    for (int64_t t = 0; t < nmax; ++t) {
      out[static_cast<size_t>(i * (nmax + 1) + t + 1)] = batch.tgt[static_cast<size_t>(i * nmax + t)];
    }
  }
  return out;
}

}  // namespace

Var ar_objective(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
                 const EncoderOutput& enc, const Vocabulary& vocab, double label_smoothing,
                 const Fwd& ctx) {
  std::vector<int> input = bos_shifted(batch, vocab.bos_id);
  std::vector<int> in_lens;
  for (int n : batch.tgt_lens) in_lens.push_back(n + 1);
  Var logits = ar_forward(p, cfg, input, in_lens, batch.tgt_max + 1, enc, vocab.bos_id, ctx);
  return ar_ce(logits, batch.tgt, batch.tgt_lens, batch.tgt_max, vocab.eos_id, label_smoothing);
}

LossResult total_orthros_cmlm(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
                              const LossWeights& w, const Vocabulary& vocab,
                              SplitMix64& mask_rng, SplitMix64& mt_mask_rng, const Fwd& ctx) {
  w.validate();
  if (w.lambda_lp > 0 && !cfg.use_length_predictor) {
    throw ConfigError("lambda_lp > 0 but the length predictor is disabled");
  }
  if (w.lambda_ar > 0 && !cfg.has_ar()) {
    throw ConfigError("lambda_ar > 0 but the AR decoder is disabled");
  }
  if (w.lambda_mt > 0 && !cfg.use_text_encoder) {
    throw ConfigError("lambda_mt > 0 but the text encoder is disabled");
  }
  EncoderOutput enc = encode_speech(p, cfg, batch, ctx);
  LossResult r;
  Var cmlm = mmt_loss(p, cfg, batch, enc, w.mmt_passes, w.label_smoothing, vocab.mask_id,
                      mask_rng, ctx);
  r.components["cmlm"] = cmlm.value().data[0];
  Var total = cmlm;
  if (w.lambda_lp > 0) {
    Var lp = length_loss(predict_length(p, cfg, enc), batch.tgt_lens);
    r.components["lp"] = lp.value().data[0];
    total = add(total, scale(lp, w.lambda_lp));
  }
  if (w.lambda_ar > 0) {
    Var ar = ar_objective(p, cfg, batch, enc, vocab, w.label_smoothing, ctx);
    r.components["ar"] = ar.value().data[0];
    total = add(total, scale(ar, w.lambda_ar));
  }
  if (w.lambda_mt > 0) {
    Var mt = nar_mt_loss(p, cfg, batch, w.mmt_passes, w.label_smoothing, vocab.mask_id,
                         mt_mask_rng, ctx);
    r.components["mt"] = mt.value().data[0];
    total = add(total, scale(mt, w.lambda_mt));
  }
  r.total = total;
  r.components["total"] = total.value().data[0];
  return r;
}

LossResult total_orthros_ctc(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
                             const LossWeights& w, const Vocabulary& vocab, const Fwd& ctx) {
  w.validate();
  if (!cfg.use_ctc_head) throw ConfigError("orthros_ctc: CTC head is disabled");
  if (w.lambda_ar > 0 && !cfg.has_ar()) {
    throw ConfigError("lambda_ar > 0 but the AR decoder is disabled");
  }
  EncoderOutput enc = encode_speech(p, cfg, batch, ctx);
  LossResult r;
  Var ctc = ctc_loss_batch(ctc_logits(p, cfg, enc), enc.lengths, batch.tgt, batch.tgt_lens,
                           batch.tgt_max);
  r.components["ctc"] = ctc.value().data[0];
  Var total = ctc;
  if (w.lambda_ar > 0) {
    Var ar = ar_objective(p, cfg, batch, enc, vocab, w.label_smoothing, ctx);
    r.components["ar"] = ar.value().data[0];
    total = add(total, scale(ar, w.lambda_ar));
  }
  r.total = total;
  r.components["total"] = total.value().data[0];
  return r;
}

LossResult ctc_cmlm_total(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
                          const LossWeights& w, const Vocabulary& vocab, SplitMix64& mask_rng,
                          const Fwd& ctx) {
  w.validate();
  if (!cfg.use_ctc_head) throw ConfigError("ctc_cmlm: CTC head is disabled");
  if (!cfg.has_cmlm()) throw ConfigError("ctc_cmlm: CMLM decoder is disabled");
  EncoderOutput enc = encode_speech(p, cfg, batch, ctx);
  LossResult r;
  Var cmlm = mmt_loss(p, cfg, batch, enc, w.mmt_passes, w.label_smoothing, vocab.mask_id,
                      mask_rng, ctx);
  Var ctc = ctc_loss_batch(ctc_logits(p, cfg, enc), enc.lengths, batch.tgt, batch.tgt_lens,
                           batch.tgt_max);
  r.components["cmlm"] = cmlm.value().data[0];
  r.components["ctc"] = ctc.value().data[0];
  r.total = add(scale(cmlm, 1.0 - w.lambda_ctc), scale(ctc, w.lambda_ctc));
  r.components["total"] = r.total.value().data[0];
  return r;
}

}  // namespace orthros
