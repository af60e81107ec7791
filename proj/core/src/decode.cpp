#include "orthros/decode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "orthros/error.hpp"

namespace orthros {

using nlohmann::json;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

void log_softmax_row(const double* in, double* out, int64_t v) {
  double mx = in[0];
  for (int64_t k = 1; k < v; ++k) mx = std::max(mx, in[k]);
  double z = 0.0;
  for (int64_t k = 0; k < v; ++k) z += std::exp(in[k] - mx);
  double logz = std::log(z) + mx;
  for (int64_t k = 0; k < v; ++k) out[k] = in[k] - logz;
}

EncoderOutput replicate_encoder(const EncoderOutput& enc, int rows) {
  const Array& s = enc.states.value();
  if (s.dim(0) != 1) throw UsageError("replicate_encoder: expected single-utterance encoding");
  int64_t u = s.dim(1), d = s.dim(2);
  Array tiled({rows, u, d});
  for (int r = 0; r < rows; ++r) {
    std::copy(s.data.begin(), s.data.end(), tiled.data.begin() + static_cast<int64_t>(r) * u * d);
  }
  EncoderOutput out;
  out.states = Var::constant(std::move(tiled));
  out.lengths.assign(static_cast<size_t>(rows), enc.lengths[0]);
  return out;
}

// Shared CMLM predictor over a batch of candidate states.
BatchedPredictor cmlm_predictor(const ModelParams& p, const ModelConfig& cfg,
                                const EncoderOutput& enc, const Vocabulary& vocab) {
  return [&p, &cfg, &enc, &vocab](const std::vector<MaskState>& states) {
    NoGradGuard ng;
    int rows = static_cast<int>(states.size());
    int64_t nmax = 0;
    for (const MaskState& s : states) nmax = std::max<int64_t>(nmax, static_cast<int64_t>(s.tokens.size()));
    std::vector<int> tokens(static_cast<size_t>(rows) * nmax, vocab.pad_id);
    std::vector<int> lens;
    for (int r = 0; r < rows; ++r) {
      const MaskState& s = states[static_cast<size_t>(r)];
      std::copy(s.tokens.begin(), s.tokens.end(), tokens.begin() + static_cast<int64_t>(r) * nmax);
      lens.push_back(static_cast<int>(s.tokens.size()));
    }
    EncoderOutput tiled = replicate_encoder(enc, rows);
    Var logits = cmlm_forward(p, cfg, tokens, lens, nmax, tiled, Fwd{});
    return softmax(logits).value();
  };
}

int count_masked(const MaskState& s) {
  int n = 0;
  for (char m : s.masked)
    if (m) ++n;
  return n;
}

}  // namespace

Algo algo_from_string(const std::string& s) {
  if (s == "ar_beam") return Algo::ar_beam;
  if (s == "ctc_greedy") return Algo::ctc_greedy;
  if (s == "ctc_beam") return Algo::ctc_beam;
  if (s == "mask_predict") return Algo::mask_predict;
  if (s == "ctc_cmlm") return Algo::ctc_cmlm;
  throw ConfigError("unknown decode algorithm: " + s);
}

std::string algo_name(Algo a) {
  switch (a) {
    case Algo::ar_beam: return "ar_beam";
    case Algo::ctc_greedy: return "ctc_greedy";
    case Algo::ctc_beam: return "ctc_beam";
    case Algo::mask_predict: return "mask_predict";
    case Algo::ctc_cmlm: return "ctc_cmlm";
  }
  throw ConfigError("unknown decode algorithm");
}

void DecodeConfig::validate() const {
  if (iterations < 1) throw ConfigError("decode: T must be >= 1");
  if (length_beam < 1) throw ConfigError("decode: length beam l must be >= 1");
  if (beam_width < 1) throw ConfigError("decode: beam width must be >= 1");
  if (p_thres < 0.0 || p_thres > 1.0) throw ConfigError("decode: p_thres must be in [0,1]");
  if (max_len < 1) throw ConfigError("decode: max_len must be >= 1");
}

int mask_schedule(int n_hat, int T, int t) {
  if (n_hat < 0) throw UsageError("mask_schedule: negative length");
  if (T < 1) throw UsageError("mask_schedule: T must be >= 1");
  if (t < 1 || t > T) {
    throw UsageError("mask_schedule: iteration " + std::to_string(t) + " outside [1," +
                     std::to_string(T) + "]");
  }
  return static_cast<int>((static_cast<int64_t>(n_hat) * (T - t)) / T);
}

MaskState MaskState::all_masked(int n_hat, int mask_id) {
  MaskState s;
  s.tokens.assign(static_cast<size_t>(n_hat), mask_id);
  s.scores.assign(static_cast<size_t>(n_hat), kNegInf);
  s.masked.assign(static_cast<size_t>(n_hat), 1);
  return s;
}

std::vector<MaskState> run_mask_predict(std::vector<MaskState> states, int T, bool update_all,
                                        int mask_id, int max_masks,
                                        const BatchedPredictor& predict) {
  if (T < 1) throw UsageError("run_mask_predict: T must be >= 1");
  for (int t = 1; t <= T; ++t) {
    bool any = update_all;
    for (const MaskState& s : states) any = any || count_masked(s) > 0;
    if (any) {
      Array probs = predict(states);
      int64_t nmax = probs.dim(1), v = probs.dim(2);
      for (size_t r = 0; r < states.size(); ++r) {
        MaskState& s = states[r];
        for (size_t i = 0; i < s.tokens.size(); ++i) {
          if (!update_all && !s.masked[i]) continue;
          const double* row = probs.data.data() + (static_cast<int64_t>(r) * nmax + static_cast<int64_t>(i)) * v;
          int best = 0;
          for (int64_t k = 1; k < v; ++k)
            if (row[k] > row[best]) best = static_cast<int>(k);
          s.tokens[i] = best;
          s.scores[i] = row[best];
          s.masked[i] = 0;
        }
      }
    }
    for (MaskState& s : states) {
      s.iteration = t;
      if (t == T) continue;
      int n = static_cast<int>(s.tokens.size());
      int k = mask_schedule(n, T, t);
      if (max_masks >= 0) k = std::min(k, max_masks);
      if (k == 0) continue;
      std::vector<int> idx(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
      std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (s.scores[static_cast<size_t>(a)] != s.scores[static_cast<size_t>(b)]) {
          return s.scores[static_cast<size_t>(a)] < s.scores[static_cast<size_t>(b)];
        }
        return a < b;
      });
      for (int i = 0; i < k; ++i) {
        int pos = idx[static_cast<size_t>(i)];
        s.masked[static_cast<size_t>(pos)] = 1;
        s.tokens[static_cast<size_t>(pos)] = mask_id;
      }
    }
  }
  return states;
}

std::vector<Hypothesis> mask_predict(const ModelParams& p, const ModelConfig& cfg,
                                     const EncoderOutput& enc, const DecodeConfig& dcfg,
                                     const Vocabulary& vocab) {
  dcfg.validate();
  if (!cfg.use_length_predictor) throw ConfigError("mask_predict: length predictor is disabled");
  NoGradGuard ng;
  Array length_logits = predict_length(p, cfg, enc).value();
  Array row = Array::from({length_logits.dim(1)},
                          std::vector<double>(length_logits.data.begin(), length_logits.data.end()));
  std::vector<int> lengths;
  for (int n : top_l_lengths(row, dcfg.length_beam)) {
    if (n > 0) lengths.push_back(n);  // zero-length candidates are skipped
  }
  if (lengths.empty()) throw UsageError("mask_predict: all predicted lengths are zero");

  std::vector<MaskState> states;
  for (int n : lengths) states.push_back(MaskState::all_masked(n, vocab.mask_id));
  states = run_mask_predict(std::move(states), dcfg.iterations, dcfg.update_all, vocab.mask_id,
                            -1, cmlm_predictor(p, cfg, enc, vocab));

  std::vector<Hypothesis> hyps;
  for (size_t r = 0; r < states.size(); ++r) {
    Hypothesis h;
    h.tokens = states[r].tokens;
    h.source_length = lengths[r];
    double acc = 0.0;
    for (double sc : states[r].scores) acc += std::log(sc);
    h.nar_score = states[r].scores.empty() ? kNegInf : acc / static_cast<double>(states[r].scores.size());
    hyps.push_back(std::move(h));
  }
  return hyps;
}

std::vector<int> ctc_greedy(const Array& logits, int blank) {
  return ctc_greedy_with_confidence(logits, blank).tokens;
}

CtcGreedyResult ctc_greedy_with_confidence(const Array& logits, int blank) {
  if (logits.rank() != 2) throw ShapeError("ctc_greedy: expected [U,V], got " + logits.shape_str());
  int64_t u = logits.dim(0), v = logits.dim(1);
  CtcGreedyResult out;
  int prev = -1;
  std::vector<double> lp(static_cast<size_t>(v));
  for (int64_t t = 0; t < u; ++t) {
    log_softmax_row(logits.data.data() + t * v, lp.data(), v);
    int best = 0;
    for (int64_t k = 1; k < v; ++k)
      if (lp[static_cast<size_t>(k)] > lp[static_cast<size_t>(best)]) best = static_cast<int>(k);
    double prob = std::exp(lp[static_cast<size_t>(best)]);
    if (best != blank) {
      if (best == prev) {
        out.confidence.back() = std::max(out.confidence.back(), prob);
      } else {
        out.tokens.push_back(best);
        out.confidence.push_back(prob);
      }
    }
    prev = best;
  }
  return out;
}

Hypothesis ctc_cmlm_decode(const ModelParams& p, const ModelConfig& cfg, const EncoderOutput& enc,
                           const DecodeConfig& dcfg, const Vocabulary& vocab) {
  dcfg.validate();
  if (!cfg.use_ctc_head) throw ConfigError("ctc_cmlm_decode: CTC head is disabled");
  if (!cfg.has_cmlm()) throw ConfigError("ctc_cmlm_decode: CMLM decoder is disabled");
  NoGradGuard ng;
  Var ctc_out = ctc_logits(p, cfg, enc);
  const Array& all_logits = ctc_out.value();
  int64_t u = all_logits.dim(1), v = all_logits.dim(2);
  int valid = enc.lengths[0];
  Array row({valid, v});
  std::copy(all_logits.data.begin(), all_logits.data.begin() + static_cast<int64_t>(valid) * v,
            row.data.begin());
  (void)u;
  CtcGreedyResult init = ctc_greedy_with_confidence(row, vocab.blank_id);
  if (init.tokens.empty()) throw UsageError("ctc_cmlm_decode: empty CTC collapse");

  MaskState s;
  s.tokens = init.tokens;
  s.scores = init.confidence;
  s.masked.assign(s.tokens.size(), 0);
  int m0 = 0;
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    if (init.confidence[i] < dcfg.p_thres) {
      s.masked[i] = 1;
      s.tokens[i] = vocab.mask_id;
      ++m0;
    }
  }
  std::vector<MaskState> states{std::move(s)};
  states = run_mask_predict(std::move(states), dcfg.iterations, false, vocab.mask_id, m0,
                            cmlm_predictor(p, cfg, enc, vocab));
  Hypothesis h;
  h.tokens = states[0].tokens;
  h.source_length = static_cast<int>(h.tokens.size());
  double acc = 0.0;
  for (double sc : states[0].scores) acc += std::log(sc);
  h.nar_score = states[0].scores.empty() ? kNegInf : acc / static_cast<double>(states[0].scores.size());
  return h;
}

std::vector<Hypothesis> ctc_prefix_beam(const Array& logits, int l, int blank) {
  if (logits.rank() != 2) throw ShapeError("ctc_prefix_beam: expected [U,V], got " + logits.shape_str());
  if (l < 1) throw UsageError("ctc_prefix_beam: l must be >= 1");
  int64_t u = logits.dim(0), v = logits.dim(1);

  struct PrefixProb {
    double blank_lp = kNegInf;     // prefix ends in blank (or is fresh)
    double nonblank_lp = kNegInf;  // prefix ends in its last label
    double total() const { return log_sum_exp(blank_lp, nonblank_lp); }
  };
  std::map<std::vector<int>, PrefixProb> beam;
  beam[{}] = PrefixProb{0.0, kNegInf};

  std::vector<double> lp(static_cast<size_t>(v));
  for (int64_t t = 0; t < u; ++t) {
    log_softmax_row(logits.data.data() + t * v, lp.data(), v);
    std::map<std::vector<int>, PrefixProb> next;
    for (const auto& [prefix, pp] : beam) {
      // stay on the same prefix: emit blank, or repeat the last label
      PrefixProb& same = next[prefix];
      same.blank_lp = log_sum_exp(same.blank_lp, pp.total() + lp[static_cast<size_t>(blank)]);
      if (!prefix.empty()) {
        int last = prefix.back();
        same.nonblank_lp = log_sum_exp(same.nonblank_lp, pp.nonblank_lp + lp[static_cast<size_t>(last)]);
      }
      // extend with a new label
      for (int c = 0; c < v; ++c) {
        if (c == blank) continue;
        std::vector<int> ext = prefix;
        ext.push_back(c);
        PrefixProb& e = next[ext];
        double src = (!prefix.empty() && c == prefix.back()) ? pp.blank_lp : pp.total();
        e.nonblank_lp = log_sum_exp(e.nonblank_lp, src + lp[static_cast<size_t>(c)]);
      }
    }
    if (static_cast<int>(next.size()) > l) {
      std::vector<std::pair<std::vector<int>, PrefixProb>> entries(next.begin(), next.end());
      std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        double ta = a.second.total(), tb = b.second.total();
        if (ta != tb) return ta > tb;
        if (a.first.size() != b.first.size()) return a.first.size() < b.first.size();
        return a.first < b.first;
      });
      entries.resize(static_cast<size_t>(l));
      next = std::map<std::vector<int>, PrefixProb>(entries.begin(), entries.end());
    }
    beam = std::move(next);
  }

  std::vector<std::pair<std::vector<int>, double>> finals;
  for (const auto& [prefix, pp] : beam) finals.emplace_back(prefix, pp.total());
  std::stable_sort(finals.begin(), finals.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    if (a.first.size() != b.first.size()) return a.first.size() < b.first.size();
    return a.first < b.first;
  });
  std::vector<Hypothesis> out;
  for (const auto& [tokens, total] : finals) {
    Hypothesis h;
    h.tokens = tokens;
    h.source_length = static_cast<int>(tokens.size());
    h.nar_score = total / std::max<double>(1.0, static_cast<double>(tokens.size()));
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<int> dedup(const std::vector<int>& tokens) {
  std::vector<int> out;
  for (int t : tokens) {
    if (out.empty() || out.back() != t) out.push_back(t);
  }
  return out;
}

std::pair<int, std::vector<Hypothesis>> parallel_rescore(const ModelParams& p,
                                                         const ModelConfig& cfg,
                                                         const EncoderOutput& enc,
                                                         std::vector<Hypothesis> hyps,
                                                         const Vocabulary& vocab) {
  if (hyps.empty()) throw UsageError("parallel_rescore: no candidates");
  if (!cfg.has_ar()) throw ConfigError("parallel_rescore: AR decoder is disabled");
  NoGradGuard ng;
  int rows = static_cast<int>(hyps.size());
  int64_t nmax = 1;
  for (const Hypothesis& h : hyps) nmax = std::max<int64_t>(nmax, static_cast<int64_t>(h.tokens.size()) + 1);
  std::vector<int> tokens(static_cast<size_t>(rows) * nmax, vocab.pad_id);
  std::vector<int> lens;
  for (int r = 0; r < rows; ++r) {
    tokens[static_cast<size_t>(r) * nmax] = vocab.bos_id;
    const auto& tk = hyps[static_cast<size_t>(r)].tokens;
    std::copy(tk.begin(), tk.end(), tokens.begin() + static_cast<size_t>(r) * nmax + 1);
    lens.push_back(static_cast<int>(tk.size()) + 1);
  }
  EncoderOutput tiled = replicate_encoder(enc, rows);
  Var ar_out = ar_forward(p, cfg, tokens, lens, nmax, tiled, vocab.bos_id, Fwd{});
  const Array& logits = ar_out.value();
  int64_t v = logits.dim(2);
  std::vector<double> lp(static_cast<size_t>(v));
  for (int r = 0; r < rows; ++r) {
    Hypothesis& h = hyps[static_cast<size_t>(r)];
    double acc = 0.0;
    int n = static_cast<int>(h.tokens.size());
    for (int t = 0; t <= n; ++t) {
      int target = (t < n) ? h.tokens[static_cast<size_t>(t)] : vocab.eos_id;
      log_softmax_row(logits.data.data() + (static_cast<int64_t>(r) * nmax + t) * v, lp.data(), v);
      acc += lp[static_cast<size_t>(target)];
    }
    h.ar_score = acc / static_cast<double>(n + 1);
  }
  int best = 0;
  for (int r = 1; r < rows; ++r) {
    double a = *hyps[static_cast<size_t>(r)].ar_score, b = *hyps[static_cast<size_t>(best)].ar_score;
    if (a > b || (a == b && hyps[static_cast<size_t>(r)].tokens.size() < hyps[static_cast<size_t>(best)].tokens.size())) {
      best = r;
    }
  }
  return {best, std::move(hyps)};
}

int select_by_nar_score(const std::vector<Hypothesis>& hyps) {
  if (hyps.empty()) throw UsageError("select_by_nar_score: no candidates");
  int best = 0;
  for (int r = 1; r < static_cast<int>(hyps.size()); ++r) {
    double a = hyps[static_cast<size_t>(r)].nar_score, b = hyps[static_cast<size_t>(best)].nar_score;
    if (a > b || (a == b && hyps[static_cast<size_t>(r)].tokens.size() < hyps[static_cast<size_t>(best)].tokens.size())) {
      best = r;
    }
  }
  return best;
}

Hypothesis ar_beam(const ModelParams& p, const ModelConfig& cfg, const EncoderOutput& enc,
                   int beam_width, int max_len, const Vocabulary& vocab) {
  if (beam_width < 1) throw UsageError("ar_beam: beam width must be >= 1");
  if (!cfg.has_ar()) throw ConfigError("ar_beam: AR decoder is disabled");
  NoGradGuard ng;

  struct Beam {
    std::vector<int> tokens;  // generated tokens, eos excluded
    double logp = 0.0;
  };
  auto norm_score = [](const Beam& b, bool with_eos) {
    return b.logp / static_cast<double>(b.tokens.size() + (with_eos ? 1 : 0));
  };

  std::vector<Beam> active{Beam{}};
  std::vector<Beam> finished;
  const int64_t v = cfg.vocab_size;
  std::vector<double> lp(static_cast<size_t>(v));

  for (int step = 0; step < max_len && !active.empty(); ++step) {
    int rows = static_cast<int>(active.size());
    int64_t len = step + 1;
    std::vector<int> tokens(static_cast<size_t>(rows) * len, vocab.pad_id);
    std::vector<int> lens(static_cast<size_t>(rows), static_cast<int>(len));
    for (int r = 0; r < rows; ++r) {
      tokens[static_cast<size_t>(r) * len] = vocab.bos_id;
      const auto& tk = active[static_cast<size_t>(r)].tokens;
      std::copy(tk.begin(), tk.end(), tokens.begin() + static_cast<size_t>(r) * len + 1);
    }
    EncoderOutput tiled = rows == 1 && enc.states.value().dim(0) == 1
                              ? enc
                              : replicate_encoder(enc, rows);
    Var ar_out = ar_forward(p, cfg, tokens, lens, len, tiled, vocab.bos_id, Fwd{});
    const Array& logits = ar_out.value();

    struct Cand {
      int beam;
      int cls;
      double logp;
    };
    std::vector<Cand> cands;
    for (int r = 0; r < rows; ++r) {
      log_softmax_row(logits.data.data() + (static_cast<int64_t>(r) * len + len - 1) * v, lp.data(), v);
      for (int c = 0; c < v; ++c) {
        // pad/bos/mask/blank never appear in AR targets
        if (c == vocab.pad_id || c == vocab.bos_id || c == vocab.mask_id || c == vocab.blank_id) continue;
        cands.push_back({r, c, active[static_cast<size_t>(r)].logp + lp[static_cast<size_t>(c)]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logp != b.logp) return a.logp > b.logp;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.cls < b.cls;
    });
    if (static_cast<int>(cands.size()) > beam_width) cands.resize(static_cast<size_t>(beam_width));

    std::vector<Beam> next;
    for (const Cand& c : cands) {
      Beam b = active[static_cast<size_t>(c.beam)];
      b.logp = c.logp;
      if (c.cls == vocab.eos_id) {
        finished.push_back(std::move(b));
      } else {
        b.tokens.push_back(c.cls);
        next.push_back(std::move(b));
      }
    }
    active = std::move(next);
  }

  Hypothesis h;
  if (!finished.empty()) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(finished.size()); ++i) {
      if (norm_score(finished[static_cast<size_t>(i)], true) > norm_score(finished[static_cast<size_t>(best)], true)) best = i;
    }
    h.tokens = finished[static_cast<size_t>(best)].tokens;
    h.ar_score = norm_score(finished[static_cast<size_t>(best)], true);
    h.finished = true;
  } else {
    int best = 0;
    for (int i = 1; i < static_cast<int>(active.size()); ++i) {
      if (norm_score(active[static_cast<size_t>(i)], false) > norm_score(active[static_cast<size_t>(best)], false)) best = i;
    }
    h.tokens = active[static_cast<size_t>(best)].tokens;
    h.ar_score = norm_score(active[static_cast<size_t>(best)], false);
    h.finished = false;  // ran past max_len without eos
  }
  h.source_length = static_cast<int>(h.tokens.size());
  h.nar_score = kNegInf;
  return h;
}

DecodeResult decode_sample(const ModelParams& p, const ModelConfig& cfg, const DecodeConfig& dcfg,
                           const Sample& sample, const Vocabulary& vocab) {
  dcfg.validate();
  NoGradGuard ng;
  int64_t u = sample.frames.dim(0);
  Array frames({1, u, sample.frames.dim(1)});
  frames.data = sample.frames.data;
  EncoderOutput enc = encode_speech(p, cfg, frames, {static_cast<int>(u)}, Fwd{});

  DecodeResult res;
  res.algorithm = algo_name(dcfg.algorithm);
  switch (dcfg.algorithm) {
    case Algo::ar_beam: {
      res.best = ar_beam(p, cfg, enc, dcfg.beam_width, dcfg.max_len, vocab);
      res.candidates = {res.best};
      break;
    }
    case Algo::ctc_greedy: {
      Var ctc_out = ctc_logits(p, cfg, enc);
      const Array& logits = ctc_out.value();
      int valid = enc.lengths[0];
      Array row({valid, logits.dim(2)});
      std::copy(logits.data.begin(), logits.data.begin() + static_cast<int64_t>(valid) * logits.dim(2),
                row.data.begin());
      CtcGreedyResult g = ctc_greedy_with_confidence(row, vocab.blank_id);
      Hypothesis h;
      h.tokens = g.tokens;
      h.source_length = static_cast<int>(g.tokens.size());
      double acc = 0.0;
      for (double c : g.confidence) acc += std::log(c);
      h.nar_score = g.tokens.empty() ? kNegInf : acc / static_cast<double>(g.tokens.size());
      res.best = h;
      res.candidates = {std::move(h)};
      break;
    }
    case Algo::ctc_beam: {
      Var ctc_out = ctc_logits(p, cfg, enc);
      const Array& logits = ctc_out.value();
      int valid = enc.lengths[0];
      Array row({valid, logits.dim(2)});
      std::copy(logits.data.begin(), logits.data.begin() + static_cast<int64_t>(valid) * logits.dim(2),
                row.data.begin());
      std::vector<Hypothesis> cands = ctc_prefix_beam(row, dcfg.length_beam, vocab.blank_id);
      if (dcfg.rescore && cfg.has_ar()) {
        auto [best, scored] = parallel_rescore(p, cfg, enc, std::move(cands), vocab);
        res.best = scored[static_cast<size_t>(best)];
        res.candidates = std::move(scored);
      } else {
        res.best = cands[static_cast<size_t>(select_by_nar_score(cands))];
        res.candidates = std::move(cands);
      }
      break;
    }
    case Algo::mask_predict: {
      std::vector<Hypothesis> cands = mask_predict(p, cfg, enc, dcfg, vocab);
      if (dcfg.rescore && cfg.has_ar()) {
        auto [best, scored] = parallel_rescore(p, cfg, enc, std::move(cands), vocab);
        res.best = scored[static_cast<size_t>(best)];
        res.candidates = std::move(scored);
      } else {
        res.best = cands[static_cast<size_t>(select_by_nar_score(cands))];
        res.candidates = std::move(cands);
      }
      if (dcfg.dedup) res.best.tokens = dedup(res.best.tokens);
      break;
    }
    case Algo::ctc_cmlm: {
      Hypothesis h = ctc_cmlm_decode(p, cfg, enc, dcfg, vocab);
      if (dcfg.rescore && cfg.has_ar()) {
        auto [best, scored] = parallel_rescore(p, cfg, enc, {h}, vocab);
        h = scored[static_cast<size_t>(best)];
      }
      res.best = h;
      res.candidates = {std::move(h)};
      if (dcfg.dedup) res.best.tokens = dedup(res.best.tokens);
      break;
    }
  }
  return res;
}

void write_decode_jsonl(const std::vector<DecodeRecord>& records, const std::string& path,
                        bool emit_candidates) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write decode output to " + path);
  for (const DecodeRecord& r : records) {
    json j;
    j["id"] = r.id;
    j["hyp"] = r.hyp;
    j["nar_score"] = r.nar_score;
    if (r.ar_score) {
      j["ar_score"] = *r.ar_score;
    } else {
      j["ar_score"] = nullptr;
    }
    j["n_candidates"] = r.n_candidates;
    j["algorithm"] = r.algorithm;
    if (emit_candidates) j["candidates"] = r.candidates;
    out << j.dump() << "\n";
  }
}

std::vector<DecodeRecord> read_decode_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read decode output from " + path);
  std::vector<DecodeRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      DecodeRecord r;
      r.id = j.at("id").get<int>();
      r.hyp = j.at("hyp").get<std::vector<int>>();
      r.nar_score = j.at("nar_score").get<double>();
      if (!j.at("ar_score").is_null()) r.ar_score = j.at("ar_score").get<double>();
      r.n_candidates = j.at("n_candidates").get<int>();
      r.algorithm = j.at("algorithm").get<std::string>();
      if (j.contains("candidates")) r.candidates = j.at("candidates").get<std::vector<std::vector<int>>>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(path + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace orthros
