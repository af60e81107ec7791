#ifndef ORTHROS_EVAL_HPP
#define ORTHROS_EVAL_HPP

#include <string>
#include <vector>

#include "orthros/decode.hpp"

namespace orthros {

// BLEU over raw token-id sequences (the synthetic task has no surface text).
// Corpus BLEU is unsmoothed; n-gram orders with an empty corpus-level count
// are left out of the geometric mean.
double corpus_bleu(const std::vector<std::vector<int>>& hyps,
                   const std::vector<std::vector<int>>& refs, int max_ngram = 4);

// Same formula per pair with add-epsilon smoothing on zero precisions.
double sentence_bleu(const std::vector<int>& hyp, const std::vector<int>& ref, int max_ngram = 4,
                     double eps = 1e-9);

struct SentenceRecord {
  int id = 0;
  std::vector<int> hyp;
  std::vector<int> ref;
  double sentence_bleu = 0.0;
};

struct EvalReport {
  double corpus_bleu = 0.0;
  double exact_match = 0.0;
  double oracle_bleu = 0.0;
  std::vector<SentenceRecord> sentences;
};

// Per-sentence oracle: pick the candidate with the best sentence BLEU against
// the reference (ties to the lower index), then score the picks as a corpus.
EvalReport oracle_select(const std::vector<std::vector<std::vector<int>>>& candidate_lists,
                         const std::vector<std::vector<int>>& refs, const std::vector<int>& ids);

// Full report; candidate lists (when given) feed the oracle column.
EvalReport evaluate(const std::vector<std::vector<int>>& hyps,
                    const std::vector<std::vector<int>>& refs, const std::vector<int>& ids,
                    const std::vector<std::vector<std::vector<int>>>* candidates = nullptr);

void write_eval_report(const EvalReport& report, const std::string& path);
EvalReport read_eval_report(const std::string& path);
void write_eval_csv(const EvalReport& report, const std::string& path);

struct BenchTiming {
  double mean_ms = 0.0;   // per-utterance mean, averaged over runs
  double stdev_ms = 0.0;  // across runs
  int runs = 0;
};

// Batch size 1, sequential, monotonic clock; one untimed warm-up pass.
BenchTiming bench_time(const ModelParams& p, const ModelConfig& cfg,
                       const std::vector<Sample>& dataset, const DecodeConfig& dcfg,
                       const Vocabulary& vocab, int runs = 5);

struct BenchReport {
  std::string algorithm;
  double mean_ms = 0.0;
  double stdev_ms = 0.0;
  int runs = 0;
  std::string baseline_algorithm;
  double baseline_mean_ms = 0.0;
  double baseline_stdev_ms = 0.0;
  double speedup = 0.0;  // baseline_mean / mean
};

BenchReport bench_decode(const ModelParams& p, const ModelConfig& cfg,
                         const std::vector<Sample>& dataset, const DecodeConfig& dcfg,
                         const DecodeConfig& baseline, const Vocabulary& vocab, int runs = 5);

void write_bench_report(const BenchReport& report, const std::string& path);
BenchReport read_bench_report(const std::string& path);

}  // namespace orthros

#endif
