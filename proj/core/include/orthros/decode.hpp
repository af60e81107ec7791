#ifndef ORTHROS_DECODE_HPP
#define ORTHROS_DECODE_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "orthros/model.hpp"

namespace orthros {

enum class Algo { ar_beam, ctc_greedy, ctc_beam, mask_predict, ctc_cmlm };

Algo algo_from_string(const std::string& s);
std::string algo_name(Algo a);

struct DecodeConfig {
  Algo algorithm = Algo::mask_predict;
  int iterations = 10;   // T
  int length_beam = 5;   // l
  int beam_width = 4;    // b_ST
  double p_thres = 0.9;
  bool dedup = false;
  bool update_all = false;  // SMART-style inference
  bool rescore = true;
  int max_len = 48;      // AR generation cap
  void validate() const;
};

// Number of positions re-masked after the predict step of iteration t.
// k(t) = floor(n_hat * (T - t) / T): non-increasing, k(T) = 0.
int mask_schedule(int n_hat, int T, int t);

struct MaskState {
  std::vector<int> tokens;
  std::vector<double> scores;  // last assigned probability per position
  std::vector<char> masked;
  int iteration = 0;

  static MaskState all_masked(int n_hat, int mask_id);
};

struct Hypothesis {
  std::vector<int> tokens;
  double nar_score = 0.0;
  std::optional<double> ar_score;
  int source_length = 0;  // candidate target length N-hat
  bool finished = true;   // ar_beam only: eos reached within max_len
};

// Probability rows [R, N_max, V] for a batch of candidate states. Tests may
// drive the loop with a hand-built table instead of a model.
using BatchedPredictor = std::function<Array(const std::vector<MaskState>&)>;

// The Mask-Predict loop. max_masks >= 0 truncates the schedule (restricted
// Mask-Predict); -1 leaves it unrestricted.
std::vector<MaskState> run_mask_predict(std::vector<MaskState> states, int T, bool update_all,
                                        int mask_id, int max_masks, const BatchedPredictor& predict);

// LPD decoding: one candidate per top-l predicted length, refined jointly.
std::vector<Hypothesis> mask_predict(const ModelParams& p, const ModelConfig& cfg,
                                     const EncoderOutput& enc, const DecodeConfig& dcfg,
                                     const Vocabulary& vocab);

// Greedy CTC: per-frame argmax, collapse adjacent repeats, drop blanks.
std::vector<int> ctc_greedy(const Array& logits, int blank = 0);

// Greedy collapse plus a confidence per collapsed token: the max softmax
// probability among the frames collapsed into it.
struct CtcGreedyResult {
  std::vector<int> tokens;
  std::vector<double> confidence;
};
CtcGreedyResult ctc_greedy_with_confidence(const Array& logits, int blank = 0);

// CTC output refined by restricted Mask-Predict; low-confidence positions
// (< p_thres) start masked and the schedule is truncated by their count.
Hypothesis ctc_cmlm_decode(const ModelParams& p, const ModelConfig& cfg, const EncoderOutput& enc,
                           const DecodeConfig& dcfg, const Vocabulary& vocab);

// Prefix beam search over the CTC lattice; up to l distinct label sequences
// sorted by total log probability.
std::vector<Hypothesis> ctc_prefix_beam(const Array& logits, int l, int blank = 0);

std::vector<int> dedup(const std::vector<int>& tokens);

// Scores every candidate in one teacher-forced AR pass; best is the argmax
// of ar_score alone (ties: shorter hypothesis, then lower index).
std::pair<int, std::vector<Hypothesis>> parallel_rescore(const ModelParams& p,
                                                         const ModelConfig& cfg,
                                                         const EncoderOutput& enc,
                                                         std::vector<Hypothesis> hyps,
                                                         const Vocabulary& vocab);

// Length-normalized beam search; beam_width 1 is greedy decoding.
Hypothesis ar_beam(const ModelParams& p, const ModelConfig& cfg, const EncoderOutput& enc,
                   int beam_width, int max_len, const Vocabulary& vocab);

// Selection used when rescoring is off: argmax of nar_score with the same
// tie-breaking as parallel_rescore.
int select_by_nar_score(const std::vector<Hypothesis>& hyps);

struct DecodeResult {
  Hypothesis best;
  std::vector<Hypothesis> candidates;
  std::string algorithm;
};

DecodeResult decode_sample(const ModelParams& p, const ModelConfig& cfg, const DecodeConfig& dcfg,
                           const Sample& sample, const Vocabulary& vocab);

// JSON-lines: {"id","hyp","nar_score","ar_score","n_candidates","algorithm"}
// plus "candidates" when emit_candidates is set.
struct DecodeRecord {
  int id = 0;
  std::vector<int> hyp;
  double nar_score = 0.0;
  std::optional<double> ar_score;
  int n_candidates = 1;
  std::string algorithm;
  std::vector<std::vector<int>> candidates;
};

void write_decode_jsonl(const std::vector<DecodeRecord>& records, const std::string& path,
                        bool emit_candidates);
std::vector<DecodeRecord> read_decode_jsonl(const std::string& path);

}  // namespace orthros

#endif
