#ifndef ORTHROS_LOSSES_HPP
#define ORTHROS_LOSSES_HPP

#include <map>
#include <string>
#include <vector>

#include "orthros/model.hpp"

namespace orthros {

struct LossWeights {
  double lambda_lp = 0.1;
  double lambda_ar = 0.3;
  double lambda_mt = 0.3;
  double lambda_ctc = 0.3;
  int mmt_passes = 2;             // M
  double label_smoothing = 0.1;   // applied to CMLM/AR/MT cross entropies only
  double p_thres = 0.9;           // CTC-CMLM masking threshold (inference)
  void validate() const;
};

// One random masking of a length-N target: |positions| = n_mask ~ U(1, N).
struct MaskDraw {
  int n_mask = 0;
  std::vector<int> positions;
};

MaskDraw draw_mask(int n, SplitMix64& rng);

// Replace drawn positions with mask_id; rows are [B, len_max] padded token ids.
std::vector<int> apply_mask(const std::vector<int>& tokens, const std::vector<int>& lens,
                            int64_t len_max, const std::vector<MaskDraw>& draws, int mask_id);

// Mean label-smoothed CE over masked positions (per sample), then over batch.
Var masked_ce(const Var& logits, const std::vector<int>& tgt, const std::vector<int>& tgt_lens,
              int64_t len_max, const std::vector<MaskDraw>& draws, double label_smoothing);

// Teacher-forced CE over Y plus eos; logits from ar_forward on bos-shifted input.
Var ar_ce(const Var& logits, const std::vector<int>& tgt, const std::vector<int>& tgt_lens,
          int64_t len_max, int eos_id, double label_smoothing);

// -log P_ctc(Y|X) by the forward-backward algorithm in log space; class 0
// is blank. Throws InfeasibleAlignmentError when no alignment of length U
// can produce Y.
Var ctc_loss(const Var& logits, const std::vector<int>& y);
Var ctc_loss_batch(const Var& logits, const std::vector<int>& input_lens,
                   const std::vector<int>& tgt, const std::vector<int>& tgt_lens, int64_t len_max);

// CE of the length classifier against the true target length.
Var length_loss(const Var& length_logits, const std::vector<int>& tgt_lens);

// Teacher-forced AR objective over the shared encoding (bos-shifted input,
// eos-extended targets).
Var ar_objective(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
                 const EncoderOutput& enc, const Vocabulary& vocab, double label_smoothing,
                 const Fwd& ctx = {});

// Two-pass training: detached predictions feed a re-masked second pass whose
// CE covers all non-pad positions. Both passes share the encoding; the
// decoder runs twice.
Var smart_loss(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
               const EncoderOutput& enc, double label_smoothing, int mask_id,
               SplitMix64& mask_rng, const Fwd& ctx = {});

// Average of M independently masked CMLM losses over the shared encoding.
Var mmt_loss(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
             const EncoderOutput& enc, int m_passes, double label_smoothing, int mask_id,
             SplitMix64& mask_rng, const Fwd& ctx = {});

// Same with the text encoder over source transcriptions; mask stream is
// independent of the speech-side one.
Var nar_mt_loss(const ModelParams& p, const ModelConfig& cfg, const Batch& batch, int m_passes,
                double label_smoothing, int mask_id, SplitMix64& mask_rng, const Fwd& ctx = {});

struct LossResult {
  Var total;
  std::map<std::string, double> components;
};

LossResult total_orthros_cmlm(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
                              const LossWeights& w, const Vocabulary& vocab,
                              SplitMix64& mask_rng, SplitMix64& mt_mask_rng, const Fwd& ctx = {});

LossResult total_orthros_ctc(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
                             const LossWeights& w, const Vocabulary& vocab, const Fwd& ctx = {});

LossResult ctc_cmlm_total(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
                          const LossWeights& w, const Vocabulary& vocab, SplitMix64& mask_rng,
                          const Fwd& ctx = {});

}  // namespace orthros

#endif
