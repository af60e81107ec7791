#ifndef ORTHROS_MODEL_HPP
#define ORTHROS_MODEL_HPP

#include <map>
#include <string>
#include <vector>

#include "orthros/autograd.hpp"
#include "orthros/data.hpp"

namespace orthros {

struct ModelConfig {
  std::string encoder_kind = "transformer";  // transformer | conformer
  int n_enc_blocks = 2;
  int n_dec_blocks = 6;   // CMLM decoder depth; 0 disables the CMLM decoder
  int n_ar_blocks = 1;    // auxiliary AR decoder depth; 0 disables it
  int d_model = 64;
  int d_ff = 256;
  int n_heads = 4;
  int conv_kernel = 7;    // Conformer depthwise kernel
  int frame_dim = 16;
  int vocab_size = 32;
  int max_target_len = 48;  // L_max; length classes are 0..L_max
  double dropout = 0.1;
  bool use_ctc_head = false;
  bool use_length_predictor = true;
  bool use_text_encoder = false;
  bool tie_ar_embedding = true;  // AR decoder reuses the CMLM target embedding

  bool has_cmlm() const { return n_dec_blocks > 0; }
  bool has_ar() const { return n_ar_blocks > 0; }
  void validate() const;
};

// Distance range for the Conformer relative attention bias; offsets beyond
// it are clamped to the edge buckets.
inline constexpr int kRelPosMax = 64;

struct ModelParams {
  std::map<std::string, Var> table;

  Var& at(const std::string& name);
  const Var& at(const std::string& name) const;
  bool has(const std::string& name) const { return table.count(name) != 0; }
  std::vector<std::string> names() const;
  void zero_grads();

  static ModelParams init(const ModelConfig& cfg, uint64_t seed);
};

// Closed-form size of ModelParams::init's output; kept in sync by test.
int64_t param_count(const ModelConfig& cfg);

struct EncoderOutput {
  Var states;                 // [B, U', d_model], padded rows zeroed
  std::vector<int> lengths;   // valid U' per sequence
};

// Forward-pass context. Dropout fires only when training with an RNG bound.
struct Fwd {
  bool training = false;
  SplitMix64* rng = nullptr;
};

int64_t subsampled_len(int64_t u);  // ceil(u/4) via two stride-2 convs

Array sinusoid_encoding(int64_t positions, int64_t d_model);

EncoderOutput encode_speech(const ModelParams& p, const ModelConfig& cfg, const Array& frames,
                            const std::vector<int>& frame_lens, const Fwd& ctx = {});
EncoderOutput encode_speech(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
                            const Fwd& ctx = {});

EncoderOutput encode_text(const ModelParams& p, const ModelConfig& cfg,
                          const std::vector<int>& tokens, const std::vector<int>& lens,
                          int64_t len_max, const Fwd& ctx = {});

// Bidirectional decoder over a (possibly masked) target; logits everywhere.
Var cmlm_forward(const ModelParams& p, const ModelConfig& cfg, const std::vector<int>& tokens,
                 const std::vector<int>& lens, int64_t len_max, const EncoderOutput& enc,
                 const Fwd& ctx = {});

// Causal decoder; every row of tokens must begin with bos.
Var ar_forward(const ModelParams& p, const ModelConfig& cfg, const std::vector<int>& tokens,
               const std::vector<int>& lens, int64_t len_max, const EncoderOutput& enc,
               int bos_id, const Fwd& ctx = {});

Var ctc_logits(const ModelParams& p, const ModelConfig& cfg, const EncoderOutput& enc);

Var predict_length(const ModelParams& p, const ModelConfig& cfg, const EncoderOutput& enc);

// Distinct length classes sorted by descending logit (ties to the smaller
// length), truncated to l entries.
std::vector<int> top_l_lengths(const Array& length_logits_row, int l);

// Little-endian binary checkpoint: magic, version, JSON name/shape table,
// then f64 payloads in table order.
void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace orthros

#endif
