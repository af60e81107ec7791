#include "orthros/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "orthros/error.hpp"

namespace orthros {

using nlohmann::json;

namespace {

constexpr double kMaskValue = -1e30;
constexpr char kCkptMagic[8] = {'O', 'R', 'T', 'H', 'C', 'K', 'P', '1'};
constexpr uint32_t kCkptVersion = 1;

// [B,1,Nk]: 0 at valid keys, -1e30 at padded ones.
Array key_padding_mask(const std::vector<int>& lens, int64_t nk) {
  int64_t b = static_cast<int64_t>(lens.size());
  Array m({b, 1, nk});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t k = 0; k < nk; ++k)
      m.data[static_cast<size_t>(i * nk + k)] = (k < lens[static_cast<size_t>(i)]) ? 0.0 : kMaskValue;
  return m;
}

// [B,N,N]: future positions and padded keys are both blocked.
Array causal_padding_mask(const std::vector<int>& lens, int64_t n) {
  int64_t b = static_cast<int64_t>(lens.size());
  Array m({b, n, n});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t q = 0; q < n; ++q)
      for (int64_t k = 0; k < n; ++k) {
        bool ok = k <= q && k < lens[static_cast<size_t>(i)];
        m.data[static_cast<size_t>((i * n + q) * n + k)] = ok ? 0.0 : kMaskValue;
      }
  return m;
}

Var maybe_dropout(Var x, const ModelConfig& cfg, const Fwd& ctx) {
  if (ctx.training && ctx.rng && cfg.dropout > 0.0) return dropout(x, cfg.dropout, *ctx.rng);
  return x;
}

Var ln(const ModelParams& p, const std::string& prefix, const Var& x) {
  return layer_norm(x, p.at(prefix + ".g"), p.at(prefix + ".b"));
}

Var ffn(const ModelParams& p, const std::string& prefix, const Var& x, const ModelConfig& cfg,
        const Fwd& ctx) {
  Var h = affine(x, p.at(prefix + "w1"), p.at(prefix + "b1"));
  h = silu(h);
  h = affine(h, p.at(prefix + "w2"), p.at(prefix + "b2"));
  return maybe_dropout(h, cfg, ctx);
}

Var mha(const ModelParams& p, const std::string& prefix, const ModelConfig& cfg, const Var& q_in,
        const Var& kv_in, const Array& mask, const Var* relbias, const Fwd& ctx) {
  int64_t b = q_in.value().dim(0), nq = q_in.value().dim(1), nk = kv_in.value().dim(1);
  int h = cfg.n_heads;
  int64_t dk = cfg.d_model / h;
  auto heads = [&](Var t, int64_t n) {
    t = reshape(t, {b, n, h, dk});
    t = swap_axes_1_2(t);
    return reshape(t, {b * h, n, dk});
  };
  Var q = heads(affine(q_in, p.at(prefix + "wq"), p.at(prefix + "bq")), nq);
  Var k = heads(affine(kv_in, p.at(prefix + "wk"), p.at(prefix + "bk")), nk);
  Var v = heads(affine(kv_in, p.at(prefix + "wv"), p.at(prefix + "bv")), nk);
  Var scores = scale(bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dk)));
  if (relbias) scores = relative_bias_add(scores, *relbias, h);
  scores = attn_mask_add(scores, mask, h);
  Var ctxv = bmm(softmax(scores), v);
  ctxv = reshape(ctxv, {b, h, nq, dk});
  ctxv = swap_axes_1_2(ctxv);
  ctxv = reshape(ctxv, {b, nq, cfg.d_model});
  Var out = affine(ctxv, p.at(prefix + "wo"), p.at(prefix + "bo"));
  return maybe_dropout(out, cfg, ctx);
}

Var transformer_block(const ModelParams& p, const std::string& prefix, const ModelConfig& cfg,
                      Var x, const Array& mask, const Fwd& ctx) {
  Var h = ln(p, prefix + "ln1", x);
  x = add(x, mha(p, prefix + "attn.", cfg, h, h, mask, nullptr, ctx));
  x = add(x, ffn(p, prefix + "ffn.", ln(p, prefix + "ln2", x), cfg, ctx));
  return x;
}

// Macaron half-FFN, self-attention with relative bias, depthwise conv
// module, half-FFN; pre-norm residuals throughout.
Var conformer_block(const ModelParams& p, const std::string& prefix, const ModelConfig& cfg,
                    Var x, const Array& mask, const std::vector<int>& lens, const Fwd& ctx) {
  x = add(x, scale(ffn(p, prefix + "ffn_pre.", ln(p, prefix + "ln_pre", x), cfg, ctx), 0.5));
  Var h = ln(p, prefix + "ln1", x);
  x = add(x, mha(p, prefix + "attn.", cfg, h, h, mask, &p.at(prefix + "attn.relbias"), ctx));
  {
    Var c = ln(p, prefix + "ln_conv", x);
    c = affine(c, p.at(prefix + "conv.pw1.w"), p.at(prefix + "conv.pw1.b"));
    c = glu(c);
    // Keep the depthwise window from reading padded rows.
    c = zero_padded_rows(c, lens);
    c = depthwise_conv1d(c, p.at(prefix + "conv.dw.k"));
    c = silu(c);
    c = affine(c, p.at(prefix + "conv.pw2.w"), p.at(prefix + "conv.pw2.b"));
    x = add(x, maybe_dropout(c, cfg, ctx));
  }
  x = add(x, scale(ffn(p, prefix + "ffn.", ln(p, prefix + "ln2", x), cfg, ctx), 0.5));
  return x;
}

Var decoder_block(const ModelParams& p, const std::string& prefix, const ModelConfig& cfg, Var x,
                  const Array& self_mask, const EncoderOutput& enc, const Array& cross_mask,
                  const Fwd& ctx) {
  Var h = ln(p, prefix + "ln1", x);
  x = add(x, mha(p, prefix + "self.", cfg, h, h, self_mask, nullptr, ctx));
  x = add(x, mha(p, prefix + "cross.", cfg, ln(p, prefix + "ln2", x), enc.states, cross_mask,
                 nullptr, ctx));
  x = add(x, ffn(p, prefix + "ffn.", ln(p, prefix + "ln3", x), cfg, ctx));
  return x;
}

Var embed_tokens(const ModelParams& p, const std::string& table, const ModelConfig& cfg,
                 const std::vector<int>& tokens, int64_t b, int64_t n) {
  Var e = embedding(p.at(table), tokens, b, n);
  e = scale(e, std::sqrt(static_cast<double>(cfg.d_model)));
  return add_const_rows(e, sinusoid_encoding(n, cfg.d_model));
}

}  // namespace

void ModelConfig::validate() const {
  if (encoder_kind != "transformer" && encoder_kind != "conformer") {
    throw ConfigError("encoder_kind must be transformer or conformer, got " + encoder_kind);
  }
  if (n_enc_blocks < 1) throw ConfigError("n_enc_blocks must be >= 1");
  if (n_dec_blocks < 0 || n_ar_blocks < 0) throw ConfigError("decoder depths must be >= 0");
  if (d_model < 1 || d_ff < 1) throw ConfigError("d_model and d_ff must be >= 1");
  if (n_heads < 1 || d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " must be divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd, got " + std::to_string(conv_kernel));
  if (frame_dim < 1) throw ConfigError("frame_dim must be >= 1");
  if (vocab_size < 6) throw ConfigError("vocab_size must be >= 6");
  if (max_target_len < 1) throw ConfigError("max_target_len must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
}

Var& ModelParams::at(const std::string& name) {
  auto it = table.find(name);
  if (it == table.end()) throw ConfigError("missing parameter: " + name);
  return it->second;
}

const Var& ModelParams::at(const std::string& name) const {
  auto it = table.find(name);
  if (it == table.end()) throw ConfigError("missing parameter: " + name);
  return it->second;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  out.reserve(table.size());
  for (const auto& [k, v] : table) out.push_back(k);
  return out;
}

void ModelParams::zero_grads() {
  for (auto& [k, v] : table) v.zero_grad();
}

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int d = cfg.d_model, dff = cfg.d_ff, v = cfg.vocab_size;
  const int relbias_len = 2 * kRelPosMax + 1;
  // Creation order is fixed so the N(0, 0.02) draws are reproducible; the
  // final table is name-sorted.
  std::vector<std::pair<std::string, Array>> order;
  auto add_param = [&order](const std::string& name, Array a) {
    order.emplace_back(name, std::move(a));
  };
  auto weight = [](std::vector<int64_t> shape) { return Array(std::move(shape)); };

  auto attn = [&](const std::string& pre, bool relbias) {
    for (const char* n : {"wq", "wk", "wv", "wo"}) add_param(pre + n, weight({d, d}));
    for (const char* n : {"bq", "bk", "bv", "bo"}) add_param(pre + n, Array({d}));
    if (relbias) add_param(pre + "relbias", Array({cfg.n_heads, relbias_len}));
  };
  auto ffn_params = [&](const std::string& pre) {
    add_param(pre + "w1", weight({d, dff}));
    add_param(pre + "b1", Array({dff}));
    add_param(pre + "w2", weight({dff, d}));
    add_param(pre + "b2", Array({d}));
  };
  auto norm = [&](const std::string& pre) {
    add_param(pre + ".g", Array({d}, 1.0));
    add_param(pre + ".b", Array({d}));
  };

  add_param("frontend.conv1.w", weight({3, cfg.frame_dim, d}));
  add_param("frontend.conv1.b", Array({d}));
  add_param("frontend.conv2.w", weight({3, d, d}));
  add_param("frontend.conv2.b", Array({d}));

  for (int i = 0; i < cfg.n_enc_blocks; ++i) {
    std::string pre = "enc." + std::to_string(i) + ".";
    bool conf = cfg.encoder_kind == "conformer";
    if (conf) {
      norm(pre + "ln_pre");
      ffn_params(pre + "ffn_pre.");
    }
    norm(pre + "ln1");
    attn(pre + "attn.", conf);
    if (conf) {
      norm(pre + "ln_conv");
      add_param(pre + "conv.pw1.w", weight({d, 2 * d}));
      add_param(pre + "conv.pw1.b", Array({2 * d}));
      add_param(pre + "conv.dw.k", weight({cfg.conv_kernel, d}));
      add_param(pre + "conv.pw2.w", weight({d, d}));
      add_param(pre + "conv.pw2.b", Array({d}));
    }
    norm(pre + "ln2");
    ffn_params(pre + "ffn.");
  }

  if (cfg.use_text_encoder) {
    add_param("txt.embed", weight({v, d}));
    for (int i = 0; i < cfg.n_enc_blocks; ++i) {
      std::string pre = "txt." + std::to_string(i) + ".";
      norm(pre + "ln1");
      attn(pre + "attn.", false);
      norm(pre + "ln2");
      ffn_params(pre + "ffn.");
    }
  }

  auto decoder_stack = [&](const std::string& name, int blocks) {
    for (int i = 0; i < blocks; ++i) {
      std::string pre = name + "." + std::to_string(i) + ".";
      norm(pre + "ln1");
      attn(pre + "self.", false);
      norm(pre + "ln2");
      attn(pre + "cross.", false);
      norm(pre + "ln3");
      ffn_params(pre + "ffn.");
    }
    add_param(name + ".out.w", weight({d, v}));
    add_param(name + ".out.b", Array({v}));
  };

  if (cfg.has_cmlm()) {
    add_param("dec.embed", weight({v, d}));
    decoder_stack("dec", cfg.n_dec_blocks);
  }
  if (cfg.has_ar()) {
    if (!(cfg.tie_ar_embedding && cfg.has_cmlm())) {
      add_param("ar.embed", weight({v, d}));
    }
    decoder_stack("ar", cfg.n_ar_blocks);
  }
  if (cfg.use_ctc_head) {
    add_param("ctc.w", weight({d, v}));
    add_param("ctc.b", Array({v}));
  }
  if (cfg.use_length_predictor) {
    add_param("lp.w", weight({d, cfg.max_target_len + 1}));
    add_param("lp.b", Array({cfg.max_target_len + 1}));
  }

  // BERT-style init throughout: weights from N(0, 0.02), biases zero,
  // LN gamma 1 beta 0.
  SplitMix64 rng = SplitMix64(seed).split(7);
  ModelParams out;
  for (auto& [name, arr] : order) {
    bool is_weight = arr.rank() >= 2 || name.ends_with(".k");
    if (is_weight && !name.ends_with("relbias")) {
      for (double& x : arr.data) x = 0.02 * rng.normal();
    }
    out.table.emplace(name, Var::param(std::move(arr)));
  }
  return out;
}

int64_t param_count(const ModelConfig& cfg) {
  const int64_t d = cfg.d_model, dff = cfg.d_ff, v = cfg.vocab_size;
  const int64_t lnp = 2 * d;
  const int64_t attn = 4 * (d * d + d);
  const int64_t relbias = cfg.n_heads * (2 * kRelPosMax + 1);
  const int64_t ffnp = d * dff + dff + dff * d + d;
  const int64_t conv_mod = d * 2 * d + 2 * d + cfg.conv_kernel * d + d * d + d;
  int64_t total = 3 * cfg.frame_dim * d + d + 3 * d * d + d;  // frontend
  for (int i = 0; i < cfg.n_enc_blocks; ++i) {
    total += lnp + attn + lnp + ffnp;
    if (cfg.encoder_kind == "conformer") total += lnp + ffnp + relbias + lnp + conv_mod;
  }
  if (cfg.use_text_encoder) total += v * d + cfg.n_enc_blocks * (lnp + attn + lnp + ffnp);
  const int64_t dec_block = 3 * lnp + 2 * attn + ffnp;
  if (cfg.has_cmlm()) total += v * d + cfg.n_dec_blocks * dec_block + d * v + v;
  if (cfg.has_ar()) {
    if (!(cfg.tie_ar_embedding && cfg.has_cmlm())) total += v * d;
    total += cfg.n_ar_blocks * dec_block + d * v + v;
  }
  if (cfg.use_ctc_head) total += d * v + v;
  if (cfg.use_length_predictor) total += d * (cfg.max_target_len + 1) + cfg.max_target_len + 1;
  return total;
}

int64_t subsampled_len(int64_t u) {
  int64_t u1 = (u + 1) / 2;
  return (u1 + 1) / 2;
}

Array sinusoid_encoding(int64_t positions, int64_t d_model) {
  Array pe({positions, d_model});
  for (int64_t pos = 0; pos < positions; ++pos) {
    for (int64_t i = 0; i < d_model; i += 2) {
      double angle = static_cast<double>(pos) /
                     std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      pe.at2(pos, i) = std::sin(angle);
      if (i + 1 < d_model) pe.at2(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

EncoderOutput encode_speech(const ModelParams& p, const ModelConfig& cfg, const Array& frames,
                            const std::vector<int>& frame_lens, const Fwd& ctx) {
  if (frames.rank() != 3 || frames.dim(2) != cfg.frame_dim) {
    throw ShapeError("encode_speech: frames " + frames.shape_str() + " vs frame_dim " +
                     std::to_string(cfg.frame_dim));
  }
  if (static_cast<int64_t>(frame_lens.size()) != frames.dim(0)) {
    throw ShapeError("encode_speech: " + std::to_string(frame_lens.size()) + " lengths for batch " +
                     frames.shape_str());
  }
  std::vector<int> len1, len2;
  for (int l : frame_lens) {
    if (l < 1 || l > frames.dim(1)) {
      throw UsageError("encode_speech: input too short or length " + std::to_string(l) +
                       " exceeds padded size");
    }
    len1.push_back(static_cast<int>((l + 1) / 2));
    len2.push_back(static_cast<int>(subsampled_len(l)));
  }
  Var x = Var::constant(frames);
  x = silu(conv1d_strided(x, p.at("frontend.conv1.w"), p.at("frontend.conv1.b"), 2));
  x = zero_padded_rows(x, len1);
  x = silu(conv1d_strided(x, p.at("frontend.conv2.w"), p.at("frontend.conv2.b"), 2));
  x = zero_padded_rows(x, len2);

  int64_t u2 = x.value().dim(1);
  Array mask = key_padding_mask(len2, u2);
  x = add_const_rows(x, sinusoid_encoding(u2, cfg.d_model));
  x = zero_padded_rows(x, len2);
  for (int i = 0; i < cfg.n_enc_blocks; ++i) {
    std::string pre = "enc." + std::to_string(i) + ".";
    x = cfg.encoder_kind == "transformer" ? transformer_block(p, pre, cfg, x, mask, ctx)
                                          : conformer_block(p, pre, cfg, x, mask, len2, ctx);
  }
  EncoderOutput out;
  out.states = zero_padded_rows(x, len2);
  out.lengths = std::move(len2);
  return out;
}

EncoderOutput encode_speech(const ModelParams& p, const ModelConfig& cfg, const Batch& batch,
                            const Fwd& ctx) {
  return encode_speech(p, cfg, batch.frames, batch.frame_lens, ctx);
}

EncoderOutput encode_text(const ModelParams& p, const ModelConfig& cfg,
                          const std::vector<int>& tokens, const std::vector<int>& lens,
                          int64_t len_max, const Fwd& ctx) {
  if (!cfg.use_text_encoder) throw ConfigError("encode_text: text encoder is disabled");
  int64_t b = static_cast<int64_t>(lens.size());
  Var x = embed_tokens(p, "txt.embed", cfg, tokens, b, len_max);
  Array mask = key_padding_mask(lens, len_max);
  for (int i = 0; i < cfg.n_enc_blocks; ++i) {
    x = transformer_block(p, "txt." + std::to_string(i) + ".", cfg, x, mask, ctx);
  }
  EncoderOutput out;
  out.states = zero_padded_rows(x, lens);
  out.lengths = lens;
  return out;
}

Var cmlm_forward(const ModelParams& p, const ModelConfig& cfg, const std::vector<int>& tokens,
                 const std::vector<int>& lens, int64_t len_max, const EncoderOutput& enc,
                 const Fwd& ctx) {
  if (!cfg.has_cmlm()) throw ConfigError("cmlm_forward: CMLM decoder is disabled");
  for (int l : lens) {
    if (l > cfg.max_target_len) {
      throw ShapeError("cmlm_forward: length " + std::to_string(l) + " exceeds L_max " +
                       std::to_string(cfg.max_target_len));
    }
  }
  int64_t b = static_cast<int64_t>(lens.size());
  Var x = embed_tokens(p, "dec.embed", cfg, tokens, b, len_max);
  Array self_mask = key_padding_mask(lens, len_max);
  Array cross_mask = key_padding_mask(enc.lengths, enc.states.value().dim(1));
  for (int i = 0; i < cfg.n_dec_blocks; ++i) {
    x = decoder_block(p, "dec." + std::to_string(i) + ".", cfg, x, self_mask, enc, cross_mask, ctx);
  }
  return affine(x, p.at("dec.out.w"), p.at("dec.out.b"));
}

Var ar_forward(const ModelParams& p, const ModelConfig& cfg, const std::vector<int>& tokens,
               const std::vector<int>& lens, int64_t len_max, const EncoderOutput& enc,
               int bos_id, const Fwd& ctx) {
  if (!cfg.has_ar()) throw ConfigError("ar_forward: AR decoder is disabled");
  int64_t b = static_cast<int64_t>(lens.size());
  for (int64_t i = 0; i < b; ++i) {
    if (lens[static_cast<size_t>(i)] < 1 || tokens[static_cast<size_t>(i * len_max)] != bos_id) {
      throw UsageError("ar_forward: row " + std::to_string(i) + " does not begin with bos");
    }
  }
  std::string table = (cfg.tie_ar_embedding && cfg.has_cmlm()) ? "dec.embed" : "ar.embed";
  Var x = embed_tokens(p, table, cfg, tokens, b, len_max);
  Array self_mask = causal_padding_mask(lens, len_max);
  Array cross_mask = key_padding_mask(enc.lengths, enc.states.value().dim(1));
  for (int i = 0; i < cfg.n_ar_blocks; ++i) {
    x = decoder_block(p, "ar." + std::to_string(i) + ".", cfg, x, self_mask, enc, cross_mask, ctx);
  }
  return affine(x, p.at("ar.out.w"), p.at("ar.out.b"));
}

Var ctc_logits(const ModelParams& p, const ModelConfig& cfg, const EncoderOutput& enc) {
  if (!cfg.use_ctc_head) throw ConfigError("ctc_logits: CTC head is disabled");
  return affine(enc.states, p.at("ctc.w"), p.at("ctc.b"));
}

Var predict_length(const ModelParams& p, const ModelConfig& cfg, const EncoderOutput& enc) {
  if (!cfg.use_length_predictor) throw ConfigError("predict_length: length predictor is disabled");
  Var pooled = masked_mean_rows(enc.states, enc.lengths);
  return affine(pooled, p.at("lp.w"), p.at("lp.b"));
}

std::vector<int> top_l_lengths(const Array& length_logits_row, int l) {
  if (length_logits_row.rank() != 1) {
    throw ShapeError("top_l_lengths: expected rank-1 logits, got " + length_logits_row.shape_str());
  }
  if (l < 1) throw UsageError("top_l_lengths: l must be >= 1");
  int64_t n = length_logits_row.numel();
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    double da = length_logits_row[a], db = length_logits_row[b];
    if (da != db) return da > db;
    return a < b;
  });
  idx.resize(static_cast<size_t>(std::min<int64_t>(l, n)));
  return idx;
}

void save_checkpoint(const ModelParams& p, const std::string& path) {
  json header = json::array();
  for (const auto& [name, var] : p.table) {
    header.push_back({{"name", name}, {"shape", var.value().shape}});
  }
  std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write checkpoint to " + path);
  out.write(kCkptMagic, 8);
  uint32_t version = kCkptVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, var] : p.table) {
    const auto& d = var.value().data;
    out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * 8));
  }
  if (!out) throw UsageError("short write to " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read checkpoint from " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0) {
    throw ParseError(path + ": not an orthros checkpoint");
  }
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != kCkptVersion) {
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ParseError(path + ": truncated header");
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  ModelParams p;
  for (const auto& entry : header) {
    std::string name = entry.at("name").get<std::string>();
    std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
    Array a(shape);
    in.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * 8));
    if (!in) throw ParseError(path + ": truncated payload at " + name);
    p.table.emplace(std::move(name), Var::param(std::move(a)));
  }
  return p;
}

}  // namespace orthros
