#include "orthros/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "orthros/decode.hpp"
#include "orthros/error.hpp"
#include "orthros/log.hpp"

namespace orthros {

using nlohmann::json;

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("ORTHROS_LOG");
    if (!env) return LogLevel::info;
    std::string s(env);
    if (s == "quiet") return LogLevel::quiet;
    if (s == "debug") return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::cerr << msg << "\n";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (warmup_steps < 1) throw ConfigError("train: warmup_steps must be >= 1");
  if (n_avg < 1) throw ConfigError("train: n_avg must be >= 1");
  if (clip_norm <= 0) throw ConfigError("train: clip_norm must be > 0");
  static const char* known[] = {"ar", "cmlm", "smart", "ctc", "ctc_cmlm", "orthros_cmlm", "orthros_ctc"};
  for (const char* k : known) {
    if (objective == k) return;
  }
  throw ConfigError("train: unknown objective " + objective);
}

double noam_lr(int64_t step, int d_model, int warmup, double constant) {
  if (step < 1) throw UsageError("noam_lr: step must be >= 1");
  double s = static_cast<double>(step);
  double w = static_cast<double>(warmup);
  return constant * std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

LossResult compute_objective(const std::string& objective, const ModelParams& p,
                             const ModelConfig& cfg, const Batch& batch, const LossWeights& w,
                             const Vocabulary& vocab, uint64_t step_seed, bool training) {
  SplitMix64 root(step_seed);
  SplitMix64 mask_rng = root.split(11);
  SplitMix64 mt_mask_rng = root.split(12);
  SplitMix64 dropout_rng = root.split(13);
  Fwd ctx{training, training ? &dropout_rng : nullptr};

  if (objective == "orthros_cmlm") {
    return total_orthros_cmlm(p, cfg, batch, w, vocab, mask_rng, mt_mask_rng, ctx);
  }
  if (objective == "orthros_ctc") {
    return total_orthros_ctc(p, cfg, batch, w, vocab, ctx);
  }
  if (objective == "ctc_cmlm") {
    return ctc_cmlm_total(p, cfg, batch, w, vocab, mask_rng, ctx);
  }

  LossResult r;
  EncoderOutput enc = encode_speech(p, cfg, batch, ctx);
  if (objective == "ar") {
    Var ar = ar_objective(p, cfg, batch, enc, vocab, w.label_smoothing, ctx);
    r.components["ar"] = ar.value().data[0];
    r.total = ar;
  } else if (objective == "ctc") {
    Var ctc = ctc_loss_batch(ctc_logits(p, cfg, enc), enc.lengths, batch.tgt, batch.tgt_lens,
                             batch.tgt_max);
    r.components["ctc"] = ctc.value().data[0];
    r.total = ctc;
  } else if (objective == "cmlm" || objective == "smart") {
    Var main = objective == "cmlm"
                   ? mmt_loss(p, cfg, batch, enc, w.mmt_passes, w.label_smoothing, vocab.mask_id,
                              mask_rng, ctx)
                   : smart_loss(p, cfg, batch, enc, w.label_smoothing, vocab.mask_id, mask_rng, ctx);
    r.components[objective] = main.value().data[0];
    Var total = main;
    if (w.lambda_lp > 0) {
      if (!cfg.use_length_predictor) throw ConfigError("lambda_lp > 0 but the length predictor is disabled");
      Var lp = length_loss(predict_length(p, cfg, enc), batch.tgt_lens);
      r.components["lp"] = lp.value().data[0];
      total = add(total, scale(lp, w.lambda_lp));
    }
    r.total = total;
  } else {
    throw ConfigError("unknown objective " + objective);
  }
  r.components["total"] = r.total.value().data[0];
  return r;
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
  SplitMix64 s(seed ^ (0x9e3779b97f4a7c15ULL * (a + 1)) ^ (0xc2b2ae3d27d4eb4fULL * (b + 1)));
  return s.next_u64();
}

}  // namespace

StepResult train_step(ModelParams& p, OptimizerState& opt, const ModelConfig& cfg,
                      const Batch& batch, const TrainConfig& tc, const LossWeights& w,
                      const Vocabulary& vocab) {
  tc.validate();
  uint64_t step_seed = mix_seed(tc.seed, static_cast<uint64_t>(opt.step) + 1);
  LossResult loss = compute_objective(tc.objective, p, cfg, batch, w, vocab, step_seed, true);
  double total = loss.total.value().data[0];
  if (!std::isfinite(total)) {
    std::ostringstream os;
    os << "train_step: non-finite loss at step " << opt.step + 1 << "; components:";
    for (const auto& [k, v] : loss.components) os << " " << k << "=" << v;
    throw NumericError(os.str());
  }
  p.zero_grads();
  loss.total.backward();

  // Global-norm clipping guards the small-batch desk regime.
  double sq = 0.0;
  for (auto& [name, var] : p.table) {
    const Array& g = var.grad();
    for (double x : g.data) sq += x * x;
  }
  double norm = std::sqrt(sq);
  double clip_scale = norm > tc.clip_norm ? tc.clip_norm / norm : 1.0;

  opt.step += 1;
  double lr = noam_lr(opt.step, cfg.d_model, tc.warmup_steps, tc.lr_constant);
  double bc1 = 1.0 - std::pow(tc.adam_beta1, static_cast<double>(opt.step));
  double bc2 = 1.0 - std::pow(tc.adam_beta2, static_cast<double>(opt.step));
  for (auto& [name, var] : p.table) {
    const Array& g = var.grad();
    Array& m = opt.m.try_emplace(name, Array(g.shape)).first->second;
    Array& v = opt.v.try_emplace(name, Array(g.shape)).first->second;
    Array& val = var.mutable_value();
    for (size_t i = 0; i < g.data.size(); ++i) {
      double gi = g.data[i] * clip_scale;
      m.data[i] = tc.adam_beta1 * m.data[i] + (1.0 - tc.adam_beta1) * gi;
      v.data[i] = tc.adam_beta2 * v.data[i] + (1.0 - tc.adam_beta2) * gi * gi;
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      val.data[i] -= lr * mhat / (std::sqrt(vhat) + tc.adam_eps);
    }
  }
  StepResult res;
  res.lr = lr;
  res.components = std::move(loss.components);
  return res;
}

std::vector<int> select_best_epochs(const std::vector<double>& val_losses, int n_avg) {
  std::vector<int> idx(val_losses.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (val_losses[static_cast<size_t>(a)] != val_losses[static_cast<size_t>(b)]) {
      return val_losses[static_cast<size_t>(a)] < val_losses[static_cast<size_t>(b)];
    }
    return a < b;
  });
  if (static_cast<int>(idx.size()) > n_avg) idx.resize(static_cast<size_t>(n_avg));
  return idx;
}

FitResult fit(ModelParams& p, const ModelConfig& cfg, const TrainConfig& tc, const LossWeights& w,
              const Vocabulary& vocab, const std::vector<Sample>& train_set,
              const std::vector<Sample>& dev_set, const std::string& out_dir) {
  tc.validate();
  w.validate();
  if (train_set.empty()) throw UsageError("fit: empty training set");
  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir + "/train_log.jsonl");
  if (!log) throw UsageError("fit: cannot write log under " + out_dir);

  OptimizerState opt;
  FitResult result;
  const uint64_t val_seed = mix_seed(tc.seed, 0xda7a, 0x7e57);  // fixed across epochs

  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    SplitMix64 shuffle_rng(mix_seed(tc.seed, 0x5f7f1e, static_cast<uint64_t>(epoch)));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle_rng.range(0, i));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tc.batch_size)) {
      std::vector<Sample> chunk;
      for (size_t i = start; i < std::min(order.size(), start + static_cast<size_t>(tc.batch_size)); ++i) {
        chunk.push_back(train_set[static_cast<size_t>(order[i])]);
      }
      Batch batch = pad_batch(chunk, vocab.pad_id);
      StepResult step = train_step(p, opt, cfg, batch, tc, w, vocab);
      json j;
      j["step"] = opt.step;
      j["epoch"] = epoch;
      j["lr"] = step.lr;
      j["loss_total"] = step.components.at("total");
      json comps = json::object();
      for (const auto& [k, v] : step.components) {
        if (k != "total") comps[k] = v;
      }
      j["loss_components"] = std::move(comps);
      log << j.dump() << "\n";
    }

    // Validation loss with a fixed mask seed so epochs are comparable.
    double val = 0.0;
    if (!dev_set.empty()) {
      int batches = 0;
      for (size_t start = 0; start < dev_set.size(); start += static_cast<size_t>(tc.batch_size)) {
        std::vector<Sample> chunk(dev_set.begin() + static_cast<int64_t>(start),
                                  dev_set.begin() + static_cast<int64_t>(std::min(
                                                        dev_set.size(), start + static_cast<size_t>(tc.batch_size))));
        Batch batch = pad_batch(chunk, vocab.pad_id);
        NoGradGuard ng;
        LossResult r = compute_objective(tc.objective, p, cfg, batch, w, vocab,
                                         mix_seed(val_seed, start), false);
        val += r.total.value().data[0];
        ++batches;
      }
      val /= std::max(1, batches);
    }
    result.val_losses.push_back(val);

    char name[64];
    std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
    std::string ckpt_path = out_dir + "/" + name;
    save_checkpoint(p, ckpt_path);
    result.checkpoint_paths.push_back(ckpt_path);
    json sidecar;
    sidecar["epoch"] = epoch;
    sidecar["val_loss"] = val;
    sidecar["step"] = opt.step;
    std::ofstream sc(ckpt_path + ".json");
    sc << sidecar.dump(2) << "\n";

    std::ostringstream os;
    os << "epoch " << epoch << "/" << tc.epochs << " objective=" << tc.objective
       << " val_loss=" << val;
    log_info(os.str());
  }

  for (int i : select_best_epochs(result.val_losses, tc.n_avg)) {
    result.best_paths.push_back(result.checkpoint_paths[static_cast<size_t>(i)]);
  }
  ModelParams averaged = average_checkpoints(result.best_paths);
  result.averaged_path = out_dir + "/averaged.ckpt";
  save_checkpoint(averaged, result.averaged_path);
  return result;
}

std::vector<Sample> seqkd_distill(const ModelParams& teacher, const ModelConfig& cfg,
                                  const std::vector<Sample>& dataset, int beam,
                                  const Vocabulary& vocab, int* empty_count) {
  if (beam < 1) throw UsageError("seqkd_distill: beam must be >= 1");
  std::vector<Sample> out;
  out.reserve(dataset.size());
  int empties = 0;
  for (const Sample& s : dataset) {
    DecodeConfig dcfg;
    dcfg.algorithm = Algo::ar_beam;
    dcfg.beam_width = beam;
    dcfg.max_len = cfg.max_target_len;
    DecodeResult r = decode_sample(teacher, cfg, dcfg, s, vocab);
    Sample d = s;
    if (r.best.tokens.empty()) {
      ++empties;  // keep the original target
    } else {
      d.tgt = r.best.tokens;
    }
    out.push_back(std::move(d));
  }
  if (empty_count) *empty_count = empties;
  if (empties > 0) {
    log_info("seqkd_distill: kept original targets for " + std::to_string(empties) +
             " samples with empty teacher output");
  }
  return out;
}

ModelParams average_checkpoints(const std::vector<std::string>& paths) {
  if (paths.empty()) throw UsageError("average_checkpoints: no checkpoints given");
  ModelParams base = load_checkpoint(paths[0]);
  // Mean as base + sum(x - base)/k: averaging k copies of one checkpoint is
  // then exactly the identity.
  std::map<std::string, Array> delta;
  for (const auto& [name, var] : base.table) delta.emplace(name, Array(var.value().shape));
  for (size_t i = 1; i < paths.size(); ++i) {
    ModelParams next = load_checkpoint(paths[i]);
    std::string mismatches;
    for (const auto& [name, var] : base.table) {
      auto it = next.table.find(name);
      if (it == next.table.end() || !it->second.value().same_shape(var.value())) {
        mismatches += " " + name;
      }
    }
    for (const auto& [name, var] : next.table) {
      if (!base.table.count(name)) mismatches += " " + name;
    }
    if (!mismatches.empty()) {
      throw ConfigError("average_checkpoints: incompatible tables at " + paths[i] + ":" + mismatches);
    }
    for (auto& [name, var] : base.table) {
      Array& d = delta.at(name);
      const Array& b = next.table.at(name).value();
      const Array& a = var.value();
      for (size_t k = 0; k < d.data.size(); ++k) d.data[k] += b.data[k] - a.data[k];
    }
  }
  double inv = 1.0 / static_cast<double>(paths.size());
  for (auto& [name, var] : base.table) {
    Array& a = var.mutable_value();
    const Array& d = delta.at(name);
    for (size_t k = 0; k < a.data.size(); ++k) a.data[k] += d.data[k] * inv;
  }
  return base;
}

}  // namespace orthros
