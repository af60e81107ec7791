#ifndef ORTHROS_TRAIN_HPP
#define ORTHROS_TRAIN_HPP

#include <map>
#include <string>
#include <vector>

#include "orthros/losses.hpp"

namespace orthros {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr_constant = 2.0;
  int warmup_steps = 400;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  uint64_t seed = 1;
  // ar | cmlm | smart | ctc | ctc_cmlm | orthros_cmlm | orthros_ctc
  std::string objective = "orthros_cmlm";
  int n_avg = 5;
  double clip_norm = 5.0;
  void validate() const;
};

struct OptimizerState {
  int64_t step = 0;
  std::map<std::string, Array> m;
  std::map<std::string, Array> v;
};

// lr = constant * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
double noam_lr(int64_t step, int d_model, int warmup, double constant);

// One objective evaluation; mask/dropout streams derive from step_seed so a
// step is a pure function of (params, batch, step_seed).
LossResult compute_objective(const std::string& objective, const ModelParams& p,
                             const ModelConfig& cfg, const Batch& batch, const LossWeights& w,
                             const Vocabulary& vocab, uint64_t step_seed, bool training);

struct StepResult {
  double lr = 0.0;
  std::map<std::string, double> components;  // includes "total"
};

// Backward + clipped Adam update with the Noam schedule.
StepResult train_step(ModelParams& p, OptimizerState& opt, const ModelConfig& cfg,
                      const Batch& batch, const TrainConfig& tc, const LossWeights& w,
                      const Vocabulary& vocab);

struct FitResult {
  std::vector<std::string> checkpoint_paths;  // one per epoch
  std::vector<double> val_losses;             // one per epoch
  std::vector<std::string> best_paths;        // the n_avg best, earlier epoch on ties
  std::string averaged_path;                  // element-wise mean of best_paths
};

// Full loop: shuffled epochs, per-step JSONL log, per-epoch checkpoint with a
// validation-score sidecar, checkpoint averaging at the end.
FitResult fit(ModelParams& p, const ModelConfig& cfg, const TrainConfig& tc, const LossWeights& w,
              const Vocabulary& vocab, const std::vector<Sample>& train_set,
              const std::vector<Sample>& dev_set, const std::string& out_dir);

// Replace every target with the teacher's beam output; frames and source
// transcription stay untouched. Samples whose teacher output is empty keep
// the original target and are counted.
std::vector<Sample> seqkd_distill(const ModelParams& teacher, const ModelConfig& cfg,
                                  const std::vector<Sample>& dataset, int beam,
                                  const Vocabulary& vocab, int* empty_count = nullptr);

// Element-wise mean over checkpoints sharing one name/shape table.
ModelParams average_checkpoints(const std::vector<std::string>& paths);

// Indices of the n_avg smallest validation losses, earlier epoch on ties.
std::vector<int> select_best_epochs(const std::vector<double>& val_losses, int n_avg);

}  // namespace orthros

#endif
