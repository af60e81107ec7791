#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "orthros/decode.hpp"
#include "orthros/error.hpp"
#include "orthros/eval.hpp"
#include "orthros/log.hpp"
#include "orthros/train.hpp"

namespace fs = std::filesystem;
using namespace orthros;

namespace {

struct GenOptions {
  GenConfig gen;
  int n_dev = 200;
  int n_eval = 200;
};

struct AllOptions {
  GenOptions data;
  ModelConfig model;
  TrainConfig train;
  LossWeights loss;
  DecodeConfig decode;
  std::string algorithm = "mask_predict";
};

// One schema entry: a [section] key bound to a CLI option and a struct field.
// Config files fill fields the command line did not set explicitly.
struct Binding {
  std::string key;  // "model.d-model"
  CLI::Option* opt = nullptr;
  std::function<void(const std::string&, const std::string&)> set;  // (value, context)
  std::function<std::string()> echo;
};

struct Schema {
  CLI::App* cmd = nullptr;
  std::string config_path;
  std::vector<Binding> bindings;
};

template <typename T>
T parse_value(const std::string& raw, const std::string& context);

template <>
std::string parse_value<std::string>(const std::string& raw, const std::string&) {
  return raw;
}

template <>
bool parse_value<bool>(const std::string& raw, const std::string& context) {
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  throw ConfigError(context + ": expected a boolean, got '" + raw + "'");
}

template <>
int parse_value<int>(const std::string& raw, const std::string& context) {
  try {
    size_t pos = 0;
    int v = std::stoi(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(context + ": expected an integer, got '" + raw + "'");
  }
}

template <>
uint64_t parse_value<uint64_t>(const std::string& raw, const std::string& context) {
  try {
    size_t pos = 0;
    uint64_t v = std::stoull(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(context + ": expected an unsigned integer, got '" + raw + "'");
  }
}

template <>
double parse_value<double>(const std::string& raw, const std::string& context) {
  try {
    size_t pos = 0;
    double v = std::stod(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(context + ": expected a number, got '" + raw + "'");
  }
}

std::string echo_value(const std::string& v) { return "\"" + v + "\""; }
std::string echo_value(bool v) { return v ? "true" : "false"; }
std::string echo_value(int v) { return std::to_string(v); }
std::string echo_value(uint64_t v) { return std::to_string(v); }
std::string echo_value(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  std::string s = os.str();
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find("inf") == std::string::npos && s.find("nan") == std::string::npos) {
    s += ".0";
  }
  return s;
}

template <typename T>
void bind_option(Schema& schema, const std::string& key, T& ref, const std::string& desc,
          const std::string& extra_names = "") {
  std::string names = "--" + key;
  if (!extra_names.empty()) names += "," + extra_names;
  CLI::Option* opt;
  if constexpr (std::is_same_v<T, bool>) {
    std::string stem = key.substr(key.find('.') + 1);
    std::string section = key.substr(0, key.find('.'));
    names += ",!--" + section + ".no-" + stem;
    opt = schema.cmd->add_flag(names, ref, desc);
  } else {
    // repeated flags override earlier ones, like config-then-flag layering
    opt = schema.cmd->add_option(names, ref, desc)
              ->capture_default_str()
              ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
  Binding b;
  b.key = key;
  b.opt = opt;
  b.set = [&ref](const std::string& raw, const std::string& context) {
    ref = parse_value<T>(raw, context);
  };
  b.echo = [&ref]() { return echo_value(ref); };
  schema.bindings.push_back(std::move(b));
}

// Minimal TOML subset: [sections], key = value, # comments, quoted strings,
// numbers and booleans. Unknown keys are errors naming the key.
void apply_config_file(Schema& schema) {
  if (schema.config_path.empty()) return;
  std::ifstream in(schema.config_path);
  if (!in) throw UsageError("cannot read config file " + schema.config_path);
  std::map<std::string, Binding*> by_key;
  for (Binding& b : schema.bindings) by_key[b.key] = &b;

  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string context = schema.config_path + ":" + std::to_string(lineno);
    // strip comments outside quotes
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(context + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(context + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    std::string full = section.empty() ? key : section + "." + key;
    auto it = by_key.find(full);
    if (it == by_key.end()) throw ConfigError(context + ": unknown config key: " + full);
    // the command line takes precedence over the file
    if (it->second->opt->count() == 0) it->second->set(value, context);
  }
}

void register_options(CLI::App* cmd, Schema& schema, AllOptions& o) {
  schema.cmd = cmd;
  cmd->add_option("--config", schema.config_path, "TOML config file; command-line flags override it");

  bind_option(schema, "data.seed", o.data.gen.seed, "corpus seed");
  bind_option(schema, "data.n", o.data.gen.n_samples, "training samples", "--n");
  bind_option(schema, "data.n-dev", o.data.n_dev, "dev samples");
  bind_option(schema, "data.n-eval", o.data.n_eval, "eval samples");
  bind_option(schema, "data.vocab-size", o.data.gen.vocab_size, "vocabulary size incl. specials");
  bind_option(schema, "data.len-min", o.data.gen.len_min, "min target length");
  bind_option(schema, "data.len-max", o.data.gen.len_max, "max target length");
  bind_option(schema, "data.repeat-min", o.data.gen.repeat_min, "min frames per source token");
  bind_option(schema, "data.repeat-max", o.data.gen.repeat_max, "max frames per source token");
  bind_option(schema, "data.noise-std", o.data.gen.noise_std, "frame noise stddev");
  bind_option(schema, "data.frame-dim", o.data.gen.frame_dim, "frame feature dim");

  bind_option(schema, "model.encoder", o.model.encoder_kind, "transformer|conformer");
  bind_option(schema, "model.enc-blocks", o.model.n_enc_blocks, "encoder blocks");
  bind_option(schema, "model.dec-blocks", o.model.n_dec_blocks, "CMLM decoder blocks (0 disables)");
  bind_option(schema, "model.ar-blocks", o.model.n_ar_blocks, "AR decoder blocks (0 disables)");
  bind_option(schema, "model.d-model", o.model.d_model, "model width");
  bind_option(schema, "model.d-ff", o.model.d_ff, "feed-forward width");
  bind_option(schema, "model.heads", o.model.n_heads, "attention heads");
  bind_option(schema, "model.conv-kernel", o.model.conv_kernel, "conformer depthwise kernel (odd)");
  bind_option(schema, "model.frame-dim", o.model.frame_dim, "input frame dim");
  bind_option(schema, "model.vocab-size", o.model.vocab_size, "vocabulary size");
  bind_option(schema, "model.max-target-len", o.model.max_target_len, "L_max");
  bind_option(schema, "model.dropout", o.model.dropout, "dropout rate");
  bind_option(schema, "model.ctc-head", o.model.use_ctc_head, "CTC projection head");
  bind_option(schema, "model.length-predictor", o.model.use_length_predictor, "length classifier");
  bind_option(schema, "model.text-encoder", o.model.use_text_encoder, "auxiliary text encoder");
  bind_option(schema, "model.tie-ar-embedding", o.model.tie_ar_embedding,
       "share the target embedding with the AR decoder");

  bind_option(schema, "train.objective", o.train.objective,
       "ar|cmlm|smart|ctc|ctc_cmlm|orthros_cmlm|orthros_ctc");
  bind_option(schema, "train.epochs", o.train.epochs, "training epochs");
  bind_option(schema, "train.batch-size", o.train.batch_size, "batch size (utterances)");
  bind_option(schema, "train.lr-constant", o.train.lr_constant, "Noam constant");
  bind_option(schema, "train.warmup-steps", o.train.warmup_steps, "Noam warmup steps");
  bind_option(schema, "train.adam-beta1", o.train.adam_beta1, "Adam beta1");
  bind_option(schema, "train.adam-beta2", o.train.adam_beta2, "Adam beta2");
  bind_option(schema, "train.adam-eps", o.train.adam_eps, "Adam epsilon");
  bind_option(schema, "train.seed", o.train.seed, "training seed", "--seed");
  bind_option(schema, "train.n-avg", o.train.n_avg, "checkpoints to average");
  bind_option(schema, "train.clip-norm", o.train.clip_norm, "gradient clip (global norm)");

  bind_option(schema, "loss.lambda-lp", o.loss.lambda_lp, "length-loss weight");
  bind_option(schema, "loss.lambda-ar", o.loss.lambda_ar, "AR-loss weight");
  bind_option(schema, "loss.lambda-mt", o.loss.lambda_mt, "NAR-MT loss weight");
  bind_option(schema, "loss.lambda-ctc", o.loss.lambda_ctc, "CTC interpolation weight");
  bind_option(schema, "loss.mmt-passes", o.loss.mmt_passes, "MMT forward passes M");
  bind_option(schema, "loss.label-smoothing", o.loss.label_smoothing, "label smoothing");
  bind_option(schema, "loss.p-thres", o.loss.p_thres, "CTC-CMLM confidence threshold");

  bind_option(schema, "decode.algorithm", o.algorithm, "ar_beam|ctc_greedy|ctc_beam|mask_predict|ctc_cmlm",
       "--algorithm");
  bind_option(schema, "decode.iterations", o.decode.iterations, "Mask-Predict iterations T", "--T");
  bind_option(schema, "decode.length-beam", o.decode.length_beam, "length beam / CTC beam l", "--l");
  bind_option(schema, "decode.beam-width", o.decode.beam_width, "AR beam width", "--b");
  bind_option(schema, "decode.p-thres", o.decode.p_thres, "CTC-CMLM confidence threshold");
  bind_option(schema, "decode.dedup", o.decode.dedup, "collapse repeated tokens in CMLM output");
  bind_option(schema, "decode.update-all", o.decode.update_all, "update all positions per iteration");
  bind_option(schema, "decode.rescore", o.decode.rescore, "parallel AR rescoring");
  bind_option(schema, "decode.max-len", o.decode.max_len, "AR generation cap");
}

// The merged view, written into every output directory; itself a valid
// --config file.
void echo_config(const Schema& schema, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir + "/config_used.toml");
  std::string section;
  for (const Binding& b : schema.bindings) {
    std::string s = b.key.substr(0, b.key.find('.'));
    std::string k = b.key.substr(b.key.find('.') + 1);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << "[" << s << "]\n";
      section = s;
    }
    out << k << " = " << b.echo() << "\n";
  }
}

Vocabulary load_vocab_for(const AllOptions& o, const std::string& vocab_path) {
  Vocabulary vocab = Vocabulary::load(vocab_path);
  if (o.model.vocab_size != vocab.size()) {
    throw ConfigError("model.vocab-size " + std::to_string(o.model.vocab_size) +
                      " does not match vocabulary size " + std::to_string(vocab.size()) +
                      " from " + vocab_path);
  }
  return vocab;
}

std::vector<DecodeRecord> run_decode(const ModelParams& params, const AllOptions& o,
                                     const std::vector<Sample>& samples, const Vocabulary& vocab,
                                     bool emit_candidates) {
  DecodeConfig dcfg = o.decode;
  dcfg.algorithm = algo_from_string(o.algorithm);
  std::vector<DecodeRecord> records;
  for (const Sample& s : samples) {
    DecodeResult r = decode_sample(params, o.model, dcfg, s, vocab);
    DecodeRecord rec;
    rec.id = s.id;
    rec.hyp = r.best.tokens;
    rec.nar_score = r.best.nar_score;
    rec.ar_score = r.best.ar_score;
    rec.n_candidates = static_cast<int>(r.candidates.size());
    rec.algorithm = r.algorithm;
    if (emit_candidates) {
      for (const Hypothesis& h : r.candidates) rec.candidates.push_back(h.tokens);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

int cmd_gen_data(const AllOptions& o, const std::string& out_dir) {
  GenConfig gc = o.data.gen;
  int total = gc.n_samples + o.data.n_dev + o.data.n_eval;
  if (total < 1) throw UsageError("gen-data: nothing to generate");
  GenConfig all = gc;
  all.n_samples = total;
  std::vector<Sample> samples = gen_corpus(all);
  fs::create_directories(out_dir);
  Vocabulary vocab = Vocabulary::make(gc.vocab_size);
  vocab.save(out_dir + "/vocab.json");
  auto slice = [&](int from, int count) {
    return std::vector<Sample>(samples.begin() + from, samples.begin() + from + count);
  };
  save_dataset(slice(0, gc.n_samples), out_dir + "/train.jsonl");
  save_dataset(slice(gc.n_samples, o.data.n_dev), out_dir + "/dev.jsonl");
  save_dataset(slice(gc.n_samples + o.data.n_dev, o.data.n_eval), out_dir + "/eval.jsonl");
  log_info("gen-data: wrote " + std::to_string(gc.n_samples) + "/" + std::to_string(o.data.n_dev) +
           "/" + std::to_string(o.data.n_eval) + " samples to " + out_dir);
  return 0;
}

int cmd_train(const AllOptions& o, const std::string& data_dir, const std::string& out_dir) {
  Vocabulary vocab = load_vocab_for(o, data_dir + "/vocab.json");
  std::vector<Sample> train_set = load_dataset(data_dir + "/train.jsonl");
  std::vector<Sample> dev_set;
  if (fs::exists(data_dir + "/dev.jsonl")) dev_set = load_dataset(data_dir + "/dev.jsonl");
  o.model.validate();
  ModelParams params = ModelParams::init(o.model, o.train.seed);
  FitResult fr = fit(params, o.model, o.train, o.loss, vocab, train_set, dev_set, out_dir);
  log_info("train: averaged checkpoint at " + fr.averaged_path);
  return 0;
}

int cmd_distill(const AllOptions& o, const std::string& model_path, const std::string& data_path,
                const std::string& vocab_path, const std::string& out_path, int beam) {
  Vocabulary vocab = load_vocab_for(o, vocab_path);
  ModelParams teacher = load_checkpoint(model_path);
  std::vector<Sample> dataset = load_dataset(data_path);
  int empties = 0;
  std::vector<Sample> distilled = seqkd_distill(teacher, o.model, dataset, beam, vocab, &empties);
  save_dataset(distilled, out_path);
  log_info("distill: wrote " + std::to_string(distilled.size()) + " samples to " + out_path +
           " (" + std::to_string(empties) + " empty teacher outputs kept original)");
  return 0;
}

int cmd_decode(const AllOptions& o, const std::string& model_path, const std::string& data_path,
               const std::string& vocab_path, const std::string& out_path, bool emit_candidates) {
  Vocabulary vocab = load_vocab_for(o, vocab_path);
  ModelParams params = load_checkpoint(model_path);
  std::vector<Sample> samples = load_dataset(data_path);
  std::vector<DecodeRecord> records = run_decode(params, o, samples, vocab, emit_candidates);
  write_decode_jsonl(records, out_path, emit_candidates);
  log_info("decode: wrote " + std::to_string(records.size()) + " hypotheses to " + out_path);
  return 0;
}

int cmd_eval(const std::string& hyp_path, const std::string& data_path, const std::string& out_path,
             const std::string& csv_path) {
  std::vector<DecodeRecord> records = read_decode_jsonl(hyp_path);
  std::vector<Sample> dataset = load_dataset(data_path);
  std::map<int, const Sample*> by_id;
  for (const Sample& s : dataset) by_id[s.id] = &s;
  std::vector<std::vector<int>> hyps, refs;
  std::vector<int> ids;
  std::vector<std::vector<std::vector<int>>> candidates;
  bool have_candidates = true;
  for (const DecodeRecord& r : records) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw UsageError("eval: id " + std::to_string(r.id) + " not in dataset");
    hyps.push_back(r.hyp);
    refs.push_back(it->second->tgt);
    ids.push_back(r.id);
    if (r.candidates.empty()) {
      have_candidates = false;
    } else {
      candidates.push_back(r.candidates);
    }
  }
  EvalReport report = evaluate(hyps, refs, ids, have_candidates ? &candidates : nullptr);
  write_eval_report(report, out_path);
  if (!csv_path.empty()) write_eval_csv(report, csv_path);
  std::ostringstream os;
  os << "eval: corpus BLEU " << report.corpus_bleu << ", exact match " << report.exact_match
     << ", oracle BLEU " << report.oracle_bleu;
  log_info(os.str());
  return 0;
}

int cmd_bench(const AllOptions& o, const std::string& model_path, const std::string& baseline_model,
              const std::string& data_path, const std::string& vocab_path,
              const std::string& out_path, const std::string& baseline_algorithm,
              const DecodeConfig& baseline_decode, int runs) {
  Vocabulary vocab = load_vocab_for(o, vocab_path);
  ModelParams params = load_checkpoint(model_path);
  std::vector<Sample> dataset = load_dataset(data_path);
  DecodeConfig dcfg = o.decode;
  dcfg.algorithm = algo_from_string(o.algorithm);
  DecodeConfig base = baseline_decode;
  base.algorithm = algo_from_string(baseline_algorithm);

  BenchReport report;
  if (baseline_model.empty() || baseline_model == model_path) {
    report = bench_decode(params, o.model, dataset, dcfg, base, vocab, runs);
  } else {
    ModelParams bparams = load_checkpoint(baseline_model);
    BenchTiming main = bench_time(params, o.model, dataset, dcfg, vocab, runs);
    BenchTiming bt = bench_time(bparams, o.model, dataset, base, vocab, runs);
    report.algorithm = algo_name(dcfg.algorithm);
    report.mean_ms = main.mean_ms;
    report.stdev_ms = main.stdev_ms;
    report.runs = runs;
    report.baseline_algorithm = algo_name(base.algorithm);
    report.baseline_mean_ms = bt.mean_ms;
    report.baseline_stdev_ms = bt.stdev_ms;
    report.speedup = bt.mean_ms / main.mean_ms;
  }
  write_bench_report(report, out_path);
  std::ostringstream os;
  os << "bench: " << report.algorithm << " " << report.mean_ms << " ms/utt, speedup "
     << report.speedup << "x vs " << report.baseline_algorithm;
  log_info(os.str());
  return 0;
}

std::string parent_or_dot(const std::string& path) {
  fs::path parent = fs::path(path).parent_path();
  return parent.empty() ? "." : parent.string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orthros: non-autoregressive frame-to-token translation toolkit"};
  app.require_subcommand(1);

  AllOptions gen_o, train_o, distill_o, decode_o, bench_o;
  Schema gen_s, train_s, distill_s, decode_s, bench_s;
  std::string out_dir = "out";
  std::string data_dir, data_path, vocab_path, model_path, hyp_path, out_path, csv_path;
  std::string distill_model, distill_out, train_out;
  std::string baseline_model, baseline_algorithm = "ar_beam";
  DecodeConfig baseline_decode;
  bool emit_candidates = false;
  int distill_beam = 5;
  int bench_runs = 5;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic frame-to-token corpus");
  register_options(gen, gen_s, gen_o);
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "train a model");
  register_options(train, train_s, train_o);
  train->add_option("--data", data_dir, "directory with train.jsonl/dev.jsonl/vocab.json")->required();
  train->add_option("--out", train_out, "output directory for checkpoints and logs")->required();

  CLI::App* distill = app.add_subcommand("distill", "sequence-level knowledge distillation");
  register_options(distill, distill_s, distill_o);
  distill->add_option("--model", distill_model, "teacher checkpoint")->required();
  distill->add_option("--data", data_path, "dataset to distill")->required();
  distill->add_option("--vocab", vocab_path, "vocabulary file")->required();
  distill->add_option("--out", distill_out, "distilled dataset path")->required();
  distill->add_option("--beam", distill_beam, "teacher beam width")->capture_default_str();

  CLI::App* decode = app.add_subcommand("decode", "decode a dataset with a trained model");
  register_options(decode, decode_s, decode_o);
  decode->add_option("--model", model_path, "model checkpoint")->required();
  decode->add_option("--data", data_path, "dataset to decode")->required();
  decode->add_option("--vocab", vocab_path, "vocabulary file")->required();
  decode->add_option("--out", out_path, "hypothesis JSONL path")->required();
  decode->add_flag("--emit-candidates", emit_candidates, "include all candidates per sentence");

  CLI::App* eval_cmd = app.add_subcommand("eval", "score decode output against references");
  eval_cmd->add_option("--hyp", hyp_path, "decode output JSONL")->required();
  eval_cmd->add_option("--data", data_path, "reference dataset")->required();
  eval_cmd->add_option("--out", out_path, "evaluation report path")->required();
  eval_cmd->add_option("--csv", csv_path, "optional per-sentence CSV");

  CLI::App* bench = app.add_subcommand("bench", "wall-clock decoding benchmark");
  register_options(bench, bench_s, bench_o);
  bench->add_option("--model", model_path, "model checkpoint")->required();
  bench->add_option("--baseline-model", baseline_model, "baseline checkpoint (defaults to --model)");
  bench->add_option("--data", data_path, "dataset to decode")->required();
  bench->add_option("--vocab", vocab_path, "vocabulary file")->required();
  bench->add_option("--out", out_path, "benchmark report path")->required();
  bench->add_option("--baseline.algorithm", baseline_algorithm, "baseline algorithm")->capture_default_str();
  bench->add_option("--baseline.iterations", baseline_decode.iterations, "baseline T")->capture_default_str();
  bench->add_option("--baseline.length-beam", baseline_decode.length_beam, "baseline l")->capture_default_str();
  bench->add_option("--baseline.beam-width", baseline_decode.beam_width, "baseline beam width")->capture_default_str();
  bench->add_option("--baseline.max-len", baseline_decode.max_len, "baseline AR cap")->capture_default_str();
  bench->add_flag("--baseline.rescore,!--baseline.no-rescore", baseline_decode.rescore, "baseline rescoring");
  bench->add_option("--runs", bench_runs, "timed runs per config")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      apply_config_file(gen_s);
      echo_config(gen_s, out_dir);
      return cmd_gen_data(gen_o, out_dir);
    }
    if (train->parsed()) {
      apply_config_file(train_s);
      echo_config(train_s, train_out);
      return cmd_train(train_o, data_dir, train_out);
    }
    if (distill->parsed()) {
      apply_config_file(distill_s);
      echo_config(distill_s, parent_or_dot(distill_out));
      return cmd_distill(distill_o, distill_model, data_path, vocab_path, distill_out, distill_beam);
    }
    if (decode->parsed()) {
      apply_config_file(decode_s);
      echo_config(decode_s, parent_or_dot(out_path));
      return cmd_decode(decode_o, model_path, data_path, vocab_path, out_path, emit_candidates);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(hyp_path, data_path, out_path, csv_path);
    }
    if (bench->parsed()) {
      apply_config_file(bench_s);
      echo_config(bench_s, parent_or_dot(out_path));
      return cmd_bench(bench_o, model_path, baseline_model, data_path, vocab_path, out_path,
                       baseline_algorithm, baseline_decode, bench_runs);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
