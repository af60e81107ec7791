#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "orthros/data.hpp"
#include "orthros/decode.hpp"
#include "orthros/eval.hpp"

using namespace orthros;
namespace fs = std::filesystem;

namespace {

const std::string kBin = ORTHROS_BIN;

int run(const std::string& args, const std::string& log = "/dev/null") {
  std::string cmd = "ORTHROS_LOG=quiet " + kBin + " " + args + " > " + log + " 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

fs::path work_root() {
  fs::path p = fs::temp_directory_path() / "orthros_cli_test";
  fs::create_directories(p);
  return p;
}

// a corpus and model small enough that train runs in seconds
std::string micro_flags() {
  return "--data.vocab-size 16 --data.len-min 2 --data.len-max 4 --data.frame-dim 8"
         " --model.vocab-size 16 --model.frame-dim 8 --model.enc-blocks 1 --model.dec-blocks 2"
         " --model.ar-blocks 1 --model.d-model 16 --model.d-ff 32 --model.heads 2"
         " --model.max-target-len 12";
}

}  // namespace

TEST_CASE("gen-data is deterministic across runs") {
  fs::path root = work_root();
  fs::remove_all(root / "g1");
  fs::remove_all(root / "g2");
  std::string common = "gen-data --seed 7 --n 20 --data.n-dev 4 --data.n-eval 4 " + micro_flags();
  CHECK(run(common + " --out " + (root / "g1").string()) == 0);
  CHECK(run(common + " --out " + (root / "g2").string()) == 0);
  for (const char* f : {"train.jsonl", "dev.jsonl", "eval.jsonl", "vocab.json"}) {
    CHECK(slurp((root / "g1" / f).string()) == slurp((root / "g2" / f).string()));
  }
}

TEST_CASE("full pipeline: gen-data, train, decode, eval, bench, distill") {
  fs::path root = work_root();
  fs::path data = root / "data";
  fs::path out = root / "run";
  fs::remove_all(data);
  fs::remove_all(out);
  REQUIRE(run("gen-data --seed 9 --n 24 --data.n-dev 6 --data.n-eval 6 " + micro_flags() +
              " --out " + data.string()) == 0);

  REQUIRE(run("train --data " + data.string() + " --out " + out.string() + " " + micro_flags() +
              " --train.objective orthros_cmlm --model.text-encoder"
              " --train.epochs 2 --train.batch-size 8 --train.warmup-steps 20 --seed 5") == 0);
  CHECK(fs::exists(out / "averaged.ckpt"));
  CHECK(fs::exists(out / "train_log.jsonl"));
  CHECK(fs::exists(out / "config_used.toml"));
  CHECK(fs::exists(out / "epoch_001.ckpt.json"));

  std::string model = (out / "averaged.ckpt").string();
  std::string hyp = (out / "hyp.jsonl").string();
  REQUIRE(run("decode --model " + model + " --data " + (data / "eval.jsonl").string() + " --vocab " +
              (data / "vocab.json").string() + " --out " + hyp + " " + micro_flags() +
              " --algorithm mask_predict --T 4 --l 3 --decode.rescore --emit-candidates") == 0);
  std::vector<DecodeRecord> records = read_decode_jsonl(hyp);
  CHECK(records.size() == 6);
  CHECK(records[0].n_candidates == 3);
  CHECK(records[0].ar_score.has_value());

  std::string report = (out / "eval.json").string();
  REQUIRE(run("eval --hyp " + hyp + " --data " + (data / "eval.jsonl").string() + " --out " + report +
              " --csv " + (out / "eval.csv").string()) == 0);
  EvalReport r = read_eval_report(report);
  CHECK(r.sentences.size() == 6);
  CHECK(r.oracle_bleu >= 0.0);
  CHECK(fs::exists(out / "eval.csv"));

  // decode determinism at the file level
  std::string hyp2 = (out / "hyp2.jsonl").string();
  REQUIRE(run("decode --model " + model + " --data " + (data / "eval.jsonl").string() + " --vocab " +
              (data / "vocab.json").string() + " --out " + hyp2 + " " + micro_flags() +
              " --algorithm mask_predict --T 4 --l 3 --decode.rescore --emit-candidates") == 0);
  CHECK(slurp(hyp) == slurp(hyp2));

  std::string bench_out = (out / "bench.json").string();
  REQUIRE(run("bench --model " + model + " --data " + (data / "eval.jsonl").string() + " --vocab " +
              (data / "vocab.json").string() + " --out " + bench_out + " " + micro_flags() +
              " --algorithm mask_predict --T 2 --l 2"
              " --baseline.algorithm ar_beam --baseline.beam-width 2 --baseline.max-len 8 --runs 2") == 0);
  BenchReport br = read_bench_report(bench_out);
  CHECK(br.mean_ms > 0.0);
  CHECK(br.baseline_mean_ms > 0.0);
  CHECK(br.speedup > 0.0);

  std::string distilled = (out / "distilled.jsonl").string();
  REQUIRE(run("distill --model " + model + " --data " + (data / "train.jsonl").string() + " --vocab " +
              (data / "vocab.json").string() + " --out " + distilled + " --beam 2 " + micro_flags()) == 0);
  CHECK(load_dataset(distilled).size() == 24);
}

TEST_CASE("help is available for every command") {
  for (const char* cmd : {"gen-data", "train", "distill", "decode", "eval", "bench"}) {
    fs::path log = work_root() / "help.txt";
    CHECK(run(std::string(cmd) + " --help", log.string()) == 0);
    std::string text = slurp(log.string());
    CHECK(text.find("--help") != std::string::npos);
  }
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(run("no-such-command") == 1);
  CHECK(run("decode") == 1);  // missing required flags
}

TEST_CASE("unknown config keys are rejected by name") {
  fs::path root = work_root();
  fs::path cfg = root / "bad.toml";
  {
    std::ofstream out(cfg);
    out << "[model]\nbogus-key = 3\n";
  }
  fs::path log = root / "bad.log";
  CHECK(run("gen-data --config " + cfg.string() + " --out " + (root / "bad_out").string(), log.string()) == 1);
  std::string text = slurp(log.string());
  CHECK(text.find("bogus-key") != std::string::npos);
}

TEST_CASE("runtime failures exit with code 2") {
  fs::path root = work_root();
  fs::path data = root / "data2";
  fs::path out = root / "run2";
  fs::remove_all(data);
  fs::remove_all(out);
  REQUIRE(run("gen-data --seed 3 --n 6 --data.n-dev 2 --data.n-eval 2 " + micro_flags() + " --out " +
              data.string()) == 0);
  REQUIRE(run("train --data " + data.string() + " --out " + out.string() + " " + micro_flags() +
              " --train.objective ar --model.dec-blocks 0 --model.no-length-predictor"
              " --train.epochs 1 --train.batch-size 4 --train.warmup-steps 5 --seed 2") == 0);
  // frame_dim mismatch between the model flags and the stored dataset
  int rc = run("decode --model " + (out / "averaged.ckpt").string() + " --data " +
               (data / "eval.jsonl").string() + " --vocab " + (data / "vocab.json").string() +
               " --out " + (out / "h.jsonl").string() + " " + micro_flags() +
               " --model.frame-dim 12 --model.dec-blocks 0 --model.no-length-predictor"
               " --algorithm ar_beam");
  CHECK(rc == 2);
}
