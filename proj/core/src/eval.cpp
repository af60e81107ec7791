#include "orthros/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "orthros/error.hpp"

namespace orthros {

using nlohmann::json;

namespace {

// Clipped n-gram matches and totals for one pair, accumulated per order.
void ngram_stats(const std::vector<int>& hyp, const std::vector<int>& ref, int n,
                 int64_t* matched, int64_t* total) {
  int64_t hyp_n = static_cast<int64_t>(hyp.size()) - n + 1;
  *total += std::max<int64_t>(hyp_n, 0);
  if (hyp_n <= 0) return;
  std::map<std::vector<int>, int64_t> ref_counts;
  for (int64_t i = 0; i + n <= static_cast<int64_t>(ref.size()); ++i) {
    ref_counts[std::vector<int>(ref.begin() + i, ref.begin() + i + n)] += 1;
  }
  std::map<std::vector<int>, int64_t> hyp_counts;
  for (int64_t i = 0; i < hyp_n; ++i) {
    hyp_counts[std::vector<int>(hyp.begin() + i, hyp.begin() + i + n)] += 1;
  }
  for (const auto& [gram, count] : hyp_counts) {
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) *matched += std::min(count, it->second);
  }
}

double brevity_penalty(int64_t hyp_len, int64_t ref_len) {
  if (hyp_len == 0) return 0.0;
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<int>>& hyps,
                   const std::vector<std::vector<int>>& refs, int max_ngram) {
  if (hyps.size() != refs.size()) {
    throw UsageError("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                     std::to_string(refs.size()) + " references");
  }
  if (refs.empty()) throw UsageError("corpus_bleu: empty reference list");
  for (const auto& r : refs) {
    if (r.empty()) throw UsageError("corpus_bleu: empty reference sentence");
  }
  std::vector<int64_t> matched(static_cast<size_t>(max_ngram), 0);
  std::vector<int64_t> total(static_cast<size_t>(max_ngram), 0);
  int64_t hyp_len = 0, ref_len = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += static_cast<int64_t>(hyps[i].size());
    ref_len += static_cast<int64_t>(refs[i].size());
    for (int n = 1; n <= max_ngram; ++n) {
      ngram_stats(hyps[i], refs[i], n, &matched[static_cast<size_t>(n - 1)],
                  &total[static_cast<size_t>(n - 1)]);
    }
  }
  double log_prec = 0.0;
  int orders = 0;
  for (int n = 0; n < max_ngram; ++n) {
    if (total[static_cast<size_t>(n)] == 0) continue;  // no n-grams at this order anywhere
    if (matched[static_cast<size_t>(n)] == 0) return 0.0;
    log_prec += std::log(static_cast<double>(matched[static_cast<size_t>(n)]) /
                         static_cast<double>(total[static_cast<size_t>(n)]));
    ++orders;
  }
  if (orders == 0) return 0.0;
  return 100.0 * brevity_penalty(hyp_len, ref_len) * std::exp(log_prec / orders);
}

double sentence_bleu(const std::vector<int>& hyp, const std::vector<int>& ref, int max_ngram,
                     double eps) {
  if (ref.empty()) throw UsageError("sentence_bleu: empty reference");
  if (hyp.empty()) return 0.0;
  double log_prec = 0.0;
  for (int n = 1; n <= max_ngram; ++n) {
    int64_t matched = 0, total = 0;
    ngram_stats(hyp, ref, n, &matched, &total);
    double p = (total > 0 && matched > 0)
                   ? static_cast<double>(matched) / static_cast<double>(total)
                   : eps;
    log_prec += std::log(p);
  }
  return 100.0 * brevity_penalty(static_cast<int64_t>(hyp.size()), static_cast<int64_t>(ref.size())) *
         std::exp(log_prec / max_ngram);
}

EvalReport oracle_select(const std::vector<std::vector<std::vector<int>>>& candidate_lists,
                         const std::vector<std::vector<int>>& refs, const std::vector<int>& ids) {
  if (candidate_lists.size() != refs.size()) {
    throw UsageError("oracle_select: " + std::to_string(candidate_lists.size()) +
                     " candidate lists vs " + std::to_string(refs.size()) + " references");
  }
  std::vector<std::vector<int>> picks;
  for (size_t i = 0; i < candidate_lists.size(); ++i) {
    const auto& cands = candidate_lists[i];
    if (cands.empty()) throw UsageError("oracle_select: empty candidate list at index " + std::to_string(i));
    size_t best = 0;
    double best_bleu = sentence_bleu(cands[0], refs[i]);
    for (size_t c = 1; c < cands.size(); ++c) {
      double b = sentence_bleu(cands[c], refs[i]);
      if (b > best_bleu) {
        best_bleu = b;
        best = c;
      }
    }
    picks.push_back(cands[best]);
  }
  return evaluate(picks, refs, ids);
}

EvalReport evaluate(const std::vector<std::vector<int>>& hyps,
                    const std::vector<std::vector<int>>& refs, const std::vector<int>& ids,
                    const std::vector<std::vector<std::vector<int>>>* candidates) {
  if (hyps.size() != refs.size() || hyps.size() != ids.size()) {
    throw UsageError("evaluate: hypothesis/reference/id counts differ");
  }
  EvalReport report;
  report.corpus_bleu = corpus_bleu(hyps, refs);
  int64_t exact = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    SentenceRecord rec;
    rec.id = ids[i];
    rec.hyp = hyps[i];
    rec.ref = refs[i];
    rec.sentence_bleu = sentence_bleu(hyps[i], refs[i]);
    if (hyps[i] == refs[i]) ++exact;
    report.sentences.push_back(std::move(rec));
  }
  report.exact_match = static_cast<double>(exact) / static_cast<double>(hyps.size());
  if (candidates) {
    report.oracle_bleu = oracle_select(*candidates, refs, ids).corpus_bleu;
  } else {
    report.oracle_bleu = report.corpus_bleu;
  }
  return report;
}

void write_eval_report(const EvalReport& report, const std::string& path) {
  json j;
  j["corpus_bleu"] = report.corpus_bleu;
  j["exact_match"] = report.exact_match;
  j["oracle_bleu"] = report.oracle_bleu;
  json rows = json::array();
  for (const auto& s : report.sentences) {
    rows.push_back({{"id", s.id}, {"hyp", s.hyp}, {"ref", s.ref}, {"sentence_bleu", s.sentence_bleu}});
  }
  j["sentences"] = std::move(rows);
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write eval report to " + path);
  out << j.dump(2) << "\n";
}

EvalReport read_eval_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read eval report from " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  EvalReport r;
  r.corpus_bleu = j.at("corpus_bleu").get<double>();
  r.exact_match = j.at("exact_match").get<double>();
  r.oracle_bleu = j.at("oracle_bleu").get<double>();
  for (const auto& row : j.at("sentences")) {
    SentenceRecord s;
    s.id = row.at("id").get<int>();
    s.hyp = row.at("hyp").get<std::vector<int>>();
    s.ref = row.at("ref").get<std::vector<int>>();
    s.sentence_bleu = row.at("sentence_bleu").get<double>();
    r.sentences.push_back(std::move(s));
  }
  return r;
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write csv to " + path);
  out << "id,sentence_bleu,hyp,ref\n";
  auto join = [](const std::vector<int>& xs) {
    std::string s;
    for (size_t i = 0; i < xs.size(); ++i) s += (i ? " " : "") + std::to_string(xs[i]);
    return s;
  };
  for (const auto& s : report.sentences) {
    out << s.id << "," << s.sentence_bleu << "," << join(s.hyp) << "," << join(s.ref) << "\n";
  }
}

BenchTiming bench_time(const ModelParams& p, const ModelConfig& cfg,
                       const std::vector<Sample>& dataset, const DecodeConfig& dcfg,
                       const Vocabulary& vocab, int runs) {
  if (dataset.empty()) throw UsageError("bench_time: empty dataset");
  if (runs < 1) throw UsageError("bench_time: runs must be >= 1");
  auto pass = [&]() {
    for (const Sample& s : dataset) decode_sample(p, cfg, dcfg, s, vocab);
  };
  pass();  // warm-up, untimed
  std::vector<double> per_utt;
  for (int r = 0; r < runs; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    pass();
    auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    per_utt.push_back(ms / static_cast<double>(dataset.size()));
  }
  BenchTiming t;
  t.runs = runs;
  for (double x : per_utt) t.mean_ms += x;
  t.mean_ms /= runs;
  double sq = 0.0;
  for (double x : per_utt) sq += (x - t.mean_ms) * (x - t.mean_ms);
  t.stdev_ms = runs > 1 ? std::sqrt(sq / (runs - 1)) : 0.0;
  return t;
}

BenchReport bench_decode(const ModelParams& p, const ModelConfig& cfg,
                         const std::vector<Sample>& dataset, const DecodeConfig& dcfg,
                         const DecodeConfig& baseline, const Vocabulary& vocab, int runs) {
  BenchTiming main = bench_time(p, cfg, dataset, dcfg, vocab, runs);
  BenchTiming base = bench_time(p, cfg, dataset, baseline, vocab, runs);
  BenchReport r;
  r.algorithm = algo_name(dcfg.algorithm);
  r.mean_ms = main.mean_ms;
  r.stdev_ms = main.stdev_ms;
  r.runs = runs;
  r.baseline_algorithm = algo_name(baseline.algorithm);
  r.baseline_mean_ms = base.mean_ms;
  r.baseline_stdev_ms = base.stdev_ms;
  r.speedup = base.mean_ms / main.mean_ms;
  return r;
}

void write_bench_report(const BenchReport& report, const std::string& path) {
  json j;
  j["algorithm"] = report.algorithm;
  j["mean_ms"] = report.mean_ms;
  j["stdev_ms"] = report.stdev_ms;
  j["runs"] = report.runs;
  j["baseline_algorithm"] = report.baseline_algorithm;
  j["baseline_mean_ms"] = report.baseline_mean_ms;
  j["baseline_stdev_ms"] = report.baseline_stdev_ms;
  j["speedup"] = report.speedup;
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write bench report to " + path);
  out << j.dump(2) << "\n";
}

BenchReport read_bench_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read bench report from " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  BenchReport r;
  r.algorithm = j.at("algorithm").get<std::string>();
  r.mean_ms = j.at("mean_ms").get<double>();
  r.stdev_ms = j.at("stdev_ms").get<double>();
  r.runs = j.at("runs").get<int>();
  r.baseline_algorithm = j.at("baseline_algorithm").get<std::string>();
  r.baseline_mean_ms = j.at("baseline_mean_ms").get<double>();
  r.baseline_stdev_ms = j.at("baseline_stdev_ms").get<double>();
  r.speedup = j.at("speedup").get<double>();
  return r;
}

}  // namespace orthros
