#include "orthros/data.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "orthros/error.hpp"

namespace orthros {

using nlohmann::json;

Vocabulary Vocabulary::make(int total_size) {
  if (total_size < 6) throw ConfigError("vocabulary needs at least 6 entries, got " + std::to_string(total_size));
  Vocabulary v;
  v.tokens = {"<blank>", "<pad>", "<bos>", "<eos>", "<mask>"};
  for (int i = 0; i < total_size - 5; ++i) v.tokens.push_back("w" + std::to_string(i));
  v.validate();
  return v;
}

void Vocabulary::validate() const {
  if (size() < 6) throw ConfigError("vocabulary too small: " + std::to_string(size()));
  if (blank_id != 0) throw ConfigError("blank id must be 0, got " + std::to_string(blank_id));
  std::vector<int> ids = {pad_id, bos_id, eos_id, mask_id, blank_id};
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ConfigError("special token ids must be distinct");
  }
  for (int id : ids) {
    if (id < 0 || id >= size()) throw ConfigError("special id " + std::to_string(id) + " out of range");
  }
}

void Vocabulary::save(const std::string& path) const {
  json j;
  j["tokens"] = tokens;
  j["pad"] = pad_id;
  j["mask"] = mask_id;
  j["bos"] = bos_id;
  j["eos"] = eos_id;
  j["blank"] = blank_id;
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write vocabulary to " + path);
  out << j.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read vocabulary from " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  Vocabulary v;
  try {
    v.tokens = j.at("tokens").get<std::vector<std::string>>();
    v.pad_id = j.at("pad").get<int>();
    v.mask_id = j.at("mask").get<int>();
    v.bos_id = j.at("bos").get<int>();
    v.eos_id = j.at("eos").get<int>();
    v.blank_id = j.at("blank").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  v.validate();
  return v;
}

void GenConfig::validate() const {
  if (vocab_size < 8) throw ConfigError("gen_corpus: vocab_size must be >= 8, got " + std::to_string(vocab_size));
  if (len_min < 1 || len_max > 64 || len_min > len_max) {
    throw ConfigError("gen_corpus: length range [" + std::to_string(len_min) + "," +
                      std::to_string(len_max) + "] must lie within [1,64]");
  }
  if (repeat_min < 1) throw ConfigError("gen_corpus: repeat range minimum must be >= 1, got " + std::to_string(repeat_min));
  if (repeat_max < repeat_min) throw ConfigError("gen_corpus: repeat range inverted");
  if (noise_std < 0.0) throw ConfigError("gen_corpus: noise_std must be >= 0");
  if (n_samples < 0) throw ConfigError("gen_corpus: n_samples must be >= 0");
  if (frame_dim < 1) throw ConfigError("gen_corpus: frame_dim must be >= 1");
}

Array frame_embedding_table(uint64_t seed, int vocab_size, int frame_dim) {
  int content = vocab_size - 5;
  SplitMix64 rng = SplitMix64(seed).split(1);
  Array table({content, frame_dim});
  for (double& v : table.data) v = rng.normal();
  return table;
}

namespace {

std::vector<int> content_permutation(uint64_t seed, int vocab_size) {
  int content = vocab_size - 5;
  std::vector<int> perm(static_cast<size_t>(content));
  for (int i = 0; i < content; ++i) perm[static_cast<size_t>(i)] = i;
  SplitMix64 rng = SplitMix64(seed).split(2);
  for (int i = content - 1; i > 0; --i) {
    int j = static_cast<int>(rng.range(0, i));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm;
}

int adjacent_repeats(const std::vector<int>& y) {
  int n = 0;
  for (size_t i = 1; i < y.size(); ++i)
    if (y[i] == y[i - 1]) ++n;
  return n;
}

}  // namespace

std::vector<int> translate_tokens(const std::vector<int>& src, uint64_t seed, int vocab_size) {
  const int base = 5;  // first content id
  std::vector<int> perm = content_permutation(seed, vocab_size);
  std::vector<int> y(src.size());
  for (size_t i = 0; i < src.size(); ++i) {
    int c = src[i] - base;
    if (c < 0 || c >= static_cast<int>(perm.size())) {
      throw UsageError("translate_tokens: id " + std::to_string(src[i]) + " is not a content token");
    }
    y[i] = base + perm[static_cast<size_t>(c)];
  }
  for (size_t i = 0; i + 1 < y.size(); i += 2) std::swap(y[i], y[i + 1]);
  return y;
}

std::vector<Sample> gen_corpus(const GenConfig& cfg) {
  cfg.validate();
  const int base = 5;
  const int content = cfg.vocab_size - 5;
  Array table = frame_embedding_table(cfg.seed, cfg.vocab_size, cfg.frame_dim);
  SplitMix64 rng = SplitMix64(cfg.seed).split(3);

  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(cfg.n_samples));
  for (int s = 0; s < cfg.n_samples; ++s) {
    Sample sm;
    sm.id = s;
    int n = static_cast<int>(rng.range(cfg.len_min, cfg.len_max));
    sm.src.resize(static_cast<size_t>(n));
    for (int& t : sm.src) t = base + static_cast<int>(rng.range(0, content - 1));
    sm.tgt = translate_tokens(sm.src, cfg.seed, cfg.vocab_size);

    std::vector<int> repeats(static_cast<size_t>(n));
    int total = 0;
    for (int& r : repeats) {
      r = static_cast<int>(rng.range(cfg.repeat_min, cfg.repeat_max));
      total += r;
    }
    // CTC feasibility after the 4x frontend reduction: ceil(U/4) must cover
    // every target token plus a blank between each adjacent repeat.
    int needed = 4 * (n + adjacent_repeats(sm.tgt)) + 4;
    for (int i = 0; total < needed; i = (i + 1) % n) {
      ++repeats[static_cast<size_t>(i)];
      ++total;
    }

    sm.frames = Array({total, cfg.frame_dim});
    int t = 0;
    for (int i = 0; i < n; ++i) {
      const double* emb = table.data.data() + static_cast<int64_t>(sm.src[static_cast<size_t>(i)] - base) * cfg.frame_dim;
      for (int r = 0; r < repeats[static_cast<size_t>(i)]; ++r, ++t) {
        double* row = sm.frames.data.data() + static_cast<int64_t>(t) * cfg.frame_dim;
        for (int d = 0; d < cfg.frame_dim; ++d) {
          row[d] = emb[d] + (cfg.noise_std > 0.0 ? cfg.noise_std * rng.normal() : 0.0);
        }
      }
    }
    out.push_back(std::move(sm));
  }
  return out;
}

void save_dataset(const std::vector<Sample>& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write dataset to " + path);
  for (const Sample& s : samples) {
    json j;
    j["id"] = s.id;
    int64_t u = s.frames.dim(0), f = s.frames.dim(1);
    json rows = json::array();
    for (int64_t t = 0; t < u; ++t) {
      json row = json::array();
      for (int64_t d = 0; d < f; ++d) row.push_back(s.frames.at2(t, d));
      rows.push_back(std::move(row));
    }
    j["frames"] = std::move(rows);
    j["tgt"] = s.tgt;
    j["src"] = s.src;
    out << j.dump() << "\n";
  }
}

std::vector<Sample> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read dataset from " + path);
  std::vector<Sample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ": line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      Sample s;
      s.id = j.at("id").get<int>();
      const auto& rows = j.at("frames");
      int64_t u = static_cast<int64_t>(rows.size());
      int64_t f = u > 0 ? static_cast<int64_t>(rows[0].size()) : 0;
      s.frames = Array({u, f});
      for (int64_t t = 0; t < u; ++t) {
        const auto& row = rows[static_cast<size_t>(t)];
        if (static_cast<int64_t>(row.size()) != f) {
          throw ParseError(path + ": line " + std::to_string(lineno) + ": ragged frame rows");
        }
        for (int64_t d = 0; d < f; ++d) s.frames.at2(t, d) = row[static_cast<size_t>(d)].get<double>();
      }
      s.tgt = j.at("tgt").get<std::vector<int>>();
      s.src = j.at("src").get<std::vector<int>>();
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError(path + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Batch pad_batch(const std::vector<Sample>& samples, int pad_id) {
  if (samples.empty()) throw UsageError("pad_batch: empty sample list");
  Batch b;
  int64_t B = static_cast<int64_t>(samples.size());
  int64_t umax = 0, nmax = 0, smax = 0;
  int64_t f = samples[0].frames.dim(1);
  for (const Sample& s : samples) {
    umax = std::max(umax, s.frames.dim(0));
    nmax = std::max(nmax, static_cast<int64_t>(s.tgt.size()));
    smax = std::max(smax, static_cast<int64_t>(s.src.size()));
    if (s.frames.dim(1) != f) {
      throw ShapeError("pad_batch: frame dims differ: " + s.frames.shape_str());
    }
  }
  b.tgt_max = nmax;
  b.src_max = smax;
  b.frames = Array({B, umax, f});
  b.tgt.assign(static_cast<size_t>(B * nmax), pad_id);
  b.src.assign(static_cast<size_t>(B * smax), pad_id);
  for (int64_t i = 0; i < B; ++i) {
    const Sample& s = samples[static_cast<size_t>(i)];
    int64_t u = s.frames.dim(0);
    std::copy(s.frames.data.begin(), s.frames.data.end(), b.frames.data.begin() + i * umax * f);
    b.frame_lens.push_back(static_cast<int>(u));
    for (size_t k = 0; k < s.tgt.size(); ++k) b.tgt[static_cast<size_t>(i * nmax) + k] = s.tgt[k];
    b.tgt_lens.push_back(static_cast<int>(s.tgt.size()));
    for (size_t k = 0; k < s.src.size(); ++k) b.src[static_cast<size_t>(i * smax) + k] = s.src[k];
    b.src_lens.push_back(static_cast<int>(s.src.size()));
    b.ids.push_back(s.id);
  }
  return b;
}

}  // namespace orthros
