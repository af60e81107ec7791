#ifndef ORTHROS_DATA_HPP
#define ORTHROS_DATA_HPP

#include <string>
#include <vector>

#include "orthros/array.hpp"
#include "orthros/rng.hpp"

namespace orthros {

// Token table with the special symbols every decoder needs. Blank is
// pinned to id 0 so the CTC head can treat class 0 as non-emission.
struct Vocabulary {
  std::vector<std::string> tokens;
  int pad_id = 1;
  int bos_id = 2;
  int eos_id = 3;
  int mask_id = 4;
  int blank_id = 0;

  int size() const { return static_cast<int>(tokens.size()); }
  int first_content_id() const { return 5; }
  int content_count() const { return size() - 5; }

  // blank, pad, bos, eos, mask, then w0..w{n-1}.
  static Vocabulary make(int total_size);
  void validate() const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
};

// One item of the synthetic frame-to-token translation task: acoustic-like
// frames X, target translation Y, source transcription Z.
struct Sample {
  int id = 0;
  Array frames;            // [U, F]
  std::vector<int> tgt;    // Y, length N
  std::vector<int> src;    // Z, length N_src
};

struct GenConfig {
  uint64_t seed = 1;
  int n_samples = 0;
  int vocab_size = 32;     // must be >= 8
  int len_min = 3;
  int len_max = 12;        // within [1, 64]
  int repeat_min = 5;
  int repeat_max = 8;
  double noise_std = 0.1;
  int frame_dim = 16;
  void validate() const;
};

// Frame-synthesis embeddings, one row per content token; a pure function of
// (seed, vocab_size, frame_dim) so tests can reconstruct them.
Array frame_embedding_table(uint64_t seed, int vocab_size, int frame_dim);

// The deterministic "translation": substitute through a seed-derived
// permutation of the content ids, then swap each adjacent bigram. An odd
// final token is substituted but stays in place. Bijective per length.
std::vector<int> translate_tokens(const std::vector<int>& src, uint64_t seed, int vocab_size);

std::vector<Sample> gen_corpus(const GenConfig& cfg);

// JSON-lines: {"id":int,"frames":[[f64,...],...],"tgt":[int,...],"src":[int,...]}
void save_dataset(const std::vector<Sample>& samples, const std::string& path);
std::vector<Sample> load_dataset(const std::string& path);

struct Batch {
  Array frames;                  // [B, U_max, F], zero padded
  std::vector<int> frame_lens;   // per-sample U
  std::vector<int> tgt;          // [B, N_max] flattened, pad_id filled
  std::vector<int> tgt_lens;
  std::vector<int> src;          // [B, S_max] flattened, pad_id filled
  std::vector<int> src_lens;
  int64_t tgt_max = 0;
  int64_t src_max = 0;
  std::vector<int> ids;

  int64_t size() const { return static_cast<int64_t>(frame_lens.size()); }
};

Batch pad_batch(const std::vector<Sample>& samples, int pad_id);

}  // namespace orthros

#endif
