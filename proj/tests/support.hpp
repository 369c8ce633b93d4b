#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ouroboros/config.hpp"
#include "ouroboros/data.hpp"
#include "ouroboros/metrics.hpp"
#include "ouroboros/rng.hpp"
#include "ouroboros/trainer.hpp"

namespace ouro::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ouro_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// A fixed 32-character pattern of distinct characters repeated `repeats` times.
inline std::string copy_corpus(std::size_t repeats = 400) {
  const std::string pattern = "abcdefghijklmnopqrstuvwxyz012345";
  std::string text;
  for (std::size_t i = 0; i < repeats; ++i) text += pattern;
  return text;
}

// Sentences of Zipf-distributed common English words, `bytes` long.
inline std::string english_like_corpus(std::size_t bytes, std::uint64_t seed) {
  static const std::array<const char*, 100> words = {
      "the",   "of",    "and",   "to",    "a",     "in",    "is",    "it",    "you",   "that",
      "he",    "was",   "for",   "on",    "are",   "with",  "as",    "his",   "they",  "be",
      "at",    "one",   "have",  "this",  "from",  "or",    "had",   "by",    "hot",   "word",
      "but",   "what",  "some",  "we",    "can",   "out",   "other", "were",  "all",   "there",
      "when",  "up",    "use",   "your",  "how",   "said",  "an",    "each",  "she",   "which",
      "do",    "their", "time",  "if",    "will",  "way",   "about", "many",  "then",  "them",
      "write", "would", "like",  "so",    "these", "her",   "long",  "make",  "thing", "see",
      "him",   "two",   "has",   "look",  "more",  "day",   "could", "go",    "come",  "did",
      "number", "sound", "no",   "most",  "people", "my",   "over",  "know",  "water", "than",
      "call",  "first", "who",   "may",   "down",  "side",  "been",  "now",   "find",  "river"};
  std::vector<double> cumulative;
  double total = 0.0;
  for (std::size_t i = 0; i < words.size(); ++i) cumulative.push_back(total += 1.0 / static_cast<double>(i + 1));
  SeededRng rng(seed);
  std::string text;
  text.reserve(bytes + 128);
  while (text.size() < bytes) {
    const std::size_t n = 5 + rng.next_below(10);
    for (std::size_t w = 0; w < n; ++w) {
      const double u = rng.next_uniform() * total;
      std::size_t idx = 0;
      while (idx + 1 < cumulative.size() && cumulative[idx] < u) ++idx;
      std::string word = words[idx];
      if (w == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
      text += word;
      text += w + 1 == n ? ". " : " ";
    }
  }
  text.resize(bytes);
  return text;
}

// The copy-task configuration: two blocks of width 32 on the repeating pattern.
inline RunConfig copy_task_config(const std::filesystem::path& corpus) {
  RunConfig c;
  c.data = corpus.string();
  c.layers = 2;
  c.dim = 32;
  c.ffn_dim = 64;
  c.seq_len = 40;
  c.batch = 4;
  c.dropout = 0.0;
  c.k = 3;
  c.optimizer = OptimizerKind::adam;
  c.lr = 1e-3;
  c.warmup = 100;
  c.steps = 2000;
  c.write_trace = false;
  return c;
}

inline BatchStream stream_for(const RunConfig& c) {
  return ingest(c.data, c.vocab_mode, c.seq_len, c.batch, c.data_seed, vocab_size(c.vocab_mode));
}

// Trains [0, until) and returns every logged row.
inline std::vector<MetricsRow> train_rows(const RunConfig& c, const BatchStream& data, std::int64_t until) {
  TrainingRun run(c);
  std::vector<MetricsRow> rows;
  run.run([&](std::int64_t t) { return data.batch_at(t); }, until,
          [&](const MetricsRow& r) { rows.push_back(r); });
  return rows;
}

inline double mean_loss(const std::vector<MetricsRow>& rows, std::size_t last) {
  double s = 0.0;
  for (std::size_t i = rows.size() - last; i < rows.size(); ++i) s += rows[i].loss;
  return s / static_cast<double>(last);
}

}  // namespace ouro::testing
