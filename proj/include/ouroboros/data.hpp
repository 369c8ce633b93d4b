#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "ouroboros/layers.hpp"

namespace ouro {

// byte: every byte is a token, vocab 256.
// char_filtered: lowercase a-z plus space (space = 0, a..z = 1..26); upper
// case is folded, any whitespace run becomes one space, everything else is
// dropped. Vocab 27.
enum class VocabMode { byte, char_filtered };

const char* to_string(VocabMode mode);
VocabMode parse_vocab_mode(std::string_view text);
std::size_t vocab_size(VocabMode mode);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<int> encode_text(std::string_view text, VocabMode mode);

// Non-overlapping windows of seq_len tokens (start i * seq_len) with targets
// shifted by one. Each epoch visits every window once in an order drawn from
// (seed, epoch). Random access: the batch of step t depends only on
// (tokens, seq_len, batch, seed, t).
class BatchStream {
 public:
  BatchStream(std::vector<int> tokens, std::size_t vocab, std::size_t seq_len, std::size_t batch,
              std::uint64_t seed);

  BatchSample batch_at(std::int64_t t) const;
  std::size_t window_count() const { return windows_; }
  std::size_t vocab() const { return vocab_; }
  const std::vector<int>& tokens() const { return tokens_; }

 private:
  const std::vector<std::size_t>& order(std::uint64_t epoch) const;

  std::vector<int> tokens_;
  std::size_t vocab_;
  std::size_t seq_len_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::size_t windows_;
  mutable std::mutex mutex_;
  mutable std::uint64_t cached_epoch_ = ~std::uint64_t{0};
  mutable std::vector<std::size_t> cached_order_;
};

// Throws DataError on a missing or empty file, a corpus shorter than
// seq_len + 1 tokens, or a vocab mode wider than `model_vocab`.
BatchStream ingest(const std::filesystem::path& path, VocabMode mode, std::size_t seq_len,
                   std::size_t batch, std::uint64_t seed, std::size_t model_vocab);

}  // namespace ouro
