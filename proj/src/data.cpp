#include "ouroboros/data.hpp"

#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "ouroboros/rng.hpp"

namespace ouro {

const char* to_string(VocabMode mode) {
  return mode == VocabMode::byte ? "byte" : "char-filtered";
}

VocabMode parse_vocab_mode(std::string_view text) {
  if (text == "byte") return VocabMode::byte;
  if (text == "char-filtered" || text == "char_filtered") return VocabMode::char_filtered;
  throw std::invalid_argument("unknown vocab mode '" + std::string(text) + "'");
}

std::size_t vocab_size(VocabMode mode) { return mode == VocabMode::byte ? 256 : 27; }

std::vector<int> encode_text(std::string_view text, VocabMode mode) {
  std::vector<int> out;
  out.reserve(text.size());
  if (mode == VocabMode::byte) {
    for (char c : text) out.push_back(static_cast<unsigned char>(c));
    return out;
  }
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (c >= 'a' && c <= 'z') {
      out.push_back(c - 'a' + 1);
    } else if (c >= 'A' && c <= 'Z') {
      out.push_back(c - 'A' + 1);
    } else if (c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
      if (!out.empty() && out.back() != 0) out.push_back(0);
    }
  }
  return out;
}

BatchStream::BatchStream(std::vector<int> tokens, std::size_t vocab, std::size_t seq_len,
                         std::size_t batch, std::uint64_t seed)
    : tokens_(std::move(tokens)), vocab_(vocab), seq_len_(seq_len), batch_(batch), seed_(seed) {
  if (seq_len_ < 2) throw DataError("seq_len must be at least 2");
  if (batch_ == 0) throw DataError("batch size must be positive");
  if (tokens_.size() < seq_len_ + 1) {
    throw DataError("corpus has " + std::to_string(tokens_.size()) + " tokens, need at least seq_len + 1 = " +
                    std::to_string(seq_len_ + 1));
  }
  for (int tok : tokens_) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= vocab_) {
      throw DataError("token " + std::to_string(tok) + " overflows vocab " + std::to_string(vocab_));
    }
  }
  windows_ = (tokens_.size() - 1) / seq_len_;
}

const std::vector<std::size_t>& BatchStream::order(std::uint64_t epoch) const {
  if (epoch != cached_epoch_) {
    cached_order_.resize(windows_);
    std::iota(cached_order_.begin(), cached_order_.end(), std::size_t{0});
    SeededRng rng(derive_seed(seed_, epoch));
    for (std::size_t i = windows_; i > 1; --i) {
      const std::size_t j = rng.next_below(i);
      std::swap(cached_order_[i - 1], cached_order_[j]);
    }
    cached_epoch_ = epoch;
  }
  return cached_order_;
}

BatchSample BatchStream::batch_at(std::int64_t t) const {
  if (t < 0) throw std::invalid_argument("batch_at: negative step");
  BatchSample b;
  b.batch = batch_;
  b.seq = seq_len_;
  b.tokens.reserve(batch_ * seq_len_);
  b.targets.reserve(batch_ * seq_len_);
  std::lock_guard lock(mutex_);
  for (std::size_t j = 0; j < batch_; ++j) {
    const std::uint64_t g = static_cast<std::uint64_t>(t) * batch_ + j;
    const std::size_t w = order(g / windows_)[g % windows_];
    const std::size_t start = w * seq_len_;
    for (std::size_t s = 0; s < seq_len_; ++s) {
      b.tokens.push_back(tokens_[start + s]);
      b.targets.push_back(tokens_[start + s + 1]);
    }
  }
  return b;
}

BatchStream ingest(const std::filesystem::path& path, VocabMode mode, std::size_t seq_len,
                   std::size_t batch, std::uint64_t seed, std::size_t model_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read data file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.empty()) throw DataError("data file " + path.string() + " is empty");
  if (vocab_size(mode) > model_vocab) {
    throw DataError(std::string("vocab mode ") + to_string(mode) + " needs " + std::to_string(vocab_size(mode)) +
                    " ids but the model vocab is " + std::to_string(model_vocab));
  }
  return BatchStream(encode_text(text, mode), model_vocab, seq_len, batch, seed);
}

}  // namespace ouro
