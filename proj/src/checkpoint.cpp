#include "ouroboros/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string_view>
#include <vector>

namespace ouro {

namespace {

constexpr std::string_view kMagic = "OUROCKPT";

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void name(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::string name() { return bytes(u32()); }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{static_cast<unsigned char>(buf_[pos_ + i])} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw CheckpointError("checkpoint: missing tensor '" + name + "'");
  return it->second;
}

double Checkpoint::real(const std::string& name) const {
  const auto it = reals.find(name);
  if (it == reals.end()) throw CheckpointError("checkpoint: missing scalar '" + name + "'");
  return it->second;
}

std::uint64_t Checkpoint::integer(const std::string& name) const {
  const auto it = integers.find(name);
  if (it == integers.end()) throw CheckpointError("checkpoint: missing integer '" + name + "'");
  return it->second;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u64(checkpoint.tensors.size());
  for (const auto& [name, t] : checkpoint.tensors) {
    w.name(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  w.u64(checkpoint.reals.size());
  for (const auto& [name, v] : checkpoint.reals) {
    w.name(name);
    w.f64(v);
  }
  w.u64(checkpoint.integers.size());
  for (const auto& [name, v] : checkpoint.integers) {
    w.name(name);
    w.u64(v);
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot read " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(buf));
  if (r.bytes(kMagic.size()) != kMagic) throw CheckpointError("checkpoint: bad magic in " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  for (std::uint64_t n = r.u64(); n > 0; --n) {
    std::string name = r.name();
    const std::uint32_t rank = r.u32();
    if (rank > 3) throw CheckpointError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
    if (rank == 0) {
      c.tensors.emplace(std::move(name), Tensor());
      continue;
    }
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    std::vector<double> data(element_count(shape));
    for (auto& v : data) v = r.f64();
    c.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  for (std::uint64_t n = r.u64(); n > 0; --n) {
    std::string name = r.name();
    c.reals.emplace(std::move(name), r.f64());
  }
  for (std::uint64_t n = r.u64(); n > 0; --n) {
    std::string name = r.name();
    c.integers.emplace(std::move(name), r.u64());
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes in " + path.string());
  return c;
}

}  // namespace ouro
