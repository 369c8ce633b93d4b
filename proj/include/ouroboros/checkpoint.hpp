#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "ouroboros/tensor.hpp"

namespace ouro {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Named tensors and scalars. An absent (default) tensor round-trips as absent.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, double> reals;
  std::map<std::string, std::uint64_t> integers;

  const Tensor& tensor(const std::string& name) const;
  double real(const std::string& name) const;
  std::uint64_t integer(const std::string& name) const;
  bool has_tensor(const std::string& name) const { return tensors.count(name) != 0; }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout, all integers and doubles little-endian:
//   "OUROCKPT" u32 version
//   u64 n, n x (u32 name_len, name, u32 rank, rank x u64 dim, f64 data...)
//   u64 n, n x (u32 name_len, name, f64 value)
//   u64 n, n x (u32 name_len, name, u64 value)
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ouro
