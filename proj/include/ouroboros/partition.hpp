#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ouro {

enum class Balance { even, by_cost };

struct LayerRange {
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  std::size_t size() const { return end - begin; }
};

// Contiguous split of L layers into K modules. Module 0 holds the embedding,
// module K-1 the head; both sit on logical device 0 so the tied vocabulary
// matrix has a single home, giving K-1 devices for K >= 2.
struct ModulePartition {
  std::size_t layer_count = 0;
  std::vector<LayerRange> groups;
  std::vector<std::size_t> device_of;

  std::size_t module_count() const { return groups.size(); }
  std::size_t device_count() const;
  std::size_t module_of_layer(std::size_t layer) const;
};

// `even` gives group sizes differing by at most one (larger groups first).
// `by_cost` minimises the most expensive group under `layer_costs`.
// Throws std::invalid_argument unless 1 <= modules <= layers.
ModulePartition partition(std::size_t layers, std::size_t modules, Balance balance = Balance::even,
                          std::span<const double> layer_costs = {});

}  // namespace ouro
