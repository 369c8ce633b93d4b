#include "ouroboros/partition.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace ouro {

std::size_t ModulePartition::device_count() const {
  if (device_of.empty()) return 0;
  return *std::max_element(device_of.begin(), device_of.end()) + 1;
}

std::size_t ModulePartition::module_of_layer(std::size_t layer) const {
  for (std::size_t k = 0; k < groups.size(); ++k)
    if (layer >= groups[k].begin && layer < groups[k].end) return k;
  throw std::out_of_range("layer " + std::to_string(layer) + " not in partition");
}

namespace {

std::vector<std::size_t> ring_devices(std::size_t modules) {
  std::vector<std::size_t> dev(modules);
  for (std::size_t k = 0; k < modules; ++k) dev[k] = k;
  if (modules >= 2) dev[modules - 1] = 0;
  return dev;
}

std::vector<LayerRange> even_groups(std::size_t layers, std::size_t modules) {
  std::vector<LayerRange> groups;
  const std::size_t base = layers / modules, extra = layers % modules;
  std::size_t begin = 0;
  for (std::size_t k = 0; k < modules; ++k) {
    const std::size_t size = base + (k < extra ? 1 : 0);
    groups.push_back({begin, begin + size});
    begin += size;
  }
  return groups;
}

// Linear partition: best[j][i] = minimal max-group cost placing the first i
// layers into j groups.
std::vector<LayerRange> cost_groups(std::size_t layers, std::size_t modules,
                                    std::span<const double> costs) {
  if (costs.size() != layers) {
    throw std::invalid_argument("by_cost partition needs one cost per layer (" +
                                std::to_string(layers) + "), got " + std::to_string(costs.size()));
  }
  std::vector<double> prefix(layers + 1, 0.0);
  for (std::size_t i = 0; i < layers; ++i) {
    if (!(costs[i] >= 0.0)) throw std::invalid_argument("layer costs must be non-negative");
    prefix[i + 1] = prefix[i] + costs[i];
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best(modules + 1, std::vector<double>(layers + 1, inf));
  std::vector<std::vector<std::size_t>> cut(modules + 1, std::vector<std::size_t>(layers + 1, 0));
  best[0][0] = 0.0;
  for (std::size_t j = 1; j <= modules; ++j) {
    for (std::size_t i = j; i <= layers; ++i) {
      for (std::size_t p = j - 1; p < i; ++p) {
        const double c = std::max(best[j - 1][p], prefix[i] - prefix[p]);
        if (c < best[j][i]) {
          best[j][i] = c;
          cut[j][i] = p;
        }
      }
    }
  }
  std::vector<LayerRange> groups(modules);
  std::size_t end = layers;
  for (std::size_t j = modules; j >= 1; --j) {
    const std::size_t begin = cut[j][end];
    groups[j - 1] = {begin, end};
    end = begin;
  }
  return groups;
}

}  // namespace

ModulePartition partition(std::size_t layers, std::size_t modules, Balance balance,
                          std::span<const double> layer_costs) {
  if (modules < 1 || modules > layers) {
    throw std::invalid_argument("partition: need 1 <= K <= L, got K=" + std::to_string(modules) +
                                " L=" + std::to_string(layers));
  }
  ModulePartition p;
  p.layer_count = layers;
  p.groups = balance == Balance::even ? even_groups(layers, modules)
                                      : cost_groups(layers, modules, layer_costs);
  p.device_of = ring_devices(modules);
  return p;
}

}  // namespace ouro
