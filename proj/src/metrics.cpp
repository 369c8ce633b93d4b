#include "ouroboros/metrics.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ouro {

std::string format_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g", static_cast<long long>(r.step),
                r.wall_ms, r.logical, r.loss, r.grad_sq_norm, r.lr);
  return buf;
}

void write_metrics(std::ostream& out, const std::vector<MetricsRow>& rows, bool header) {
  if (header) out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << format_row(r) << '\n';
}

std::vector<MetricsRow> read_metrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::runtime_error("metrics: expected header '" + std::string(kMetricsHeader) + "'");
  }
  std::vector<MetricsRow> rows;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    MetricsRow r;
    long long step = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf", &step, &r.wall_ms, &r.logical, &r.loss,
                    &r.grad_sq_norm, &r.lr) != 6) {
      throw std::runtime_error("metrics: malformed row at line " + std::to_string(number));
    }
    r.step = step;
    if (!rows.empty() && r.step <= rows.back().step) {
      throw std::runtime_error("metrics: steps not strictly increasing at line " + std::to_string(number));
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("metrics: cannot read " + path.string());
  return read_metrics(in);
}

bool same_trajectory(const std::vector<MetricsRow>& a, const std::vector<MetricsRow>& b) {
  if (a.size() != b.size()) return false;
  const auto same = [](double x, double y) {
    return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step || !same(a[i].logical, b[i].logical) || !same(a[i].loss, b[i].loss) ||
        !same(a[i].grad_sq_norm, b[i].grad_sq_norm) || !same(a[i].lr, b[i].lr)) {
      return false;
    }
  }
  return true;
}

}  // namespace ouro
