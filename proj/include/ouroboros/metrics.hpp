#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ouro {

struct MetricsRow {
  std::int64_t step = 0;
  double wall_ms = 0.0;
  double logical = 0.0;       // logical clock at the end of the step
  double loss = 0.0;
  double grad_sq_norm = 0.0;  // squared norm of the applied packet
  double lr = 0.0;
};

inline constexpr const char* kMetricsHeader = "step,wall_ms,logical,loss,grad_sq_norm,lr";

// Doubles are written with 17 significant digits so a reread row is exact.
std::string format_row(const MetricsRow& row);
void write_metrics(std::ostream& out, const std::vector<MetricsRow>& rows, bool header = true);

// Throws std::runtime_error on a bad header, a malformed row, or steps that
// are not strictly increasing.
std::vector<MetricsRow> read_metrics(std::istream& in);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

// Equality of every column except wall_ms, compared bitwise.
bool same_trajectory(const std::vector<MetricsRow>& a, const std::vector<MetricsRow>& b);

}  // namespace ouro
