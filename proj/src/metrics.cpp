#include "flexkv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace flexkv {

double compute_cv(const std::vector<double>& loads) {
  if (loads.empty()) return 0;
  double mean = 0;
  for (double x : loads) mean += x;
  mean /= static_cast<double>(loads.size());
  if (mean == 0) return 0;
  double var = 0;
  for (double x : loads) var += (x - mean) * (x - mean);
  var /= static_cast<double>(loads.size());
  return std::sqrt(var) / mean;
}

double percentile(std::vector<double> s, double q) {
  if (s.empty()) return 0;
  q = std::clamp(q, 0.0, 100.0);
  auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(s.size())));
  if (rank == 0) rank = 1;
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(rank - 1), s.end());
  return s[rank - 1];
}

void write_csv(std::ostream& os, const std::vector<MetricsSample>& series) {
  os << kCsvHeader << '\n';
  char buf[256];
  for (const auto& m : series) {
    std::snprintf(buf, sizeof buf, "%.6f,%.3f,%.4f,%.4f,%.6f,%.6f,%.6f,%.3f\n", m.t, m.throughput,
                  m.p50, m.p99, m.cv, m.kv_hit, m.addr_hit, m.offload_ratio);
    os << buf;
  }
}

void emit_csv(const std::vector<MetricsSample>& series, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_csv(out, series);
  out.flush();
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

}  // namespace flexkv
