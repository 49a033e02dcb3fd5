#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace flexkv {

// Population standard deviation over mean; 0 when the mean is 0.
double compute_cv(const std::vector<double>& loads);

// Nearest-rank percentile (q in [0, 100]) of an unsorted sample; 0 if empty.
double percentile(std::vector<double> sample, double q);

struct MetricsSample {
  double t = 0;            // simulated seconds at the end of the interval
  double throughput = 0;   // ops per simulated second over the interval
  double p50 = 0, p99 = 0; // latency in simulated microseconds
  double cv = 0;
  double kv_hit = 0, addr_hit = 0;
  double offload_ratio = 0;
};

inline constexpr const char* kCsvHeader = "t,throughput,p50,p99,cv,kv_hit,addr_hit,offload_ratio";

void write_csv(std::ostream& os, const std::vector<MetricsSample>& series);
// Throws std::runtime_error when the file cannot be written.
void emit_csv(const std::vector<MetricsSample>& series, const std::string& path);

}  // namespace flexkv
