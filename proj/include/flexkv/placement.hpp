#pragma once

#include <cstdint>
#include <vector>

namespace flexkv {

inline constexpr int kMemoryResident = -1;

// hotness[p] = sum over live CNs of counts[c][p]. Crashed CNs contribute 0.
std::vector<std::uint64_t> collect_hotness(const std::vector<std::vector<std::uint32_t>>& counts,
                                           const std::vector<bool>& alive);

struct HotnessDecision {
  std::vector<int> new_ranks;  // rank in [1, R] per partition
  std::uint64_t displacement = 0;
  // Baseline B = C (R^2 - 1) / 3, kept as the exact numerator C (R^2 - 1).
  std::uint64_t baseline_times3 = 0;
  bool trigger = false;

  double baseline() const { return static_cast<double>(baseline_times3) / 3.0; }
};

// Ranks before any hotness is known: partitions in id order.
std::vector<int> initial_ranks(std::uint32_t partitions, int cns);

// Sorts partitions by descending hotness (ties by ascending id), bands them
// into R = P / C ranks of C each and compares with `old_ranks`. Trigger when
// D >= B / 4. Throws ConfigError-like std::invalid_argument when C does not
// divide P.
HotnessDecision hotness_detect(const std::vector<std::uint64_t>& hotness,
                               const std::vector<int>& old_ranks, int cns);

// Partition-to-CN assignment with each CN's hot-to-cold list.
struct Assignment {
  std::vector<int> owner;                          // CN per partition
  std::vector<std::vector<std::uint32_t>> lists;   // per CN, ordered by rank
};

// Within each rank, partitions in ascending id go to CNs in ascending id.
Assignment assign_partitions(const std::vector<int>& ranks, int cns);

// Number of partitions each CN offloads for a unified ratio in [0, 1].
std::uint32_t offload_count(double ratio, std::size_t list_len);

// Active routing map: CN id for offloaded partitions, kMemoryResident otherwise.
std::vector<int> routing_map(const Assignment& a, double ratio, const std::vector<bool>& alive);

}  // namespace flexkv
