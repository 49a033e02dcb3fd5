#include "flexkv/placement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace flexkv {

std::vector<std::uint64_t> collect_hotness(const std::vector<std::vector<std::uint32_t>>& counts,
                                           const std::vector<bool>& alive) {
  std::vector<std::uint64_t> hot;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (hot.size() < counts[c].size()) hot.resize(counts[c].size(), 0);
    if (c < alive.size() && !alive[c]) continue;
    for (std::size_t p = 0; p < counts[c].size(); ++p) hot[p] += counts[c][p];
  }
  return hot;
}

std::vector<int> initial_ranks(std::uint32_t partitions, int cns) {
  std::vector<int> r(partitions);
  for (std::uint32_t p = 0; p < partitions; ++p) r[p] = static_cast<int>(p / cns) + 1;
  return r;
}

HotnessDecision hotness_detect(const std::vector<std::uint64_t>& hotness,
                               const std::vector<int>& old_ranks, int cns) {
  const std::size_t P = hotness.size();
  if (cns <= 0 || P % static_cast<std::size_t>(cns) != 0)
    throw std::invalid_argument("partition count must be divisible by CN count");
  if (old_ranks.size() != P) throw std::invalid_argument("rank vector size mismatch");

  std::vector<std::uint32_t> order(P);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return hotness[a] != hotness[b] ? hotness[a] > hotness[b] : a < b;
  });

  HotnessDecision d;
  d.new_ranks.assign(P, 0);
  for (std::size_t i = 0; i < P; ++i) d.new_ranks[order[i]] = static_cast<int>(i / cns) + 1;
  for (std::size_t p = 0; p < P; ++p)
    d.displacement += static_cast<std::uint64_t>(std::abs(d.new_ranks[p] - old_ranks[p]));
  const std::uint64_t R = P / cns;
  d.baseline_times3 = static_cast<std::uint64_t>(cns) * (R * R - 1);
  // D >= B/4  <=>  12 D >= C (R^2 - 1)
  d.trigger = 12 * d.displacement >= d.baseline_times3 && d.displacement > 0;
  return d;
}

Assignment assign_partitions(const std::vector<int>& ranks, int cns) {
  const std::size_t P = ranks.size();
  int R = 0;
  for (int r : ranks) R = std::max(R, r);
  std::vector<std::vector<std::uint32_t>> by_rank(R + 1);
  for (std::uint32_t p = 0; p < P; ++p) by_rank.at(ranks[p]).push_back(p);

  Assignment a;
  a.owner.assign(P, kMemoryResident);
  a.lists.assign(cns, {});
  for (int r = 1; r <= R; ++r) {
    auto& members = by_rank[r];  // already ascending by id
    for (std::size_t i = 0; i < members.size(); ++i) {
      int cn = static_cast<int>(i % cns);
      a.owner[members[i]] = cn;
      a.lists[cn].push_back(members[i]);
    }
  }
  return a;
}

std::uint32_t offload_count(double ratio, std::size_t list_len) {
  ratio = std::clamp(ratio, 0.0, 1.0);
  return static_cast<std::uint32_t>(std::llround(ratio * static_cast<double>(list_len)));
}

std::vector<int> routing_map(const Assignment& a, double ratio, const std::vector<bool>& alive) {
  std::vector<int> route(a.owner.size(), kMemoryResident);
  for (std::size_t c = 0; c < a.lists.size(); ++c) {
    if (c < alive.size() && !alive[c]) continue;
    std::uint32_t n = offload_count(ratio, a.lists[c].size());
    for (std::uint32_t i = 0; i < n; ++i) route[a.lists[c][i]] = static_cast<int>(c);
  }
  return route;
}

}  // namespace flexkv
