#include <gtest/gtest.h>

#include <cmath>

#include "flexkv/knob.hpp"
#include "flexkv/local_cache.hpp"
#include "flexkv/metadata.hpp"
#include "flexkv/placement.hpp"
#include "flexkv/workload.hpp"

namespace flexkv {
namespace {

TEST(CacheWorthy, ThresholdArithmetic) {
  EXPECT_FALSE(cache_worthy(0, 0));
  EXPECT_FALSE(cache_worthy(5, 0));
  EXPECT_TRUE(cache_worthy(1, 10));
  EXPECT_FALSE(cache_worthy(5, 10));
  EXPECT_TRUE(cache_worthy(16383, 65535));
  EXPECT_FALSE(cache_worthy(16384, 65536));  // exactly 0.25
  EXPECT_FALSE(cache_worthy(1, 4));
  EXPECT_TRUE(cache_worthy(0, 1));
}

TEST(MetadataTest, OverflowShiftsBothCounters) {
  MetadataEntry e;
  e.add_writes(65535);
  e.add_reads(40000);
  EXPECT_FALSE(cache_worthy(e));
  e.add_writes(1);
  EXPECT_EQ(e.write_counter, 16383 + 1);
  EXPECT_EQ(e.read_counter, 10000);
  EXPECT_FALSE(cache_worthy(e));
}

TEST(MetadataTest, SaturatesWhenStillTooLarge) {
  MetadataEntry e;
  e.add_reads(70000);
  EXPECT_EQ(e.read_counter, kCounterMax);
}

TEST(MetadataTest, SharerBits) {
  MetadataEntry e;
  e.add_sharer(3);
  e.add_sharer(7);
  EXPECT_TRUE(e.is_sharer(3));
  EXPECT_TRUE(e.is_sharer(7));
  EXPECT_FALSE(e.is_sharer(0));
  EXPECT_EQ(__builtin_popcount(e.sharers), 2);
  e.reset();
  EXPECT_EQ(e.sharers, 0u);
}

TEST(MetadataTest, RandomStreamsKeepDecisionOutsideTruncationBound) {
  Rng rng(5);
  int checked = 0;
  for (int trial = 0; trial < 20000; ++trial) {
    const auto w = static_cast<std::uint32_t>(rng.below(65536));
    const auto r = static_cast<std::uint32_t>(4 + rng.below(65532));
    MetadataEntry e;
    e.write_counter = static_cast<std::uint16_t>(w);
    e.read_counter = static_cast<std::uint16_t>(r);
    const bool before = cache_worthy(e);
    // One increment that overflows a counter; the shift happens before it lands.
    const bool on_writes = rng.below(2);
    if (on_writes)
      e.add_writes(65536 - w);
    else
      e.add_reads(65536 - r);
    ASSERT_EQ(on_writes ? e.read_counter : e.write_counter, on_writes ? r >> 2 : w >> 2);
    if (std::abs(double(w) / r - 0.25) <= 4.0 / r) continue;
    MetadataEntry shifted;
    shifted.write_counter = static_cast<std::uint16_t>(w >> 2);
    shifted.read_counter = static_cast<std::uint16_t>(r >> 2);
    EXPECT_EQ(cache_worthy(shifted), before) << w << "/" << r;
    ++checked;
  }
  EXPECT_GT(checked, 10000);
}

CacheEntry value_entry(const std::string& k, std::size_t vbytes) {
  return CacheEntry{k, CachedValue{std::string(vbytes, 'v')}, 1, 0};
}
CacheEntry addr_entry(const std::string& k) { return CacheEntry{k, CachedAddress{64, 2}, 1, 0}; }

TEST(LocalCacheTest, FifoEvictionAcrossPayloadKinds) {
  const std::size_t one = value_entry("k1", 100).bytes();
  LocalCache c(2 * one + addr_entry("a").bytes());
  c.put(value_entry("k1", 100));
  c.put(addr_entry("a"));
  c.put(value_entry("k2", 100));
  EXPECT_EQ(c.size(), 3u);
  c.put(value_entry("k3", 100));
  EXPECT_EQ(c.find("k1"), nullptr);
  EXPECT_NE(c.find("a"), nullptr);
  EXPECT_LE(c.resident_bytes(), c.capacity());
  EXPECT_EQ(c.evictions(), 1u);
}

TEST(LocalCacheTest, ReplaceKeepsOneEntryPerKey) {
  LocalCache c(1000);
  c.put(value_entry("k", 10));
  c.put(addr_entry("k"));
  EXPECT_EQ(c.size(), 1u);
  EXPECT_FALSE(c.find("k")->holds_value());
  EXPECT_EQ(c.resident_bytes(), addr_entry("k").bytes());
}

TEST(LocalCacheTest, OversizedEntryRejectedAndShrinkEvicts) {
  LocalCache c(100);
  EXPECT_FALSE(c.put(value_entry("big", 500)));
  EXPECT_EQ(c.size(), 0u);
  c.put(addr_entry("a"));
  c.put(addr_entry("b"));
  c.set_capacity(addr_entry("b").bytes());
  EXPECT_EQ(c.find("a"), nullptr);
  EXPECT_NE(c.find("b"), nullptr);
}

TEST(LocalCacheTest, EraseIfAndClear) {
  LocalCache c(10000);
  for (int i = 0; i < 10; ++i) c.put(addr_entry("k" + std::to_string(i)));
  EXPECT_EQ(c.erase_if([](const CacheEntry& e) { return e.key < "k5"; }), 5u);
  EXPECT_EQ(c.size(), 5u);
  EXPECT_FALSE(c.erase("k0"));
  c.clear();
  EXPECT_EQ(c.size(), 0u);
  EXPECT_EQ(c.resident_bytes(), 0u);
}

TEST(LocalCacheTest, ResidentBytesNeverExceedCapacity) {
  Rng rng(9);
  LocalCache c(4096);
  for (int i = 0; i < 5000; ++i) {
    std::string k = "k" + std::to_string(rng.below(64));
    switch (rng.below(4)) {
      case 0: c.put(value_entry(k, rng.below(600))); break;
      case 1: c.put(addr_entry(k)); break;
      case 2: c.erase(k); break;
      default: c.set_capacity(1024 + rng.below(4096)); break;
    }
    std::size_t sum = 0;
    c.for_each([&](const CacheEntry& e) { sum += e.bytes(); });
    ASSERT_EQ(sum, c.resident_bytes());
    ASSERT_LE(c.resident_bytes(), c.capacity());
  }
}

TEST(Hotness, CollectSumsLiveCns) {
  EXPECT_EQ(collect_hotness({{3, 0}, {1, 4}}, {true, true}),
            (std::vector<std::uint64_t>{4, 4}));
  EXPECT_EQ(collect_hotness({{0, 0}, {0, 0}}, {true, true}),
            (std::vector<std::uint64_t>{0, 0}));
  EXPECT_EQ(collect_hotness({{3, 0}, {1, 4}}, {true, false}),
            (std::vector<std::uint64_t>{3, 0}));
}

TEST(Hotness, WorkedSwapExampleTriggers) {
  // p1..p4 are ids 0..3; old ranks (1,1,2,2); new hotness swaps p2 and p3.
  std::vector<int> old{1, 1, 2, 2};
  auto d = hotness_detect({40, 20, 30, 10}, old, 2);
  EXPECT_EQ(d.new_ranks, (std::vector<int>{1, 2, 1, 2}));
  EXPECT_EQ(d.displacement, 2u);
  EXPECT_DOUBLE_EQ(d.baseline(), 2.0);
  EXPECT_TRUE(d.trigger);
  auto again = hotness_detect({40, 20, 30, 10}, d.new_ranks, 2);
  EXPECT_EQ(again.displacement, 0u);
  EXPECT_FALSE(again.trigger);
}

TEST(Hotness, TiesBreakByPartitionId) {
  auto d = hotness_detect({5, 5, 5, 5}, {2, 2, 1, 1}, 2);
  EXPECT_EQ(d.new_ranks, (std::vector<int>{1, 1, 2, 2}));
}

TEST(Hotness, IndivisibleRejected) {
  EXPECT_THROW(hotness_detect({1, 2, 3}, {1, 1, 2}, 2), std::invalid_argument);
}

TEST(Hotness, DisplacementBaselineIdentity) {
  for (std::int64_t R = 1; R <= 64; ++R) {
    std::int64_t sum = 0;
    for (std::int64_t x = 1; x <= R; ++x)
      for (std::int64_t y = 1; y <= R; ++y) sum += std::llabs(x - y);
    // sum / R^2 == (R^2 - 1) / (3R)
    EXPECT_EQ(sum * 3 * R, (R * R - 1) * R * R) << R;
  }
}

TEST(Assign, DealsWithinRankByAscendingId) {
  // Zero-based: rank1 = {0, 2}, rank2 = {1, 3}.
  auto a = assign_partitions({1, 2, 1, 2}, 2);
  EXPECT_EQ(a.owner, (std::vector<int>{0, 0, 1, 1}));
  EXPECT_EQ(a.lists[0], (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(a.lists[1], (std::vector<std::uint32_t>{2, 3}));
}

TEST(Assign, SingleCnGetsEverythingInRankOrder) {
  auto a = assign_partitions({3, 1, 2}, 1);
  EXPECT_EQ(a.lists[0], (std::vector<std::uint32_t>{1, 2, 0}));
}

TEST(Assign, RankBalanceOnRandomHotness) {
  Rng rng(2);
  const int C = 4;
  const std::uint32_t P = 64;
  std::vector<std::uint64_t> hot(P);
  for (auto& h : hot) h = rng.below(10);
  auto d = hotness_detect(hot, initial_ranks(P, C), C);
  auto a = assign_partitions(d.new_ranks, C);
  for (int c = 0; c < C; ++c) {
    ASSERT_EQ(a.lists[c].size(), P / C);
    for (std::size_t i = 0; i < a.lists[c].size(); ++i)
      EXPECT_EQ(d.new_ranks[a.lists[c][i]], static_cast<int>(i) + 1);
  }
}

TEST(Assign, RoutingMapUsesListPrefix) {
  auto a = assign_partitions({1, 1, 2, 2, 3, 3, 4, 4}, 2);
  auto r = routing_map(a, 0.5, {true, true});
  EXPECT_EQ(r, (std::vector<int>{0, 1, 0, 1, kMemoryResident, kMemoryResident, kMemoryResident,
                                 kMemoryResident}));
  auto down = routing_map(a, 1.0, {true, false});
  EXPECT_EQ(down[1], kMemoryResident);
  EXPECT_EQ(down[6], 0);
  EXPECT_EQ(offload_count(0.0, 10), 0u);
  EXPECT_EQ(offload_count(1.0, 10), 10u);
}

TEST(Knob, UnimodalConvergesInSixSamples) {
  KnobState st;
  std::vector<double> probes;
  auto r = knob_round(st, [&](double i) {
    probes.push_back(i);
    return 1 - (i - 0.3) * (i - 0.3);
  });
  EXPECT_EQ(r.i_best, 3);
  EXPECT_EQ(r.samples, 6);
  ASSERT_EQ(probes.size(), 6u);
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(probes[k], 0.1 * k, 1e-12);
  EXPECT_EQ(st.i, 3);
}

TEST(Knob, DecreasingClampsAtZero) {
  KnobState st;
  auto r = knob_round(st, [](double i) { return 1 - i; });
  EXPECT_EQ(r.i_best, 0);
  EXPECT_EQ(st.i, 0);
  EXPECT_LE(r.samples, knob_sample_bound(st));
}

TEST(Knob, ConstantStopsAfterTwoProbes) {
  KnobState st;
  st.i = 5;
  auto r = knob_round(st, [](double) { return 1.0; });
  EXPECT_EQ(r.i_best, 5);
  EXPECT_EQ(st.i, 5);
  EXPECT_EQ(r.samples, 3);  // start plus two underperforming probes
}

TEST(Knob, AlwaysTerminatesWithinBound) {
  Rng rng(4);
  for (int t = 0; t < 2000; ++t) {
    KnobState st;
    st.i = static_cast<int>(rng.below(11));
    st.s = rng.below(2) ? 1 : -1;
    std::vector<double> table(11);
    for (auto& v : table) v = rng.uniform();
    auto r = knob_round(st, [&](double i) { return table[static_cast<int>(std::lround(i * 10))]; });
    EXPECT_LE(r.samples, knob_sample_bound(st));
    EXPECT_GE(st.i, 0);
    EXPECT_LE(st.i, 10);
  }
}

TEST(Knob, WorkloadShift) {
  EXPECT_TRUE(detect_workload_shift(0.20, 0.10));
  EXPECT_FALSE(detect_workload_shift(0.15, 0.10));
  EXPECT_TRUE(detect_workload_shift(0.0, 0.10));
}

}  // namespace
}  // namespace flexkv
