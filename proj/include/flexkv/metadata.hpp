#pragma once

#include <cstdint>

namespace flexkv {

inline constexpr int kMaxComputeNodes = 32;
inline constexpr std::uint32_t kCounterMax = 65535;

// Per-slot directory entry kept by the owning proxy.
struct MetadataEntry {
  std::uint32_t sharers = 0;
  std::uint16_t write_counter = 0;
  std::uint16_t read_counter = 0;

  bool is_sharer(int cn) const { return (sharers >> cn) & 1u; }
  void add_sharer(int cn) { sharers |= (1u << cn); }

  // Both counters shift right by 2 whenever an increment would overflow either.
  void add_reads(std::uint32_t n) { add(read_counter, n); }
  void add_writes(std::uint32_t n) { add(write_counter, n); }

  void reset() { *this = MetadataEntry{}; }

 private:
  void add(std::uint16_t& counter, std::uint32_t n) {
    if (std::uint32_t{counter} + n > kCounterMax) {
      write_counter >>= 2;
      read_counter >>= 2;
    }
    std::uint32_t v = std::uint32_t{counter} + n;
    counter = static_cast<std::uint16_t>(v > kCounterMax ? kCounterMax : v);
  }
};

// Write/read ratio threshold below which a key is worth caching.
inline constexpr double kCacheWorthyRatio = 0.25;

// write/read < 0.25, compared exactly as 4*w < r. No reads means no caching.
constexpr bool cache_worthy(std::uint32_t writes, std::uint32_t reads) {
  if (reads == 0) return false;
  return 4ull * writes < reads;
}
constexpr bool cache_worthy(const MetadataEntry& e) {
  return cache_worthy(e.write_counter, e.read_counter);
}

}  // namespace flexkv
