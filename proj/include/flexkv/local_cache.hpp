#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <string>
#include <unordered_map>
#include <variant>

#include "flexkv/timeline.hpp"

namespace flexkv {

struct CachedValue {
  std::string value;
};
struct CachedAddress {
  std::uint64_t kv_addr = 0;
  std::uint8_t kv_length = 0;
};

// Either a KV copy or its address, never both. slot_addr is always present so
// writes can skip slot resolution while the lease holds.
struct CacheEntry {
  std::string key;
  std::variant<CachedValue, CachedAddress> payload;
  std::uint64_t slot_addr = 0;
  SimTime lease_expiry = 0;

  bool holds_value() const { return std::holds_alternative<CachedValue>(payload); }
  std::size_t bytes() const;
};

inline constexpr std::size_t kCacheEntryOverhead = 24;

// Compute-side cache with one FIFO queue for both payload kinds.
class LocalCache {
 public:
  explicit LocalCache(std::size_t capacity_bytes = 0) : capacity_(capacity_bytes) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t resident_bytes() const { return resident_; }
  std::size_t size() const { return index_.size(); }

  // Shrinking evicts from the FIFO head until resident bytes fit.
  void set_capacity(std::size_t bytes);

  CacheEntry* find(const std::string& key);
  const CacheEntry* find(const std::string& key) const;
  // Replaces any existing entry for the key; the new entry joins the tail.
  // Returns false if the entry alone exceeds capacity (nothing stored).
  bool put(CacheEntry entry);
  bool erase(const std::string& key);
  void clear();
  std::size_t erase_if(const std::function<bool(const CacheEntry&)>& pred);

  std::uint64_t evictions() const { return evictions_; }

  template <typename F>
  void for_each(F&& f) const {
    for (const auto& e : fifo_) f(e);
  }

 private:
  void evict_to_fit();

  std::size_t capacity_;
  std::size_t resident_ = 0;
  std::uint64_t evictions_ = 0;
  std::list<CacheEntry> fifo_;
  std::unordered_map<std::string, std::list<CacheEntry>::iterator> index_;
};

}  // namespace flexkv
