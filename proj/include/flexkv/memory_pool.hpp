#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "flexkv/slot.hpp"

namespace flexkv {

struct AllocationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AddressFault : std::out_of_range {
  using std::out_of_range::out_of_range;
};

inline constexpr int kNoInvalidator = -1;
inline constexpr std::uint32_t kKvHeaderBytes = 8;

struct KvPair {
  bool valid = true;
  // Node that cleared the valid bit, used by crash recovery.
  int invalidator = kNoInvalidator;
  std::string key;
  std::string value;

  std::uint32_t size() const {
    return kKvHeaderBytes + static_cast<std::uint32_t>(key.size() + value.size());
  }
};

inline std::uint32_t kv_bytes(std::string_view key, std::string_view value) {
  return kKvHeaderBytes + static_cast<std::uint32_t>(key.size() + value.size());
}

// KV addresses carry the primary memory node in bits 46..40.
inline constexpr int kAddressNodeShift = 40;
inline std::uint64_t make_address(int mn, std::uint64_t offset) {
  return (std::uint64_t(mn) << kAddressNodeShift) | offset;
}
inline int address_node(std::uint64_t addr) { return static_cast<int>(addr >> kAddressNodeShift); }

struct Candidate {
  std::uint64_t slot_addr = 0;
  Slot slot;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

// Valid slots in the key's two buckets whose fingerprint matches, bucket-major
// then slot-minor. `slots` is one partition's slot array.
std::vector<Candidate> lookup_candidates(std::span<const std::uint64_t> slots,
                                         const IndexGeometry& geo, const KeyPlacement& where);

// Slots (any state) of the key's two buckets in bucket-major order.
std::vector<Candidate> bucket_pair(std::span<const std::uint64_t> slots,
                                   const IndexGeometry& geo, const KeyPlacement& where);

struct CasResult {
  bool success = false;
  Slot observed;
};

// One memory node: an index replica plus a KV heap.
class MemoryNode {
 public:
  MemoryNode(const IndexGeometry& geo, std::uint64_t capacity_bytes);

  std::span<std::uint64_t> partition(std::uint32_t p);
  std::span<const std::uint64_t> partition(std::uint32_t p) const;

  Slot read_slot(std::uint64_t slot_addr) const;
  void write_slot(std::uint64_t slot_addr, Slot s);
  CasResult cas_slot(std::uint64_t slot_addr, Slot expected, Slot desired);

  KvPair* kv(std::uint64_t offset);
  const KvPair* kv(std::uint64_t offset) const;
  void put_kv(std::uint64_t offset, KvPair pair) { kv_[offset] = std::move(pair); }

  // Hands out a fresh coarse block, or throws AllocationError.
  std::uint64_t grant_block(std::uint64_t block_bytes);

  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t granted() const { return next_block_; }

  template <typename F>
  void for_each_kv(F&& f) {
    for (auto& [off, pair] : kv_) f(off, pair);
  }

 private:
  IndexGeometry geo_;
  std::vector<std::uint64_t> index_;
  std::unordered_map<std::uint64_t, KvPair> kv_;
  std::uint64_t capacity_;
  std::uint64_t next_block_ = 0;
};

inline constexpr std::uint64_t kDefaultBlockBytes = 16ull << 20;

struct Extent {
  std::uint64_t addr = 0;
  std::uint32_t size = 0;
};

// Two-level KV allocator for one client: coarse blocks from memory nodes,
// bump allocation inside the current block, and a free list of reclaimed
// extents. Freed extents become reusable only after `reuse_delay`.
class BlockAllocator {
 public:
  using BlockSource = std::function<std::uint64_t()>;

  BlockAllocator(BlockSource source, std::uint64_t block_bytes = kDefaultBlockBytes,
                 SimTime reuse_delay = 0)
      : source_(std::move(source)), block_bytes_(block_bytes), reuse_delay_(reuse_delay) {}

  // Size is rounded up to the 64-byte class.
  Extent alloc(std::uint32_t size, SimTime now = 0);
  void free(Extent e, SimTime now = 0);

  std::size_t free_list_size() const { return free_count_; }
  std::size_t blocks() const { return blocks_; }

 private:
  struct Freed {
    Extent extent;
    SimTime reusable_at;
  };
  BlockSource source_;
  std::uint64_t block_bytes_;
  SimTime reuse_delay_;
  std::uint64_t block_base_ = 0;
  std::uint64_t bump_ = 0;
  bool have_block_ = false;
  std::size_t blocks_ = 0;
  // Per size class, in free order; reusable_at is nondecreasing in each queue.
  std::unordered_map<std::uint32_t, std::deque<Freed>> free_;
  std::size_t free_count_ = 0;
};

}  // namespace flexkv
