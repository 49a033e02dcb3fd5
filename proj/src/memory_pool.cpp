#include "flexkv/memory_pool.hpp"

namespace flexkv {

std::vector<Candidate> bucket_pair(std::span<const std::uint64_t> slots,
                                   const IndexGeometry& geo, const KeyPlacement& where) {
  std::vector<Candidate> out;
  out.reserve(2 * geo.associativity);
  for (std::uint32_t b : where.bucket) {
    for (int s = 0; s < geo.associativity; ++s) {
      std::size_t local = std::size_t(b) * geo.associativity + s;
      out.push_back({slot_address(geo, where.partition, b, s), Slot{slots[local]}});
    }
  }
  return out;
}

std::vector<Candidate> lookup_candidates(std::span<const std::uint64_t> slots,
                                         const IndexGeometry& geo, const KeyPlacement& where) {
  std::vector<Candidate> out;
  for (const auto& c : bucket_pair(slots, geo, where))
    if (c.slot.live() && c.slot.fingerprint() == where.fingerprint) out.push_back(c);
  return out;
}

MemoryNode::MemoryNode(const IndexGeometry& geo, std::uint64_t capacity_bytes)
    : geo_(geo), index_(geo.total_slots(), 0), capacity_(capacity_bytes) {}

std::span<std::uint64_t> MemoryNode::partition(std::uint32_t p) {
  if (p >= geo_.partitions()) throw AddressFault("partition out of range");
  return {index_.data() + std::size_t(p) * geo_.slots_per_partition(), geo_.slots_per_partition()};
}

std::span<const std::uint64_t> MemoryNode::partition(std::uint32_t p) const {
  if (p >= geo_.partitions()) throw AddressFault("partition out of range");
  return {index_.data() + std::size_t(p) * geo_.slots_per_partition(), geo_.slots_per_partition()};
}

Slot MemoryNode::read_slot(std::uint64_t slot_addr) const {
  if (slot_addr >= index_.size()) throw AddressFault("slot address out of bounds");
  return Slot{index_[slot_addr]};
}

void MemoryNode::write_slot(std::uint64_t slot_addr, Slot s) {
  if (slot_addr >= index_.size()) throw AddressFault("slot address out of bounds");
  index_[slot_addr] = s.raw();
}

CasResult MemoryNode::cas_slot(std::uint64_t slot_addr, Slot expected, Slot desired) {
  if (slot_addr >= index_.size()) throw AddressFault("slot address out of bounds");
  Slot cur{index_[slot_addr]};
  if (cur == expected) {
    index_[slot_addr] = desired.raw();
    return {true, cur};
  }
  return {false, cur};
}

KvPair* MemoryNode::kv(std::uint64_t offset) {
  auto it = kv_.find(offset);
  return it == kv_.end() ? nullptr : &it->second;
}

const KvPair* MemoryNode::kv(std::uint64_t offset) const {
  auto it = kv_.find(offset);
  return it == kv_.end() ? nullptr : &it->second;
}

std::uint64_t MemoryNode::grant_block(std::uint64_t block_bytes) {
  if (next_block_ + block_bytes > capacity_) throw AllocationError("memory pool exhausted");
  std::uint64_t base = next_block_;
  next_block_ += block_bytes;
  return base;
}

Extent BlockAllocator::alloc(std::uint32_t size, SimTime now) {
  std::uint32_t need = class_bytes(size_class(size));
  if (need == 0) need = kSizeClassBytes;
  if (need > block_bytes_) throw AllocationError("allocation larger than a block");
  if (auto it = free_.find(need); it != free_.end() && !it->second.empty() &&
      it->second.front().reusable_at <= now) {
    Extent e = it->second.front().extent;
    it->second.pop_front();
    --free_count_;
    return e;
  }
  if (!have_block_ || bump_ + need > block_bytes_) {
    block_base_ = source_();
    bump_ = 0;
    have_block_ = true;
    ++blocks_;
  }
  Extent e{block_base_ + bump_, need};
  bump_ += need;
  return e;
}

void BlockAllocator::free(Extent e, SimTime now) {
  free_[e.size].push_back({e, now + reuse_delay_});
  ++free_count_;
}

}  // namespace flexkv
