#include "flexkv/slot.hpp"

#include <string>

namespace flexkv {

std::uint8_t size_class(std::uint32_t bytes) {
  if (bytes > kMaxKvBytes) throw EncodingError("kv pair too large: " + std::to_string(bytes));
  return static_cast<std::uint8_t>((bytes + kSizeClassBytes - 1) / kSizeClassBytes);
}

void IndexGeometry::validate() const {
  if (partition_bits < 0 || partition_bits > 20)
    throw std::invalid_argument("partition_bits out of range");
  if (buckets_per_partition < 2) throw std::invalid_argument("need at least 2 buckets per partition");
  if (associativity < 1) throw std::invalid_argument("associativity must be positive");
}

std::uint64_t hash_key(std::string_view key) {
  // FNV-1a followed by a splitmix64 finalizer.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ull;
  }
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

KeyPlacement hash_and_partition(std::string_view key, const IndexGeometry& geo) {
  KeyPlacement p;
  p.hash = hash_key(key);
  p.partition = geo.partition_bits == 0
                    ? 0
                    : static_cast<std::uint32_t>(p.hash >> (64 - geo.partition_bits));
  auto nb = static_cast<std::uint64_t>(geo.buckets_per_partition);
  p.bucket[0] = static_cast<std::uint32_t>((p.hash >> 8) % nb);
  p.bucket[1] = static_cast<std::uint32_t>((p.bucket[0] + 1 + (p.hash >> 24) % (nb - 1)) % nb);
  p.fingerprint = static_cast<std::uint8_t>(1 + p.hash % 255);
  return p;
}

bool slot_reusable(Slot slot, SimTime now, SimTime t_lease, double drift) {
  if (!slot.tombstone()) throw ContractViolation("slot_reusable on a non-tombstone slot");
  return now > static_cast<SimTime>(slot.delete_time()) + t_lease * (1.0 + drift);
}

}  // namespace flexkv
