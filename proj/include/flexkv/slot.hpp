#pragma once

#include <cstdint>
#include <stdexcept>
#include <string_view>

#include "flexkv/timeline.hpp"

namespace flexkv {

struct EncodingError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Packed 64-bit index slot:
//   63..56 fingerprint | 55..48 kv length class | 47 valid | 46..0 addr or T_delete
// The all-zero word is an empty slot.
class Slot {
 public:
  static constexpr std::uint64_t kPayloadMask = (std::uint64_t{1} << 47) - 1;
  static constexpr std::uint64_t kValidBit = std::uint64_t{1} << 47;

  enum class State : std::uint8_t { Empty, Valid, Tombstone };

  constexpr Slot() = default;
  constexpr explicit Slot(std::uint64_t raw) : raw_(raw) {}

  static Slot encode(std::uint8_t fingerprint, std::uint8_t kv_length, bool valid,
                     std::uint64_t address_or_ts) {
    if (address_or_ts > kPayloadMask) throw EncodingError("slot payload exceeds 47 bits");
    if (fingerprint == 0) throw EncodingError("fingerprint 0 is reserved for empty slots");
    return Slot{(std::uint64_t{fingerprint} << 56) | (std::uint64_t{kv_length} << 48) |
                (valid ? kValidBit : 0) | address_or_ts};
  }
  static Slot valid(std::uint8_t fp, std::uint8_t len, std::uint64_t addr) {
    return encode(fp, len, true, addr);
  }
  static Slot tombstone(std::uint8_t fp, std::uint64_t t_delete) {
    return encode(fp, 0, false, t_delete);
  }

  constexpr std::uint64_t raw() const { return raw_; }
  constexpr std::uint8_t fingerprint() const { return static_cast<std::uint8_t>(raw_ >> 56); }
  constexpr std::uint8_t kv_length() const { return static_cast<std::uint8_t>(raw_ >> 48); }
  constexpr bool is_valid_bit() const { return (raw_ & kValidBit) != 0; }
  constexpr std::uint64_t payload() const { return raw_ & kPayloadMask; }

  constexpr State state() const {
    if (raw_ == 0) return State::Empty;
    return is_valid_bit() ? State::Valid : State::Tombstone;
  }
  constexpr bool empty() const { return raw_ == 0; }
  constexpr bool live() const { return state() == State::Valid; }
  constexpr bool tombstone() const { return state() == State::Tombstone; }
  constexpr std::uint64_t address() const { return payload(); }
  constexpr std::uint64_t delete_time() const { return payload(); }

  friend constexpr bool operator==(Slot a, Slot b) { return a.raw_ == b.raw_; }

 private:
  std::uint64_t raw_ = 0;
};

// KV sizes are stored as 64-byte classes in the 8-bit length field.
inline constexpr std::uint32_t kSizeClassBytes = 64;
inline constexpr std::uint32_t kMaxKvBytes = 255 * kSizeClassBytes;

std::uint8_t size_class(std::uint32_t bytes);
inline std::uint32_t class_bytes(std::uint8_t cls) { return cls * kSizeClassBytes; }

// Index shape. Partitions are P = 2^partition_bits; each owns
// buckets_per_partition buckets of `associativity` slots.
struct IndexGeometry {
  int partition_bits = 13;
  int buckets_per_partition = 4;
  int associativity = 8;

  std::uint32_t partitions() const { return std::uint32_t{1} << partition_bits; }
  std::uint32_t slots_per_partition() const {
    return static_cast<std::uint32_t>(buckets_per_partition * associativity);
  }
  std::uint64_t total_slots() const {
    return std::uint64_t{partitions()} * slots_per_partition();
  }
  std::uint32_t partition_bytes() const { return slots_per_partition() * 8; }
  // Bytes read by one combined two-bucket lookup.
  std::uint32_t bucket_pair_bytes() const { return 2 * associativity * 8; }

  void validate() const;
};

std::uint64_t hash_key(std::string_view key);

struct KeyPlacement {
  std::uint32_t partition = 0;
  std::uint32_t bucket[2] = {0, 0};
  std::uint8_t fingerprint = 1;
  std::uint64_t hash = 0;
};

KeyPlacement hash_and_partition(std::string_view key, const IndexGeometry& geo);

// Global slot address: partition-major, then bucket, then slot.
inline std::uint64_t slot_address(const IndexGeometry& g, std::uint32_t partition,
                                  std::uint32_t bucket, std::uint32_t slot) {
  return std::uint64_t{partition} * g.slots_per_partition() +
         std::uint64_t{bucket} * g.associativity + slot;
}
inline std::uint32_t partition_of_slot(const IndexGeometry& g, std::uint64_t addr) {
  return static_cast<std::uint32_t>(addr / g.slots_per_partition());
}

// A tombstone may be overwritten once now > T_delete + t_lease * (1 + drift).
bool slot_reusable(Slot slot, SimTime now, SimTime t_lease, double drift);

inline constexpr SimTime kDefaultLease = 200 * kMillisecond;
inline constexpr double kDefaultDrift = 1e-4;

}  // namespace flexkv
