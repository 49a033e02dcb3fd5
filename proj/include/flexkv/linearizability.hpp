#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "flexkv/timeline.hpp"
#include "flexkv/workload.hpp"

namespace flexkv {

enum class OpResult : std::uint8_t {
  Ok,
  NotFound,
  Exists,
  // No reply observed (client crashed, or timed out): the op may or may not
  // have taken effect.
  Unknown,
};

const char* to_string(OpResult r);

inline constexpr SimTime kNeverCompleted = std::numeric_limits<SimTime>::infinity();

struct HistoryRecord {
  int client = 0;
  SimTime invoke = 0;
  SimTime complete = kNeverCompleted;
  OpKind kind = OpKind::Search;
  std::string key;
  std::string arg;     // value written by INSERT/UPDATE
  OpResult result = OpResult::Unknown;
  std::string value;   // value returned by a successful SEARCH
};

enum class Verdict : std::uint8_t { Ok, Violation, Inconclusive };

const char* to_string(Verdict v);

struct KeyCheck {
  std::string key;
  Verdict verdict = Verdict::Ok;
  // Ok: indices into the history in linearization order.
  std::vector<std::size_t> order;
  // Violation: a reduced set of history indices that is still not
  // linearizable (reads are dropped greedily, writes kept).
  std::vector<std::size_t> witness;
  std::uint64_t steps = 0;
};

struct CheckReport {
  Verdict verdict = Verdict::Ok;
  std::vector<KeyCheck> keys;

  const KeyCheck* first_violation() const;
};

// Initial register contents; keys not listed start absent.
using InitialState = std::unordered_map<std::string, std::string>;

// Checks one key's records against register semantics:
//   SEARCH returns the current value or NotFound,
//   INSERT is Ok iff absent (else Exists), UPDATE and DELETE are Ok iff
//   present (else NotFound).
// Records with an Unknown result and kind SEARCH are ignored; Unknown writes
// may be linearized anywhere after their invocation.
KeyCheck check_key(const std::vector<HistoryRecord>& history, const std::vector<std::size_t>& idx,
                   const std::optional<std::string>& initial, std::uint64_t budget = 2'000'000);

// Per-key check over every key in `keys` (all keys in the history if empty).
CheckReport check_linearizability(const std::vector<HistoryRecord>& history,
                                  const InitialState& initial,
                                  const std::vector<std::string>& keys = {},
                                  std::uint64_t budget_per_key = 2'000'000);

}  // namespace flexkv
