#pragma once

#include <coroutine>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flexkv/memory_pool.hpp"
#include "flexkv/slot.hpp"

namespace flexkv {

inline constexpr std::uint32_t kRpcSchemaVersion = 1;

// Index RPCs, client to proxy.
struct ReadRpc {
  std::string key;
  std::uint32_t read_increments = 0;
};

struct WriteRpc {
  std::string key;
  std::uint64_t slot_addr = 0;
  Slot expected;
  // Set when the client skipped resolution and only knows the slot belongs
  // to the key: any live slot with `expected`'s fingerprint matches.
  bool expect_any_live = false;
  Slot desired;
  // INSERT only: live slots with the key's fingerprint the client saw and
  // ruled out as other keys. A new one appearing means a racing insert.
  std::vector<std::uint64_t> seen;
  bool is_insert = false;
  bool is_delete = false;
  std::uint32_t read_increments = 0;
};

struct FlushRpc {
  std::string key;
  std::uint32_t read_increments = 0;
};

// Proxy to sharer.
struct InvalidateRpc {
  std::string key;
};

// Manager to CN.
struct PauseRpc {
  std::uint64_t round = 0;
};
struct ResumeRpc {
  std::uint64_t round = 0;
  bool abort = false;
};

// Ownership-partitioned mode: the whole request travels to the owner.
struct ForwardRpc {
  int kind = 0;
  std::string key;
  std::string value;
};

using RpcRequest =
    std::variant<ReadRpc, WriteRpc, FlushRpc, InvalidateRpc, PauseRpc, ResumeRpc, ForwardRpc>;

struct ReadReply {
  std::vector<Candidate> candidates;
  bool cache_grant = false;
};
struct WriteReply {
  Slot previous;  // slot value replaced at the commit point
  Slot committed;
};
struct Ack {};
struct Redirect {
  int owner = -1;
};
struct Busy {};
struct Paused {};
struct Conflict {
  Slot observed;
};
struct ForwardReply {
  int result = 0;
  std::string value;
};

using RpcReply =
    std::variant<ReadReply, WriteReply, Ack, Redirect, Busy, Paused, Conflict, ForwardReply>;

std::uint32_t wire_size(const RpcRequest& r);
std::uint32_t wire_size(const RpcReply& r);

// Single-use rendezvous between one waiting coroutine and one producer.
// finish() with no value signals failure.
template <typename T>
class OneShot {
 public:
  void finish(std::optional<T> v = std::nullopt) {
    if (done_) return;
    done_ = true;
    value_ = std::move(v);
    if (auto h = std::exchange(waiter_, {})) h.resume();
  }
  bool done() const { return done_; }

  auto wait() {
    struct Awaiter {
      OneShot* s;
      bool await_ready() const noexcept { return s->done_; }
      void await_suspend(std::coroutine_handle<> h) { s->waiter_ = h; }
      std::optional<T> await_resume() { return std::move(s->value_); }
    };
    return Awaiter{this};
  }

 private:
  bool done_ = false;
  std::optional<T> value_;
  std::coroutine_handle<> waiter_;
};

}  // namespace flexkv
