#pragma once

#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <queue>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "flexkv/task.hpp"

namespace flexkv {

// Simulated time. One unit is one microsecond.
using SimTime = double;

inline constexpr SimTime kMillisecond = 1000.0;
inline constexpr SimTime kSecond = 1e6;

// Thrown into a coroutine whose executing node crashed while it was suspended.
struct NodeCrashed : std::runtime_error {
  explicit NodeCrashed(int n) : std::runtime_error("node crashed"), node(n) {}
  int node;
};

// Single logical timeline. Events fire in (time, id) order; ids are assigned
// at scheduling time and double as correlation ids for fabric verbs.
class Timeline {
 public:
  using Callback = std::function<void()>;

  Timeline() = default;
  Timeline(const Timeline&) = delete;
  Timeline& operator=(const Timeline&) = delete;
  ~Timeline();

  // Drops pending events and destroys every suspended detached task.
  void clear();

  SimTime now() const { return now_; }
  std::uint64_t next_id() const { return next_id_; }

  std::uint64_t schedule(SimTime at, Callback cb);
  // Schedules with a caller-reserved id (see reserve_id()).
  void schedule_with_id(SimTime at, std::uint64_t id, Callback cb);
  std::uint64_t reserve_id() { return next_id_++; }

  bool empty() const { return queue_.empty(); }
  SimTime peek_time() const { return queue_.top().time; }

  // Fires every event at the earliest pending instant, including events
  // scheduled for that same instant while firing. Returns the ids fired.
  std::vector<std::uint64_t> step();

  // Runs until the queue drains or stop() returns true (checked between
  // instants). Rethrows the first fatal error raised by a detached task.
  void run(const std::function<bool()>& stop = {});

  // Starts a detached coroutine; it is destroyed with the timeline if still
  // suspended. NodeCrashed escaping the task is swallowed; any other
  // exception is recorded as fatal.
  void spawn(Task<void> task);

  void record_fatal(std::exception_ptr e) {
    if (!fatal_) fatal_ = e;
  }
  void rethrow_fatal() {
    if (fatal_) std::rethrow_exception(std::exchange(fatal_, nullptr));
  }

  struct Detached;

  // Awaitable delay.
  auto sleep(SimTime dt) {
    struct Awaiter {
      Timeline* tl;
      SimTime dt;
      bool await_ready() const noexcept { return false; }
      void await_suspend(std::coroutine_handle<> h) {
        tl->schedule(tl->now() + (dt > 0 ? dt : 0.0), [h] { h.resume(); });
      }
      void await_resume() const noexcept {}
    };
    return Awaiter{this, dt};
  }

 private:
  struct Event {
    SimTime time;
    std::uint64_t id;
    Callback cb;
    bool operator>(const Event& o) const {
      return time != o.time ? time > o.time : id > o.id;
    }
  };
  SimTime now_ = 0.0;
  std::uint64_t next_id_ = 1;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::unordered_set<void*> roots_;
  std::exception_ptr fatal_;
};

// FIFO service station with `servers` identical parallel servers. Used for
// NICs and proxy CPU threads.
class FifoServer {
 public:
  explicit FifoServer(int servers = 1) : free_at_(servers > 0 ? servers : 1, 0.0) {}

  // Reserves the earliest free server for a job arriving at `arrival`.
  // Returns the service start time.
  SimTime reserve(SimTime arrival, SimTime service) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < free_at_.size(); ++i)
      if (free_at_[i] < free_at_[best]) best = i;
    SimTime start = std::max(arrival, free_at_[best]);
    free_at_[best] = start + service;
    busy_ += service;
    return start;
  }
  SimTime busy_time() const { return busy_; }
  void reset() {
    for (auto& f : free_at_) f = 0.0;
  }

 private:
  std::vector<SimTime> free_at_;
  SimTime busy_ = 0.0;
};

}  // namespace flexkv
