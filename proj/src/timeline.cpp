#include "flexkv/timeline.hpp"

namespace flexkv {

// Eagerly started root coroutine that owns a Task and frees itself at the end.
struct Timeline::Detached {
  struct promise_type {
    Timeline* tl = nullptr;
    Detached get_return_object() {
      return Detached{std::coroutine_handle<promise_type>::from_promise(*this)};
    }
    std::suspend_always initial_suspend() noexcept { return {}; }
    std::suspend_never final_suspend() noexcept {
      tl->roots_.erase(std::coroutine_handle<promise_type>::from_promise(*this).address());
      return {};
    }
    void return_void() noexcept {}
    void unhandled_exception() noexcept { tl->record_fatal(std::current_exception()); }
  };
  std::coroutine_handle<promise_type> handle;
};

namespace {

Timeline::Detached run_detached(Task<void> task) {
  try {
    co_await task;
  } catch (const NodeCrashed&) {
  }
}

}  // namespace

Timeline::~Timeline() { clear(); }

void Timeline::clear() {
  // Pending callbacks may hold handles into frames owned by the roots; drop
  // them first, then destroy every still-suspended root.
  while (!queue_.empty()) queue_.pop();
  auto roots = roots_;
  roots_.clear();
  for (void* addr : roots) std::coroutine_handle<>::from_address(addr).destroy();
}

std::uint64_t Timeline::schedule(SimTime at, Callback cb) {
  std::uint64_t id = next_id_++;
  schedule_with_id(at, id, std::move(cb));
  return id;
}

void Timeline::schedule_with_id(SimTime at, std::uint64_t id, Callback cb) {
  if (at < now_) at = now_;
  queue_.push(Event{at, id, std::move(cb)});
}

std::vector<std::uint64_t> Timeline::step() {
  std::vector<std::uint64_t> fired;
  if (queue_.empty()) return fired;
  now_ = queue_.top().time;
  while (!queue_.empty() && queue_.top().time == now_) {
    Event ev = std::move(const_cast<Event&>(queue_.top()));
    queue_.pop();
    fired.push_back(ev.id);
    ev.cb();
  }
  return fired;
}

void Timeline::run(const std::function<bool()>& stop) {
  while (!queue_.empty()) {
    if (stop && stop()) break;
    step();
    rethrow_fatal();
  }
  rethrow_fatal();
}

void Timeline::spawn(Task<void> task) {
  Detached d = run_detached(std::move(task));
  d.handle.promise().tl = this;
  roots_.insert(d.handle.address());
  d.handle.resume();
}

}  // namespace flexkv
