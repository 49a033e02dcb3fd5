#include "flexkv/linearizability.hpp"

#include <algorithm>
#include <map>
#include <unordered_set>

namespace flexkv {

const char* to_string(OpResult r) {
  switch (r) {
    case OpResult::Ok: return "ok";
    case OpResult::NotFound: return "not-found";
    case OpResult::Exists: return "exists";
    case OpResult::Unknown: return "unknown";
  }
  return "?";
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Ok: return "ok";
    case Verdict::Violation: return "violation";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

const KeyCheck* CheckReport::first_violation() const {
  for (const auto& k : keys)
    if (k.verdict == Verdict::Violation) return &k;
  return nullptr;
}

namespace {

constexpr int kAbsent = -1;

struct Op {
  std::size_t record;
  OpKind kind;
  OpResult result;
  int arg = kAbsent;  // interned written value
  int out = kAbsent;  // interned read value
  SimTime invoke, complete;
};

// Applies op to state; returns false if the recorded result is impossible.
bool apply(const Op& op, int state, int& next) {
  next = state;
  const bool present = state != kAbsent;
  switch (op.kind) {
    case OpKind::Search:
      if (op.result == OpResult::Ok) return present && state == op.out;
      return op.result == OpResult::NotFound && !present;
    case OpKind::Insert:
      if (op.result == OpResult::Unknown) {
        if (!present) next = op.arg;
        return true;
      }
      if (op.result == OpResult::Ok && !present) {
        next = op.arg;
        return true;
      }
      return op.result == OpResult::Exists && present;
    case OpKind::Update:
      if (op.result == OpResult::Unknown) {
        if (present) next = op.arg;
        return true;
      }
      if (op.result == OpResult::Ok && present) {
        next = op.arg;
        return true;
      }
      return op.result == OpResult::NotFound && !present;
    case OpKind::Delete:
      if (op.result == OpResult::Unknown || (op.result == OpResult::Ok && present)) {
        next = kAbsent;
        return true;
      }
      return op.result == OpResult::NotFound && !present;
  }
  return false;
}

struct Entry {
  int op = -1;  // -1 for the sentinel
  bool call = false;
  SimTime time = 0;
  Entry* prev = nullptr;
  Entry* next = nullptr;
  Entry* match = nullptr;
};

void lift(Entry* e) {
  e->prev->next = e->next;
  if (e->next) e->next->prev = e->prev;
  Entry* m = e->match;
  m->prev->next = m->next;
  if (m->next) m->next->prev = m->prev;
}

void unlift(Entry* e) {
  Entry* m = e->match;
  m->prev->next = m;
  if (m->next) m->next->prev = m;
  e->prev->next = e;
  if (e->next) e->next->prev = e;
}

struct MemoKey {
  std::vector<std::uint64_t> bits;
  int state;
  bool operator==(const MemoKey&) const = default;
};
struct MemoHash {
  std::size_t operator()(const MemoKey& k) const {
    std::uint64_t h = 1469598103934665603ull ^ static_cast<std::uint64_t>(k.state + 1);
    for (auto w : k.bits) h = (h ^ w) * 1099511628211ull + (h >> 29);
    return static_cast<std::size_t>(h);
  }
};

// Wing-Gong search with Lowe's memoisation.
Verdict search(const std::vector<Op>& ops, int initial, std::uint64_t budget,
               std::vector<int>* order, std::uint64_t* steps_out) {
  const std::size_t n = ops.size();
  std::vector<Entry> entries(2 * n + 1);
  Entry* head = &entries[0];
  std::vector<Entry*> seq;
  for (std::size_t i = 0; i < n; ++i) {
    Entry* c = &entries[1 + 2 * i];
    Entry* r = &entries[2 + 2 * i];
    *c = {static_cast<int>(i), true, ops[i].invoke, nullptr, nullptr, r};
    *r = {static_cast<int>(i), false, ops[i].complete, nullptr, nullptr, c};
    seq.push_back(c);
    seq.push_back(r);
  }
  // Returns sort before calls at equal times: an op that returned at t
  // precedes one invoked at t.
  std::stable_sort(seq.begin(), seq.end(), [](const Entry* a, const Entry* b) {
    if (a->time != b->time) return a->time < b->time;
    return !a->call && b->call;
  });
  Entry* prev = head;
  for (Entry* e : seq) {
    prev->next = e;
    e->prev = prev;
    prev = e;
  }

  std::vector<std::uint64_t> bits((n + 63) / 64, 0);
  std::unordered_set<MemoKey, MemoHash> memo;
  std::vector<std::pair<Entry*, int>> stack;
  int state = initial;
  std::uint64_t steps = 0;
  Entry* e = head->next;
  while (head->next) {
    if (++steps > budget) {
      *steps_out = steps;
      return Verdict::Inconclusive;
    }
    if (e->call) {
      const Op& op = ops[e->op];
      int next;
      if (apply(op, state, next)) {
        auto nb = bits;
        nb[e->op / 64] |= 1ull << (e->op % 64);
        if (memo.insert({nb, next}).second) {
          stack.emplace_back(e, state);
          state = next;
          bits = std::move(nb);
          lift(e);
          e = head->next;
          continue;
        }
      }
      e = e->next;
    } else {
      if (stack.empty()) {
        *steps_out = steps;
        return Verdict::Violation;
      }
      auto [top, st] = stack.back();
      stack.pop_back();
      state = st;
      bits[top->op / 64] &= ~(1ull << (top->op % 64));
      unlift(top);
      e = top->next;
    }
  }
  *steps_out = steps;
  if (order) {
    order->clear();
    for (auto& [entry, st] : stack) order->push_back(entry->op);
  }
  return Verdict::Ok;
}

}  // namespace

KeyCheck check_key(const std::vector<HistoryRecord>& history, const std::vector<std::size_t>& idx,
                   const std::optional<std::string>& initial, std::uint64_t budget) {
  KeyCheck out;
  if (!idx.empty()) out.key = history[idx.front()].key;

  std::map<std::string, int> intern;
  auto id_of = [&](const std::string& v) {
    auto [it, fresh] = intern.emplace(v, static_cast<int>(intern.size()));
    return it->second;
  };
  std::vector<Op> ops;
  for (std::size_t i : idx) {
    const auto& r = history[i];
    if (r.kind == OpKind::Search && r.result == OpResult::Unknown) continue;
    Op op{i, r.kind, r.result, kAbsent, kAbsent, r.invoke,
          r.result == OpResult::Unknown ? kNeverCompleted : r.complete};
    if (r.kind == OpKind::Insert || r.kind == OpKind::Update) op.arg = id_of(r.arg);
    if (r.kind == OpKind::Search && r.result == OpResult::Ok) op.out = id_of(r.value);
    ops.push_back(op);
  }
  const int init = initial ? id_of(*initial) : kAbsent;

  std::vector<int> order;
  out.verdict = search(ops, init, budget, &order, &out.steps);
  if (out.verdict == Verdict::Ok) {
    for (int o : order) out.order.push_back(ops[o].record);
    return out;
  }
  if (out.verdict != Verdict::Violation) return out;

  // Dropping a read can never make a linearizable history unlinearizable, so
  // the reduced set is still a genuine witness.
  std::vector<Op> kept = ops;
  for (std::size_t i = kept.size(); i-- > 0;) {
    if (kept[i].kind != OpKind::Search) continue;
    std::vector<Op> trial = kept;
    trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(i));
    std::uint64_t s = 0;
    if (search(trial, init, budget, nullptr, &s) == Verdict::Violation) kept = std::move(trial);
  }
  for (const auto& op : kept) out.witness.push_back(op.record);
  return out;
}

CheckReport check_linearizability(const std::vector<HistoryRecord>& history,
                                  const InitialState& initial,
                                  const std::vector<std::string>& keys,
                                  std::uint64_t budget_per_key) {
  std::map<std::string, std::vector<std::size_t>> by_key;
  for (std::size_t i = 0; i < history.size(); ++i) by_key[history[i].key].push_back(i);

  std::vector<std::string> todo = keys;
  if (todo.empty())
    for (auto& [k, v] : by_key) todo.push_back(k);

  CheckReport rep;
  for (const auto& k : todo) {
    auto it = by_key.find(k);
    std::optional<std::string> init;
    if (auto f = initial.find(k); f != initial.end()) init = f->second;
    KeyCheck kc = check_key(history, it == by_key.end() ? std::vector<std::size_t>{} : it->second,
                            init, budget_per_key);
    kc.key = k;
    if (kc.verdict == Verdict::Violation)
      rep.verdict = Verdict::Violation;
    else if (kc.verdict == Verdict::Inconclusive && rep.verdict == Verdict::Ok)
      rep.verdict = Verdict::Inconclusive;
    rep.keys.push_back(std::move(kc));
  }
  return rep;
}

}  // namespace flexkv
