#include <cmath>

#include "flexkv/cluster.hpp"

namespace flexkv {

namespace {

constexpr std::uint64_t kOffsetMask = (std::uint64_t{1} << kAddressNodeShift) - 1;

// Counts a client operation against a partition so a reassignment can wait
// for it to drain. Survives only as long as the CN incarnation.
struct InflightGuard {
  std::vector<std::uint32_t>* counts;
  const std::uint64_t* live_inc;
  std::uint64_t inc;
  std::uint32_t p;
  bool held = true;
  void release() {
    if (held && *live_inc == inc && (*counts)[p] > 0) --(*counts)[p];
    held = false;
  }
  ~InflightGuard() { release(); }
};

}  // namespace

std::uint32_t Cluster::take_increments(int cn, const std::string& key) {
  auto& pend = cns_[cn].pending_incs;
  auto it = pend.find(key);
  if (it == pend.end()) return 0;
  std::uint32_t v = it->second;
  pend.erase(it);
  return v;
}

Task<void> Cluster::wait_unpaused(int cn, std::uint32_t p) {
  while (cns_[cn].paused[p]) co_await nap(cn, cfg_.fabric.wire_latency * 5);
}

Task<void> Cluster::flush_increments(int cn, std::string key) {
  std::uint32_t incs = take_increments(cn, key);
  if (!incs) co_return;
  std::uint32_t p = partition_of(key);
  int owner = cns_[cn].active[p];
  if (owner < 0) co_return;
  co_await call(cn, owner, FlushRpc{key, incs});
}

Task<void> Cluster::flush_loop(int cn) {
  const std::uint64_t inc = cns_[cn].incarnation;
  while (!stopping_) {
    co_await nap(cn, cfg_.manager_period);
    if (cns_[cn].incarnation != inc) co_return;
    std::vector<std::string> keys;
    for (const auto& [k, v] : cns_[cn].pending_incs)
      if (v) keys.push_back(k);
    for (auto& k : keys) tl_.spawn(flush_increments(cn, std::move(k)));
  }
}

Task<OpOutcome> Cluster::execute(int client, OpKind kind, std::string key, std::string value) {
  const int cn = clients_.at(client).cn;
  co_await work(cn, cfg_.client_cpu);
  if (cfg_.mode != Mode::Ownership) co_return co_await run_op(client, kind, key, value);

  const int start = static_cast<int>(hash_key(key) % static_cast<std::uint64_t>(cfg_.cns));
  for (int attempt = 0; attempt < cfg_.retry_budget; ++attempt) {
    int owner = start;
    for (int k = 0; k < cfg_.cns && !cns_[owner].alive; ++k) owner = (owner + 1) % cfg_.cns;
    if (owner == cn) co_return co_await run_op(client, kind, key, value);
    auto r = co_await call(cn, owner, ForwardRpc{static_cast<int>(kind), key, value});
    if (r) {
      if (auto* f = std::get_if<ForwardReply>(&*r)) {
        OpOutcome out;
        out.result = static_cast<OpResult>(f->result);
        out.value = std::move(f->value);
        out.path = OpOutcome::Path::Index;
        ++completed_ops_;
        co_return out;
      }
    }
    // A lost forward may have been applied; only reads are safe to resend.
    if (kind != OpKind::Search) {
      OpOutcome out;
      out.gave_up = true;
      co_return out;
    }
    co_await nap(cn, backoff(attempt));
  }
  OpOutcome out;
  out.gave_up = true;
  co_return out;
}

Task<OpOutcome> Cluster::run_op(int client, OpKind kind, std::string key, std::string value) {
  OpOutcome out;
  if (kind == OpKind::Search)
    out = co_await search(client, key);
  else
    out = co_await write(client, kind, key, value);
  if (!out.gave_up) {
    ++completed_ops_;
    if (kind == OpKind::Search)
      ++completed_reads_;
    else
      ++completed_writes_;
  }
  co_return out;
}

Task<OpOutcome> Cluster::search(int client, std::string key) {
  const int cn = clients_[client].cn;
  auto& n = cns_[cn];
  const KeyPlacement w = hash_and_partition(key, cfg_.geo);
  const SimTime invoke = tl_.now();
  ++n.access[w.partition];
  ++stats_.searches;
  OpOutcome out;

  if (caches_addresses()) {
    if (CacheEntry* e = n.cache.find(key)) {
      if (e->holds_value()) {
        out.value = std::get<CachedValue>(e->payload).value;
        out.result = OpResult::Ok;
        out.path = OpOutcome::Path::KvHit;
        ++stats_.kv_hits;
        std::uint32_t& pend = n.pending_incs[key];
        if (++pend >= cfg_.flush_threshold) tl_.spawn(flush_increments(cn, key));
        co_await fabric_.verb(make(cn, cn, VerbKind::LocalRead, kv_bytes(key, out.value)), cn);
        co_return out;
      }
      if (e->lease_expiry > tl_.now()) {
        const auto a = std::get<CachedAddress>(e->payload);
        auto kv = co_await read_kv(cn, a.kv_addr, a.kv_length);
        if (kv && kv->valid && kv->key == key) {
          out.value = kv->value;
          out.result = OpResult::Ok;
          out.path = OpOutcome::Path::AddrHit;
          ++stats_.addr_hits;
          co_return out;
        }
        if (kv && kv->valid) ++stats_.wrong_key_addr_reads;
      }
      CacheEntry* again = n.cache.find(key);
      if (again && !again->holds_value()) n.cache.erase(key);
    }
  }

  out.path = OpOutcome::Path::Index;
  for (int attempt = 0; attempt < cfg_.retry_budget; ++attempt) {
    if (attempt) co_await nap(cn, backoff(attempt));
    co_await wait_unpaused(cn, w.partition);
    ++n.inflight[w.partition];
    InflightGuard guard{&n.inflight, &n.incarnation, n.incarnation, w.partition};
    const int owner = uses_proxies() ? n.active[w.partition] : kMemoryResident;
    std::vector<Candidate> cands;
    bool grant = false;
    const std::uint64_t epoch = n.key_epoch[key];
    const std::uint64_t gen = n.generation;
    if (owner >= 0) {
      auto r = co_await call(cn, owner, ReadRpc{key, take_increments(cn, key)});
      if (!r) continue;
      auto* rr = std::get_if<ReadReply>(&*r);
      if (!rr) continue;
      cands = std::move(rr->candidates);
      grant = rr->cache_grant;
    } else {
      for (auto& c : co_await read_buckets(cn, w))
        if (c.slot.live() && c.slot.fingerprint() == w.fingerprint) cands.push_back(c);
    }

    // The slot was current when the index was read, so its pair is the
    // committed value at that instant even if a writer has since cleared the
    // valid bit.
    std::optional<Candidate> hit;
    for (const auto& c : cands) {
      auto kv = co_await read_kv(cn, c.slot.address(), c.slot.kv_length());
      if (!kv || kv->key != key) continue;
      hit = c;
      out.value = std::move(kv->value);
      break;
    }
    if (!hit) {
      out.result = OpResult::NotFound;
      co_return out;
    }
    out.result = OpResult::Ok;
    if (caches_addresses()) {
      CacheEntry e;
      e.key = key;
      e.slot_addr = hit->slot_addr;
      e.lease_expiry = invoke + cfg_.t_lease;
      if (grant && n.key_epoch[key] == epoch && n.generation == gen)
        e.payload = CachedValue{out.value};
      else {
        if (grant) ++stats_.grants_suppressed;
        e.payload = CachedAddress{hit->slot.address(), hit->slot.kv_length()};
      }
      n.cache.put(std::move(e));
    }
    co_return out;
  }
  out.gave_up = true;
  co_return out;
}

Task<Cluster::Resolved> Cluster::resolve_slot(int exec, std::string key, KeyPlacement where,
                                              bool want_free) {
  Resolved r;
  auto slots = co_await read_buckets(exec, where);
  for (const auto& c : slots) {
    const Slot s = c.slot;
    if (s.live() && s.fingerprint() == where.fingerprint) {
      auto kv = co_await read_kv(exec, s.address(), s.kv_length());
      if (kv && kv->key == key) {
        r.found = true;
        r.slot_addr = c.slot_addr;
        r.slot = s;
        co_return r;
      }
      r.seen.push_back(c.slot_addr);
    }
    if (want_free && !r.free_slot &&
        (s.empty() || (s.tombstone() && slot_reusable(s, tl_.now(), cfg_.t_lease, cfg_.drift)))) {
      r.free_slot = c.slot_addr;
      r.free_value = s;
    }
  }
  co_return r;
}

Task<OpOutcome> Cluster::write(int client, OpKind kind, std::string key, std::string value) {
  auto& cl = clients_[client];
  const int cn = cl.cn;
  auto& n = cns_[cn];
  const KeyPlacement w = hash_and_partition(key, cfg_.geo);
  const std::uint32_t p = w.partition;
  const SimTime invoke = tl_.now();
  ++n.access[p];
  OpOutcome out;
  out.path = OpOutcome::Path::Index;

  // Out-of-place: the new pair is written before the index learns about it.
  const bool is_delete = kind == OpKind::Delete;
  Extent ext;
  std::uint64_t new_addr = 0;
  std::uint8_t len = 0;
  std::shared_ptr<OneShot<bool>> kv_written;
  if (!is_delete) {
    KvPair pair{true, kNoInvalidator, key, value};
    ext = cl.alloc->alloc(pair.size(), invoke);
    new_addr = make_address(cl.home_mn, ext.addr);
    len = size_class(pair.size());
    kv_written = start_kv_write(cn, new_addr, std::move(pair));
  }
  const std::uint64_t my_inc = fabric_.incarnation(cn);
  auto release_new = [&] {
    if (!is_delete) cl.alloc->free(ext, tl_.now());
  };
  auto free_old = [&](Slot old) {
    if (old.live() && address_node(old.address()) < cfg_.mns)
      cl.alloc->free(Extent{old.address() & kOffsetMask, class_bytes(old.kv_length())}, tl_.now());
  };

  // UPDATE/DELETE keep their resolved slot across Busy, Paused and Redirect
  // retries while its lease lasts.
  struct Kept {
    std::uint64_t slot_addr;
    Slot slot;
    SimTime until;
  };
  std::optional<Kept> kept;
  for (int attempt = 0; attempt < cfg_.retry_budget; ++attempt) {
    if (attempt) co_await nap(cn, backoff(attempt));
    co_await wait_unpaused(cn, p);
    ++n.inflight[p];
    InflightGuard guard{&n.inflight, &n.incarnation, n.incarnation, p};
    const int owner = uses_proxies() ? n.active[p] : kMemoryResident;

    std::uint64_t slot_addr = 0;
    Slot expected;
    // `expected` was read from the index during this operation.
    bool fresh = false;
    std::vector<std::uint64_t> seen;
    CacheEntry* e = caches_addresses() ? n.cache.find(key) : nullptr;
    if (kept && kept->until > tl_.now()) {
      slot_addr = kept->slot_addr;
      expected = kept->slot;
    } else if (kind != OpKind::Insert && attempt == 0 && e && e->lease_expiry > tl_.now()) {
      slot_addr = e->slot_addr;
      kept = Kept{slot_addr, Slot::valid(w.fingerprint, 0, 0), e->lease_expiry};
      if (!e->holds_value()) {
        const auto a = std::get<CachedAddress>(e->payload);
        kept->slot = Slot::valid(w.fingerprint, a.kv_length, a.kv_addr);
      }
      expected = kept->slot;
    } else {
      kept.reset();
      const SimTime resolved_at = tl_.now();
      Resolved r = co_await resolve_slot(cn, key, w, kind == OpKind::Insert);
      if (kind == OpKind::Insert) {
        if (r.found) {
          release_new();
          out.result = OpResult::Exists;
          co_return out;
        }
        if (!r.free_slot) {
          release_new();
          out.result = OpResult::Unknown;
          out.capacity_error = true;
          co_return out;
        }
        slot_addr = *r.free_slot;
        expected = r.free_value;
        seen = std::move(r.seen);
        fresh = true;
      } else {
        if (!r.found) {
          release_new();
          out.result = OpResult::NotFound;
          co_return out;
        }
        slot_addr = r.slot_addr;
        expected = r.slot;
        fresh = true;
        kept = Kept{slot_addr, expected, resolved_at + cfg_.t_lease};
      }
    }
    // Within the lease a resolved slot cannot be recycled for another key, so
    // the proxy only needs it to still hold a live slot with our fingerprint.
    const bool any_live = owner >= 0 && kind != OpKind::Insert;
    Slot desired = is_delete ? Slot::tombstone(w.fingerprint, 0)
                             : Slot::valid(w.fingerprint, len, new_addr);
    if (kv_written) {
      co_await kv_written->wait();
      fabric_.check_alive(cn, my_inc);
    }

    Slot previous;
    if (owner >= 0) {
      WriteRpc req{key,  slot_addr, expected, any_live, desired, std::move(seen),
                   kind == OpKind::Insert, is_delete, take_increments(cn, key)};
      auto r = co_await call(cn, owner, std::move(req));
      if (!r) {
        // The proxy may or may not have committed before it was lost.
        out.gave_up = true;
        co_return out;
      }
      if (auto* wr = std::get_if<WriteReply>(&*r)) {
        previous = wr->previous;
      } else {
        if (std::holds_alternative<Conflict>(*r)) {
          n.cache.erase(key);
          kept.reset();
        }
        continue;
      }
    } else {
      // A cached slot address skips the bucket search; the slot itself is
      // re-read so the CAS compares against its current value.
      if (!fresh) {
        Slot cur = co_await read_slot(cn, p, slot_addr);
        if (!cur.live() || cur.fingerprint() != w.fingerprint) {
          n.cache.erase(key);
          kept.reset();
          continue;
        }
        expected = cur;
      }
      if (expected.live() && cfg_.invalidation) co_await clear_valid(cn, expected.address());
      if (is_delete)
        desired = Slot::tombstone(w.fingerprint, static_cast<std::uint64_t>(std::ceil(tl_.now())));
      CasResult cas = co_await cas_index(cn, p, slot_addr, expected, desired, key);
      if (!cas.success) {
        ++stats_.conflicts;
        n.cache.erase(key);
        if (kind == OpKind::Update) {
          // Another write committed between our read and our CAS: order this
          // update just before it, where it is immediately overwritten.
          release_new();
          out.result = OpResult::Ok;
          co_return out;
        }
        kept.reset();
        continue;
      }
      previous = expected;
    }
    guard.release();
    free_old(previous);
    if (caches_addresses()) {
      if (is_delete) {
        n.cache.erase(key);
      } else {
        CacheEntry* cur = n.cache.find(key);
        if (!cur || !cur->holds_value()) {
          CacheEntry ne;
          ne.key = key;
          ne.slot_addr = slot_addr;
          ne.lease_expiry = invoke + cfg_.t_lease;
          ne.payload = CachedAddress{new_addr, len};
          n.cache.put(std::move(ne));
        }
      }
    }
    out.result = OpResult::Ok;
    co_return out;
  }
  release_new();
  out.gave_up = true;
  co_return out;
}

}  // namespace flexkv
