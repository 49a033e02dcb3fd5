#include <algorithm>
#include <cmath>

#include "flexkv/cluster.hpp"

namespace flexkv {

namespace {

// Releases a proxy-side key/slot lock unless the node restarted meanwhile.
struct LockGuard {
  std::unordered_set<std::string>* keys;
  std::unordered_set<std::uint64_t>* slots;
  const std::uint64_t* live_inc;
  std::uint64_t inc;
  std::string key;
  std::uint64_t slot;
  ~LockGuard() {
    if (*live_inc != inc) return;
    keys->erase(key);
    slots->erase(slot);
  }
};

}  // namespace

PartitionBuffer* Cluster::buffer(int cn, std::uint32_t p) {
  auto& n = cns_[cn];
  auto it = n.loaded.find(p);
  return it == n.loaded.end() ? nullptr : &it->second;
}

Task<RpcReply> Cluster::handle_read(int cn, int from, ReadRpc& m) {
  co_await cpu(cn, cfg_.proxy_cpu);
  auto& n = cns_[cn];
  KeyPlacement w = hash_and_partition(m.key, cfg_.geo);
  if (!serving(cn, w.partition)) {
    if (n.paused[w.partition]) {
      ++stats_.paused_replies;
      co_return Paused{};
    }
    ++stats_.redirect_replies;
    co_return Redirect{n.active[w.partition]};
  }
  PartitionBuffer& buf = n.loaded[w.partition];
  ReadReply rep;
  rep.candidates = lookup_candidates(buf.slots, cfg_.geo, w);
  if (rep.candidates.size() == 1) {
    const auto& c = rep.candidates.front();
    auto& meta = buf.meta[c.slot_addr - std::uint64_t{w.partition} * cfg_.geo.slots_per_partition()];
    meta.add_reads(1 + m.read_increments);
    if (caches_values() && !n.locked_keys.count(m.key) && !n.locked_slots.count(c.slot_addr) &&
        cache_worthy(meta)) {
      rep.cache_grant = true;
      meta.add_sharer(from);
      ++stats_.grants;
    }
  }
  ++n.served;
  ++stats_.rpc_read;
  co_return rep;
}

Task<RpcReply> Cluster::handle_write(int cn, int /*from*/, WriteRpc& m) {
  co_await cpu(cn, cfg_.proxy_cpu);
  auto& n = cns_[cn];
  const std::uint32_t p = partition_of_slot(cfg_.geo, m.slot_addr);
  const std::uint64_t idx = m.slot_addr - std::uint64_t{p} * cfg_.geo.slots_per_partition();
  if (!serving(cn, p)) {
    if (n.paused[p]) {
      ++stats_.paused_replies;
      co_return Paused{};
    }
    ++stats_.redirect_replies;
    co_return Redirect{n.active[p]};
  }
  // One write per key (and per slot, for inserts racing on a free slot) at a
  // time; the loser fails fast like a CAS.
  if (n.locked_keys.count(m.key) || n.locked_slots.count(m.slot_addr)) {
    ++stats_.busy_replies;
    co_return Busy{};
  }
  n.locked_keys.insert(m.key);
  n.locked_slots.insert(m.slot_addr);
  LockGuard lock{&n.locked_keys, &n.locked_slots, &n.incarnation, n.incarnation,
                 m.key,          m.slot_addr};

  PartitionBuffer* buf = &n.loaded[p];
  const Slot local{buf->slots[idx]};
  bool match = m.expect_any_live
                   ? local.live() && local.fingerprint() == m.expected.fingerprint()
                   : local == m.expected;
  if (match && m.is_insert) {
    KeyPlacement w = hash_and_partition(m.key, cfg_.geo);
    for (const auto& c : lookup_candidates(buf->slots, cfg_.geo, w))
      if (std::find(m.seen.begin(), m.seen.end(), c.slot_addr) == m.seen.end()) match = false;
  }
  if (!match) {
    ++stats_.conflicts;
    co_return Conflict{local};
  }
  ++n.served;
  ++stats_.rpc_write;

  MetadataEntry& meta0 = buf->meta[idx];
  if (!local.live()) meta0.reset();
  meta0.add_writes(1);
  meta0.add_reads(m.read_increments);
  const std::uint32_t sharers = meta0.sharers;

  Slot desired = m.desired;
  if (m.is_delete)
    desired = Slot::tombstone(m.expected.fingerprint() ? m.expected.fingerprint() : local.fingerprint(),
                              static_cast<std::uint64_t>(std::ceil(tl_.now())));
  // Invalidation of the old copies and the MN slot write proceed in parallel.
  std::vector<Task<void>> steps;
  if (cfg_.invalidation) {
    if (local.live()) steps.push_back(clear_valid(cn, local.address()));
    if (sharers) steps.push_back(invalidate_sharers(cn, sharers, m.key));
  }
  steps.push_back(write_slot_all(cn, p, m.slot_addr, desired));
  co_await join_all(cn, std::move(steps));
  if (cfg_.invalidation)
    if (auto* b = buffer(cn, p)) b->meta[idx].sharers = 0;

  bool committed = false;
  co_await fabric_.verb(make(cn, cn, VerbKind::LocalCas, 8), cn, [&] {
    PartitionBuffer* b = buffer(cn, p);
    if (b && b->slots[idx] == local.raw()) {
      b->slots[idx] = desired.raw();
      committed = true;
      note_slot_commit(m.slot_addr, local, desired, m.key);
    }
  });
  if (!committed) throw ContractViolation("proxy lost a locked slot before commit");
  co_return WriteReply{local, desired};
}

Task<void> Cluster::invalidate_sharers(int cn, std::uint32_t sharers, std::string key) {
  struct Join {
    int pending = 0;
    OneShot<bool> done;
  };
  auto j = std::make_shared<Join>();
  std::vector<int> targets;
  for (int s = 0; s < cfg_.cns; ++s)
    if ((sharers >> s) & 1u && cns_[s].alive) targets.push_back(s);
  if (targets.empty()) co_return;
  j->pending = static_cast<int>(targets.size());
  const std::uint64_t inc = fabric_.incarnation(cn);
  for (int s : targets) {
    auto one = [](Cluster* self, int cn, int s, std::string key,
                  std::shared_ptr<Join> j) -> Task<void> {
      co_await self->call(cn, s, InvalidateRpc{key});
      if (--j->pending == 0) j->done.finish(true);
    };
    tl_.spawn(one(this, cn, s, key, j));
  }
  co_await j->done.wait();
  fabric_.check_alive(cn, inc);
}

Task<RpcReply> Cluster::handle_flush(int cn, FlushRpc& m) {
  co_await cpu(cn, cfg_.proxy_cpu);
  ++stats_.rpc_flush;
  KeyPlacement w = hash_and_partition(m.key, cfg_.geo);
  if (!serving(cn, w.partition)) co_return Ack{};
  PartitionBuffer& buf = cns_[cn].loaded[w.partition];
  auto cands = lookup_candidates(buf.slots, cfg_.geo, w);
  if (cands.size() == 1)
    buf.meta[cands[0].slot_addr - std::uint64_t{w.partition} * cfg_.geo.slots_per_partition()]
        .add_reads(m.read_increments);
  co_return Ack{};
}

Task<RpcReply> Cluster::handle_invalidate(int cn, InvalidateRpc& m) {
  co_await cpu(cn, cfg_.proxy_cpu);
  ++stats_.rpc_invalidate;
  auto& n = cns_[cn];
  auto* e = n.cache.find(m.key);
  if (e && e->holds_value()) n.cache.erase(m.key);
  ++n.key_epoch[m.key];
  co_return Ack{};
}

Task<RpcReply> Cluster::handle_pause(int cn, PauseRpc& /*m*/) {
  auto& n = cns_[cn];
  const std::uint32_t P = cfg_.geo.partitions();
  std::vector<std::uint32_t> moved;
  for (std::uint32_t p = 0; p < P; ++p) {
    if (n.active[p] != n.staging[p]) {
      n.paused[p] = 1;
      moved.push_back(p);
    }
  }
  ++n.generation;
  for (;;) {
    bool idle = true;
    for (auto p : moved)
      if (n.inflight[p]) idle = false;
    if (idle) break;
    co_await nap(cn, cfg_.fabric.wire_latency);
  }
  std::vector<std::uint8_t> mark(P, 0);
  for (auto p : moved) mark[p] = 1;
  n.cache.erase_if([&](const CacheEntry& e) { return mark[partition_of_slot(cfg_.geo, e.slot_addr)]; });
  co_return Ack{};
}

Task<RpcReply> Cluster::handle_resume(int cn, ResumeRpc& /*m*/) {
  auto& n = cns_[cn];
  const std::uint32_t P = cfg_.geo.partitions();
  n.active = n.staging;
  for (auto it = n.loaded.begin(); it != n.loaded.end();) {
    if (n.active[it->first] != cn)
      it = n.loaded.erase(it);
    else
      ++it;
  }
  std::vector<std::uint32_t> gained;
  for (std::uint32_t p = 0; p < P; ++p)
    if (n.active[p] == cn && !n.loaded.count(p)) gained.push_back(p);
  if (!gained.empty()) {
    std::vector<VerbEvent> evs;
    std::vector<std::function<void()>> fx;
    for (auto p : gained) {
      int mn = index_replicas(p)[0];
      evs.push_back(make(cn, cfg_.mn_node(mn), VerbKind::RemoteRead, cfg_.geo.partition_bytes()));
      fx.push_back([this, cn, p, mn] {
        auto src = mns_[mn].partition(p);
        PartitionBuffer buf;
        buf.slots.assign(src.begin(), src.end());
        buf.meta.assign(cfg_.geo.slots_per_partition(), MetadataEntry{});
        cns_[cn].loaded[p] = std::move(buf);
      });
    }
    co_await fabric_.all(std::move(evs), cn, std::move(fx));
  }
  refresh_capacity(n);
  for (std::uint32_t p = 0; p < P; ++p) {
    if (n.paused[p]) {
      n.paused[p] = 0;
      note_serving_change(p);
    }
  }
  co_return Ack{};
}

Task<RpcReply> Cluster::handle_forward(int cn, ForwardRpc& m) {
  ++stats_.rpc_forward;
  co_await work(cn, cfg_.client_cpu);
  OpOutcome out = co_await run_op(forwarders_[cn], static_cast<OpKind>(m.kind), m.key, m.value);
  co_return ForwardReply{static_cast<int>(out.result), out.value};
}

}  // namespace flexkv
