#include "flexkv/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flexkv {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::FlexKV: return "flexkv";
    case Mode::MnOnly: return "mn-only";
    case Mode::AddrCache: return "addr-cache";
    case Mode::Ownership: return "ownership";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "flexkv") return Mode::FlexKV;
  if (s == "mn-only") return Mode::MnOnly;
  if (s == "addr-cache") return Mode::AddrCache;
  if (s == "ownership") return Mode::Ownership;
  throw ConfigError("unknown mode: " + s);
}

void ClusterConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
  };
  need(cns >= 1 && cns <= kMaxComputeNodes, "cns must be in [1, 32]");
  need(mns >= 1, "mns must be >= 1");
  need(replicas >= 1 && replicas <= mns, "replicas must be in [1, mns]");
  need(clients_per_cn >= 0, "clients-per-cn must be >= 0");
  need(contexts >= 1, "contexts must be >= 1");
  need(knob_steps >= 1, "knob.steps must be >= 1");
  need(manager_period > 0, "manager.period must be > 0");
  need(proxy_threads >= 1, "proxy.threads must be >= 1");
  need(proxy_cpu > 0, "cost.proxy_cpu must be > 0");
  need(client_cpu >= 0, "cost.client_cpu must be >= 0");
  need(cn_cores >= 1, "cn.cores must be >= 1");
  need(retry_budget >= 1, "client.retry_budget must be >= 1");
  need(flush_threshold >= 1, "cache.flush_threshold must be >= 1");
  need(t_lease >= 0 && drift >= 0, "lease parameters must be >= 0");
  need(!fixed_ratio || (*fixed_ratio >= 0 && *fixed_ratio <= 1), "offload ratio must be in [0, 1]");
  geo.validate();
  fabric.validate();
  if (mode == Mode::FlexKV || mode == Mode::Ownership)
    need(geo.partitions() % static_cast<std::uint32_t>(cns) == 0,
         "partition count must be divisible by cns");
}

void ClusterConfig::apply(std::map<std::string, std::string>& kv) {
  fabric.apply(kv);
  auto take = [&](const char* key, auto& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    double v = parse_number(key, it->second);
    field = static_cast<std::remove_reference_t<decltype(field)>>(v);
    kv.erase(it);
  };
  take("index.partition_bits", geo.partition_bits);
  take("index.buckets_per_partition", geo.buckets_per_partition);
  take("index.associativity", geo.associativity);
  take("lease.t_lease", t_lease);
  take("lease.drift", drift);
  take("proxy.threads", proxy_threads);
  take("cost.proxy_cpu", proxy_cpu);
  take("cost.client_cpu", client_cpu);
  take("cn.cores", cn_cores);
  take("manager.period", manager_period);
  take("knob.steps", knob_steps);
  take("client.retry_budget", retry_budget);
  take("cache.flush_threshold", flush_threshold);
  if (!kv.empty()) throw ConfigError("unknown config key: " + kv.begin()->first);
}

std::uint32_t wire_size(const RpcRequest& r) {
  return std::visit(
      [](const auto& m) -> std::uint32_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ReadRpc> || std::is_same_v<T, FlushRpc>)
          return 16 + static_cast<std::uint32_t>(m.key.size());
        else if constexpr (std::is_same_v<T, WriteRpc>)
          return 48 + static_cast<std::uint32_t>(m.key.size() + 8 * m.seen.size());
        else if constexpr (std::is_same_v<T, InvalidateRpc>)
          return 8 + static_cast<std::uint32_t>(m.key.size());
        else if constexpr (std::is_same_v<T, ForwardRpc>)
          return 16 + static_cast<std::uint32_t>(m.key.size() + m.value.size());
        else
          return 16;
      },
      r);
}

std::uint32_t wire_size(const RpcReply& r) {
  return std::visit(
      [](const auto& m) -> std::uint32_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ReadReply>)
          return 8 + 16 * static_cast<std::uint32_t>(m.candidates.size());
        else if constexpr (std::is_same_v<T, WriteReply>)
          return 24;
        else if constexpr (std::is_same_v<T, ForwardReply>)
          return 8 + static_cast<std::uint32_t>(m.value.size());
        else
          return 8;
      },
      r);
}

namespace {
constexpr std::uint64_t kOffsetMask = (std::uint64_t{1} << kAddressNodeShift) - 1;
}

Cluster::Cluster(ClusterConfig cfg, Timeline& tl)
    : cfg_((cfg.validate(), std::move(cfg))),
      tl_(tl),
      fabric_(tl, cfg_.cns + cfg_.mns + 1, cfg_.fabric) {
  const std::uint32_t P = cfg_.geo.partitions();
  mns_.reserve(cfg_.mns);
  for (int m = 0; m < cfg_.mns; ++m) mns_.emplace_back(cfg_.geo, cfg_.mn_capacity);
  cns_.resize(cfg_.cns);
  for (int c = 0; c < cfg_.cns; ++c) {
    auto& n = cns_[c];
    n.id = c;
    n.active.assign(P, kMemoryResident);
    n.staging = n.active;
    n.paused.assign(P, 0);
    n.inflight.assign(P, 0);
    n.access.assign(P, 0);
    n.proxy_cpu = FifoServer(cfg_.proxy_threads);
    n.worker_cpu = FifoServer(cfg_.cn_cores);
    n.cache.set_capacity(caches_addresses() ? cfg_.cn_mem : 0);
  }
  if (uses_proxies()) {
    ranks_old_ = initial_ranks(P, cfg_.cns);
    assignment_ = assign_partitions(ranks_old_, cfg_.cns);
  }
  route_.assign(P, kMemoryResident);
  jitter_ = Rng(cfg_.seed ^ 0x6a09e667f3bcc909ull);
  knob_.steps_total = cfg_.knob_steps;
  knob_.i = cfg_.fixed_ratio
                ? static_cast<int>(std::lround(*cfg_.fixed_ratio * cfg_.knob_steps))
                : 0;
  applied_steps_ = knob_.i;
  if (cfg_.mode == Mode::Ownership)
    for (int c = 0; c < cfg_.cns; ++c) forwarders_.push_back(add_client(c));
}

// Suspended tasks reference this cluster; tear them down while it is intact.
Cluster::~Cluster() { tl_.clear(); }

int Cluster::add_client(int cn) {
  if (cn < 0 || cn >= cfg_.cns) throw ConfigError("client on unknown CN");
  int id = static_cast<int>(clients_.size());
  Client c{id, cn, id % cfg_.mns, nullptr};
  c.alloc = std::make_unique<BlockAllocator>(
      [this] {
        std::uint64_t off = next_block_;
        next_block_ += cfg_.block_bytes;
        if (next_block_ > cfg_.mn_capacity) throw AllocationError("memory pool exhausted");
        return off;
      },
      cfg_.block_bytes, cfg_.t_lease * (1 + cfg_.drift) + 1);
  clients_.push_back(std::move(c));
  return id;
}

std::vector<int> Cluster::index_replicas(std::uint32_t p) const {
  std::vector<int> r;
  for (int j = 0; j < cfg_.replicas; ++j) r.push_back(static_cast<int>((p + j) % cfg_.mns));
  return r;
}

std::vector<int> Cluster::kv_replicas(int home) const {
  std::vector<int> r;
  for (int j = 0; j < cfg_.replicas; ++j) r.push_back((home + j) % cfg_.mns);
  return r;
}

std::uint64_t Cluster::partition_footprint() const {
  return cfg_.geo.partition_bytes() +
         std::uint64_t{cfg_.geo.slots_per_partition()} * sizeof(MetadataEntry);
}

void Cluster::preload(const std::string& key, const std::string& value) {
  KeyPlacement w = hash_and_partition(key, cfg_.geo);
  const int primary = index_replicas(w.partition)[0];
  auto slots = bucket_pair(mns_[primary].partition(w.partition), cfg_.geo, w);
  std::optional<std::uint64_t> target;
  for (const auto& c : slots) {
    if (c.slot.live() && c.slot.fingerprint() == w.fingerprint) {
      auto* kv = mns_[address_node(c.slot.address())].kv(c.slot.address() & kOffsetMask);
      if (kv && kv->key == key) throw ContractViolation("duplicate preload key " + key);
    }
    if (!target && c.slot.empty()) target = c.slot_addr;
  }
  if (!target) throw AllocationError("index buckets full for key " + key);
  if (!preload_alloc_) preload_alloc_ = add_client(0);
  auto& cl = clients_[*preload_alloc_];
  KvPair pair{true, kNoInvalidator, key, value};
  Extent e = cl.alloc->alloc(pair.size(), 0);
  int home = static_cast<int>(w.hash % cfg_.mns);
  for (int m : kv_replicas(home)) mns_[m].put_kv(e.addr, pair);
  Slot s = Slot::valid(w.fingerprint, size_class(pair.size()), make_address(home, e.addr));
  for (int m : index_replicas(w.partition)) mns_[m].write_slot(*target, s);
}

VerbEvent Cluster::make(int src, int dst, VerbKind k, std::uint32_t size) const {
  VerbEvent e;
  e.src = src;
  e.dst = dst;
  e.kind = k;
  e.payload_size = size;
  return e;
}

Task<std::vector<Candidate>> Cluster::read_buckets(int exec, const KeyPlacement& where) {
  const int mn = index_replicas(where.partition)[0];
  std::vector<Candidate> out;
  KeyPlacement w = where;
  co_await fabric_.verb(make(exec, cfg_.mn_node(mn), VerbKind::RemoteRead,
                             cfg_.geo.bucket_pair_bytes()),
                        exec, [&] { out = bucket_pair(mns_[mn].partition(w.partition), cfg_.geo, w); });
  co_return out;
}

Task<std::optional<KvPair>> Cluster::read_kv(int exec, std::uint64_t addr, std::uint8_t len) {
  const int mn = address_node(addr);
  std::optional<KvPair> out;
  if (mn >= cfg_.mns) co_return out;
  co_await fabric_.verb(make(exec, cfg_.mn_node(mn), VerbKind::RemoteRead,
                             std::max<std::uint32_t>(class_bytes(len), 8)),
                        exec, [&] {
                          if (auto* kv = mns_[mn].kv(addr & kOffsetMask)) out = *kv;
                        });
  co_return out;
}

std::shared_ptr<OneShot<bool>> Cluster::start_kv_write(int exec, std::uint64_t addr, KvPair pair) {
  auto done = std::make_shared<OneShot<bool>>();
  auto reps = kv_replicas(address_node(addr));
  auto pending = std::make_shared<int>(static_cast<int>(reps.size()));
  auto shared = std::make_shared<KvPair>(std::move(pair));
  for (int m : reps) {
    fabric_.submit(make(exec, cfg_.mn_node(m), VerbKind::RemoteWrite, shared->size()),
                   [this, m, addr, shared, pending, done](VerbOutcome o) {
                     if (o == VerbOutcome::Ok) mns_[m].put_kv(addr & kOffsetMask, *shared);
                     if (--*pending == 0) done->finish(true);
                   });
  }
  return done;
}

// Readers only check the primary copy, so only its valid bit is cleared.
Task<void> Cluster::clear_valid(int exec, std::uint64_t addr) {
  const int m = address_node(addr);
  co_await fabric_.verb(make(exec, cfg_.mn_node(m), VerbKind::RemoteWrite, 8), exec, [this, m, addr, exec] {
    if (auto* kv = mns_[m].kv(addr & kOffsetMask)) {
      kv->valid = false;
      kv->invalidator = exec;
    }
  });
}

Task<void> Cluster::join_all(int exec, std::vector<Task<void>> tasks) {
  struct Join {
    std::size_t pending = 0;
    OneShot<bool> done;
  };
  if (tasks.empty()) co_return;
  auto j = std::make_shared<Join>();
  j->pending = tasks.size();
  const std::uint64_t inc = fabric_.incarnation(exec);
  for (auto& t : tasks) {
    auto one = [](Task<void> t, std::shared_ptr<Join> j) -> Task<void> {
      co_await std::move(t);
      if (--j->pending == 0) j->done.finish(true);
    };
    tl_.spawn(one(std::move(t), j));
  }
  co_await j->done.wait();
  fabric_.check_alive(exec, inc);
}

Task<void> Cluster::write_slot_all(int exec, std::uint32_t p, std::uint64_t slot_addr, Slot s) {
  std::vector<VerbEvent> evs;
  std::vector<std::function<void()>> fx;
  for (int m : index_replicas(p)) {
    evs.push_back(make(exec, cfg_.mn_node(m), VerbKind::RemoteWrite, 8));
    fx.push_back([this, m, slot_addr, s] { mns_[m].write_slot(slot_addr, s); });
  }
  co_await fabric_.all(std::move(evs), exec, std::move(fx));
}

Task<Slot> Cluster::read_slot(int exec, std::uint32_t p, std::uint64_t slot_addr) {
  const int mn = index_replicas(p)[0];
  Slot out;
  co_await fabric_.verb(make(exec, cfg_.mn_node(mn), VerbKind::RemoteRead, 8), exec,
                        [&] { out = mns_[mn].read_slot(slot_addr); });
  co_return out;
}

Task<CasResult> Cluster::cas_index(int exec, std::uint32_t p, std::uint64_t slot_addr,
                                   Slot expected, Slot desired, const std::string& key) {
  auto reps = index_replicas(p);
  CasResult res;
  co_await fabric_.verb(make(exec, cfg_.mn_node(reps[0]), VerbKind::RemoteCas, 8), exec, [&] {
    res = mns_[reps[0]].cas_slot(slot_addr, expected, desired);
    if (res.success) note_slot_commit(slot_addr, expected, desired, key);
  });
  if (!res.success || cfg_.single_cas || reps.size() == 1) co_return res;
  // Backups are only ever written after the primary, so plain overwrites keep
  // them in step; each still costs a CAS at the backup NIC.
  std::vector<VerbEvent> evs;
  std::vector<std::function<void()>> fx;
  for (std::size_t j = 1; j < reps.size(); ++j) {
    int m = reps[j];
    evs.push_back(make(exec, cfg_.mn_node(m), VerbKind::RemoteCas, 8));
    fx.push_back([this, m, slot_addr, desired] { mns_[m].write_slot(slot_addr, desired); });
  }
  co_await fabric_.all(std::move(evs), exec, std::move(fx));
  co_return res;
}

void Cluster::note_slot_commit(std::uint64_t slot_addr, Slot before, Slot after,
                               const std::string& key) {
  if (!before.tombstone() || !after.live()) return;
  ++stats_.slot_reuses;
  bool early = !slot_reusable(before, tl_.now(), cfg_.t_lease, cfg_.drift);
  for (const auto& n : cns_) {
    if (!n.alive) continue;
    n.cache.for_each([&](const CacheEntry& e) {
      if (e.slot_addr == slot_addr && e.key != key && e.lease_expiry > tl_.now()) early = true;
    });
  }
  if (early) ++stats_.early_slot_reuses;
}

Task<void> Cluster::nap(int exec, SimTime dt) {
  std::uint64_t inc = fabric_.incarnation(exec);
  co_await tl_.sleep(dt);
  fabric_.check_alive(exec, inc);
}

Task<void> Cluster::cpu(int cn, SimTime cost) {
  SimTime start = cns_[cn].proxy_cpu.reserve(tl_.now(), cost);
  co_await nap(cn, start + cost - tl_.now());
}

Task<void> Cluster::work(int cn, SimTime cost) {
  if (cost <= 0) co_return;
  SimTime start = cns_[cn].worker_cpu.reserve(tl_.now(), cost);
  co_await nap(cn, start + cost - tl_.now());
}

SimTime Cluster::backoff(int attempt) {
  return cfg_.fabric.wire_latency * std::ldexp(1.0, std::min(attempt, 8)) *
         (0.5 + jitter_.uniform());
}

// ---- two-sided messaging ----

struct Cluster::RpcCall {
  OneShot<RpcReply> done;
};

Task<std::optional<RpcReply>> Cluster::call(int exec, int to, RpcRequest req) {
  auto st = std::make_shared<RpcCall>();
  const std::uint64_t my_inc = fabric_.incarnation(exec);
  if (to == exec) {
    // Same node: no network hop, the handler runs on the local CPU.
    tl_.spawn(serve(to, exec, std::move(req), st));
  } else {
    const std::uint64_t to_inc = fabric_.incarnation(to);
    auto size = wire_size(req);
    // Held by pointer: GCC 11 miscompiles init-captures inside coroutines.
    auto r = std::make_shared<RpcRequest>(std::move(req));
    fabric_.submit(make(exec, to, VerbKind::SendRecv, size),
                   [this, st, to, to_inc, exec, r](VerbOutcome o) {
                     if (o != VerbOutcome::Ok || !cns_[to].alive ||
                         fabric_.incarnation(to) != to_inc) {
                       st->done.finish();
                       return;
                     }
                     tl_.spawn(serve(to, exec, std::move(*r), st));
                   });
  }
  auto reply = co_await st->done.wait();
  fabric_.check_alive(exec, my_inc);
  co_return reply;
}

Task<void> Cluster::serve(int cn, int from, RpcRequest req, std::shared_ptr<RpcCall> st) {
  const std::uint64_t key = next_call_++;
  cns_[cn].incoming[key] = st;
  const std::uint64_t inc = cns_[cn].incarnation;
  struct Unregister {
    Cluster* c;
    int cn;
    std::uint64_t inc, key;
    ~Unregister() {
      if (c->cns_[cn].incarnation == inc) c->cns_[cn].incoming.erase(key);
    }
  } guard{this, cn, inc, key};
  RpcReply rep = co_await handle(cn, from, req);
  if (from == cn) {
    st->done.finish(std::move(rep));
    co_return;
  }
  auto size = wire_size(rep);
  auto r = std::make_shared<RpcReply>(std::move(rep));
  fabric_.submit(make(cn, from, VerbKind::SendRecv, size),
                 [st, r](VerbOutcome o) {
                   if (o == VerbOutcome::Ok)
                     st->done.finish(std::move(*r));
                   else
                     st->done.finish();
                 });
}

Task<RpcReply> Cluster::handle(int cn, int from, RpcRequest& req) {
  if (auto* m = std::get_if<ReadRpc>(&req)) co_return co_await handle_read(cn, from, *m);
  if (auto* m = std::get_if<WriteRpc>(&req)) co_return co_await handle_write(cn, from, *m);
  if (auto* m = std::get_if<FlushRpc>(&req)) co_return co_await handle_flush(cn, *m);
  if (auto* m = std::get_if<InvalidateRpc>(&req)) co_return co_await handle_invalidate(cn, *m);
  if (auto* m = std::get_if<PauseRpc>(&req)) co_return co_await handle_pause(cn, *m);
  if (auto* m = std::get_if<ResumeRpc>(&req)) co_return co_await handle_resume(cn, *m);
  if (auto* m = std::get_if<ForwardRpc>(&req)) co_return co_await handle_forward(cn, *m);
  co_return Ack{};
}

// ---- membership ----

void Cluster::crash_cn(int cn) {
  if (cn < 0 || cn >= cfg_.cns) throw ConfigError("unknown CN id " + std::to_string(cn));
  auto& dead = cns_[cn];
  if (!dead.alive) return;
  fabric_.crash(cn);
  dead.alive = false;
  ++dead.incarnation;
  ++membership_;
  for (auto& [id, weak] : dead.incoming) {
    if (auto st = weak.lock())
      tl_.schedule(tl_.now() + cfg_.fabric.timeout, [st] { st->done.finish(); });
  }
  dead.incoming.clear();
  dead.cache.clear();
  dead.loaded.clear();
  dead.locked_keys.clear();
  dead.locked_slots.clear();
  dead.pending_incs.clear();
  std::fill(dead.inflight.begin(), dead.inflight.end(), 0u);

  // The dead node's directory is gone: no surviving cached copy can be
  // tracked any more, and in-flight grants must not land.
  for (auto& n : cns_) {
    if (!n.alive) continue;
    n.cache.clear();
    ++n.generation;
    for (auto& [p, buf] : n.loaded)
      for (auto& m : buf.meta) m.sharers = 0;
  }
  if (uses_proxies()) tl_.spawn(fence_and_remap(cn, dead.incarnation));
}

Task<void> Cluster::fence_and_remap(int cn, std::uint64_t inc) {
  // The failure is acted on once every verb the dead node put on the wire has
  // landed, so a late slot write cannot overwrite a newer one-sided commit.
  const int mgr = manager_node();
  while (fabric_.inflight_from(cn) > 0) co_await nap(mgr, cfg_.fabric.wire_latency);
  if (cns_[cn].incarnation != inc) co_return;
  for (auto& p : route_)
    if (p == cn) p = kMemoryResident;
  for (auto& n : cns_) {
    if (!n.alive) continue;
    for (std::size_t p = 0; p < n.active.size(); ++p) {
      if (n.active[p] == cn) n.active[p] = kMemoryResident;
      if (n.staging[p] == cn) n.staging[p] = kMemoryResident;
    }
  }
  recover_invalidated(cn);
}

void Cluster::recover_invalidated(int cn) {
  for (int m = 0; m < cfg_.mns; ++m) {
    mns_[m].for_each_kv([&](std::uint64_t off, KvPair& kv) {
      if (kv.valid || kv.invalidator != cn) return;
      KeyPlacement w = hash_and_partition(kv.key, cfg_.geo);
      const int primary = index_replicas(w.partition)[0];
      for (const auto& c : lookup_candidates(mns_[primary].partition(w.partition), cfg_.geo, w)) {
        if ((c.slot.address() & kOffsetMask) == off) {
          kv.valid = true;
          kv.invalidator = kNoInvalidator;
          ++stats_.recovered_kvs;
          return;
        }
      }
    });
  }
}

void Cluster::restart_cn(int cn) {
  if (cn < 0 || cn >= cfg_.cns) throw ConfigError("unknown CN id " + std::to_string(cn));
  auto& n = cns_[cn];
  if (n.alive) return;
  fabric_.restart(cn);
  n.alive = true;
  ++n.incarnation;
  ++membership_;
  n.cache.clear();
  n.cache.set_capacity(caches_addresses() ? cfg_.cn_mem : 0);
  n.active = route_;
  n.staging = route_;
  std::fill(n.paused.begin(), n.paused.end(), 0);
  std::fill(n.inflight.begin(), n.inflight.end(), 0u);
  std::fill(n.access.begin(), n.access.end(), 0u);
  n.key_epoch.clear();
  n.generation = 0;
  n.proxy_cpu = FifoServer(cfg_.proxy_threads);
  n.worker_cpu = FifoServer(cfg_.cn_cores);
  if (uses_proxies()) {
    restart_pending_ = true;
    if (started_) tl_.spawn(flush_loop(cn));
  }
}

// ---- invariants ----

bool Cluster::serving(int cn, std::uint32_t p) const {
  const auto& n = cns_.at(cn);
  return n.alive && !n.paused[p] && n.loaded.count(p) > 0;
}

const PartitionBuffer* Cluster::loaded_partition(int cn, std::uint32_t p) const {
  const auto& n = cns_.at(cn);
  auto it = n.loaded.find(p);
  return it == n.loaded.end() ? nullptr : &it->second;
}

std::vector<double> Cluster::served_loads() const {
  std::vector<double> out;
  for (const auto& n : cns_) out.push_back(static_cast<double>(n.served));
  return out;
}

void Cluster::note_serving_change(std::uint32_t p) {
  int count = 0;
  for (int c = 0; c < cfg_.cns; ++c) count += serving(c, p) ? 1 : 0;
  if (count > 1) ++stats_.single_owner_violations;
}

std::string Cluster::check_single_ownership() const {
  const std::uint32_t P = cfg_.geo.partitions();
  for (std::uint32_t p = 0; p < P; ++p) {
    int count = 0;
    for (int c = 0; c < cfg_.cns; ++c) count += serving(c, p) ? 1 : 0;
    if (count > 1) return "partition " + std::to_string(p) + " served by " + std::to_string(count);
  }
  return {};
}

std::string Cluster::check_directory(bool exact) const {
  const auto spp = cfg_.geo.slots_per_partition();
  for (int c = 0; c < cfg_.cns; ++c) {
    const auto& n = cns_[c];
    if (!n.alive) continue;
    std::string err;
    n.cache.for_each([&](const CacheEntry& e) {
      if (!err.empty() || !e.holds_value()) return;
      std::uint32_t p = partition_of_slot(cfg_.geo, e.slot_addr);
      int owner = n.active[p];
      const PartitionBuffer* buf = owner >= 0 ? loaded_partition(owner, p) : nullptr;
      if (!buf) {
        err = "CN" + std::to_string(c) + " caches " + e.key + " of an unproxied partition";
        return;
      }
      if (!buf->meta[e.slot_addr - std::uint64_t{p} * spp].is_sharer(c))
        err = "CN" + std::to_string(c) + " caches " + e.key + " without a sharer bit";
    });
    if (!err.empty()) return err;
  }
  if (!exact) return {};
  for (int c = 0; c < cfg_.cns; ++c) {
    for (const auto& [part, buf] : cns_[c].loaded) {
      const std::uint32_t p = part;
      for (std::uint32_t i = 0; i < spp; ++i) {
        std::uint32_t bits = buf.meta[i].sharers;
        for (int s = 0; bits; ++s, bits >>= 1) {
          if (!(bits & 1u)) continue;
          bool held = false;
          cns_[s].cache.for_each([&](const CacheEntry& e) {
            if (e.holds_value() && e.slot_addr == std::uint64_t{p} * spp + i) held = true;
          });
          if (!held)
            return "sharer bit for CN" + std::to_string(s) + " on slot " +
                   std::to_string(std::uint64_t{p} * spp + i) + " without a cached copy";
        }
      }
    }
  }
  return {};
}

std::string Cluster::check_index_mirrors() const {
  for (int c = 0; c < cfg_.cns; ++c) {
    for (const auto& [p, buf] : cns_[c].loaded) {
      auto mn = mns_[index_replicas(p)[0]].partition(p);
      if (!std::equal(mn.begin(), mn.end(), buf.slots.begin()))
        return "CN" + std::to_string(c) + " partition " + std::to_string(p) +
               " differs from its memory-node copy";
    }
  }
  return {};
}

}  // namespace flexkv
