#include <algorithm>

#include "flexkv/cluster.hpp"

namespace flexkv {

std::vector<int> Cluster::compute_route(const Assignment& a, int ratio_steps) const {
  std::vector<int> route(cfg_.geo.partitions(), kMemoryResident);
  if (a.lists.empty()) return route;
  const double ratio = static_cast<double>(ratio_steps) / cfg_.knob_steps;
  const std::uint64_t budget = cfg_.cn_mem / partition_footprint();
  for (std::size_t c = 0; c < a.lists.size(); ++c) {
    if (!cns_[c].alive) continue;
    std::uint64_t n = std::min<std::uint64_t>(offload_count(ratio, a.lists[c].size()), budget);
    for (std::uint64_t i = 0; i < n; ++i) route[a.lists[c][i]] = static_cast<int>(c);
  }
  return route;
}

void Cluster::refresh_capacity(ComputeNode& n) {
  if (!caches_addresses()) return;
  const std::uint64_t used = n.loaded.size() * partition_footprint();
  n.cache.set_capacity(used >= cfg_.cn_mem ? 0 : cfg_.cn_mem - used);
}

void Cluster::start() {
  if (started_) return;
  started_ = true;
  if (!uses_proxies()) return;
  route_ = compute_route(assignment_, applied_steps_);
  for (int c = 0; c < cfg_.cns; ++c) {
    auto& n = cns_[c];
    n.active = route_;
    n.staging = route_;
    for (std::uint32_t p = 0; p < route_.size(); ++p) {
      if (route_[p] != c) continue;
      auto src = mns_[index_replicas(p)[0]].partition(p);
      PartitionBuffer buf;
      buf.slots.assign(src.begin(), src.end());
      buf.meta.assign(cfg_.geo.slots_per_partition(), MetadataEntry{});
      n.loaded.emplace(p, std::move(buf));
    }
    refresh_capacity(n);
    if (caches_values()) tl_.spawn(flush_loop(c));
  }
  if (cfg_.manager) tl_.spawn(manager_loop());
}

Task<bool> Cluster::reassign(Assignment a, int ratio_steps) {
  if (!uses_proxies()) co_return false;
  while (reassigning_) co_await tl_.sleep(cfg_.fabric.wire_latency);
  reassigning_ = true;
  const int mgr = manager_node();
  const std::uint64_t round = ++reassign_round_;
  const std::uint64_t members = membership_;
  std::vector<int> target = compute_route(a, ratio_steps);

  ReassignRecord rec;
  rec.pause_start = tl_.now();
  for (std::size_t p = 0; p < target.size(); ++p) rec.moved += target[p] != route_[p];

  struct Join {
    int pending = 0;
    bool failed = false;
    OneShot<bool> done;
  };
  // Runs one manager-to-CN step on every live CN in parallel: stage `route`
  // (if given) with a one-sided write, then send the control RPC.
  auto broadcast = [&](std::optional<std::vector<int>> route, RpcRequest req) -> Task<bool> {
    return [](Cluster* self, int mgr, std::optional<std::vector<int>> route,
              RpcRequest req) -> Task<bool> {
      auto j = std::make_shared<Join>();
      std::vector<int> live;
      for (int c = 0; c < self->cfg_.cns; ++c)
        if (self->cns_[c].alive) live.push_back(c);
      if (live.empty()) co_return true;
      j->pending = static_cast<int>(live.size());
      for (int c : live) {
        auto step = [](Cluster* self, int mgr, int c, std::optional<std::vector<int>> route,
                       RpcRequest req, std::shared_ptr<Join> j) -> Task<void> {
          if (route) {
            auto out = co_await self->fabric_.verb(
                self->make(mgr, c, VerbKind::RemoteWrite, static_cast<std::uint32_t>(route->size())),
                mgr, [self, c, &route] { self->cns_[c].staging = *route; });
            if (out != VerbOutcome::Ok) j->failed = true;
          }
          if (!j->failed || !route) {
            auto r = co_await self->call(mgr, c, std::move(req));
            if (!r && self->cns_[c].alive) j->failed = true;
          }
          if (--j->pending == 0) j->done.finish(true);
        };
        self->tl_.spawn(step(self, mgr, c, route, req, j));
      }
      co_await j->done.wait();
      co_return !j->failed;
    }(this, mgr, std::move(route), std::move(req));
  };

  bool ok = co_await broadcast(target, PauseRpc{round});
  bool aborted = !ok || membership_ != members;
  if (aborted) {
    // Partitions that were about to move fall back to the memory nodes.
    std::vector<int> fallback = route_;
    for (std::size_t p = 0; p < target.size(); ++p)
      if (target[p] != route_[p]) fallback[p] = kMemoryResident;
    for (std::size_t p = 0; p < fallback.size(); ++p)
      if (fallback[p] >= 0 && !cns_[fallback[p]].alive) fallback[p] = kMemoryResident;
    for (int c = 0; c < cfg_.cns; ++c)
      if (cns_[c].alive) cns_[c].staging = fallback;
    target = std::move(fallback);
  }
  route_ = target;
  co_await broadcast(std::nullopt, ResumeRpc{round, aborted});
  if (!aborted) {
    assignment_ = std::move(a);
    applied_steps_ = ratio_steps;
  }
  rec.resume_end = tl_.now();
  rec.aborted = aborted;
  reassign_log_.push_back(rec);
  reassigning_ = false;
  co_return !aborted;
}

Task<void> Cluster::apply_ratio(int steps) {
  co_await reassign(assignment_, steps);
}

Task<double> Cluster::sample_throughput() {
  const std::uint64_t before = completed_ops_;
  co_await tl_.sleep(cfg_.manager_period);
  co_return static_cast<double>(completed_ops_ - before) / cfg_.manager_period;
}

Task<void> Cluster::knob_round() {
  KnobRound round(knob_);
  while (auto i = round.next()) {
    if (*i != applied_steps_) co_await apply_ratio(*i);
    double t = co_await sample_throughput();
    ++stats_.knob_samples;
    round.observe(t);
    if (stopping_) co_return;
  }
  if (knob_.i != applied_steps_) co_await apply_ratio(knob_.i);
  ++stats_.knob_rounds;
}

Task<void> Cluster::collect_and_detect() {
  const int mgr = manager_node();
  const std::uint32_t P = cfg_.geo.partitions();
  std::vector<std::vector<std::uint32_t>> counts(cfg_.cns, std::vector<std::uint32_t>(P, 0));
  std::vector<bool> alive(cfg_.cns, false);
  std::vector<VerbEvent> evs;
  std::vector<std::function<void()>> fx;
  for (int c = 0; c < cfg_.cns; ++c) {
    if (!cns_[c].alive) continue;
    evs.push_back(make(mgr, c, VerbKind::RemoteRead, P * 4));
    fx.push_back([this, c, &counts, &alive] {
      auto& n = cns_[c];
      counts[c] = n.access;
      alive[c] = n.alive;
      std::fill(n.access.begin(), n.access.end(), 0u);
    });
  }
  co_await fabric_.all(std::move(evs), mgr, std::move(fx));
  if (!cfg_.rank_hotness) co_return;
  auto hot = collect_hotness(counts, alive);
  HotnessDecision d = hotness_detect(hot, ranks_old_, cfg_.cns);
  if (!d.trigger) co_return;
  ++stats_.hotness_triggers;
  ranks_old_ = std::move(d.new_ranks);
  co_await reassign(assign_partitions(ranks_old_, cfg_.cns), applied_steps_);
  shift_pending_ = true;
}

Task<void> Cluster::manager_loop() {
  std::uint64_t reads0 = completed_reads_, writes0 = completed_writes_;
  while (!stopping_) {
    co_await tl_.sleep(cfg_.manager_period);
    if (stopping_) break;
    // The manager is colocated with CN 0 and idles while it is down.
    if (!cns_[0].alive) continue;
    if (restart_pending_) {
      restart_pending_ = false;
      co_await reassign(assignment_, applied_steps_);
      shift_pending_ = true;
      continue;
    }
    co_await collect_and_detect();
    if (cfg_.fixed_ratio) continue;
    const std::uint64_t dr = completed_reads_ - reads0, dw = completed_writes_ - writes0;
    reads0 = completed_reads_;
    writes0 = completed_writes_;
    const double wf = dr + dw ? static_cast<double>(dw) / static_cast<double>(dr + dw) : 0.0;
    if (shift_pending_ || write_frac_last_ < 0 || detect_workload_shift(wf, write_frac_last_)) {
      shift_pending_ = false;
      write_frac_last_ = wf;
      co_await knob_round();
      reads0 = completed_reads_;
      writes0 = completed_writes_;
    }
  }
}

}  // namespace flexkv
