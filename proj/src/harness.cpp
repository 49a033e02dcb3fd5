#include "flexkv/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace flexkv {

std::vector<FaultEvent> parse_faults(const std::string& text) {
  std::vector<FaultEvent> out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line.erase(std::remove_if(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }),
               line.end());
    if (line.empty()) continue;
    auto bad = [&](const std::string& why) {
      return ConfigError("faults line " + std::to_string(no) + ": " + why);
    };
    auto c1 = line.find(','), c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw bad("expected t_ms,action,CN<k>");
    FaultEvent ev;
    try {
      ev.at = parse_number("t_ms", line.substr(0, c1)) * kMillisecond;
    } catch (const ConfigError&) {
      throw bad("bad time");
    }
    if (ev.at < 0) throw bad("negative time");
    std::string action = line.substr(c1 + 1, c2 - c1 - 1);
    if (action == "crash")
      ev.crash = true;
    else if (action == "restart")
      ev.crash = false;
    else
      throw bad("unknown action '" + action + "'");
    std::string node = line.substr(c2 + 1);
    if (node.size() < 3 || node.compare(0, 2, "CN") != 0 ||
        !std::all_of(node.begin() + 2, node.end(), [](unsigned char c) { return std::isdigit(c); }))
      throw bad("expected CN<k>, got '" + node + "'");
    ev.cn = std::stoi(node.substr(2));
    out.push_back(ev);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const FaultEvent& a, const FaultEvent& b) { return a.at < b.at; });
  return out;
}

std::vector<FaultEvent> load_faults(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open faults file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_faults(ss.str());
}

void ExperimentConfig::validate() const {
  cluster.validate();
  workload.validate();
  if (ops == 0) throw ConfigError("invalid config: ops must be > 0");
  if (workload.keys == 0 && trace.empty()) throw ConfigError("invalid config: keys must be > 0");
  if (sample_interval <= 0) throw ConfigError("invalid config: sample interval must be > 0");
  if (cluster.clients_per_cn < 1) throw ConfigError("invalid config: clients-per-cn must be >= 1");
  for (const auto& f : faults)
    if (f.cn < 0 || f.cn >= cluster.cns)
      throw ConfigError("invalid config: fault names CN" + std::to_string(f.cn));
}

std::string make_value(int client, std::uint64_t seq, std::uint32_t size) {
  char buf[48];
  int n = std::snprintf(buf, sizeof buf, "v%d.%llu", client, static_cast<unsigned long long>(seq));
  std::string v(buf, static_cast<std::size_t>(n));
  if (v.size() < size) v.append(size - v.size(), '.');
  return v;
}

namespace {

struct Run {
  const ExperimentConfig& cfg;
  Timeline tl;
  std::unique_ptr<Cluster> cluster;
  Zipf zipf;
  OpMix mix;
  std::vector<Rng> rngs;
  std::vector<std::uint64_t> seqs;
  std::uint64_t issued = 0;
  std::uint64_t next_fresh = 0;
  int contexts = 0;
  bool finished = false;

  RunResult res;
  std::vector<double> latencies;
  // History slots of INSERTs refused for lack of a free slot.
  std::vector<std::size_t> refused;
  SimTime last_complete = 0;

  // Per-interval accumulators for the CSV series.
  std::vector<double> window_lat;
  std::uint64_t window_ops = 0;
  std::vector<double> served_mark;
  std::uint64_t searches_mark = 0, kv_mark = 0, addr_mark = 0;

  Run(const ExperimentConfig& c)
      : cfg(c), zipf(std::max<std::uint64_t>(c.workload.keys, 1), c.workload.alpha),
        mix(c.workload.mix) {}

  Request next_request(int client) {
    if (!cfg.trace.empty()) return cfg.trace[(issued - 1) % cfg.trace.size()];
    Rng& rng = rngs[client];
    Request r;
    r.kind = next_op(rng, mix);
    r.value_size = cfg.workload.value_size;
    if (r.kind == OpKind::Insert && cfg.fresh_inserts)
      r.key = key_name(cfg.workload.keys + ++next_fresh);
    else
      r.key = key_name(zipf.next(rng));
    return r;
  }

  void done_context() {
    if (--contexts == 0 && !finished) {
      finished = true;
      cluster->stop();
    }
  }

  static Task<void> context(Run* run, int client) {
    struct Exit {
      Run* r;
      ~Exit() { r->done_context(); }
    } exit{run};
    Cluster& c = *run->cluster;
    const std::uint64_t limit =
        run->cfg.trace.empty() ? run->cfg.ops : std::min<std::uint64_t>(run->cfg.ops, run->cfg.trace.size());
    while (run->issued < limit) {
      ++run->issued;
      Request req = run->next_request(client);
      std::string value;
      if (req.kind == OpKind::Insert || req.kind == OpKind::Update)
        value = make_value(client, ++run->seqs[client], req.value_size);
      HistoryRecord rec;
      rec.client = client;
      rec.invoke = run->tl.now();
      rec.kind = req.kind;
      rec.key = req.key;
      rec.arg = value;
      std::size_t slot = run->res.history.size();
      if (run->cfg.history) run->res.history.push_back(rec);
      // NodeCrashed propagates out and leaves the record open (Unknown).
      OpOutcome out = co_await c.execute(client, req.kind, req.key, std::move(value));
      const SimTime now = run->tl.now();
      if (run->cfg.history) {
        auto& h = run->res.history[slot];
        if (out.capacity_error) {
          run->refused.push_back(slot);
        } else if (out.gave_up) {
          h.result = OpResult::Unknown;
        } else {
          h.complete = now;
          h.result = out.result;
          h.value = out.value;
        }
      }
      if (out.capacity_error) ++run->res.capacity_errors;
      if (out.gave_up) {
        ++run->res.unknown;
        continue;
      }
      ++run->res.completed;
      run->latencies.push_back(now - rec.invoke);
      run->window_lat.push_back(now - rec.invoke);
      ++run->window_ops;
      run->last_complete = now;
    }
  }

  void spawn_contexts(int cn) {
    for (std::size_t id = 0; id < cluster->client_count(); ++id) {
      if (cluster->client_cn(static_cast<int>(id)) != cn || !is_worker(static_cast<int>(id))) continue;
      for (int k = 0; k < cfg.cluster.contexts; ++k) {
        ++contexts;
        tl.spawn(context(this, static_cast<int>(id)));
      }
    }
  }

  std::vector<int> workers;
  bool is_worker(int id) const { return std::find(workers.begin(), workers.end(), id) != workers.end(); }

  void sample() {
    const ClusterStats& st = cluster->stats();
    MetricsSample m;
    m.t = tl.now() / kSecond;
    m.throughput = static_cast<double>(window_ops) / (cfg.sample_interval / kSecond);
    m.p50 = percentile(window_lat, 50);
    m.p99 = percentile(window_lat, 99);
    auto served = cluster->served_loads();
    std::vector<double> delta(served.size());
    for (std::size_t i = 0; i < served.size(); ++i) delta[i] = served[i] - served_mark[i];
    m.cv = compute_cv(delta);
    const double searches = static_cast<double>(st.searches - searches_mark);
    m.kv_hit = searches > 0 ? static_cast<double>(st.kv_hits - kv_mark) / searches : 0;
    m.addr_hit = searches > 0 ? static_cast<double>(st.addr_hits - addr_mark) / searches : 0;
    m.offload_ratio = cluster->offload_ratio();
    res.series.push_back(m);
    window_lat.clear();
    window_ops = 0;
    served_mark = std::move(served);
    searches_mark = st.searches;
    kv_mark = st.kv_hits;
    addr_mark = st.addr_hits;
  }

  void schedule_sample(SimTime at) {
    tl.schedule(at, [this, at] {
      if (finished) return;
      sample();
      schedule_sample(at + cfg.sample_interval);
    });
  }

  void schedule_probe(SimTime at) {
    tl.schedule(at, [this, at] {
      if (finished) return;
      std::string err = cluster->check_single_ownership();
      if (!err.empty() && res.invariant_failures.size() < 16)
        res.invariant_failures.push_back("t=" + std::to_string(tl.now()) + " " + err);
      schedule_probe(at + cfg.invariant_period);
    });
  }
};

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  Run run(cfg);
  ClusterConfig cc = cfg.cluster;
  cc.seed = cfg.seed;
  run.cluster = std::make_unique<Cluster>(cc, run.tl);
  Cluster& c = *run.cluster;

  // Preload: the generated key space, or every key a trace touches first with
  // an UPDATE/SEARCH/DELETE (so the replay sees them present).
  std::uint64_t pre_seq = 0;
  auto preload = [&](const std::string& key) {
    std::string v = make_value(-1, ++pre_seq, cfg.workload.value_size);
    c.preload(key, v);
    run.res.initial.emplace(key, std::move(v));
  };
  if (cfg.trace.empty()) {
    for (std::uint64_t id = 1; id <= cfg.workload.keys; ++id) preload(key_name(id));
  } else {
    std::unordered_set<std::string> seen;
    for (const auto& r : cfg.trace) {
      if (!seen.insert(r.key).second) continue;
      if (r.kind != OpKind::Insert) preload(r.key);
    }
  }

  for (int cn = 0; cn < cfg.cluster.cns; ++cn)
    for (int k = 0; k < cfg.cluster.clients_per_cn; ++k) run.workers.push_back(c.add_client(cn));
  run.rngs.reserve(c.client_count());
  for (std::size_t i = 0; i < c.client_count(); ++i)
    run.rngs.emplace_back(cfg.seed * 0x9E3779B97F4A7C15ull + i);
  run.seqs.assign(c.client_count(), 0);
  run.served_mark.assign(cfg.cluster.cns, 0);

  c.start();
  for (int cn = 0; cn < cfg.cluster.cns; ++cn) run.spawn_contexts(cn);
  for (const auto& f : cfg.faults) {
    run.tl.schedule(f.at, [&run, f] {
      if (run.finished) return;
      if (f.crash) {
        run.cluster->crash_cn(f.cn);
      } else if (!run.cluster->cn_alive(f.cn)) {
        run.cluster->restart_cn(f.cn);
        run.spawn_contexts(f.cn);
      }
    });
  }
  for (const auto& mc : cfg.mix_changes) run.tl.schedule(mc.at, [&run, mc] { run.mix = mc.mix; });
  run.schedule_sample(cfg.sample_interval);
  if (cfg.invariant_period > 0) run.schedule_probe(cfg.invariant_period);

  run.tl.run();
  run.tl.rethrow_fatal();

  RunResult& r = run.res;
  // A refused INSERT wrote nothing and observed nothing, so it is dropped
  // rather than left open for the checker.
  std::sort(run.refused.begin(), run.refused.end());
  for (auto it = run.refused.rbegin(); it != run.refused.rend(); ++it)
    r.history.erase(r.history.begin() + static_cast<std::ptrdiff_t>(*it));
  r.elapsed = run.last_complete;
  r.throughput = r.elapsed > 0 ? static_cast<double>(r.completed) / (r.elapsed / kSecond) : 0;
  r.p50 = percentile(run.latencies, 50);
  r.p99 = percentile(run.latencies, 99);
  r.served = c.served_loads();
  r.cv = compute_cv(r.served);
  r.stats = c.stats();
  const double searches = static_cast<double>(r.stats.searches);
  r.kv_hit = searches > 0 ? static_cast<double>(r.stats.kv_hits) / searches : 0;
  r.addr_hit = searches > 0 ? static_cast<double>(r.stats.addr_hits) / searches : 0;
  r.offload_ratio = c.offload_ratio();
  r.reassignments = c.reassignments();
  r.send_recv = c.fabric().count(VerbKind::SendRecv);
  for (int i = 0; i < c.fabric().node_count(); ++i) r.nic_busy.push_back(c.fabric().nic_busy(i));
  for (int k = 0; k <= static_cast<int>(VerbKind::LocalRead); ++k)
    r.verbs[to_string(static_cast<VerbKind>(k))] = c.fabric().count(static_cast<VerbKind>(k));
  if (r.stats.single_owner_violations && r.invariant_failures.empty())
    r.invariant_failures.push_back("single-ownership breached during a serving change");
  RunResult out = std::move(r);
  run.finished = true;
  run.cluster.reset();
  return out;
}

}  // namespace flexkv
