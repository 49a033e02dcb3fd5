// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Each criterion also has a wall-clock budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "flexkv/harness.hpp"
#include "flexkv/knob.hpp"
#include "flexkv/metadata.hpp"
#include "flexkv/placement.hpp"

namespace flexkv {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Closed-loop fabric microbenchmarks.

// Keeps `depth` verbs of one kind outstanding from node 0 and returns the
// steady-state completion rate (first to last completion).
double verb_rate(VerbKind kind, std::uint32_t size, int depth = 64, int total = 20000) {
  Timeline tl;
  Fabric f(tl, 2);
  int done = 0;
  SimTime first = -1, last = 0;
  std::function<void()> issue = [&] {
    VerbEvent ev;
    ev.src = 0;
    ev.dst = is_local(kind) ? 0 : 1;
    ev.kind = kind;
    ev.payload_size = size;
    f.submit(ev, [&](VerbOutcome) {
      if (first < 0) first = tl.now();
      last = tl.now();
      if (++done < total) issue();
    });
  };
  for (int i = 0; i < depth; ++i) issue();
  tl.run([&] { return done >= total; });
  tl.clear();
  return (done - 1) / (last - first);
}

Outcome calibration() {
  const double cas = verb_rate(VerbKind::RemoteCas, 8);
  struct Row {
    const char* name;
    double got, want;
  } rows[] = {
      {"RemoteWrite", verb_rate(VerbKind::RemoteWrite, 8) / cas, 10.1},
      {"SendRecv", verb_rate(VerbKind::SendRecv, 8) / cas, 19.5},
      {"LocalCas", verb_rate(VerbKind::LocalCas, 8) / cas, 177.1},
      {"LocalRead/RemoteRead@128B",
       verb_rate(VerbKind::LocalRead, 128) / verb_rate(VerbKind::RemoteRead, 128), 38.2},
  };
  Outcome o{true, {}};
  for (const auto& r : rows) {
    const double err = std::abs(r.got / r.want - 1);
    o.pass &= err <= 0.02;
    o.detail += fmt("%s %.2fx (%.2f%%) ", r.name, r.got, 100 * err);
  }
  return o;
}

// Index-update microbenchmark: 4 CNs issue updates closed-loop. A fraction of
// them replace the RemoteCas on the MN by an RPC to a peer CN that commits with
// LocalCas and replies.
double replacement_rate(double fraction, int depth = 16, int total = 40000) {
  Timeline tl;
  const int cns = 4, mn = 4;
  Fabric f(tl, cns + 1);
  int done = 0, issued = 0;
  SimTime first = -1, last = 0;
  auto finish = [&] {
    if (first < 0) first = tl.now();
    last = tl.now();
    ++done;
  };
  std::function<void(int)> issue = [&](int cn) {
    if (issued >= total) return;
    const std::uint64_t j = static_cast<std::uint64_t>(issued++);
    // Spread the replaced ops evenly over the sequence.
    const bool rpc = std::floor((j + 1) * fraction) > std::floor(j * fraction);
    VerbEvent ev;
    ev.src = cn;
    if (!rpc) {
      ev.dst = mn;
      ev.kind = VerbKind::RemoteCas;
      f.submit(ev, [&, cn](VerbOutcome) {
        finish();
        issue(cn);
      });
      return;
    }
    const int peer = (cn + 1) % cns;
    ev.dst = peer;
    ev.kind = VerbKind::SendRecv;
    f.submit(ev, [&, cn, peer](VerbOutcome) {
      VerbEvent cas;
      cas.src = peer;
      cas.kind = VerbKind::LocalCas;
      f.submit(cas, [&, cn, peer](VerbOutcome) {
        VerbEvent rep;
        rep.src = peer;
        rep.dst = cn;
        rep.kind = VerbKind::SendRecv;
        f.submit(rep, [&, cn](VerbOutcome) {
          finish();
          issue(cn);
        });
      });
    });
  };
  for (int cn = 0; cn < cns; ++cn)
    for (int k = 0; k < depth; ++k) issue(cn);
  tl.run([&] { return done >= total; });
  tl.clear();
  return (done - 1) / (last - first);
}

Outcome replacement_sweep() {
  Outcome o{true, {}};
  double prev = 0;
  for (int i = 0; i <= 10; ++i) {
    const double t = replacement_rate(i / 10.0);
    if (t < prev) o.pass = false;
    prev = t;
    o.detail += fmt("%.2f ", t);
  }
  o.detail += "Mops/s";
  return o;
}

// ---------------------------------------------------------------------------
// Policy oracles.

Outcome baseline_identity() {
  Outcome o{true, {}};
  for (std::int64_t R = 1; R <= 64; ++R) {
    std::int64_t sum = 0;
    for (std::int64_t x = 1; x <= R; ++x)
      for (std::int64_t y = 1; y <= R; ++y) sum += x > y ? x - y : y - x;
    // sum / R^2 == (R^2 - 1) / (3R)  <=>  3R * sum == R^2 (R^2 - 1)
    if (3 * R * sum != R * R * (R * R - 1)) {
      o.pass = false;
      o.detail += fmt("R=%lld mismatch ", static_cast<long long>(R));
    }
    // The implementation's baseline for one CN per rank.
    std::vector<std::uint64_t> hot(static_cast<std::size_t>(R), 1);
    auto d = hotness_detect(hot, initial_ranks(static_cast<std::uint32_t>(R), 1), 1);
    if (d.baseline_times3 != static_cast<std::uint64_t>(R * R - 1)) {
      o.pass = false;
      o.detail += fmt("R=%lld baseline %llu ", static_cast<long long>(R),
                      static_cast<unsigned long long>(d.baseline_times3));
    }
  }
  if (o.pass) o.detail = "R=1..64 exact";
  return o;
}

Outcome trigger_example() {
  const std::vector<std::uint64_t> hot{40, 20, 30, 10};
  auto d = hotness_detect(hot, {1, 1, 2, 2}, 2);
  auto again = hotness_detect(hot, d.new_ranks, 2);
  Outcome o;
  o.pass = d.displacement == 2 && d.baseline_times3 == 6 && d.trigger && again.displacement == 0 &&
           !again.trigger;
  o.detail = fmt("D=%llu B=%.0f trigger=%d; replay D=%llu trigger=%d",
                 static_cast<unsigned long long>(d.displacement), d.baseline(), d.trigger,
                 static_cast<unsigned long long>(again.displacement), again.trigger);
  return o;
}

Outcome knob_convergence() {
  KnobState up;
  auto u = knob_round(up, [](double i) { return 1 - (i - 0.3) * (i - 0.3); });
  KnobState down;
  auto d = knob_round(down, [](double i) { return 1 - i; });
  Outcome o;
  o.pass = u.i_best == 3 && u.samples == 6 && up.i == 3 && d.i_best == 0 && down.i == 0;
  o.detail = fmt("unimodal i_best=%.1f probes=%d; decreasing i_best=%.1f probes=%d",
                 u.i_best / 10.0, u.samples, d.i_best / 10.0, d.samples);
  return o;
}

Outcome counter_overflow() {
  Rng rng(12);
  std::uint64_t shifts = 0, checked = 0, flips = 0;
  for (int entry = 0; entry < 20000; ++entry) {
    MetadataEntry e;
    e.add_reads(static_cast<std::uint32_t>(rng.below(65536)));
    e.add_writes(static_cast<std::uint32_t>(rng.below(e.read_counter / 2 + 1)));
    for (int step = 0; step < 200; ++step) {
      const std::uint32_t w = e.write_counter, r = e.read_counter;
      const bool write = rng.below(5) == 0;
      const std::uint32_t n = 1 + static_cast<std::uint32_t>(rng.below(write ? 4 : 1024));
      write ? e.add_writes(n) : e.add_reads(n);
      if (e.write_counter >= w && e.read_counter >= r) continue;
      ++shifts;
      // Undo this increment to see the state the shift alone produced.
      std::uint32_t w2 = e.write_counter, r2 = e.read_counter;
      (write ? w2 : r2) -= n;
      if (w2 != w >> 2 || r2 != r >> 2) {
        ++flips;  // shift did not divide both counters by four
        continue;
      }
      // |w/r - 1/4| > 4/r  <=>  |4w - r| > 16
      const std::int64_t margin = 4 * std::int64_t{w} - std::int64_t{r};
      if (r == 0 || std::llabs(margin) <= 16) continue;
      ++checked;
      if (cache_worthy(w, r) != cache_worthy(w2, r2)) ++flips;
    }
  }
  Outcome o;
  o.pass = flips == 0 && checked > 1000;
  o.detail = fmt("%llu shifts, %llu outside bound checked, %llu decisions changed",
                 static_cast<unsigned long long>(shifts), static_cast<unsigned long long>(checked),
                 static_cast<unsigned long long>(flips));
  return o;
}

// ---------------------------------------------------------------------------
// Cluster experiments.

ExperimentConfig ycsb_a(Mode mode = Mode::FlexKV) {
  ExperimentConfig cfg;
  cfg.cluster.mode = mode;
  cfg.workload.mix = preset_mix("A");
  cfg.workload.keys = 10000;
  cfg.workload.alpha = 0.99;
  cfg.ops = 100000;
  return cfg;
}

Outcome offload_sweep() {
  std::vector<double> t;
  Outcome o;
  for (int i = 0; i <= 10; ++i) {
    auto cfg = ycsb_a();
    cfg.cluster.fixed_ratio = i / 10.0;
    t.push_back(run_experiment(cfg).throughput / 1e6);
    o.detail += fmt("%.2f ", t.back());
  }
  const auto peak = std::max_element(t.begin(), t.end()) - t.begin();
  o.pass = peak != 0 && peak != 10 && t[peak] > t.front() && t[peak] > t.back();
  o.detail += fmt("Mops/s, max at %.1f", peak / 10.0);
  return o;
}

Outcome load_balance() {
  auto rank = ycsb_a();
  auto flat = ycsb_a();
  flat.cluster.rank_hotness = false;
  const double a = run_experiment(rank).cv, b = run_experiment(flat).cv;
  const double cut = b > 0 ? 1 - a / b : 0;
  return {cut >= 0.20, fmt("CV rank-aware %.3f vs static %.3f, reduction %.1f%%", a, b, 100 * cut)};
}

Outcome baseline_ordering() {
  double t[4];
  const Mode modes[4] = {Mode::FlexKV, Mode::AddrCache, Mode::MnOnly, Mode::Ownership};
  for (int i = 0; i < 4; ++i) t[i] = run_experiment(ycsb_a(modes[i])).throughput / 1e6;
  return {t[0] > t[1] && t[1] > t[2] && t[0] > t[3],
          fmt("flexkv %.2f, addr-cache %.2f, mn-only %.2f, ownership %.2f Mops/s", t[0], t[1], t[2],
              t[3])};
}

ExperimentConfig hot_keys(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.cluster.cns = 4;
  cfg.cluster.clients_per_cn = 2;
  cfg.cluster.contexts = 1;
  cfg.workload.keys = 20;
  cfg.workload.alpha = 0.99;
  cfg.workload.mix = OpMix{0.05, 0.35, 0.50, 0.10};
  cfg.fresh_inserts = false;
  cfg.ops = 2000;
  cfg.history = true;
  cfg.seed = seed;
  return cfg;
}

Verdict check_run(const ExperimentConfig& cfg, std::size_t* open_ops = nullptr) {
  RunResult r = run_experiment(cfg);
  if (open_ops)
    *open_ops = static_cast<std::size_t>(std::count_if(
        r.history.begin(), r.history.end(),
        [](const HistoryRecord& h) { return h.result == OpResult::Unknown; }));
  return check_linearizability(r.history, r.initial).verdict;
}

Outcome linearizability() {
  int ok = 0, bad = 0, inconclusive = 0;
  std::size_t crash_open = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto cfg = hot_keys(seed);
    if (seed == 1) cfg.faults = {FaultEvent{0.3 * kMillisecond, true, 1}};
    switch (check_run(cfg, seed == 1 ? &crash_open : nullptr)) {
      case Verdict::Ok: ++ok; break;
      case Verdict::Violation: ++bad; break;
      case Verdict::Inconclusive: ++inconclusive; break;
    }
  }
  // Without invalidation a reader keeps a stale cached value; read-heavy
  // traffic makes the keys cache-worthy.
  int caught_at = 0;
  for (std::uint64_t seed = 1; seed <= 20 && !caught_at; ++seed) {
    auto cfg = hot_keys(seed);
    cfg.cluster.invalidation = false;
    cfg.workload.mix = OpMix{0, 0.10, 0.90, 0};
    if (check_run(cfg) == Verdict::Violation) caught_at = static_cast<int>(seed);
  }
  return {ok == 50 && crash_open > 0 && caught_at > 0,
          fmt("%d/50 linearizable (%d violations, %d inconclusive; crash run left %zu ops "
              "open); sabotage %s",
              ok, bad, inconclusive, crash_open,
              caught_at ? fmt("caught at seed %d", caught_at).c_str() : "not caught")};
}

Outcome lease_gc() {
  std::uint64_t early = 0, wrong = 0, reuses = 0, addr_hits = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    ExperimentConfig cfg;
    cfg.cluster.clients_per_cn = 2;
    cfg.cluster.contexts = 2;
    cfg.cluster.t_lease = 50;
    cfg.cluster.drift = 1e-4;
    // A small index packs keys into shared buckets so tombstones are
    // recycled across keys.
    cfg.cluster.geo.partition_bits = 6;
    cfg.workload.keys = 32;
    cfg.workload.alpha = 0.5;
    cfg.workload.mix = OpMix{0.25, 0, 0.50, 0.25};
    cfg.fresh_inserts = false;
    cfg.ops = 400;
    cfg.seed = seed;
    RunResult r = run_experiment(cfg);
    early += r.stats.early_slot_reuses;
    wrong += r.stats.wrong_key_addr_reads;
    reuses += r.stats.slot_reuses;
    addr_hits += r.stats.addr_hits;
  }
  return {early == 0 && wrong == 0 && reuses > 0 && addr_hits > 0,
          fmt("1000 schedules: %llu slot reuses (%llu inside lease), %llu cached-address hits "
              "(%llu wrong-key)",
              static_cast<unsigned long long>(reuses), static_cast<unsigned long long>(early),
              static_cast<unsigned long long>(addr_hits), static_cast<unsigned long long>(wrong))};
}

Outcome reassignment_atomicity() {
  std::size_t rounds = 0, aborted = 0;
  std::uint64_t paused = 0, unknown = 0, violations = 0, probes_failed = 0;
  SimTime widest = 0, span = 0;
  for (std::uint64_t seed = 1; rounds < 100 && seed <= 40; ++seed) {
    auto cfg = ycsb_a();
    cfg.seed = seed;
    cfg.invariant_period = 5;
    RunResult r = run_experiment(cfg);
    for (const auto& rec : r.reassignments) {
      if (rec.aborted) {
        ++aborted;
        continue;
      }
      if (rec.moved == 0) continue;
      ++rounds;
      widest = std::max(widest, rec.resume_end - rec.pause_start);
    }
    paused += r.stats.paused_replies;
    unknown += r.unknown + (cfg.ops - r.completed - r.unknown);
    violations += r.stats.single_owner_violations;
    probes_failed += r.invariant_failures.size();
    span += r.elapsed;
  }
  // Bounded: no window longer than one manager period, and short next to the run.
  const SimTime bound = ExperimentConfig{}.cluster.manager_period;
  return {rounds >= 100 && violations == 0 && probes_failed == 0 && paused > 0 && unknown == 0 &&
              widest <= bound,
          fmt("%zu reassignments (%zu aborted), %llu paused replies, %llu ops lost, ownership "
              "violations %llu/%llu, widest pause %.1f us (bound %.0f us, total run %.0f us)",
              rounds, aborted, static_cast<unsigned long long>(paused),
              static_cast<unsigned long long>(unknown), static_cast<unsigned long long>(violations),
              static_cast<unsigned long long>(probes_failed), widest, bound, span)};
}

// ---------------------------------------------------------------------------

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace flexkv

int main(int argc, char** argv) {
  using namespace flexkv;
  const std::vector<Criterion> all{
      {"calibration", 5, calibration},
      {"cas-to-rpc sweep nondecreasing", 10, replacement_sweep},
      {"displacement baseline identity", 1, baseline_identity},
      {"hotness trigger example", 1, trigger_example},
      {"knob convergence", 1, knob_convergence},
      {"offload sweep maximum is interior", 60, offload_sweep},
      {"rank-aware load balance", 60, load_balance},
      {"baseline ordering", 120, baseline_ordering},
      {"linearizability", 120, linearizability},
      {"lease gc safety", 30, lease_gc},
      {"reassignment atomicity", 60, reassignment_atomicity},
      {"counter overflow", 5, counter_overflow},
  };
  // Optional argument: run only criteria whose 1-based number is listed.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = all[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < all[i].budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s [%2d] %s: %s (%.2fs, budget %.0fs%s)\n", pass ? "PASS" : "FAIL", n,
                all[i].name, o.detail.c_str(), secs, all[i].budget_s,
                in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
