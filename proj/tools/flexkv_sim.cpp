// flexkv-sim: run one simulated experiment and print a metrics summary.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "flexkv/harness.hpp"

using namespace flexkv;

namespace {

std::string history_line(const HistoryRecord& h) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d,%.4f,%.4f,", h.client, h.invoke, h.complete);
  return std::string(buf) + to_string(h.kind) + "," + h.key + "," + h.arg + "," +
         to_string(h.result) + "," + h.value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic simulator of a memory-disaggregated key-value store"};
  ExperimentConfig cfg;
  std::string mode = "flexkv", workload = "A", faults, out_csv, fabric_file, history_out;
  std::optional<double> ratio;
  std::vector<std::string> overrides;
  bool history = false, no_rank = false, no_kv_cache = false, as_json = false;
  double sample_ms = 10;

  app.add_option("--mode", mode, "flexkv | mn-only | addr-cache | ownership")->capture_default_str();
  app.add_option("--workload", workload, "A | B | C | D | trace:<path>")->capture_default_str();
  app.add_option("--alpha", cfg.workload.alpha, "Zipfian skew, 0 for uniform")->capture_default_str();
  app.add_option("--keys", cfg.workload.keys, "preloaded key count")->capture_default_str();
  app.add_option("--value-size", cfg.workload.value_size, "value bytes")->capture_default_str();
  app.add_option("--cns", cfg.cluster.cns)->capture_default_str();
  app.add_option("--mns", cfg.cluster.mns)->capture_default_str();
  app.add_option("--clients-per-cn", cfg.cluster.clients_per_cn)->capture_default_str();
  app.add_option("--contexts", cfg.cluster.contexts, "concurrent requests per client")
      ->capture_default_str();
  app.add_option("--cn-mem", cfg.cluster.cn_mem, "CN memory budget in bytes")->capture_default_str();
  app.add_option("--replicas", cfg.cluster.replicas)->capture_default_str();
  app.add_option("--ops", cfg.ops)->capture_default_str();
  app.add_option("--seed", cfg.seed)->capture_default_str();
  app.add_option("--faults", faults, "fault schedule file")->check(CLI::ExistingFile);
  app.add_flag("--history", history, "capture the history and check linearizability");
  app.add_option("--history-out", history_out, "write the captured history as CSV");
  app.add_option("--out", out_csv, "metrics CSV path");
  app.add_option("--sample-ms", sample_ms, "CSV sampling interval")->capture_default_str();
  app.add_option("--config", fabric_file, "key=value file (fabric costs, protocol knobs)")
      ->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "extra key=value override, repeatable");
  app.add_option("--offload-ratio", ratio, "pin the offload ratio and disable the knob")
      ->check(CLI::Range(0.0, 1.0));
  app.add_flag("--no-rank-hotness", no_rank, "static partition assignment");
  app.add_flag("--no-kv-cache", no_kv_cache, "disable compute-side KV caching");
  app.add_flag("--single-cas", cfg.cluster.single_cas, "one CAS per index update in mn-only");
  app.add_flag("--json", as_json, "print the summary as JSON");
  CLI11_PARSE(app, argc, argv);

  try {
    cfg.cluster.mode = parse_mode(mode);
    if (workload.rfind("trace:", 0) == 0) {
      std::unordered_set<std::string> live;
      cfg.trace = ingest_trace(workload.substr(6), live);
      if (cfg.trace.empty()) throw ConfigError("trace has no requests");
    } else {
      cfg.workload.mix = preset_mix(workload);
    }
    std::map<std::string, std::string> kv;
    if (!fabric_file.empty()) kv = load_kv_file(fabric_file);
    for (const auto& o : overrides)
      for (auto& [k, v] : parse_kv_text(o)) kv[k] = v;
    cfg.cluster.apply(kv);
    cfg.cluster.fixed_ratio = ratio;
    cfg.cluster.rank_hotness = !no_rank;
    cfg.cluster.kv_cache = !no_kv_cache;
    if (!faults.empty()) cfg.faults = load_faults(faults);
    cfg.history = history || !history_out.empty();
    cfg.sample_interval = sample_ms * kMillisecond;

    RunResult r = run_experiment(cfg);
    if (!out_csv.empty()) emit_csv(r.series, out_csv);

    std::optional<CheckReport> report;
    if (cfg.history) {
      // Per-key check on up to 20 keys, picked deterministically from the seed.
      std::vector<std::string> keys;
      std::unordered_set<std::string> pool;
      for (const auto& h : r.history) pool.insert(h.key);
      std::vector<std::string> all(pool.begin(), pool.end());
      std::sort(all.begin(), all.end());
      Rng rng(cfg.seed);
      while (!all.empty() && keys.size() < 20) {
        auto i = rng.below(all.size());
        keys.push_back(all[i]);
        all.erase(all.begin() + static_cast<std::ptrdiff_t>(i));
      }
      report = check_linearizability(r.history, r.initial, keys);
      if (!history_out.empty()) {
        std::ofstream h(history_out);
        h << "client,invoke,complete,kind,key,arg,result,value\n";
        for (const auto& rec : r.history) h << history_line(rec) << '\n';
      }
    }

    if (as_json) {
      nlohmann::json j;
      j["mode"] = mode;
      j["throughput"] = r.throughput;
      j["p50_us"] = r.p50;
      j["p99_us"] = r.p99;
      j["cv"] = r.cv;
      j["kv_hit"] = r.kv_hit;
      j["addr_hit"] = r.addr_hit;
      j["offload_ratio"] = r.offload_ratio;
      j["completed"] = r.completed;
      j["unknown"] = r.unknown;
      j["elapsed_us"] = r.elapsed;
      j["served"] = r.served;
      j["send_recv"] = r.send_recv;
      j["reassignments"] = r.reassignments.size();
      std::vector<double> util;
      for (std::size_t i = 0; i < r.nic_busy.size(); ++i)
        util.push_back(r.elapsed > 0 ? r.nic_busy[i] / r.elapsed : 0);
      j["nic_util"] = util;
      for (const auto& [k, v] : r.verbs) j["verbs"][k] = v;
      if (report) j["linearizability"] = to_string(report->verdict);
      const auto& st = r.stats;
      j["stats"] = {{"rpc_read", st.rpc_read},         {"rpc_write", st.rpc_write},
                    {"rpc_invalidate", st.rpc_invalidate}, {"paused", st.paused_replies},
                    {"busy", st.busy_replies},         {"redirect", st.redirect_replies},
                    {"conflicts", st.conflicts},       {"grants", st.grants},
                    {"grants_suppressed", st.grants_suppressed},
                    {"hotness_triggers", st.hotness_triggers},
                    {"knob_rounds", st.knob_rounds},   {"knob_samples", st.knob_samples},
                    {"slot_reuses", st.slot_reuses},   {"early_slot_reuses", st.early_slot_reuses}};
      std::cout << j.dump(2) << '\n';
    } else {
      std::printf("mode=%s completed=%llu unknown=%llu elapsed=%.1fus\n", mode.c_str(),
                  static_cast<unsigned long long>(r.completed),
                  static_cast<unsigned long long>(r.unknown), r.elapsed);
      std::printf("throughput=%.0f ops/s p50=%.2fus p99=%.2fus cv=%.4f\n", r.throughput, r.p50,
                  r.p99, r.cv);
      std::printf("kv_hit=%.4f addr_hit=%.4f offload_ratio=%.2f reassignments=%zu\n", r.kv_hit,
                  r.addr_hit, r.offload_ratio, r.reassignments.size());
      if (report) std::printf("linearizability=%s\n", to_string(report->verdict));
    }
    for (const auto& f : r.invariant_failures) std::fprintf(stderr, "invariant: %s\n", f.c_str());
    if (report && report->verdict == Verdict::Violation) return 3;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const TraceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
