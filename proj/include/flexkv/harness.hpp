#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flexkv/cluster.hpp"
#include "flexkv/linearizability.hpp"
#include "flexkv/metrics.hpp"
#include "flexkv/workload.hpp"

namespace flexkv {

struct FaultEvent {
  SimTime at = 0;  // microseconds
  bool crash = true;
  int cn = 0;
  friend bool operator==(const FaultEvent&, const FaultEvent&) = default;
};

// Lines `t_ms,crash,CN<k>` or `t_ms,restart,CN<k>`; blank lines and `#`
// comments are skipped. Throws ConfigError naming the line.
std::vector<FaultEvent> parse_faults(const std::string& text);
std::vector<FaultEvent> load_faults(const std::string& path);

// Switches the generated mix at a point in simulated time.
struct MixChange {
  SimTime at = 0;
  OpMix mix;
};

struct ExperimentConfig {
  ClusterConfig cluster;
  WorkloadSpec workload;
  // When non-empty the requests are replayed in order instead of generated.
  std::vector<Request> trace;
  // INSERTs draw never-used key ids; otherwise they reuse the key space.
  bool fresh_inserts = true;
  std::uint64_t ops = 100000;
  std::uint64_t seed = 1;
  SimTime sample_interval = 10 * kMillisecond;
  std::vector<FaultEvent> faults;
  std::vector<MixChange> mix_changes;
  bool history = false;
  // Period of the single-ownership probe; 0 disables it.
  SimTime invariant_period = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct RunResult {
  double throughput = 0;  // completed ops per simulated second
  double p50 = 0, p99 = 0;
  double cv = 0;
  double kv_hit = 0, addr_hit = 0;
  double offload_ratio = 0;
  std::uint64_t completed = 0, unknown = 0, capacity_errors = 0;
  SimTime elapsed = 0;
  std::vector<double> served;
  std::vector<MetricsSample> series;
  std::vector<HistoryRecord> history;
  InitialState initial;
  ClusterStats stats;
  std::vector<ReassignRecord> reassignments;
  std::vector<std::string> invariant_failures;
  std::uint64_t send_recv = 0;
  // Busy time of each node's NIC: CNs, then MNs, then the manager.
  std::vector<double> nic_busy;
  std::map<std::string, std::uint64_t> verbs;
};

// Deterministic for a given config. Throws ConfigError on invalid input.
RunResult run_experiment(const ExperimentConfig& cfg);

// Padded, run-unique value for client `client`'s `seq`-th write.
std::string make_value(int client, std::uint64_t seq, std::uint32_t size);

}  // namespace flexkv
