#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "flexkv/fabric.hpp"
#include "flexkv/knob.hpp"
#include "flexkv/linearizability.hpp"
#include "flexkv/local_cache.hpp"
#include "flexkv/memory_pool.hpp"
#include "flexkv/metadata.hpp"
#include "flexkv/placement.hpp"
#include "flexkv/rpc.hpp"
#include "flexkv/slot.hpp"
#include "flexkv/task.hpp"
#include "flexkv/timeline.hpp"
#include "flexkv/workload.hpp"

namespace flexkv {

enum class Mode : std::uint8_t { FlexKV, MnOnly, AddrCache, Ownership };

const char* to_string(Mode m);
Mode parse_mode(const std::string& s);

struct ClusterConfig {
  Mode mode = Mode::FlexKV;
  int cns = 4;
  int mns = 2;
  int clients_per_cn = 4;
  int contexts = 8;
  int replicas = 2;
  std::uint64_t cn_mem = 1u << 20;
  IndexGeometry geo;
  FabricConfig fabric;

  SimTime t_lease = kDefaultLease;
  double drift = kDefaultDrift;

  bool kv_cache = true;
  bool rank_hotness = true;
  // mn-only: one CAS per index update instead of one per replica.
  bool single_cas = false;
  // Disables the knob and pins the offload ratio.
  std::optional<double> fixed_ratio;
  int knob_steps = 10;
  SimTime manager_period = 1000;
  bool manager = true;

  int proxy_threads = 2;
  SimTime proxy_cpu = 0.5;
  // CPU time per operation on the CN that processes it; a forwarded request
  // is charged at both ends. Client threads share the CN's cores.
  SimTime client_cpu = 4.0;
  int cn_cores = 4;
  int retry_budget = 1000;
  // Seeds backoff jitter.
  std::uint64_t seed = 1;
  std::uint32_t flush_threshold = 32;
  std::uint64_t block_bytes = kDefaultBlockBytes;
  std::uint64_t mn_capacity = 1ull << 36;

  // Fault-injection hook for checker tests: skip invalidation before commit.
  bool invalidation = true;

  void validate() const;
  // Consumes recognised `key=value` entries (fabric, geometry and protocol).
  void apply(std::map<std::string, std::string>& kv);

  // CNs, MNs, and the manager process.
  int node_count() const { return cns + mns + 1; }
  int mn_node(int m) const { return cns + m; }
};

// Result of one client operation as seen by the caller.
struct OpOutcome {
  OpResult result = OpResult::Unknown;
  std::string value;
  // Which read path served a SEARCH.
  enum class Path : std::uint8_t { None, KvHit, AddrHit, Index } path = Path::None;
  bool capacity_error = false;
  bool gave_up = false;
};

struct PartitionBuffer {
  std::vector<std::uint64_t> slots;
  std::vector<MetadataEntry> meta;
};

struct ReassignRecord {
  SimTime pause_start = 0;
  SimTime resume_end = 0;
  std::size_t moved = 0;
  bool aborted = false;
};

struct ClusterStats {
  std::uint64_t rpc_read = 0, rpc_write = 0, rpc_flush = 0, rpc_invalidate = 0, rpc_forward = 0;
  std::uint64_t paused_replies = 0, busy_replies = 0, redirect_replies = 0, conflicts = 0;
  std::uint64_t grants = 0, grants_suppressed = 0;
  std::uint64_t kv_hits = 0, addr_hits = 0, searches = 0;
  std::uint64_t slot_reuses = 0, early_slot_reuses = 0;
  std::uint64_t wrong_key_addr_reads = 0;
  std::uint64_t single_owner_violations = 0;
  std::uint64_t recovered_kvs = 0;
  std::uint64_t hotness_triggers = 0, knob_rounds = 0, knob_samples = 0;
};

class Cluster {
 public:
  Cluster(ClusterConfig cfg, Timeline& tl);
  ~Cluster();
  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  const ClusterConfig& config() const { return cfg_; }
  Timeline& timeline() { return tl_; }
  Fabric& fabric() { return fabric_; }
  const ClusterStats& stats() const { return stats_; }

  // Installs a key directly on the memory nodes, outside simulated time.
  void preload(const std::string& key, const std::string& value);

  int add_client(int cn);
  int client_cn(int client) const { return clients_.at(client).cn; }
  std::size_t client_count() const { return clients_.size(); }

  // Runs one request for `client`. Throws NodeCrashed if its CN dies.
  Task<OpOutcome> execute(int client, OpKind kind, std::string key, std::string value);

  // Installs the initial routing map and starts the background loops.
  void start();
  void stop() { stopping_ = true; }

  // Membership actions injected by the harness.
  void crash_cn(int cn);
  void restart_cn(int cn);
  bool cn_alive(int cn) const { return cns_.at(cn).alive; }

  // Reassignment entry point used by the manager and by tests.
  Task<bool> reassign(Assignment a, int ratio_steps);
  bool reassign_in_flight() const { return reassigning_; }
  const std::vector<ReassignRecord>& reassignments() const { return reassign_log_; }

  // Introspection.
  double offload_ratio() const { return static_cast<double>(applied_steps_) / cfg_.knob_steps; }
  const Assignment& assignment() const { return assignment_; }
  const std::vector<int>& route(int cn) const { return cns_.at(cn).active; }
  bool serving(int cn, std::uint32_t p) const;
  const PartitionBuffer* loaded_partition(int cn, std::uint32_t p) const;
  const LocalCache& cache(int cn) const { return cns_.at(cn).cache; }
  const MemoryNode& memory(int m) const { return mns_.at(m); }
  std::uint64_t served(int cn) const { return cns_.at(cn).served; }
  std::vector<double> served_loads() const;
  std::uint64_t completed_ops() const { return completed_ops_; }
  std::uint64_t completed_reads() const { return completed_reads_; }
  std::uint64_t completed_writes() const { return completed_writes_; }

  // Invariant checks over global state. Each returns an empty string when the
  // invariant holds, otherwise a description of the first breach.
  std::string check_single_ownership() const;
  // Every Value entry is covered by its owner's sharer bit. With
  // `exact`, sharer bits must also be backed by a cached copy (only holds
  // when no cache eviction has dropped an entry silently).
  std::string check_directory(bool exact = false) const;
  // Every loaded partition matches its primary MN copy byte for byte.
  std::string check_index_mirrors() const;

  std::uint32_t partition_of(const std::string& key) const {
    return hash_and_partition(key, cfg_.geo).partition;
  }
  std::vector<int> index_replicas(std::uint32_t p) const;

 private:
  struct Client {
    int id;
    int cn;
    int home_mn;
    std::unique_ptr<BlockAllocator> alloc;
  };

  struct RpcCall;

  struct ComputeNode {
    int id = 0;
    bool alive = true;
    std::uint64_t incarnation = 0;
    LocalCache cache;
    std::vector<int> active, staging;
    std::vector<std::uint8_t> paused;
    std::vector<std::uint32_t> inflight;
    std::vector<std::uint32_t> access;
    std::unordered_map<std::string, std::uint32_t> pending_incs;
    std::unordered_map<std::string, std::uint64_t> key_epoch;
    std::uint64_t generation = 0;
    std::unordered_map<std::uint32_t, PartitionBuffer> loaded;
    std::unordered_set<std::string> locked_keys;
    std::unordered_set<std::uint64_t> locked_slots;
    FifoServer proxy_cpu{2};
    FifoServer worker_cpu{1};
    std::unordered_map<std::uint64_t, std::weak_ptr<RpcCall>> incoming;
    std::uint64_t served = 0;
  };

  // Verb helpers. `exec` is the node whose code awaits the verb.
  VerbEvent make(int src, int dst, VerbKind k, std::uint32_t size) const;
  Task<std::vector<Candidate>> read_buckets(int exec, const KeyPlacement& where);
  Task<std::optional<KvPair>> read_kv(int exec, std::uint64_t addr, std::uint8_t len);
  // Writes to every KV replica; the returned rendezvous fires when all land.
  std::shared_ptr<OneShot<bool>> start_kv_write(int exec, std::uint64_t addr, KvPair pair);
  Task<void> clear_valid(int exec, std::uint64_t addr);
  // Runs the tasks concurrently on `exec` and resumes once all have finished.
  Task<void> join_all(int exec, std::vector<Task<void>> tasks);
  Task<void> write_slot_all(int exec, std::uint32_t p, std::uint64_t slot_addr, Slot s);
  Task<Slot> read_slot(int exec, std::uint32_t p, std::uint64_t slot_addr);
  Task<CasResult> cas_index(int exec, std::uint32_t p, std::uint64_t slot_addr, Slot expected,
                            Slot desired, const std::string& key);
  void note_slot_commit(std::uint64_t slot_addr, Slot before, Slot after, const std::string& key);
  Task<void> nap(int exec, SimTime dt);
  Task<void> cpu(int cn, SimTime cost);
  Task<void> work(int cn, SimTime cost);
  SimTime backoff(int attempt);
  std::vector<int> kv_replicas(int home_mn) const;
  int manager_node() const { return cfg_.cns + cfg_.mns; }

  // Two-sided messaging. Returns nullopt on delivery failure or when the
  // callee dies before replying.
  Task<std::optional<RpcReply>> call(int exec, int to, RpcRequest req);
  Task<void> serve(int cn, int from, RpcRequest req, std::shared_ptr<RpcCall> st);
  Task<RpcReply> handle(int cn, int from, RpcRequest& req);
  Task<RpcReply> handle_read(int cn, int from, ReadRpc& m);
  Task<RpcReply> handle_write(int cn, int from, WriteRpc& m);
  Task<RpcReply> handle_flush(int cn, FlushRpc& m);
  Task<RpcReply> handle_invalidate(int cn, InvalidateRpc& m);
  Task<RpcReply> handle_pause(int cn, PauseRpc& m);
  Task<RpcReply> handle_resume(int cn, ResumeRpc& m);
  Task<RpcReply> handle_forward(int cn, ForwardRpc& m);
  Task<void> invalidate_sharers(int cn, std::uint32_t sharers, std::string key);
  PartitionBuffer* buffer(int cn, std::uint32_t p);

  // Client workflows.
  struct Resolved {
    bool found = false;
    std::uint64_t slot_addr = 0;
    Slot slot;
    std::optional<std::uint64_t> free_slot;  // INSERT target
    Slot free_value;
    std::vector<std::uint64_t> seen;
  };
  Task<OpOutcome> run_op(int client, OpKind kind, std::string key, std::string value);
  Task<OpOutcome> search(int client, std::string key);
  Task<OpOutcome> write(int client, OpKind kind, std::string key, std::string value);
  Task<Resolved> resolve_slot(int exec, std::string key, KeyPlacement where, bool want_free);
  Task<void> flush_increments(int cn, std::string key);
  Task<void> flush_loop(int cn);
  std::uint32_t take_increments(int cn, const std::string& key);
  Task<void> wait_unpaused(int cn, std::uint32_t p);
  bool uses_proxies() const {
    return cfg_.mode == Mode::FlexKV || cfg_.mode == Mode::Ownership;
  }
  bool caches_addresses() const { return cfg_.mode != Mode::MnOnly; }
  bool caches_values() const { return uses_proxies() && cfg_.kv_cache; }

  // Manager.
  Task<void> manager_loop();
  Task<void> collect_and_detect();
  Task<double> sample_throughput();
  Task<void> knob_round();
  Task<void> apply_ratio(int steps);
  std::vector<int> compute_route(const Assignment& a, int ratio_steps) const;
  std::uint64_t partition_footprint() const;
  void refresh_capacity(ComputeNode& n);
  Task<void> fence_and_remap(int cn, std::uint64_t inc);
  void recover_invalidated(int cn);
  void note_serving_change(std::uint32_t p);

  ClusterConfig cfg_;
  Timeline& tl_;
  Fabric fabric_;
  std::vector<MemoryNode> mns_;
  std::vector<ComputeNode> cns_;
  std::vector<Client> clients_;
  std::uint64_t next_block_ = 0;
  std::optional<int> preload_alloc_;
  std::vector<int> forwarders_;
  std::uint64_t next_call_ = 0;
  Rng jitter_{1};
  // Manager's view of the installed routing map.
  std::vector<int> route_;
  int applied_steps_ = 0;
  bool restart_pending_ = false;

  Assignment assignment_;
  std::vector<int> ranks_old_;
  KnobState knob_;
  double write_frac_last_ = -1;
  bool shift_pending_ = true;
  bool reassigning_ = false;
  std::uint64_t reassign_round_ = 0;
  std::uint64_t membership_ = 0;
  std::vector<ReassignRecord> reassign_log_;
  bool stopping_ = false;
  bool started_ = false;

  std::uint64_t completed_ops_ = 0, completed_reads_ = 0, completed_writes_ = 0;
  ClusterStats stats_;
};

}  // namespace flexkv
