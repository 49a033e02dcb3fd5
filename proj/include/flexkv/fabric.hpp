#pragma once

#include <coroutine>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "flexkv/timeline.hpp"

namespace flexkv {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class VerbKind : std::uint8_t {
  RemoteRead,
  RemoteWrite,
  RemoteCas,
  RemoteFaa,
  SendRecv,
  LocalCas,
  LocalRead,
};

const char* to_string(VerbKind kind);

constexpr bool is_local(VerbKind kind) {
  return kind == VerbKind::LocalCas || kind == VerbKind::LocalRead;
}

// Service costs are per operation at the serving NIC (or the issuing CPU for
// local kinds). Defaults put RemoteCas(8B) at 1.0 and derive the rest from the
// measured throughput ratios.
struct FabricConfig {
  double remote_cas = 1.0;
  double remote_faa = 1.0;
  double remote_write = 1.0 / 10.1;
  double remote_read = 1.0 / 10.1;
  double send_recv = 1.0 / 19.5;
  double local_cas = 1.0 / 177.1;
  // Chosen so that LocalRead(128B) is 38.2x cheaper than RemoteRead(128B).
  double local_read = (1.0 / 10.1 + 64 * 0.0005) / 38.2;
  double per_byte = 0.0005;
  SimTime wire_latency = 0.2;
  int nics_per_node = 1;
  // A verb to a crashed node fails after this long.
  SimTime timeout = 50.0;

  // Throws ConfigError on a non-positive cost.
  void validate() const;

  // Consumes recognised keys from `kv`, leaving unknown keys in place.
  void apply(std::map<std::string, std::string>& kv);
};

// Payload bytes above this threshold are charged per_byte each.
inline constexpr std::uint32_t kFreePayloadBytes = 64;

SimTime service_time(VerbKind kind, std::uint32_t size, const FabricConfig& cfg);

// Reads a line-oriented `key=value` file. Blank lines and `#` comments are
// skipped; a malformed line raises ConfigError naming the line.
std::map<std::string, std::string> load_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

// Parses a double/int value out of a kv map entry with a ConfigError on junk.
double parse_number(const std::string& key, const std::string& value);

enum class VerbOutcome : std::uint8_t { Ok, Failed };

struct VerbEvent {
  SimTime issue_time = 0;
  int src = 0;
  int dst = 0;
  VerbKind kind = VerbKind::RemoteRead;
  std::uint32_t payload_size = 8;
  std::uint64_t id = 0;
  // Free-form labels used by trace inspection in tests.
  std::uint32_t purpose = 0;
  std::uint64_t op = 0;
};

struct VerbRecord {
  VerbEvent event;
  SimTime completion_time = 0;
  VerbOutcome outcome = VerbOutcome::Ok;
};

// Deterministic fabric between compute and memory nodes. Every node owns one
// FIFO NIC (with nics_per_node servers) and one CPU station for local kinds.
class Fabric {
 public:
  Fabric(Timeline& tl, int nodes, FabricConfig cfg = {});

  Timeline& timeline() { return tl_; }
  const FabricConfig& config() const { return cfg_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }

  bool alive(int node) const { return nodes_.at(node).alive; }
  std::uint64_t incarnation(int node) const { return nodes_.at(node).incarnation; }
  void crash(int node);
  void restart(int node);

  // Enqueues a verb issued now. The callback fires at the completion instant.
  std::uint64_t submit(VerbEvent ev, std::function<void(VerbOutcome)> done = {});

  struct Advance {
    SimTime time;
    std::vector<VerbRecord> completed;
  };
  // Moves the clock to the next completion instant and fires everything due
  // then. std::nullopt means quiescence.
  std::optional<Advance> advance();

  // Awaitable single verb. `exec` is the node running the awaiting code; if it
  // crashes while suspended the awaiter throws NodeCrashed on resume. `effect`
  // runs at the completion instant on success, whether or not the issuer is
  // still alive: a verb already on the wire still lands.
  auto verb(VerbEvent ev, int exec = -1, std::function<void()> effect = {}) {
    struct Awaiter {
      Fabric* f;
      VerbEvent ev;
      int exec;
      std::function<void()> effect;
      std::uint64_t inc = 0;
      VerbOutcome out = VerbOutcome::Ok;
      bool await_ready() const noexcept { return false; }
      void await_suspend(std::coroutine_handle<> h) {
        inc = f->incarnation(exec);
        f->submit(ev, [this, h](VerbOutcome o) {
          out = o;
          if (o == VerbOutcome::Ok && effect) effect();
          h.resume();
        });
      }
      VerbOutcome await_resume() const {
        f->check_alive(exec, inc);
        return out;
      }
    };
    if (exec < 0) exec = ev.src;
    return Awaiter{this, ev, exec, std::move(effect), 0, VerbOutcome::Ok};
  }

  // Awaitable batch of verbs issued together; resumes after the last one.
  // `effects`, if given, pairs one completion effect with each verb.
  auto all(std::vector<VerbEvent> evs, int exec, std::vector<std::function<void()>> effects = {}) {
    struct Awaiter {
      Fabric* f;
      std::vector<VerbEvent> evs;
      int exec;
      std::vector<std::function<void()>> effects;
      std::uint64_t inc = 0;
      std::size_t pending = 0;
      std::vector<VerbOutcome> outs;
      bool await_ready() const noexcept { return evs.empty(); }
      void await_suspend(std::coroutine_handle<> h) {
        inc = f->incarnation(exec);
        outs.assign(evs.size(), VerbOutcome::Ok);
        pending = evs.size();
        for (std::size_t i = 0; i < evs.size(); ++i) {
          f->submit(evs[i], [this, h, i](VerbOutcome o) {
            outs[i] = o;
            if (o == VerbOutcome::Ok && i < effects.size() && effects[i]) effects[i]();
            if (--pending == 0) h.resume();
          });
        }
      }
      std::vector<VerbOutcome> await_resume() {
        f->check_alive(exec, inc);
        return std::move(outs);
      }
    };
    return Awaiter{this, std::move(evs), exec, std::move(effects), 0, 0, {}};
  }

  // Throws NodeCrashed if `node` is down or restarted since `inc`.
  void check_alive(int node, std::uint64_t inc) const {
    const auto& n = nodes_.at(node);
    if (!n.alive || n.incarnation != inc) throw NodeCrashed(node);
  }

  // Optional trace of completed verbs.
  void set_logging(bool on) { logging_ = on; }
  const std::vector<VerbRecord>& log() const { return log_; }
  void clear_log() { log_.clear(); }

  // Per-kind counters of completed verbs, cheap enough to keep always on.
  std::uint64_t count(VerbKind kind) const { return counts_[static_cast<int>(kind)]; }
  SimTime nic_busy(int node) const { return nodes_.at(node).nic.busy_time(); }
  // Verbs issued by `node` that have not completed or failed yet.
  std::uint64_t inflight_from(int node) const { return nodes_.at(node).inflight; }

 private:
  struct Node {
    FifoServer nic;
    FifoServer cpu;
    bool alive = true;
    std::uint64_t incarnation = 0;
    std::uint64_t inflight = 0;
  };
  void finish(const VerbEvent& ev, VerbOutcome out);

  Timeline& tl_;
  FabricConfig cfg_;
  std::vector<Node> nodes_;
  bool logging_ = false;
  std::vector<VerbRecord> log_;
  std::uint64_t counts_[7] = {};
  std::vector<VerbRecord> recent_;
  bool capturing_ = false;
};

}  // namespace flexkv
