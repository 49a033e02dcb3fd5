#include "flexkv/fabric.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace flexkv {

const char* to_string(VerbKind kind) {
  switch (kind) {
    case VerbKind::RemoteRead: return "RemoteRead";
    case VerbKind::RemoteWrite: return "RemoteWrite";
    case VerbKind::RemoteCas: return "RemoteCas";
    case VerbKind::RemoteFaa: return "RemoteFaa";
    case VerbKind::SendRecv: return "SendRecv";
    case VerbKind::LocalCas: return "LocalCas";
    case VerbKind::LocalRead: return "LocalRead";
  }
  return "?";
}

void FabricConfig::validate() const {
  const double costs[] = {remote_cas, remote_faa, remote_write, remote_read,
                          send_recv,  local_cas,  local_read,   per_byte,
                          wire_latency, timeout};
  for (double c : costs)
    if (!(c > 0)) throw ConfigError("fabric costs must be strictly positive");
  if (nics_per_node < 1) throw ConfigError("nics_per_node must be >= 1");
}

double parse_number(const std::string& key, const std::string& value) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ConfigError("bad numeric value for '" + key + "': '" + value + "'");
  return out;
}

void FabricConfig::apply(std::map<std::string, std::string>& kv) {
  auto take = [&](const char* key, double& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    field = parse_number(key, it->second);
    kv.erase(it);
  };
  take("cost.remote_cas", remote_cas);
  take("cost.remote_faa", remote_faa);
  take("cost.remote_write", remote_write);
  take("cost.remote_read", remote_read);
  take("cost.send_recv", send_recv);
  take("cost.local_cas", local_cas);
  take("cost.local_read", local_read);
  take("cost.per_byte", per_byte);
  take("latency.wire", wire_latency);
  take("latency.timeout", timeout);
  double nics = nics_per_node;
  take("nics_per_node", nics);
  nics_per_node = static_cast<int>(nics);
  validate();
}

SimTime service_time(VerbKind kind, std::uint32_t size, const FabricConfig& cfg) {
  double base = 0;
  switch (kind) {
    case VerbKind::RemoteRead: base = cfg.remote_read; break;
    case VerbKind::RemoteWrite: base = cfg.remote_write; break;
    case VerbKind::RemoteCas: base = cfg.remote_cas; break;
    case VerbKind::RemoteFaa: base = cfg.remote_faa; break;
    case VerbKind::SendRecv: base = cfg.send_recv; break;
    case VerbKind::LocalCas: return cfg.local_cas;
    case VerbKind::LocalRead: return cfg.local_read;
    default: throw ConfigError("unknown verb kind");
  }
  if (size > kFreePayloadBytes) base += cfg.per_byte * (size - kFreePayloadBytes);
  return base;
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> load_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_kv_text(ss.str());
}

Fabric::Fabric(Timeline& tl, int nodes, FabricConfig cfg) : tl_(tl), cfg_(cfg) {
  cfg_.validate();
  nodes_.reserve(nodes);
  for (int i = 0; i < nodes; ++i) nodes_.push_back(Node{FifoServer(cfg_.nics_per_node), FifoServer(1)});
}

void Fabric::crash(int node) {
  auto& n = nodes_.at(node);
  n.alive = false;
  ++n.incarnation;
}

void Fabric::restart(int node) {
  auto& n = nodes_.at(node);
  n.alive = true;
  ++n.incarnation;
  n.nic.reset();
  n.cpu.reset();
}

void Fabric::finish(const VerbEvent& ev, VerbOutcome out) {
  VerbRecord rec{ev, tl_.now(), out};
  if (out == VerbOutcome::Ok) ++counts_[static_cast<int>(ev.kind)];
  --nodes_.at(ev.src).inflight;
  if (logging_) log_.push_back(rec);
  if (capturing_) recent_.push_back(rec);
}

std::uint64_t Fabric::submit(VerbEvent ev, std::function<void(VerbOutcome)> done) {
  ev.issue_time = tl_.now();
  ev.id = tl_.reserve_id();
  if (is_local(ev.kind)) ev.dst = ev.src;
  SimTime svc = service_time(ev.kind, ev.payload_size, cfg_);
  ++nodes_.at(ev.src).inflight;

  auto fire = [this, ev, done = std::move(done)](VerbOutcome out) {
    finish(ev, out);
    if (done) done(out);
  };

  if (is_local(ev.kind)) {
    SimTime start = nodes_.at(ev.src).cpu.reserve(ev.issue_time, svc);
    tl_.schedule_with_id(start + svc, ev.id, [fire] { fire(VerbOutcome::Ok); });
    return ev.id;
  }

  auto& dst = nodes_.at(ev.dst);
  SimTime fail_at = ev.issue_time + cfg_.timeout;
  if (!dst.alive) {
    tl_.schedule_with_id(fail_at, ev.id, [fire] { fire(VerbOutcome::Failed); });
    return ev.id;
  }
  SimTime arrival = ev.issue_time + cfg_.wire_latency;
  SimTime start = dst.nic.reserve(arrival, svc);
  SimTime done_at = start + svc;
  if (ev.kind != VerbKind::SendRecv) done_at += cfg_.wire_latency;
  std::uint64_t inc = dst.incarnation;
  tl_.schedule_with_id(done_at, ev.id, [this, fire, ev, inc, fail_at] {
    const auto& d = nodes_.at(ev.dst);
    if (d.alive && d.incarnation == inc) {
      fire(VerbOutcome::Ok);
    } else if (tl_.now() >= fail_at) {
      fire(VerbOutcome::Failed);
    } else {
      tl_.schedule_with_id(fail_at, ev.id, [fire] { fire(VerbOutcome::Failed); });
    }
  });
  return ev.id;
}

std::optional<Fabric::Advance> Fabric::advance() {
  if (tl_.empty()) return std::nullopt;
  recent_.clear();
  capturing_ = true;
  tl_.step();
  capturing_ = false;
  Advance out{tl_.now(), std::move(recent_)};
  recent_.clear();
  return out;
}

}  // namespace flexkv
