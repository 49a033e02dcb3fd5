#include "flexkv/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace flexkv {

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::Insert: return "INSERT";
    case OpKind::Update: return "UPDATE";
    case OpKind::Search: return "SEARCH";
    case OpKind::Delete: return "DELETE";
  }
  return "?";
}

void WorkloadSpec::validate() const {
  const double parts[] = {mix.insert, mix.update, mix.search, mix.del};
  double sum = 0;
  for (double p : parts) {
    if (p < 0) throw std::invalid_argument("negative mix fraction");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("mix fractions must sum to 1");
  if (!(alpha >= 0)) throw std::invalid_argument("alpha must be >= 0");
  if (keys == 0) throw std::invalid_argument("key space must be nonempty");
}

OpMix preset_mix(const std::string& name) {
  if (name == "A") return {0, 0.5, 0.5, 0};
  if (name == "B") return {0, 0.05, 0.95, 0};
  if (name == "C") return {0, 0, 1.0, 0};
  if (name == "D") return {0.05, 0, 0.95, 0};
  throw std::invalid_argument("unknown workload preset: " + name);
}

Zipf::Zipf(std::uint64_t n, double alpha) : alpha_(alpha) {
  if (n == 0) throw std::invalid_argument("Zipf over an empty key space");
  cdf_.resize(n);
  // Kahan summation keeps the normalisation error well under 1e-12 at 10^7.
  double sum = 0, comp = 0;
  for (std::uint64_t k = 1; k <= n; ++k) {
    double y = std::pow(static_cast<double>(k), -alpha) - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
    cdf_[k - 1] = sum;
  }
  norm_ = sum;
  for (auto& c : cdf_) c /= norm_;
  cdf_.back() = 1.0;
}

double Zipf::probability(std::uint64_t rank) const {
  if (rank == 0 || rank > cdf_.size()) return 0;
  return std::pow(static_cast<double>(rank), -alpha_) / norm_;
}

std::uint64_t Zipf::next(Rng& rng) const {
  double u = rng.uniform();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return static_cast<std::uint64_t>(it - cdf_.begin()) + 1;
}

OpKind next_op(Rng& rng, const OpMix& mix) {
  double u = rng.uniform();
  if (u < mix.insert) return OpKind::Insert;
  u -= mix.insert;
  if (u < mix.update) return OpKind::Update;
  u -= mix.update;
  if (u < mix.search) return OpKind::Search;
  return mix.del > 0 ? OpKind::Delete : OpKind::Search;
}

std::string key_name(std::uint64_t id) { return "k" + std::to_string(id); }

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<Request> parse_trace(const std::string& text, std::unordered_set<std::string>& live) {
  std::vector<Request> out;
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(t);
    std::string part;
    while (std::getline(ss, part, ',')) f.push_back(trim(part));
    auto fail = [&](const std::string& why) {
      throw TraceError("line " + std::to_string(no) + ": " + why, no);
    };
    if (f.size() != 3) fail("expected op,key,value_size");
    if (f[1].empty()) fail("empty key");
    std::uint32_t size = 0;
    try {
      std::size_t used = 0;
      unsigned long v = std::stoul(f[2], &used);
      if (used != f[2].size() || v > 0xffffffffUL) fail("bad value_size");
      size = static_cast<std::uint32_t>(v);
    } catch (const std::logic_error&) {
      fail("bad value_size");
    }
    Request r;
    r.key = f[1];
    r.value_size = size;
    if (f[0] == "GET") {
      r.kind = OpKind::Search;
    } else if (f[0] == "SET") {
      r.kind = live.insert(r.key).second ? OpKind::Insert : OpKind::Update;
    } else if (f[0] == "DEL") {
      r.kind = OpKind::Delete;
      live.erase(r.key);
    } else {
      fail("unknown op '" + f[0] + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Request> ingest_trace(const std::string& path, std::unordered_set<std::string>& live) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_trace(buf.str(), live);
}

}  // namespace flexkv
