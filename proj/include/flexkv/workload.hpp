#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace flexkv {

enum class OpKind : std::uint8_t { Insert, Update, Search, Delete };

const char* to_string(OpKind k);

struct TraceError : std::runtime_error {
  TraceError(const std::string& msg, std::size_t line)
      : std::runtime_error(msg), line(line) {}
  std::size_t line;
};

// Mix fractions over the four operation kinds, in OpKind order.
struct OpMix {
  double insert = 0, update = 0, search = 1, del = 0;
};

struct WorkloadSpec {
  OpMix mix;
  std::uint64_t keys = 10000;  // N, also the preload count
  double alpha = 0.99;         // 0 is uniform
  std::uint32_t value_size = 128;

  // Throws std::invalid_argument on a bad mix or alpha.
  void validate() const;
};

// Presets "A".."D". Throws std::invalid_argument on anything else.
OpMix preset_mix(const std::string& name);

// Seeded generator. mt19937_64 output is fixed by the standard; doubles are
// built from its top 53 bits so streams are portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  std::uint64_t next() { return gen_(); }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }

 private:
  std::mt19937_64 gen_;
};

// Exact Zipfian over ranks 1..N via the cumulative distribution.
class Zipf {
 public:
  Zipf(std::uint64_t n, double alpha);

  std::uint64_t n() const { return cdf_.size(); }
  double alpha() const { return alpha_; }
  double probability(std::uint64_t rank) const;
  std::uint64_t next(Rng& rng) const;

 private:
  double alpha_;
  double norm_ = 0;
  std::vector<double> cdf_;
};

OpKind next_op(Rng& rng, const OpMix& mix);

std::string key_name(std::uint64_t id);

struct Request {
  OpKind kind = OpKind::Search;
  std::string key;
  std::uint32_t value_size = 0;
};

// Parses `op,key,value_size` lines. GET maps to SEARCH, DEL to DELETE, and
// SET to INSERT when the key is absent from `live` at that point of the
// stream, else UPDATE. `live` is updated in place.
std::vector<Request> parse_trace(const std::string& text, std::unordered_set<std::string>& live);
std::vector<Request> ingest_trace(const std::string& path, std::unordered_set<std::string>& live);

}  // namespace flexkv
