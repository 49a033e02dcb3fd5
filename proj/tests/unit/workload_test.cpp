#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "flexkv/harness.hpp"
#include "flexkv/metrics.hpp"
#include "flexkv/workload.hpp"

namespace flexkv {
namespace {

double harmonic(std::uint64_t n, double alpha) {
  double h = 0;
  for (std::uint64_t j = 1; j <= n; ++j) h += std::pow(double(j), -alpha);
  return h;
}

TEST(ZipfTest, RankOneMassMatchesNormalization) {
  Zipf z(10, 0.99);
  EXPECT_NEAR(z.probability(1), 1.0 / harmonic(10, 0.99), 1e-12);
  EXPECT_NEAR(z.probability(7), std::pow(7.0, -0.99) / harmonic(10, 0.99), 1e-12);
}

TEST(ZipfTest, NormalizesToOne) {
  for (double alpha : {0.0, 0.5, 0.99, 2.68}) {
    Zipf z(10000, alpha);
    double sum = 0;
    for (std::uint64_t k = 1; k <= z.n(); ++k) sum += z.probability(k);
    EXPECT_NEAR(sum, 1.0, 1e-12) << alpha;
  }
}

TEST(ZipfTest, HeavySkewConcentratesOnRankOne) {
  Zipf z(10000, 2.68);
  // 1 / zeta(2.68) truncated at 10^4 ranks.
  EXPECT_NEAR(z.probability(1), 0.7811, 1e-4);
  EXPECT_NEAR(z.probability(1), 1.0 / harmonic(10000, 2.68), 1e-12);
}

TEST(ZipfTest, UniformWithinThreeSigma) {
  const std::uint64_t n = 20, draws = 1000000;
  Zipf z(n, 0.0);
  Rng rng(1);
  std::vector<std::uint64_t> hits(n + 1, 0);
  for (std::uint64_t i = 0; i < draws; ++i) ++hits[z.next(rng)];
  EXPECT_EQ(hits[0], 0u);
  const double p = 1.0 / n, mean = draws * p, sigma = std::sqrt(draws * p * (1 - p));
  for (std::uint64_t k = 1; k <= n; ++k) EXPECT_NEAR(double(hits[k]), mean, 3 * sigma) << k;
}

TEST(ZipfTest, EmpiricalRankOneFrequency) {
  Zipf z(1000, 0.99);
  Rng rng(2);
  const int draws = 200000;
  int ones = 0;
  for (int i = 0; i < draws; ++i) ones += z.next(rng) == 1;
  const double p = z.probability(1);
  EXPECT_NEAR(ones, draws * p, 4 * std::sqrt(draws * p * (1 - p)));
}

TEST(ZipfTest, SeededDeterminism) {
  Zipf z(1000, 0.99);
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(z.next(a), z.next(b));
}

TEST(MixTest, Presets) {
  auto a = preset_mix("A");
  EXPECT_DOUBLE_EQ(a.update, 0.5);
  EXPECT_DOUBLE_EQ(a.search, 0.5);
  auto b = preset_mix("B");
  EXPECT_DOUBLE_EQ(b.update, 0.05);
  EXPECT_DOUBLE_EQ(b.search, 0.95);
  auto d = preset_mix("D");
  EXPECT_DOUBLE_EQ(d.insert, 0.05);
  EXPECT_DOUBLE_EQ(d.search, 0.95);
  EXPECT_THROW(preset_mix("E"), std::invalid_argument);
}

TEST(MixTest, PresetCIsAllSearch) {
  Rng rng(3);
  auto c = preset_mix("C");
  for (int i = 0; i < 10000; ++i) ASSERT_EQ(next_op(rng, c), OpKind::Search);
}

TEST(MixTest, PresetAUpdateFraction) {
  Rng rng(4);
  auto a = preset_mix("A");
  const int n = 1000000;
  int upd = 0;
  for (int i = 0; i < n; ++i) upd += next_op(rng, a) == OpKind::Update;
  EXPECT_NEAR(upd, n * 0.5, 3 * std::sqrt(n * 0.25));
}

TEST(MixTest, ValidateRejectsBadSpecs) {
  WorkloadSpec s;
  s.mix = OpMix{0.5, 0.5, 0.5, 0};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.mix = preset_mix("A");
  s.alpha = -1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(TraceTest, MapsOpsWithUpsert) {
  std::unordered_set<std::string> live;
  auto r = parse_trace("# header\nGET,user42,0\nSET,user42,128\nSET,user42,64\nDEL,user42,0\n"
                       "SET,user42,8\n",
                       live);
  ASSERT_EQ(r.size(), 5u);
  EXPECT_EQ(r[0].kind, OpKind::Search);
  EXPECT_EQ(r[0].key, "user42");
  EXPECT_EQ(r[1].kind, OpKind::Insert);
  EXPECT_EQ(r[1].value_size, 128u);
  EXPECT_EQ(r[2].kind, OpKind::Update);
  EXPECT_EQ(r[3].kind, OpKind::Delete);
  EXPECT_EQ(r[4].kind, OpKind::Insert);
}

TEST(TraceTest, PreloadedKeySetIsUpdate) {
  std::unordered_set<std::string> live{"k"};
  EXPECT_EQ(parse_trace("SET,k,10", live).at(0).kind, OpKind::Update);
}

TEST(TraceTest, MalformedLineIsNamed) {
  std::ostringstream text;
  for (int i = 1; i <= 16; ++i) text << "GET,k" << i << ",0\n";
  text << "PUT,k17\n";
  std::unordered_set<std::string> live;
  try {
    parse_trace(text.str(), live);
    FAIL();
  } catch (const TraceError& e) {
    EXPECT_EQ(e.line, 17u);
    EXPECT_NE(std::string(e.what()).find("line 17"), std::string::npos);
  }
  EXPECT_THROW(parse_trace("GET,k,abc", live), TraceError);
  EXPECT_THROW(parse_trace("FOO,k,1", live), TraceError);
}

TEST(TraceTest, IngestReadsFile) {
  const std::string path = ::testing::TempDir() + "trace.csv";
  {
    std::ofstream out(path);
    out << "SET,a,16\nGET,a,0\n";
  }
  std::unordered_set<std::string> live;
  EXPECT_EQ(ingest_trace(path, live).size(), 2u);
  EXPECT_TRUE(live.count("a"));
}

TEST(MetricsTest, CoefficientOfVariation) {
  EXPECT_DOUBLE_EQ(compute_cv({100, 100}), 0.0);
  EXPECT_DOUBLE_EQ(compute_cv({150, 50}), 0.5);
  EXPECT_DOUBLE_EQ(compute_cv({0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(compute_cv({7}), 0.0);
}

TEST(MetricsTest, Percentiles) {
  EXPECT_DOUBLE_EQ(percentile({}, 50), 0.0);
  EXPECT_DOUBLE_EQ(percentile({5, 1, 3, 2, 4}, 50), 3.0);
  EXPECT_DOUBLE_EQ(percentile({5, 1, 3, 2, 4}, 100), 5.0);
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  EXPECT_DOUBLE_EQ(percentile(v, 99), 99.0);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(MetricsTest, CsvRowsAndHeader) {
  const std::string p = ::testing::TempDir() + "series.csv";
  std::vector<MetricsSample> three(3);
  three[1].throughput = 1e6;
  emit_csv(three, p);
  std::string text = slurp(p);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_EQ(text.substr(0, text.find('\n')), kCsvHeader);
  emit_csv(three, p);
  EXPECT_EQ(slurp(p), text);
  emit_csv({}, p);
  EXPECT_EQ(slurp(p), std::string(kCsvHeader) + "\n");
  EXPECT_THROW(emit_csv(three, "/nonexistent-dir/x.csv"), std::runtime_error);
}

TEST(FaultsTest, ParsesAndSorts) {
  auto f = parse_faults("# schedule\n20,restart,CN2\n\n5.5,crash,CN2\n");
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0], (FaultEvent{5500, true, 2}));
  EXPECT_EQ(f[1], (FaultEvent{20000, false, 2}));
}

TEST(FaultsTest, RejectsMalformedLinesByNumber) {
  for (const char* bad : {"1,crash,CN", "1,explode,CN1", "x,crash,CN1", "1,crash", "-1,crash,CN0"}) {
    try {
      parse_faults(std::string("\n") + bad);
      ADD_FAILURE() << bad;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
  }
}

}  // namespace
}  // namespace flexkv
