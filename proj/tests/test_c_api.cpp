#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "occlab/occlab.h"

namespace {

std::string temp(const char* name) { return testing::TempDir() + name; }

occlab_config* small_config(const std::string& out, const char* design, const char* traces) {
  occlab_config* c = nullptr;
  EXPECT_EQ(occlab_config_new(&c), OCCLAB_OK);
  const char* entries[][2] = {{"design", design},      {"llc.size_kb", "256"}, {"l1d.size_kb", "4"},
                              {"traces", traces},      {"occupancy", "100"},   {"plaintext", "random"},
                              {"seed", "11"},          {"jobs", "1"}};
  for (const auto& e : entries) EXPECT_EQ(occlab_config_set(c, e[0], e[1], nullptr), OCCLAB_OK) << e[0];
  EXPECT_EQ(occlab_config_set(c, "out", out.c_str(), nullptr), OCCLAB_OK);
  return c;
}

void progress_counter(uint64_t done, uint64_t total, void* user) {
  auto* last = static_cast<uint64_t*>(user);
  EXPECT_LE(done, total);
  *last = done;
}

}  // namespace

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STREQ(occlab_version(), "1.0.0");
  EXPECT_STREQ(occlab_status_name(OCCLAB_OK), "ok");
  EXPECT_STREQ(occlab_status_name(OCCLAB_E_MISMATCH), "incomparable inputs");
  EXPECT_STREQ(occlab_status_name(static_cast<occlab_status>(99)), "unknown status");
  EXPECT_NE(occlab_last_error(), nullptr);
}

TEST(CApi, NullArguments) {
  EXPECT_EQ(occlab_config_new(nullptr), OCCLAB_E_INVALID_ARGUMENT);
  EXPECT_GT(std::strlen(occlab_last_error()), 0u);
  EXPECT_EQ(occlab_config_set(nullptr, "seed", "1", nullptr), OCCLAB_E_INVALID_ARGUMENT);
  EXPECT_EQ(occlab_config_validate(nullptr), OCCLAB_E_INVALID_ARGUMENT);
  EXPECT_EQ(occlab_config_has_seed(nullptr), 0);
  EXPECT_EQ(occlab_collect(nullptr, nullptr, nullptr, nullptr), OCCLAB_E_INVALID_ARGUMENT);
  EXPECT_EQ(occlab_traces_read(nullptr, nullptr), OCCLAB_E_INVALID_ARGUMENT);
  EXPECT_EQ(occlab_traces_count(nullptr), 0u);
  EXPECT_EQ(occlab_assess(nullptr, nullptr, 4.5, nullptr), OCCLAB_E_INVALID_ARGUMENT);
  EXPECT_EQ(occlab_recover(nullptr, 0, nullptr), OCCLAB_E_INVALID_ARGUMENT);
  EXPECT_EQ(occlab_kde(nullptr, 0, 16, nullptr, nullptr, nullptr), OCCLAB_E_INVALID_ARGUMENT);
  EXPECT_EQ(occlab_parse_key(nullptr, nullptr), OCCLAB_E_INVALID_ARGUMENT);
  occlab_config_free(nullptr);
  occlab_traces_free(nullptr);
  occlab_ranking_free(nullptr);
}

TEST(CApi, ConfigErrors) {
  occlab_config* c = nullptr;
  ASSERT_EQ(occlab_config_new(&c), OCCLAB_OK);
  EXPECT_EQ(occlab_config_has_seed(c), 0);
  EXPECT_EQ(occlab_config_set(c, "colour", "blue", "--set"), OCCLAB_E_CONFIG);
  EXPECT_NE(std::string(occlab_last_error()).find("colour"), std::string::npos);
  EXPECT_EQ(occlab_config_set(c, "traces", "x", "--traces"), OCCLAB_E_CONFIG);
  EXPECT_NE(std::string(occlab_last_error()).find("--traces"), std::string::npos);
  EXPECT_EQ(occlab_config_set(c, "out", "x.csv", nullptr), OCCLAB_OK);
  EXPECT_EQ(occlab_config_validate(c), OCCLAB_E_CONFIG);  // no seed
  EXPECT_EQ(occlab_config_set(c, "seed", "3", nullptr), OCCLAB_OK);
  EXPECT_EQ(occlab_config_has_seed(c), 1);
  EXPECT_EQ(occlab_config_validate(c), OCCLAB_OK);
  EXPECT_EQ(occlab_config_load_file(c, "/nonexistent/run.cfg"), OCCLAB_E_CONFIG);
  occlab_config_free(c);
}

TEST(CApi, CollectReadRecover) {
  const std::string path = temp("occlab_capi_collect.csv");
  occlab_config* c = small_config(path, "setassoc", "150");
  occlab_collect_stats stats{};
  uint64_t last = 0;
  ASSERT_EQ(occlab_collect(c, progress_counter, &last, &stats), OCCLAB_OK) << occlab_last_error();
  EXPECT_EQ(last, 150u);
  EXPECT_EQ(stats.traces, 150u);
  EXPECT_EQ(stats.encryptions, 150u);
  EXPECT_EQ(stats.victim_reads, 150u * 160u);
  occlab_config_free(c);

  occlab_traces* t = nullptr;
  ASSERT_EQ(occlab_traces_read(path.c_str(), &t), OCCLAB_OK) << occlab_last_error();
  EXPECT_EQ(occlab_traces_count(t), 150u);
  occlab_trace_header h{};
  ASSERT_EQ(occlab_traces_header(t, &h), OCCLAB_OK);
  EXPECT_EQ(h.format_version, 1);
  EXPECT_STREQ(h.design, "setassoc");
  EXPECT_STREQ(h.geometry, "line=64;l1d=4096/8;llc=262144/16");
  EXPECT_EQ(h.occupancy_pct, 100.0);
  EXPECT_EQ(h.rng_seed, 11u);

  std::vector<double> timings(200, -1.0);
  ASSERT_EQ(occlab_traces_timings(t, timings.data(), timings.size()), OCCLAB_OK);
  for (std::size_t i = 0; i < 150; ++i) EXPECT_GT(timings[i], 0.0);
  EXPECT_EQ(timings[150], -1.0);

  occlab_assessment same{};
  ASSERT_EQ(occlab_assess(t, t, 4.5, &same), OCCLAB_OK);
  EXPECT_EQ(same.t_statistic, 0.0);
  EXPECT_EQ(same.leaks, 0);

  occlab_ranking* r = nullptr;
  EXPECT_EQ(occlab_recover(t, 151, &r), OCCLAB_E_INVALID_ARGUMENT);
  EXPECT_EQ(occlab_recover(t, 99, &r), OCCLAB_E_INVALID_ARGUMENT);
  ASSERT_EQ(occlab_recover(t, 0, &r), OCCLAB_OK) << occlab_last_error();
  uint8_t cand[256];
  double score[256];
  ASSERT_EQ(occlab_ranking_top(r, 3, 256, cand, score), OCCLAB_OK);
  for (int i = 1; i < 256; ++i) EXPECT_GE(score[i - 1], score[i]);
  std::vector<bool> seen(256);
  for (uint8_t x : cand) seen[x] = true;
  for (bool s : seen) EXPECT_TRUE(s);
  EXPECT_EQ(occlab_ranking_top(r, 16, 1, cand, score), OCCLAB_E_INVALID_ARGUMENT);

  uint8_t key[16];
  ASSERT_EQ(occlab_parse_key("000102030405060708090a0b0c0d0e0f", key), OCCLAB_OK);
  double ranks[16];
  double ge = -1;
  ASSERT_EQ(occlab_ranking_ge(r, key, ranks, &ge), OCCLAB_OK);
  double sum = 0;
  for (double x : ranks) {
    EXPECT_GE(x, 1.0);
    EXPECT_LE(x, 256.0);
    sum += std::log2(x);
  }
  EXPECT_NEAR(ge, sum, 1e-9);
  occlab_ranking_free(r);

  std::vector<double> grid(64), density(64);
  double bw = 0;
  ASSERT_EQ(occlab_kde(t, 0.0, 64, grid.data(), density.data(), &bw), OCCLAB_OK) << occlab_last_error();
  EXPECT_GT(bw, 0.0);
  for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_GT(grid[i], grid[i - 1]);
  for (double d : density) EXPECT_GE(d, 0.0);
  ASSERT_EQ(occlab_kde(t, 25.0, 64, grid.data(), density.data(), &bw), OCCLAB_OK);
  EXPECT_EQ(bw, 25.0);
  occlab_traces_free(t);
  std::remove(path.c_str());
}

TEST(CApi, CollectIsDeterministic) {
  std::string text[2];
  for (int i = 0; i < 2; ++i) {
    const std::string path = temp(i == 0 ? "occlab_capi_det0.csv" : "occlab_capi_det1.csv");
    occlab_config* c = small_config(path, "mirage", "20");
    ASSERT_EQ(occlab_collect(c, nullptr, nullptr, nullptr), OCCLAB_OK) << occlab_last_error();
    occlab_config_free(c);
    std::FILE* f = std::fopen(path.c_str(), "rb");
    ASSERT_NE(f, nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text[i].append(buf, n);
    std::fclose(f);
    std::remove(path.c_str());
  }
  EXPECT_FALSE(text[0].empty());
  EXPECT_EQ(text[0], text[1]);
}

TEST(CApi, CollectRejectsInvalidConfig) {
  occlab_config* c = small_config(temp("occlab_capi_never.csv"), "setassoc", "0");
  EXPECT_EQ(occlab_collect(c, nullptr, nullptr, nullptr), OCCLAB_E_CONFIG);
  occlab_config_free(c);
}

TEST(CApi, SyntheticPairAndMismatch) {
  const std::string a = temp("occlab_capi_syn_a.csv");
  const std::string b = temp("occlab_capi_syn_b.csv");
  ASSERT_EQ(occlab_synthetic_pair(a.c_str(), b.c_str(), 2000, 10.0, 5), OCCLAB_OK) << occlab_last_error();
  EXPECT_EQ(occlab_synthetic_pair(a.c_str(), b.c_str(), 1, 10.0, 5), OCCLAB_E_INVALID_ARGUMENT);
  occlab_traces* ta = nullptr;
  occlab_traces* tb = nullptr;
  ASSERT_EQ(occlab_traces_read(a.c_str(), &ta), OCCLAB_OK);
  ASSERT_EQ(occlab_traces_read(b.c_str(), &tb), OCCLAB_OK);
  occlab_assessment r{};
  ASSERT_EQ(occlab_assess(ta, tb, 4.5, &r), OCCLAB_OK);
  EXPECT_EQ(r.leaks, 1);
  EXPECT_LT(r.t_statistic, -4.5);  // b is the shifted side
  EXPECT_LT(r.p_value, 1e-5);

  const std::string real = temp("occlab_capi_real.csv");
  occlab_config* c = small_config(real, "setassoc", "5");
  ASSERT_EQ(occlab_collect(c, nullptr, nullptr, nullptr), OCCLAB_OK);
  occlab_config_free(c);
  occlab_traces* tr = nullptr;
  ASSERT_EQ(occlab_traces_read(real.c_str(), &tr), OCCLAB_OK);
  EXPECT_EQ(occlab_assess(ta, tr, 4.5, &r), OCCLAB_E_MISMATCH);
  EXPECT_NE(std::string(occlab_last_error()).find("geometry"), std::string::npos);

  occlab_traces_free(ta);
  occlab_traces_free(tb);
  occlab_traces_free(tr);
  std::remove(a.c_str());
  std::remove(b.c_str());
  std::remove(real.c_str());
}

TEST(CApi, ReadErrors) {
  occlab_traces* t = nullptr;
  EXPECT_EQ(occlab_traces_read("/nonexistent/x.csv", &t), OCCLAB_E_IO);
  const std::string bad = temp("occlab_capi_bad.csv");
  std::FILE* f = std::fopen(bad.c_str(), "wb");
  ASSERT_NE(f, nullptr);
  std::fputs("# format_version: 9\n", f);
  std::fclose(f);
  EXPECT_EQ(occlab_traces_read(bad.c_str(), &t), OCCLAB_E_FORMAT);
  std::remove(bad.c_str());
}

TEST(CApi, ParseKey) {
  uint8_t k[16];
  ASSERT_EQ(occlab_parse_key("7766554433221100ffeeddccbbaa9988", k), OCCLAB_OK);
  EXPECT_EQ(k[0], 0x77);
  EXPECT_EQ(k[15], 0x88);
  EXPECT_EQ(occlab_parse_key("7766", k), OCCLAB_E_INVALID_ARGUMENT);
  EXPECT_EQ(occlab_parse_key("zz66554433221100ffeeddccbbaa9988", k), OCCLAB_E_INVALID_ARGUMENT);
}
