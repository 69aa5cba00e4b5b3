#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ofnlab/ofnlab.h"

namespace {

namespace fs = std::filesystem;

struct Scratch {
  fs::path path;
  explicit Scratch(const std::string& tag)
      : path(fs::temp_directory_path() / ("ofnlab-capi-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

struct Config {
  ofn_config* c = nullptr;
  Config() { EXPECT_EQ(ofn_config_new(&c), OFN_OK); }
  ~Config() { ofn_config_free(c); }
  void set(const char* k, const std::string& v) { ASSERT_EQ(ofn_config_set(c, k, v.c_str()), OFN_OK) << k; }
};

void make_tiny(Config& cfg, const fs::path& out, const char* mode = "train") {
  cfg.set("experiment.mode", mode);
  cfg.set("experiment.out_dir", out.string());
  cfg.set("experiment.episode_length", "20");
  cfg.set("experiment.total_env_steps", "40");
  cfg.set("experiment.random_steps", "20");
  cfg.set("experiment.eval_interval", "20");
  cfg.set("experiment.snapshot_interval", "20");
  cfg.set("experiment.eval_episodes", "1");
  cfg.set("network.hidden", "8");
  cfg.set("agent.batch_size", "4");
  cfg.set("prime.n_random_samples", "20");
  cfg.set("prime.n_prime_updates", "5");
}

TEST(CApi, VersionAndStatusStrings) {
  EXPECT_GT(std::strlen(ofn_version()), 0u);
  EXPECT_STREQ(ofn_status_string(OFN_OK), "ok");
  EXPECT_GT(std::strlen(ofn_status_string(OFN_ERR_CONFIG)), 0u);
}

TEST(CApi, NullArgumentsAreRejected) {
  EXPECT_EQ(ofn_config_new(nullptr), OFN_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(ofn_config_set(nullptr, "agent.gamma", "0.9"), OFN_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(ofn_run(nullptr, nullptr), OFN_ERR_INVALID_ARGUMENT);
  EXPECT_GT(std::strlen(ofn_last_error()), 0u);
  ofn_config_free(nullptr);
}

TEST(CApi, SetGetAndBufferSizing) {
  Config cfg;
  cfg.set("agent.gamma", "0.5");
  char buf[64];
  std::size_t needed = 0;
  ASSERT_EQ(ofn_config_get(cfg.c, "agent.gamma", buf, sizeof buf, &needed), OFN_OK);
  EXPECT_STREQ(buf, "0.5");
  EXPECT_EQ(needed, 4u);

  cfg.set("experiment.name", "a-rather-long-experiment-name");
  char small[4];
  EXPECT_EQ(ofn_config_get(cfg.c, "experiment.name", small, sizeof small, &needed), OFN_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(needed, std::strlen("a-rather-long-experiment-name") + 1);
  EXPECT_EQ(ofn_config_get(cfg.c, "experiment.name", nullptr, 0, &needed), OFN_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(needed, std::strlen("a-rather-long-experiment-name") + 1);
}

TEST(CApi, ConfigErrorsCarryAMessage) {
  Config cfg;
  EXPECT_EQ(ofn_config_set(cfg.c, "agent.nope", "1"), OFN_ERR_CONFIG);
  EXPECT_NE(std::string(ofn_last_error()).find("nope"), std::string::npos);
  cfg.set("experiment.env", "cartpole");
  EXPECT_EQ(ofn_config_validate(cfg.c), OFN_ERR_CONFIG);
  ofn_config* loaded = nullptr;
  EXPECT_NE(ofn_config_load("/nonexistent/x.toml", &loaded), OFN_OK);
  EXPECT_EQ(loaded, nullptr);
}

TEST(CApi, SaveLoadRoundTrip) {
  Scratch s("save");
  Config cfg;
  cfg.set("experiment.seed", "42");
  const std::string path = (s.path / "c.toml").string();
  ASSERT_EQ(ofn_config_save(cfg.c, path.c_str()), OFN_OK);
  ofn_config* loaded = nullptr;
  ASSERT_EQ(ofn_config_load(path.c_str(), &loaded), OFN_OK);
  char buf[32];
  std::size_t needed = 0;
  ASSERT_EQ(ofn_config_get(loaded, "experiment.seed", buf, sizeof buf, &needed), OFN_OK);
  EXPECT_STREQ(buf, "42");
  ofn_config_free(loaded);
}

TEST(CApi, RunPrimeAggregateAndPlotData) {
  Scratch s("run");
  std::vector<std::string> dirs;
  for (int seed = 0; seed < 3; ++seed) {
    Config cfg;
    const fs::path out = s.path / ("run" + std::to_string(seed));
    make_tiny(cfg, out, "prime");
    cfg.set("experiment.seed", std::to_string(seed));
    ofn_run_summary sum{};
    ASSERT_EQ(ofn_run(cfg.c, &sum), OFN_OK) << ofn_last_error();
    EXPECT_EQ(sum.env_steps, 40u);
    EXPECT_EQ(sum.grad_steps, 25u);
    EXPECT_TRUE(sum.has_priming_boundary);
    EXPECT_EQ(sum.priming_env_step, 20u);
    EXPECT_EQ(sum.priming_grad_step, 5u);
    EXPECT_TRUE(sum.has_final_return);
    EXPECT_GT(sum.n_records, 0u);
    dirs.push_back(out.string());
  }
  dirs.push_back((s.path / "missing").string());
  std::vector<const char*> ptrs;
  for (const auto& d : dirs) ptrs.push_back(d.c_str());

  const std::string report = (s.path / "report.json").string();
  std::size_t excluded = 0;
  ASSERT_EQ(ofn_aggregate(ptrs.data(), ptrs.size(), 100, 1, report.c_str(), &excluded), OFN_OK);
  EXPECT_EQ(excluded, 1u);
  EXPECT_TRUE(fs::exists(report));

  const std::string csv = (s.path / "plot.csv").string();
  std::size_t rows = 0;
  ASSERT_EQ(ofn_export_plot_data(ptrs.data(), ptrs.size(), csv.c_str(), &rows), OFN_OK);
  EXPECT_GT(rows, 0u);
}

TEST(CApi, RunRejectsInvalidConfig) {
  Config cfg;
  cfg.set("experiment.eval_interval", "0");
  EXPECT_EQ(ofn_run(cfg.c, nullptr), OFN_ERR_CONFIG);
}

}  // namespace
