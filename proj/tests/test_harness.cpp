#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ofnlab/checkpoint.hpp"
#include "ofnlab/harness.hpp"
#include "test_util.hpp"

namespace ofn {
namespace {

using testing::TempDir;

RunConfig tiny(const std::string& out, RunMode mode = RunMode::train) {
  RunConfig c;
  c.experiment.mode = mode;
  c.experiment.out_dir = out;
  c.experiment.episode_length = 20;
  c.experiment.total_env_steps = 60;
  c.experiment.random_steps = 20;
  c.experiment.eval_interval = 30;
  c.experiment.snapshot_interval = 20;
  c.experiment.eval_episodes = 2;
  c.agent.hidden = 16;
  c.agent.batch_size = 8;
  c.prime.n_random_samples = 40;
  c.prime.n_prime_updates = 25;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json run_info(const TempDir& d) { return nlohmann::json::parse(slurp(d.str("run_info.json"))); }

TEST(Harness, SeedStreamsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (auto s : {SeedStream::agent, SeedStream::buffer, SeedStream::env, SeedStream::eval, SeedStream::probe}) {
    seen.insert(stream_seed(0, s));
    seen.insert(stream_seed(1, s));
  }
  EXPECT_EQ(seen.size(), 10u);
}

TEST(Harness, ZeroStepsWritesAnEmptyMetricsFile) {
  TempDir d("zero");
  RunConfig c = tiny(d.str());
  c.experiment.total_env_steps = 0;
  const auto s = run_experiment(c);
  EXPECT_TRUE(s.records.empty());
  EXPECT_EQ(slurp(d.str("metrics.jsonl")), "");
  EXPECT_EQ(run_info(d).at("status"), "completed");
  EXPECT_TRUE(run_info(d).at("final_eval_return").is_null());
}

TEST(Harness, OneRowPerSnapshotOrEvalStep) {
  TempDir d("rows");
  const auto s = run_experiment(tiny(d.str()));
  const auto rows = read_metrics(d.str("metrics.jsonl"));
  ASSERT_EQ(rows.size(), 4u);  // 20, 30, 40, 60
  const std::vector<std::uint64_t> steps{20, 30, 40, 60};
  const std::vector<bool> evals{false, true, false, true};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].env_step, steps[i]);
    EXPECT_EQ(rows[i].eval_return.has_value(), evals[i]);
  }
  EXPECT_EQ(rows, s.records);
  EXPECT_EQ(s.env_steps, 60u);
  EXPECT_EQ(s.grad_steps, 40u);
  EXPECT_EQ(rows.back().grad_step, 40u);
  EXPECT_EQ(run_info(d).at("final_eval_return").get<double>(), *rows.back().eval_return);
  EXPECT_TRUE(run_info(d).at("priming_boundary").is_null());
  for (const char* f : {"config.toml", "metrics.jsonl", "checkpoint.json", "run_info.json"}) {
    EXPECT_TRUE(std::filesystem::exists(d.path() / f)) << f;
  }
}

TEST(Harness, WrittenConfigReproducesTheRun) {
  TempDir d("cfg");
  const RunConfig c = tiny(d.str());
  run_experiment(c);
  EXPECT_EQ(load_config(d.str("config.toml")), c);
}

TEST(Harness, RerunIsByteIdentical) {
  TempDir a("det-a"), b("det-b");
  RunConfig ca = tiny(a.str()), cb = tiny(b.str());
  ca.experiment.seed = cb.experiment.seed = 5;
  run_experiment(ca);
  run_experiment(cb);
  EXPECT_EQ(slurp(a.str("metrics.jsonl")), slurp(b.str("metrics.jsonl")));
  EXPECT_EQ(slurp(a.str("checkpoint.json")), slurp(b.str("checkpoint.json")));
}

TEST(Harness, DifferentSeedsDiffer) {
  TempDir a("seed-a"), b("seed-b");
  RunConfig ca = tiny(a.str()), cb = tiny(b.str());
  cb.experiment.seed = 1;
  run_experiment(ca);
  run_experiment(cb);
  EXPECT_NE(slurp(a.str("metrics.jsonl")), slurp(b.str("metrics.jsonl")));
}

TEST(Harness, PrimingHoldsEnvStepDuringUpdates) {
  TempDir d("prime");
  RunConfig c = tiny(d.str(), RunMode::prime);
  c.experiment.snapshot_interval = 10;
  const auto s = run_experiment(c);
  ASSERT_TRUE(s.priming_env_step.has_value());
  EXPECT_EQ(*s.priming_env_step, 40u);
  EXPECT_EQ(*s.priming_grad_step, 25u);
  const auto rows = read_metrics(d.str("metrics.jsonl"));
  // grad 0, 10, 20, 25 at env step 40, then the training phase.
  ASSERT_GE(rows.size(), 4u);
  const std::vector<std::uint64_t> grads{0, 10, 20, 25};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rows[i].env_step, 40u);
    EXPECT_EQ(rows[i].grad_step, grads[i]);
  }
  EXPECT_TRUE(rows[3].eval_return.has_value());
  for (std::size_t i = 4; i < rows.size(); ++i) EXPECT_GT(rows[i].env_step, 40u);
  EXPECT_EQ(s.env_steps, 60u);
  EXPECT_EQ(s.grad_steps, 45u);
  const auto info = run_info(d);
  EXPECT_EQ(info.at("priming_boundary").at("env_step"), 40);
  EXPECT_EQ(info.at("priming_boundary").at("grad_step"), 25);
  EXPECT_EQ(info.at("mode"), "prime");
}

TEST(Harness, PrimingWithoutUpdates) {
  TempDir d("prime0");
  RunConfig c = tiny(d.str(), RunMode::prime);
  c.prime.n_prime_updates = 0;
  const auto s = run_experiment(c);
  EXPECT_EQ(*s.priming_grad_step, 0u);
  EXPECT_EQ(s.records.front().grad_step, 0u);
  EXPECT_EQ(s.records.front().env_step, 40u);
}

TEST(Harness, PrimingOptimizerIsRestored) {
  TempDir d("prime-opt");
  RunConfig c = tiny(d.str(), RunMode::prime);
  c.prime.optimizer = OptimizerKind::sgd_momentum;
  run_experiment(c);
  // Adam moments exist after the post-priming updates; SGD has no second moment.
  EXPECT_GT(read_metrics(d.str("metrics.jsonl")).back().adam_v_norm, 0.0);
}

TEST(Harness, ReadMetricsIgnoresATornFinalLine) {
  TempDir d("torn");
  run_experiment(tiny(d.str()));
  const std::string path = d.str("metrics.jsonl");
  const auto full = read_metrics(path);
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << "{\"env_step\": 80, \"grad";
  }
  EXPECT_EQ(read_metrics(path), full);
}

TEST(Harness, ReadMetricsRejectsCorruptionInTheMiddle) {
  TempDir d("corrupt");
  const std::string path = d.str("m.jsonl");
  {
    std::ofstream out(path);
    out << "not json\n" << to_json(MetricsRecord{}).dump() << "\n";
  }
  EXPECT_THROW(read_metrics(path), std::runtime_error);
}

TEST(Harness, CheckpointRoundTrip) {
  TempDir d("ckpt");
  run_experiment(tiny(d.str()));
  const ParamMap params = load_checkpoint(d.str("checkpoint.json"));
  EXPECT_TRUE(params.contains(kLogAlphaName));
  EXPECT_TRUE(params.contains("actor.mean.weight"));
  EXPECT_TRUE(params.contains("target.1.head.bias"));
  EXPECT_EQ(params.size(), 33u);
  save_checkpoint(params, d.str("again.json"));
  EXPECT_EQ(load_checkpoint(d.str("again.json")), params);
  EXPECT_EQ(slurp(d.str("again.json")), slurp(d.str("checkpoint.json")));
}

TEST(Harness, WallclockOnlyWhenAsked) {
  TempDir a("wall-off"), b("wall-on");
  RunConfig ca = tiny(a.str()), cb = tiny(b.str());
  cb.experiment.log_wallclock = true;
  run_experiment(ca);
  run_experiment(cb);
  for (const auto& r : read_metrics(a.str("metrics.jsonl"))) EXPECT_EQ(r.wallclock_s, 0.0);
  EXPECT_GT(read_metrics(b.str("metrics.jsonl")).back().wallclock_s, 0.0);
}

TEST(Harness, ModeSpecificEntryPoints) {
  TempDir d("modes");
  EXPECT_THROW(run_priming(tiny(d.str())), ConfigError);
  EXPECT_THROW(run_training(tiny(d.str(), RunMode::prime)), ConfigError);
}

TEST(Harness, InvalidConfigWritesNothing) {
  TempDir d("invalid");
  RunConfig c = tiny(d.str("sub"));
  c.experiment.env = "nope";
  EXPECT_THROW(run_experiment(c), ConfigError);
  EXPECT_FALSE(std::filesystem::exists(d.path() / "sub"));
}

TEST(Harness, ResetsAndHighUtdRun) {
  TempDir d("utd");
  RunConfig c = tiny(d.str());
  c.agent.utd = 4;
  c.agent.reset = ResetScope::all;
  c.agent.reset_interval_steps = 30;
  const auto s = run_experiment(c);
  EXPECT_EQ(s.grad_steps, 160u);
  EXPECT_EQ(s.status, "completed");
}

}  // namespace
}  // namespace ofn
