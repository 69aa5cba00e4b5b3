#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ofnlab/optim.hpp"
#include "ofnlab/sac.hpp"

namespace ofn {

enum class RunMode { train, prime };

RunMode parse_run_mode(const std::string& name);
std::string to_string(RunMode mode);

struct ExperimentConfig {
  /// Label used to group runs in aggregate reports.
  std::string name = "default";
  RunMode mode = RunMode::train;
  std::string env = "pendulum";
  std::size_t episode_length = 200;
  std::uint64_t total_env_steps = 30000;
  /// Uniform-random warmup before updates start (train mode).
  std::uint64_t random_steps = 1000;
  std::uint64_t eval_interval = 1000;
  std::size_t eval_episodes = 10;
  std::uint64_t snapshot_interval = 250;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  /// When false wallclock_s is written as 0 so reruns are byte-identical.
  bool log_wallclock = false;
  double divergence_kappa = 2.0;
  double srank_delta = 0.01;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

struct PrimeConfig {
  std::uint64_t n_random_samples = 500;
  std::uint64_t n_prime_updates = 5000;
  /// Optimizer used during the priming updates only; empty means unchanged.
  std::optional<OptimizerKind> optimizer;
  /// Adds the behavioral-cloning term to the actor loss while priming.
  bool behavior_cloning = false;

  friend bool operator==(const PrimeConfig&, const PrimeConfig&) = default;
};

struct RunConfig {
  AgentConfig agent;
  ExperimentConfig experiment;
  PrimeConfig prime;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Flat, commented key-value text with [section] headers:
///
///     # comment
///     [agent]
///     gamma = 0.99
///
/// Unknown sections or keys are errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& config);
void save_config(const RunConfig& config, const std::string& path);

/// Sets one field by dotted key, e.g. "experiment.seed" = "3".
void set_config_value(RunConfig& config, const std::string& dotted_key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& dotted_key);
std::vector<std::string> config_keys();

}  // namespace ofn
