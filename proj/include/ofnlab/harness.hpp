#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ofnlab/config.hpp"
#include "ofnlab/diagnostics.hpp"

namespace ofn {

struct RunSummary {
  std::string status = "completed";
  std::uint64_t env_steps = 0;
  std::uint64_t grad_steps = 0;
  std::optional<double> final_eval_return;
  /// Set for priming runs: where phase 2 ended.
  std::optional<std::uint64_t> priming_env_step;
  std::optional<std::uint64_t> priming_grad_step;
  std::uint64_t divergence_errors = 0;
  std::vector<MetricsRecord> records;
};

/// Stream ids passed to mix_seed so each consumer of randomness is isolated.
enum class SeedStream : std::uint64_t { agent = 1, buffer = 2, env = 3, eval = 4, probe = 5 };

std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream);

/// Runs one (config, seed) cell and writes config.toml, metrics.jsonl,
/// checkpoint.json and run_info.json under experiment.out_dir. Dispatches on
/// experiment.mode.
RunSummary run_experiment(const RunConfig& config);
RunSummary run_training(const RunConfig& config);
RunSummary run_priming(const RunConfig& config);

/// Reads a metrics.jsonl file; a trailing partial line is ignored.
std::vector<MetricsRecord> read_metrics(const std::string& path);

}  // namespace ofn
