#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ofnlab/rng.hpp"

namespace ofn {

inline constexpr std::size_t kDefaultBootstrapResamples = 2000;
inline constexpr std::uint64_t kDefaultBootstrapSeed = 20240;

double mean_of(std::span<const double> x);
double median_of(std::span<const double> x);
/// Mean after dropping floor(n/4) values from each end of the sorted sample.
double interquartile_mean(std::span<const double> x);

struct Estimate {
  double value = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

enum class Statistic { mean, median, iqm };

double compute_statistic(Statistic s, std::span<const double> x);

/// Percentile bootstrap: resample with replacement n_resamples times and take
/// the (1-level)/2 and (1+level)/2 quantiles of the resampled statistic.
Estimate bootstrap_estimate(std::span<const double> x, Statistic s, std::size_t n_resamples,
                            Rng& rng, double level = 0.95);

struct CurvePoint {
  std::uint64_t env_step = 0;
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

struct ConfigAggregate {
  std::string config_id;
  std::vector<std::string> tasks;
  std::size_t n_runs = 0;
  std::vector<double> scores;
  Estimate mean;
  Estimate iqm;
  Estimate median;
  /// task -> eval-return curve averaged over seeds
  std::map<std::string, std::vector<CurvePoint>> curves;
};

struct ExcludedRun {
  std::string run_dir;
  std::string reason;
};

struct AggregateReport {
  std::size_t n_bootstrap = kDefaultBootstrapResamples;
  std::uint64_t bootstrap_seed = kDefaultBootstrapSeed;
  double confidence = 0.95;
  std::vector<ConfigAggregate> configs;
  std::vector<ExcludedRun> excluded;
};

/// Pools final eval returns over seeds and tasks per config id. Runs that are
/// missing, failed or unreadable are listed in `excluded`.
AggregateReport aggregate(const std::vector<std::string>& run_dirs,
                          std::size_t n_bootstrap = kDefaultBootstrapResamples,
                          std::uint64_t seed = kDefaultBootstrapSeed);

nlohmann::json to_json(const AggregateReport& report);

/// Tidy CSV with header config_id,task,seed,env_step,metric,value. Returns
/// the number of data rows; unreadable runs are skipped with a note on stderr.
std::size_t export_plot_data(const std::vector<std::string>& run_dirs, const std::string& csv_path);

}  // namespace ofn
