// ofnlab command line: train, prime, aggregate, plot-data, selftest.
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ofnlab/ofnlab.h"

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

int report(ofn_status s, const char* what) {
  std::cerr << "ofnlab " << what << ": " << ofn_status_string(s) << ": " << ofn_last_error() << '\n';
  return s == OFN_ERR_CONFIG || s == OFN_ERR_INVALID_ARGUMENT ? kUsageError : kRuntimeFailure;
}

struct RunArgs {
  std::string config;
  std::string seed;
  std::string out;
  std::vector<std::string> overrides;
};

int run_command(const RunArgs& args, const char* mode) {
  ofn_config* cfg = nullptr;
  ofn_status s = ofn_config_load(args.config.c_str(), &cfg);
  if (s != OFN_OK) {
    report(s, "config");
    return kUsageError;
  }
  auto set = [&](const std::string& key, const std::string& value) {
    return ofn_config_set(cfg, key.c_str(), value.c_str());
  };
  s = set("experiment.mode", mode);
  if (s == OFN_OK && !args.seed.empty()) s = set("experiment.seed", args.seed);
  if (s == OFN_OK && !args.out.empty()) s = set("experiment.out_dir", args.out);
  for (const auto& kv : args.overrides) {
    if (s != OFN_OK) break;
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "ofnlab: --set expects section.key=value, got '" << kv << "'\n";
      ofn_config_free(cfg);
      return kUsageError;
    }
    s = set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (s == OFN_OK) s = ofn_config_validate(cfg);
  if (s != OFN_OK) {
    const int code = report(s, "config");
    ofn_config_free(cfg);
    return code;
  }
  ofn_run_summary summary{};
  s = ofn_run(cfg, &summary);
  ofn_config_free(cfg);
  if (s != OFN_OK) return report(s, mode);
  std::printf("env_steps=%llu grad_steps=%llu records=%zu divergence_errors=%llu",
              static_cast<unsigned long long>(summary.env_steps),
              static_cast<unsigned long long>(summary.grad_steps), summary.n_records,
              static_cast<unsigned long long>(summary.divergence_errors));
  if (summary.has_final_return) std::printf(" final_return=%.6g", summary.final_return);
  std::printf("\n");
  return 0;
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

void add_run_options(CLI::App* cmd, RunArgs& args) {
  cmd->add_option("--config", args.config, "Config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "Override experiment.seed");
  cmd->add_option("--out", args.out, "Override experiment.out_dir");
  cmd->add_option("--set", args.overrides, "Override any field: section.key=value");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ofnlab: SAC with output feature normalization on toy control tasks"};
  app.set_version_flag("--version", std::string(ofn_version()));
  app.require_subcommand(1);

  RunArgs train_args;
  RunArgs prime_args;
  add_run_options(app.add_subcommand("train", "Standard training run"), train_args);
  add_run_options(app.add_subcommand("prime", "Priming run: random samples, priming updates, training"),
                  prime_args);

  std::vector<std::string> agg_dirs;
  std::string agg_out = "report.json";
  std::size_t resamples = 2000;
  std::uint64_t boot_seed = 20240;
  auto* agg = app.add_subcommand("aggregate", "Mean/IQM/median with bootstrap CIs over run directories");
  agg->add_option("runs", agg_dirs, "Run directories")->required();
  agg->add_option("--out", agg_out, "Report path");
  agg->add_option("--resamples", resamples, "Bootstrap resamples")->check(CLI::PositiveNumber);
  agg->add_option("--bootstrap-seed", boot_seed, "Bootstrap seed");

  std::vector<std::string> plot_dirs;
  std::string plot_out = "plot_data.csv";
  auto* plot = app.add_subcommand("plot-data", "Export tidy CSV for plotting");
  plot->add_option("runs", plot_dirs, "Run directories")->required();
  plot->add_option("--out", plot_out, "CSV path");

  auto* selftest = app.add_subcommand("selftest", "Run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  if (app.got_subcommand("train")) return run_command(train_args, "train");
  if (app.got_subcommand("prime")) return run_command(prime_args, "prime");
  if (agg->parsed()) {
    const auto dirs = c_strings(agg_dirs);
    std::size_t excluded = 0;
    const ofn_status s = ofn_aggregate(dirs.data(), dirs.size(), resamples, boot_seed, agg_out.c_str(), &excluded);
    if (s != OFN_OK) return report(s, "aggregate");
    if (excluded > 0) std::cerr << "ofnlab aggregate: " << excluded << " run(s) excluded, see report\n";
    return 0;
  }
  if (plot->parsed()) {
    const auto dirs = c_strings(plot_dirs);
    std::size_t rows = 0;
    const ofn_status s = ofn_export_plot_data(dirs.data(), dirs.size(), plot_out.c_str(), &rows);
    if (s != OFN_OK) return report(s, "plot-data");
    std::printf("rows=%zu\n", rows);
    return 0;
  }
  if (selftest->parsed()) {
    int failed = 0;
    const ofn_status s = ofn_selftest(&failed);
    return s == OFN_OK ? 0 : report(s, "selftest");
  }
  return kUsageError;
}
