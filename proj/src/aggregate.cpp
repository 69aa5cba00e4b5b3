#include "ofnlab/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "ofnlab/errors.hpp"
#include "ofnlab/harness.hpp"

namespace ofn {

namespace fs = std::filesystem;

namespace {

std::vector<double> sorted(std::span<const double> x) {
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  return v;
}

void require_nonempty(std::span<const double> x) {
  if (x.empty()) throw ContractViolation("statistic of an empty sample");
}

// Linear interpolation between closest ranks.
double quantile_sorted(const std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double mean_of(std::span<const double> x) {
  require_nonempty(x);
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double median_of(std::span<const double> x) {
  require_nonempty(x);
  return quantile_sorted(sorted(x), 0.5);
}

double interquartile_mean(std::span<const double> x) {
  require_nonempty(x);
  const auto v = sorted(x);
  const std::size_t cut = v.size() / 4;
  return mean_of(std::span<const double>(v).subspan(cut, v.size() - 2 * cut));
}

double compute_statistic(Statistic s, std::span<const double> x) {
  switch (s) {
    case Statistic::mean: return mean_of(x);
    case Statistic::median: return median_of(x);
    case Statistic::iqm: return interquartile_mean(x);
  }
  throw ContractViolation("unknown statistic");
}

Estimate bootstrap_estimate(std::span<const double> x, Statistic s, std::size_t n_resamples,
                            Rng& rng, double level) {
  require_nonempty(x);
  if (n_resamples == 0) throw ContractViolation("bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw ContractViolation("confidence level must be in (0, 1)");
  std::vector<double> stats(n_resamples);
  std::vector<double> resample(x.size());
  for (auto& st : stats) {
    for (auto& r : resample) r = x[rng.index(x.size())];
    st = compute_statistic(s, resample);
  }
  std::sort(stats.begin(), stats.end());
  return {compute_statistic(s, x), quantile_sorted(stats, (1.0 - level) / 2.0),
          quantile_sorted(stats, (1.0 + level) / 2.0)};
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct LoadedRun {
  std::string dir;
  std::string config_id;
  std::string task;
  std::uint64_t seed = 0;
  double final_return = 0.0;
  std::optional<std::uint64_t> boundary_env_step;
  std::optional<std::uint64_t> boundary_grad_step;
  std::vector<MetricsRecord> records;
};

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("missing " + p.filename().string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("corrupt " + p.filename().string());
  }
}

// Throws std::runtime_error with the exclusion reason.
LoadedRun load_run(const std::string& dir, bool need_final) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw std::runtime_error("not a directory");
  const auto info = read_json(root / "run_info.json");
  LoadedRun run;
  run.dir = dir;
  try {
    if (info.at("status").get<std::string>() != "completed") {
      throw std::runtime_error("run status is '" + info.at("status").get<std::string>() + "'");
    }
    run.config_id = info.at("config_id").get<std::string>();
    run.task = info.at("env").get<std::string>();
    run.seed = info.at("seed").get<std::uint64_t>();
    const auto& fin = info.at("final_eval_return");
    if (fin.is_null()) {
      if (need_final) throw std::runtime_error("no final evaluation return");
    } else {
      run.final_return = fin.get<double>();
      if (need_final && !std::isfinite(run.final_return)) {
        throw std::runtime_error("non-finite final evaluation return");
      }
    }
    const auto& b = info.at("priming_boundary");
    if (!b.is_null()) {
      run.boundary_env_step = b.at("env_step").get<std::uint64_t>();
      run.boundary_grad_step = b.at("grad_step").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("run_info.json lacks required fields");
  }
  run.records = read_metrics((root / "metrics.jsonl").string());
  return run;
}

std::vector<CurvePoint> mean_curve(const std::vector<const LoadedRun*>& runs) {
  std::map<std::uint64_t, std::vector<double>> by_step;
  for (const auto* r : runs) {
    for (const auto& rec : r->records) {
      if (rec.eval_return && std::isfinite(*rec.eval_return)) by_step[rec.env_step].push_back(*rec.eval_return);
    }
  }
  std::vector<CurvePoint> out;
  for (const auto& [step, vals] : by_step) {
    CurvePoint p{step, mean_of(vals), 0.0, vals.size()};
    if (vals.size() > 1) {
      double ss = 0.0;
      for (double v : vals) ss += (v - p.mean) * (v - p.mean);
      p.std_error = std::sqrt(ss / static_cast<double>(vals.size() - 1) / static_cast<double>(vals.size()));
    }
    out.push_back(p);
  }
  return out;
}

nlohmann::json to_json(const Estimate& e) {
  return {{"value", e.value}, {"ci_low", e.ci_low}, {"ci_high", e.ci_high}};
}

}  // namespace

AggregateReport aggregate(const std::vector<std::string>& run_dirs, std::size_t n_bootstrap,
                          std::uint64_t seed) {
  AggregateReport report;
  report.n_bootstrap = n_bootstrap;
  report.bootstrap_seed = seed;

  std::vector<std::string> dirs = run_dirs;
  std::sort(dirs.begin(), dirs.end());
  std::vector<LoadedRun> runs;
  for (const auto& d : dirs) {
    try {
      runs.push_back(load_run(d, true));
    } catch (const std::exception& e) {
      report.excluded.push_back({d, e.what()});
    }
  }

  std::map<std::string, std::vector<const LoadedRun*>> by_config;
  for (const auto& r : runs) by_config[r.config_id].push_back(&r);

  for (const auto& [id, members] : by_config) {
    // Per-config stream: adding or dropping a config leaves the others' intervals alone.
    Rng rng(mix_seed(seed, fnv1a(id)));
    ConfigAggregate agg;
    agg.config_id = id;
    agg.n_runs = members.size();
    std::map<std::string, std::vector<const LoadedRun*>> by_task;
    for (const auto* r : members) {
      agg.scores.push_back(r->final_return);
      by_task[r->task].push_back(r);
    }
    for (const auto& [task, task_runs] : by_task) {
      agg.tasks.push_back(task);
      agg.curves[task] = mean_curve(task_runs);
    }
    agg.mean = bootstrap_estimate(agg.scores, Statistic::mean, n_bootstrap, rng, report.confidence);
    agg.iqm = bootstrap_estimate(agg.scores, Statistic::iqm, n_bootstrap, rng, report.confidence);
    agg.median = bootstrap_estimate(agg.scores, Statistic::median, n_bootstrap, rng, report.confidence);
    report.configs.push_back(std::move(agg));
  }
  return report;
}

nlohmann::json to_json(const AggregateReport& report) {
  nlohmann::json configs = nlohmann::json::array();
  for (const auto& c : report.configs) {
    nlohmann::json curves = nlohmann::json::object();
    for (const auto& [task, pts] : c.curves) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& p : pts) {
        arr.push_back({{"env_step", p.env_step}, {"mean", p.mean}, {"std_error", p.std_error}, {"n", p.n}});
      }
      curves[task] = std::move(arr);
    }
    configs.push_back({{"config_id", c.config_id},
                       {"tasks", c.tasks},
                       {"n_runs", c.n_runs},
                       {"final_returns", c.scores},
                       {"mean", to_json(c.mean)},
                       {"iqm", to_json(c.iqm)},
                       {"median", to_json(c.median)},
                       {"curves", std::move(curves)}});
  }
  nlohmann::json excluded = nlohmann::json::array();
  for (const auto& e : report.excluded) excluded.push_back({{"run_dir", e.run_dir}, {"reason", e.reason}});
  return {{"bootstrap", {{"method", "percentile"},
                         {"resamples", report.n_bootstrap},
                         {"seed", report.bootstrap_seed},
                         {"confidence", report.confidence}}},
          {"configs", std::move(configs)},
          {"excluded", std::move(excluded)}};
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string csv_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::size_t export_plot_data(const std::vector<std::string>& run_dirs, const std::string& csv_path) {
  std::vector<std::string> dirs = run_dirs;
  std::sort(dirs.begin(), dirs.end());
  std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + csv_path + "'");
  out << "config_id,task,seed,env_step,metric,value\n";
  std::size_t rows = 0;
  for (const auto& d : dirs) {
    LoadedRun run;
    try {
      run = load_run(d, false);
    } catch (const std::exception& e) {
      std::cerr << "ofnlab: skipping " << d << ": " << e.what() << '\n';
      continue;
    }
    const std::string prefix =
        csv_field(run.config_id) + ',' + csv_field(run.task) + ',' + std::to_string(run.seed) + ',';
    auto row = [&](std::uint64_t step, const std::string& metric, double v) {
      out << prefix << step << ',' << metric << ',' << csv_real(v) << '\n';
      ++rows;
    };
    if (run.boundary_env_step) {
      row(*run.boundary_env_step, "priming_boundary_grad_step", static_cast<double>(*run.boundary_grad_step));
    }
    for (const auto& r : run.records) {
      const auto s = r.env_step;
      row(s, "grad_step", static_cast<double>(r.grad_step));
      if (r.eval_return) row(s, "eval_return", *r.eval_return);
      row(s, "mean_q_in_dist", r.mean_q_in_dist);
      row(s, "critic_loss", r.critic_loss);
      row(s, "actor_loss", r.actor_loss);
      row(s, "alpha", r.alpha);
      row(s, "adam_m_norm", r.adam_m_norm);
      row(s, "adam_v_norm", r.adam_v_norm);
      row(s, "srank", static_cast<double>(r.srank));
      for (std::size_t i = 0; i < r.layer_norms.size(); ++i) {
        row(s, "layer_norm_" + std::to_string(i + 1), r.layer_norms[i]);
      }
      row(s, "diverged", r.diverged ? 1.0 : 0.0);
    }
  }
  return rows;
}

}  // namespace ofn
