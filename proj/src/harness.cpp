#include "ofnlab/harness.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "ofnlab/checkpoint.hpp"
#include "ofnlab/errors.hpp"

namespace ofn {

namespace fs = std::filesystem;

std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream) {
  return mix_seed(seed, static_cast<std::uint64_t>(stream));
}

namespace {

class Runner {
 public:
  explicit Runner(const RunConfig& config)
      : cfg_(config),
        out_(config.experiment.out_dir),
        env_spec_(make_env(config.experiment.env, config.experiment.episode_length)->spec()),
        agent_(config.agent, env_spec_, stream_seed(config.experiment.seed, SeedStream::agent)),
        buffer_(buffer_capacity(config), stream_seed(config.experiment.seed, SeedStream::buffer)),
        interaction_(make_env(config.experiment.env, config.experiment.episode_length),
                     stream_seed(config.experiment.seed, SeedStream::env)),
        eval_env_(make_env(config.experiment.env, config.experiment.episode_length)),
        eval_rng_(stream_seed(config.experiment.seed, SeedStream::eval)),
        probe_rng_(stream_seed(config.experiment.seed, SeedStream::probe)),
        settings_{config.experiment.srank_delta, config.experiment.divergence_kappa,
                  env_spec_.reward_max, 10},
        start_(std::chrono::steady_clock::now()) {
    fs::create_directories(out_);
    save_config(cfg_, (out_ / "config.toml").string());
    metrics_.open(out_ / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    if (!metrics_) throw std::runtime_error("cannot write " + (out_ / "metrics.jsonl").string());
  }

  RunSummary run() {
    try {
      if (cfg_.experiment.mode == RunMode::prime) {
        prime();
      } else {
        const auto& e = cfg_.experiment;
        train_phase(e.total_env_steps, e.random_steps);
      }
    } catch (const std::exception& e) {
      summary_.status = "failed";
      write_info(e.what());
      throw;
    }
    summary_.env_steps = interaction_.env_steps();
    summary_.grad_steps = agent_.grad_steps();
    save_checkpoint(agent_.state_dict(), (out_ / "checkpoint.json").string());
    write_info({});
    return std::move(summary_);
  }

 private:
  static std::size_t buffer_capacity(const RunConfig& c) {
    if (c.agent.buffer_capacity > 0) return c.agent.buffer_capacity;
    return std::max<std::size_t>(c.experiment.total_env_steps, 1);
  }

  void prime() {
    const auto& p = cfg_.prime;
    for (std::uint64_t i = 0; i < p.n_random_samples; ++i) interaction_.step(nullptr, buffer_, true);
    const std::uint64_t boundary_env = interaction_.env_steps();

    if (p.optimizer) agent_.set_optimizer(*p.optimizer);
    emit(boundary_env, false);
    const std::uint64_t every = cfg_.experiment.snapshot_interval;
    for (std::uint64_t g = 1; g <= p.n_prime_updates; ++g) {
      update({p.behavior_cloning});
      if (g % every == 0 || g == p.n_prime_updates) emit(boundary_env, g == p.n_prime_updates);
    }
    if (p.optimizer) agent_.set_optimizer(cfg_.agent.optimizer);
    summary_.priming_env_step = boundary_env;
    summary_.priming_grad_step = agent_.grad_steps();

    train_phase(cfg_.experiment.total_env_steps, boundary_env);
  }

  void train_phase(std::uint64_t end, std::uint64_t random_steps) {
    const auto& a = cfg_.agent;
    TrainSchedule schedule{end, random_steps, a.utd, a.reset, a.reset_interval_steps, false};
    TrainHooks hooks;
    hooks.after_update = [this](const MetricsDelta& d) { last_ = d; };
    hooks.on_divergence = [this](const DivergenceError& e) { on_divergence(e); };
    hooks.after_env_step = [this, end](std::uint64_t steps) {
      const auto& e = cfg_.experiment;
      const bool eval = steps % e.eval_interval == 0 || steps == end;
      if (eval || steps % e.snapshot_interval == 0) emit(steps, eval);
    };
    train(agent_, interaction_, buffer_, schedule, hooks);
  }

  void update(const UpdateOptions& options) {
    try {
      last_ = agent_.update_step(buffer_, options);
    } catch (const DivergenceError& e) {
      on_divergence(e);
    }
  }

  void on_divergence(const DivergenceError& e) {
    if (summary_.divergence_errors == 0) {
      std::cerr << "ofnlab: divergence at grad step " << agent_.grad_steps() << ": " << e.what()
                << '\n';
    }
    ++summary_.divergence_errors;
    pending_divergence_ = true;
  }

  void emit(std::uint64_t env_step, bool with_eval) {
    MetricsRecord r = snapshot(agent_, buffer_, env_step, last_, probe_rng_, settings_);
    r.diverged = r.diverged || pending_divergence_;
    pending_divergence_ = false;
    r.seed = cfg_.experiment.seed;
    if (with_eval) {
      r.eval_return = evaluate_policy(*eval_env_, agent_.actor(), cfg_.experiment.eval_episodes, eval_rng_);
      summary_.final_eval_return = r.eval_return;
    }
    if (cfg_.experiment.log_wallclock) {
      r.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
    metrics_ << to_json(r).dump() << '\n';
    metrics_.flush();
    summary_.records.push_back(std::move(r));
  }

  void write_info(const std::string& error) const {
    nlohmann::json j;
    j["status"] = summary_.status;
    j["config_id"] = cfg_.experiment.name;
    j["mode"] = to_string(cfg_.experiment.mode);
    j["env"] = cfg_.experiment.env;
    j["seed"] = cfg_.experiment.seed;
    j["env_steps"] = interaction_.env_steps();
    j["grad_steps"] = agent_.grad_steps();
    j["final_eval_return"] = summary_.final_eval_return ? nlohmann::json(*summary_.final_eval_return)
                                                        : nlohmann::json();
    if (summary_.priming_env_step) {
      j["priming_boundary"] = {{"env_step", *summary_.priming_env_step},
                               {"grad_step", *summary_.priming_grad_step}};
    } else {
      j["priming_boundary"] = nullptr;
    }
    j["divergence_errors"] = summary_.divergence_errors;
    if (!error.empty()) j["error"] = error;
    std::ofstream out(out_ / "run_info.json", std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
  }

  RunConfig cfg_;
  fs::path out_;
  EnvSpec env_spec_;
  Agent agent_;
  ReplayBuffer buffer_;
  Interaction interaction_;
  std::unique_ptr<Env> eval_env_;
  Rng eval_rng_;
  Rng probe_rng_;
  SnapshotSettings settings_;
  std::chrono::steady_clock::time_point start_;
  std::ofstream metrics_;
  MetricsDelta last_;
  bool pending_divergence_ = false;
  RunSummary summary_;
};

}  // namespace

RunSummary run_experiment(const RunConfig& config) {
  config.validate();
  return Runner(config).run();
}

RunSummary run_training(const RunConfig& config) {
  if (config.experiment.mode != RunMode::train) throw ConfigError("run_training needs mode = train");
  return run_experiment(config);
}

RunSummary run_priming(const RunConfig& config) {
  if (config.experiment.mode != RunMode::prime) throw ConfigError("run_priming needs mode = prime");
  return run_experiment(config);
}

std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(metrics_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception&) {
      if (in.peek() == std::char_traits<char>::eof()) break;  // torn final write
      throw std::runtime_error("corrupt metrics line in '" + path + "'");
    }
  }
  return out;
}

}  // namespace ofn
