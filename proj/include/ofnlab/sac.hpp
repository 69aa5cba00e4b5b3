#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ofnlab/autodiff.hpp"
#include "ofnlab/envs.hpp"
#include "ofnlab/errors.hpp"
#include "ofnlab/nets.hpp"
#include "ofnlab/optim.hpp"
#include "ofnlab/rng.hpp"

namespace ofn {

enum class ResetScope { none, actor, critic, all };

ResetScope parse_reset_scope(const std::string& name);
std::string to_string(ResetScope scope);

/// Every agent hyperparameter. Defaults follow the high-UTD column of the
/// reference hyperparameter tables; the priming column differs only in
/// initial_temperature (0.1), target_entropy_scale (-1) and log_std_min (-5).
struct AgentConfig {
  double gamma = 0.99;
  double tau = 0.005;
  std::size_t batch_size = 256;
  double actor_lr = 4e-3;
  double critic_lr = 4e-3;
  double temp_lr = 3e-4;
  std::size_t n_critics = 2;
  std::size_t hidden = 256;
  std::size_t layers = 2;
  double initial_temperature = 1.0;
  /// target entropy = target_entropy_scale * action_dim
  double target_entropy_scale = -0.5;
  double log_std_min = -10.0;
  double log_std_max = 2.0;
  std::size_t utd = 1;
  /// Fraction of update steps that also update actor and temperature.
  double actor_utd_scale = 1.0;
  bool ofn = false;
  Activation activation = Activation::relu;
  double dropout_rate = 0.0;
  double weight_decay = 0.0;
  bool decoupled_weight_decay = false;
  double bc_coefficient = 1.0;
  ResetScope reset = ResetScope::none;
  std::size_t reset_interval_steps = 20000;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double momentum = 0.9;
  /// 0 means "sized to the run's env-step budget".
  std::size_t buffer_capacity = 0;

  /// Throws ConfigError naming the first field outside its domain.
  void validate() const;
  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

struct Transition {
  std::vector<double> s;
  std::vector<double> a;
  double r = 0.0;
  std::vector<double> s_next;
  bool done = false;
};

struct Batch {
  Tensor s;       ///< [B x state_dim]
  Tensor a;       ///< [B x action_dim]
  Tensor r;       ///< [B x 1]
  Tensor s_next;  ///< [B x state_dim]
  Tensor done;    ///< [B x 1], 1.0 for true terminals
};

/// Ring buffer with uniform sampling with replacement.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed);

  void push(Transition t);
  std::size_t size() const noexcept { return storage_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return storage_.empty(); }
  const Transition& at(std::size_t i) const { return storage_.at(i); }

  /// Uses the buffer's own generator.
  Batch sample(std::size_t n);
  /// Uses an external generator; the buffer stream is left untouched.
  Batch sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> storage_;
  Rng rng_;
};

// Losses -------------------------------------------------------------------

/// y = r + (1 - done) gamma (min_j Qbar_j(s', a') - alpha log pi(a'|s')) with
/// a' freshly sampled; a constant with respect to every network.
Tensor compute_critic_target(const Batch& batch, const std::vector<CriticNet>& targets,
                             const ActorNet& actor, double alpha, double gamma, Rng& rng);

struct CriticLoss {
  Var loss;
  Var td_loss;   ///< without the weight-decay term
  Var q_first;   ///< critic 1 outputs on the batch
};

/// Mean over batch and critics of (Q_j(s, a) - y)^2, plus
/// weight_decay * sum ||W||^2 / 2 over critic weight matrices.
CriticLoss critic_loss(Tape& tape, const Batch& batch, const std::vector<CriticNet>& critics,
                       const Tensor& y, double weight_decay, Rng* dropout_rng);

struct ActorLoss {
  Var loss;           ///< total objective actually minimized
  Var policy_loss;    ///< mean(alpha log pi - min_j Q_j)
  Var log_prob;       ///< [B x 1]
  Var action;         ///< [B x action_dim]
  std::optional<Var> bc;
};

/// Critic weights enter as constants: gradients reach the actor only.
/// `bc_coefficient` > 0 adds bc_coefficient * bc_loss.
ActorLoss actor_loss(Tape& tape, const Batch& batch, const std::vector<CriticNet>& critics,
                     const ActorNet& actor, double alpha, Rng& rng, double bc_coefficient);

/// Mean L2 distance between policy actions and buffer actions.
Var bc_loss(Var policy_action, const Tensor& buffer_action);

inline constexpr const char* kLogAlphaName = "temperature.log_alpha";

/// mean(-log_alpha (log pi + target_entropy)); log pi is detached.
Var temperature_loss(Tape& tape, const Tensor& log_prob, double log_alpha, double target_entropy);

// Agent --------------------------------------------------------------------

struct MetricsDelta {
  double mean_q = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double bc_loss = 0.0;
  double alpha = 0.0;
  bool actor_updated = false;

  friend bool operator==(const MetricsDelta&, const MetricsDelta&) = default;
};

struct UpdateOptions {
  bool behavior_cloning = false;
};

class Agent {
 public:
  Agent(const AgentConfig& config, const EnvSpec& env, std::uint64_t seed);

  /// One SAC update: critic step, actor step (+BC), temperature step, Polyak.
  /// On DivergenceError every network and optimizer state is restored to its
  /// value before the call, then the error propagates.
  MetricsDelta update_step(ReplayBuffer& buffer, const UpdateOptions& options = {});

  std::vector<double> act(std::span<const double> state, bool deterministic);

  /// Reinitializes the networks in scope and zeroes their optimizer states.
  /// Target critics are re-copied from the fresh critics. The buffer is not
  /// the agent's to touch.
  void reset_parameters(ResetScope scope);

  /// Switches actor and critic optimizers, starting from fresh moments.
  void set_optimizer(OptimizerKind kind);

  double alpha() const;
  double log_alpha() const { return log_alpha_[0]; }
  double target_entropy() const { return target_entropy_; }
  std::uint64_t grad_steps() const { return grad_steps_; }

  const AgentConfig& config() const { return config_; }
  const ActorNet& actor() const { return core_.actor; }
  ActorNet& actor() { return core_.actor; }
  const std::vector<CriticNet>& critics() const { return core_.critics; }
  std::vector<CriticNet>& critics() { return core_.critics; }
  const std::vector<CriticNet>& targets() const { return core_.targets; }
  std::vector<CriticNet>& targets() { return core_.targets; }
  const OptimizerState& critic_optimizer() const { return core_.critic_opt; }
  const OptimizerState& actor_optimizer() const { return core_.actor_opt; }
  const OptimizerState& temperature_optimizer() const { return core_.temp_opt; }

  /// Every learnable and target tensor, for checkpoints.
  ParamMap state_dict() const;
  void load_state_dict(const ParamMap& params);

 private:
  struct Core {
    ActorNet actor;
    std::vector<CriticNet> critics;
    std::vector<CriticNet> targets;
    OptimizerState actor_opt;
    OptimizerState critic_opt;
    OptimizerState temp_opt;
  };

  std::vector<NamedParam> critic_params();
  void init_actor();
  void init_critics();

  AgentConfig config_;
  EnvSpec env_;
  double target_entropy_ = 0.0;
  Core core_;
  Tensor log_alpha_;
  Rng rng_;
  std::uint64_t grad_steps_ = 0;
  double actor_credit_ = 0.0;
};

// Interaction loop ---------------------------------------------------------

/// Owns the environment episode state across phases of a run.
class Interaction {
 public:
  Interaction(std::unique_ptr<Env> env, std::uint64_t seed);

  /// Takes one env step with `policy` (or uniform random actions when
  /// `random_actions`), pushes the transition, returns it. Timeouts
  /// bootstrap, so done is false for them.
  const Transition& step(Agent* agent, ReplayBuffer& buffer, bool random_actions);

  std::uint64_t env_steps() const { return env_steps_; }
  const Env& env() const { return *env_; }

 private:
  std::unique_ptr<Env> env_;
  Rng rng_;
  std::vector<double> state_;
  bool needs_reset_ = true;
  std::uint64_t env_steps_ = 0;
  Transition last_;
};

struct TrainSchedule {
  std::uint64_t end_env_step = 0;
  /// Env steps (absolute) before which actions are uniform random and no
  /// updates happen.
  std::uint64_t random_steps = 0;
  std::size_t utd = 1;
  ResetScope reset = ResetScope::none;
  std::size_t reset_interval_steps = 0;
  bool behavior_cloning = false;
};

struct TrainHooks {
  std::function<void(const MetricsDelta&)> after_update;
  std::function<void(const DivergenceError&)> on_divergence;
  /// Called with the number of env steps taken so far, after updates and resets.
  std::function<void(std::uint64_t)> after_env_step;
};

/// Acts with the stochastic policy, stores transitions and performs `utd`
/// updates per env step until end_env_step. Divergence errors are reported to
/// the hook and the run continues.
void train(Agent& agent, Interaction& interaction, ReplayBuffer& buffer,
           const TrainSchedule& schedule, const TrainHooks& hooks);

}  // namespace ofn
