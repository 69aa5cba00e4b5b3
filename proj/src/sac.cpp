#include "ofnlab/sac.hpp"

#include <cmath>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

#include "ofnlab/errors.hpp"

namespace ofn {

ResetScope parse_reset_scope(const std::string& name) {
  if (name == "none") return ResetScope::none;
  if (name == "actor") return ResetScope::actor;
  if (name == "critic") return ResetScope::critic;
  if (name == "all") return ResetScope::all;
  throw ConfigError("unknown reset scope '" + name + "' (expected none, actor, critic or all)");
}

std::string to_string(ResetScope scope) {
  switch (scope) {
    case ResetScope::none: return "none";
    case ResetScope::actor: return "actor";
    case ResetScope::critic: return "critic";
    case ResetScope::all: return "all";
  }
  return "none";
}

void AgentConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("agent." + field + ": " + why);
  };
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma", "must be in [0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) fail("tau", "must be in (0, 1]");
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (!(actor_lr >= 0.0)) fail("actor_lr", "must be non-negative");
  if (!(critic_lr >= 0.0)) fail("critic_lr", "must be non-negative");
  if (!(temp_lr >= 0.0)) fail("temp_lr", "must be non-negative");
  if (n_critics != 1 && n_critics != 2) fail("n_critics", "must be 1 or 2");
  if (hidden == 0) fail("hidden", "must be positive");
  if (layers == 0) fail("layers", "must be positive");
  if (!(initial_temperature > 0.0)) fail("initial_temperature", "must be positive");
  if (!(log_std_min < log_std_max)) fail("log_std_min", "must be below log_std_max");
  if (!(actor_utd_scale > 0.0 && actor_utd_scale <= 1.0)) fail("actor_utd_scale", "must be in (0, 1]");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate", "must be in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be non-negative");
  if (!(bc_coefficient >= 0.0)) fail("bc_coefficient", "must be non-negative");
  if (reset != ResetScope::none && reset_interval_steps == 0) {
    fail("reset_interval_steps", "must be positive when resets are enabled");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must be in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps", "must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must be in [0, 1)");
}

// ReplayBuffer -------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(seed) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(t));
  } else {
    storage_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

Batch ReplayBuffer::sample(std::size_t n) { return static_cast<const ReplayBuffer&>(*this).sample(n, rng_); }

Batch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (storage_.empty()) throw ContractViolation("cannot sample from an empty replay buffer");
  if (n == 0) throw ContractViolation("batch size must be positive");
  const auto& first = storage_.front();
  const std::size_t sd = first.s.size(), ad = first.a.size();
  Batch b{Tensor({n, sd}), Tensor({n, ad}), Tensor({n, 1}), Tensor({n, sd}), Tensor({n, 1})};
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& t = storage_[rng.index(storage_.size())];
    for (std::size_t j = 0; j < sd; ++j) {
      b.s(i, j) = t.s[j];
      b.s_next(i, j) = t.s_next[j];
    }
    for (std::size_t j = 0; j < ad; ++j) b.a(i, j) = t.a[j];
    b.r(i, 0) = t.r;
    b.done(i, 0) = t.done ? 1.0 : 0.0;
  }
  return b;
}

// Losses -------------------------------------------------------------------

Tensor compute_critic_target(const Batch& batch, const std::vector<CriticNet>& targets,
                             const ActorNet& actor, double alpha, double gamma, Rng& rng) {
  if (targets.empty()) throw ContractViolation("need at least one target critic");
  Tape tape;
  Var s_next = tape.constant(batch.s_next);
  auto next = actor.sample(tape, s_next, rng, /*trainable=*/false);
  Var min_q = targets[0].forward(tape, s_next, next.action, false, nullptr, false).q;
  for (std::size_t j = 1; j < targets.size(); ++j) {
    min_q = minimum(min_q, targets[j].forward(tape, s_next, next.action, false, nullptr, false).q);
  }
  const Tensor& q = min_q.value();
  const Tensor& logp = next.log_prob->value();
  Tensor y(batch.r.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = batch.r[i] + (1.0 - batch.done[i]) * gamma * (q[i] - alpha * logp[i]);
  }
  return y;
}

CriticLoss critic_loss(Tape& tape, const Batch& batch, const std::vector<CriticNet>& critics,
                       const Tensor& y, double weight_decay, Rng* dropout_rng) {
  if (critics.empty()) throw ContractViolation("need at least one critic");
  Var s = tape.constant(batch.s);
  Var a = tape.constant(batch.a);
  Var target = tape.constant(y);
  Var total;
  Var q_first;
  for (std::size_t j = 0; j < critics.size(); ++j) {
    auto out = critics[j].forward(tape, s, a, /*training=*/true, dropout_rng, /*trainable=*/true);
    if (j == 0) q_first = out.q;
    Var mse = mean(square(sub(out.q, target)));
    total = j == 0 ? mse : add(total, mse);
  }
  Var td = scale(total, 1.0 / static_cast<double>(critics.size()));
  Var loss = td;
  if (weight_decay > 0.0) {
    // Same names as the forward leaves, so the penalty gradient accumulates
    // onto the same entries of the gradient map.
    Var penalty;
    bool first = true;
    for (const auto& c : critics) {
      for (auto& p : const_cast<CriticNet&>(c).parameters()) {
        if (!p.name.ends_with(".weight")) continue;
        Var sq = sum_squares(tape.parameter(p.name, *p.tensor));
        penalty = first ? sq : add(penalty, sq);
        first = false;
      }
    }
    loss = add(td, scale(penalty, 0.5 * weight_decay));
  }
  return {loss, td, q_first};
}

Var bc_loss(Var policy_action, const Tensor& buffer_action) {
  Tape& tape = policy_action.tape();
  return mean(row_l2_norm(sub(policy_action, tape.constant(buffer_action))));
}

ActorLoss actor_loss(Tape& tape, const Batch& batch, const std::vector<CriticNet>& critics,
                     const ActorNet& actor, double alpha, Rng& rng, double bc_coefficient) {
  if (critics.empty()) throw ContractViolation("need at least one critic");
  Var s = tape.constant(batch.s);
  auto sample = actor.sample(tape, s, rng, /*trainable=*/true);
  Var min_q = critics[0].forward(tape, s, sample.action, false, nullptr, false).q;
  for (std::size_t j = 1; j < critics.size(); ++j) {
    min_q = minimum(min_q, critics[j].forward(tape, s, sample.action, false, nullptr, false).q);
  }
  Var policy = mean(sub(scale(*sample.log_prob, alpha), min_q));
  ActorLoss out{policy, policy, *sample.log_prob, sample.action, std::nullopt};
  if (bc_coefficient > 0.0) {
    Var bc = bc_loss(sample.action, batch.a);
    out.bc = bc;
    out.loss = add(policy, scale(bc, bc_coefficient));
  }
  return out;
}

Var temperature_loss(Tape& tape, const Tensor& log_prob, double log_alpha, double target_entropy) {
  double c = 0.0;
  for (double lp : log_prob.data()) c += lp + target_entropy;
  c /= static_cast<double>(log_prob.size());
  Var la = tape.parameter(kLogAlphaName, Tensor::scalar(log_alpha));
  return scale(la, -c);
}

// Agent --------------------------------------------------------------------

namespace {

// Adam moments of parameters that stop receiving gradient (dead ReLU units)
// decay into the subnormal range, where x86 arithmetic is ~100x slower.
// Flush-to-zero and denormals-are-zero for the duration of an update.
class FlushSubnormals {
#if defined(__SSE2__)
 public:
  FlushSubnormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushSubnormals() { _mm_setcsr(saved_); }
  FlushSubnormals(const FlushSubnormals&) = delete;
  FlushSubnormals& operator=(const FlushSubnormals&) = delete;

 private:
  unsigned saved_;
#endif
};

void require_finite(const Var& v, const char* what) {
  if (!std::isfinite(v.value().item())) {
    throw DivergenceError(what, std::string("non-finite ") + what);
  }
}

}  // namespace

Agent::Agent(const AgentConfig& config, const EnvSpec& env, std::uint64_t seed)
    : config_(config), env_(env), rng_(seed) {
  config_.validate();
  target_entropy_ = config_.target_entropy_scale * static_cast<double>(env_.action_dim);
  const NetShape shape{0, config_.hidden, config_.layers, config_.activation};
  core_.actor = ActorNet("actor", env_.state_dim, env_.action_dim, shape, config_.log_std_min,
                         config_.log_std_max);
  for (std::size_t j = 0; j < config_.n_critics; ++j) {
    core_.critics.emplace_back("critic." + std::to_string(j), env_.state_dim, env_.action_dim,
                               shape, config_.ofn, config_.dropout_rate);
    core_.targets.emplace_back("target." + std::to_string(j), env_.state_dim, env_.action_dim,
                               shape, config_.ofn, 0.0);
  }
  init_actor();
  init_critics();
  log_alpha_ = Tensor::scalar(std::log(config_.initial_temperature));

  OptimizerHyper base{};
  base.beta1 = config_.beta1;
  base.beta2 = config_.beta2;
  base.eps = config_.adam_eps;
  base.momentum = config_.momentum;
  OptimizerHyper critic_h = base;
  critic_h.lr = config_.critic_lr;
  critic_h.weight_decay = config_.decoupled_weight_decay ? config_.weight_decay : 0.0;
  OptimizerHyper actor_h = base;
  actor_h.lr = config_.actor_lr;
  OptimizerHyper temp_h = base;
  temp_h.lr = config_.temp_lr;
  core_.critic_opt = OptimizerState(config_.optimizer, critic_h);
  core_.actor_opt = OptimizerState(config_.optimizer, actor_h);
  core_.temp_opt = OptimizerState(OptimizerKind::adam, temp_h);
}

void Agent::init_actor() { core_.actor.initialize(rng_); }

void Agent::init_critics() {
  for (std::size_t j = 0; j < core_.critics.size(); ++j) {
    core_.critics[j].initialize(rng_);
    hard_copy(core_.targets[j], core_.critics[j]);
  }
}

std::vector<NamedParam> Agent::critic_params() {
  std::vector<NamedParam> out;
  for (auto& c : core_.critics) {
    auto p = c.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

double Agent::alpha() const { return std::exp(log_alpha_[0]); }

MetricsDelta Agent::update_step(ReplayBuffer& buffer, const UpdateOptions& options) {
  if (buffer.empty()) throw ContractViolation("update_step needs a non-empty replay buffer");
  const FlushSubnormals ftz;
  Core backup = core_;
  const Tensor log_alpha_backup = log_alpha_;
  const double credit_backup = actor_credit_;
  MetricsDelta delta;
  try {
    Batch batch = buffer.sample(config_.batch_size);
    const double alpha_now = alpha();
    Tensor y = compute_critic_target(batch, core_.targets, core_.actor, alpha_now, config_.gamma,
                                     rng_);
    {
      Tape tape;
      const double wd = config_.decoupled_weight_decay ? 0.0 : config_.weight_decay;
      auto cl = critic_loss(tape, batch, core_.critics, y, wd, &rng_);
      require_finite(cl.loss, "critic_loss");
      GradientMap grads = tape.backward(cl.loss);
      auto params = critic_params();
      optimizer_step(core_.critic_opt, grads, params);
      delta.critic_loss = cl.loss.value().item();
      delta.mean_q = cl.q_first.value().mat().mean();
    }

    actor_credit_ += config_.actor_utd_scale;
    if (actor_credit_ >= 1.0 - 1e-12) {
      actor_credit_ -= 1.0;
      Tensor log_prob;
      {
        Tape tape;
        const double bc = options.behavior_cloning ? config_.bc_coefficient : 0.0;
        auto al = actor_loss(tape, batch, core_.critics, core_.actor, alpha_now, rng_, bc);
        require_finite(al.loss, "actor_loss");
        GradientMap grads = tape.backward(al.loss);
        auto params = core_.actor.parameters();
        optimizer_step(core_.actor_opt, grads, params);
        delta.actor_loss = al.loss.value().item();
        if (al.bc) delta.bc_loss = al.bc->value().item();
        log_prob = al.log_prob.value();
      }
      {
        Tape tape;
        Var loss = temperature_loss(tape, log_prob, log_alpha_[0], target_entropy_);
        require_finite(loss, "temperature_loss");
        GradientMap grads = tape.backward(loss);
        const NamedParam p{kLogAlphaName, &log_alpha_};
        adam_step(core_.temp_opt, grads, std::span<const NamedParam>(&p, 1));
      }
      delta.actor_updated = true;
    }

    for (std::size_t j = 0; j < core_.targets.size(); ++j) {
      polyak_update(core_.targets[j], core_.critics[j], config_.tau);
    }
  } catch (const DivergenceError&) {
    core_ = std::move(backup);
    log_alpha_ = log_alpha_backup;
    actor_credit_ = credit_backup;
    throw;
  }
  ++grad_steps_;
  delta.alpha = alpha();
  return delta;
}

std::vector<double> Agent::act(std::span<const double> state, bool deterministic) {
  Tensor s({1, state.size()}, std::vector<double>(state.begin(), state.end()));
  Tensor a = core_.actor.act(s, rng_, deterministic);
  return {a.data().begin(), a.data().end()};
}

void Agent::reset_parameters(ResetScope scope) {
  if (scope == ResetScope::actor || scope == ResetScope::all) {
    init_actor();
    core_.actor_opt.reset();
  }
  if (scope == ResetScope::critic || scope == ResetScope::all) {
    init_critics();
    core_.critic_opt.reset();
  }
  if (scope == ResetScope::all) {
    log_alpha_ = Tensor::scalar(std::log(config_.initial_temperature));
    core_.temp_opt.reset();
  }
}

void Agent::set_optimizer(OptimizerKind kind) {
  core_.actor_opt.kind = kind;
  core_.actor_opt.reset();
  core_.critic_opt.kind = kind;
  core_.critic_opt.reset();
}

ParamMap Agent::state_dict() const {
  ParamMap out = core_.actor.param_map();
  for (const auto& c : core_.critics) out.merge(c.param_map());
  for (const auto& t : core_.targets) out.merge(t.param_map());
  out.emplace(kLogAlphaName, log_alpha_);
  return out;
}

void Agent::load_state_dict(const ParamMap& params) {
  core_.actor.load(params);
  for (auto& c : core_.critics) c.load(params);
  for (auto& t : core_.targets) t.load(params);
  auto it = params.find(kLogAlphaName);
  if (it == params.end()) throw ContractViolation(std::string("missing ") + kLogAlphaName);
  log_alpha_ = it->second;
}

// Interaction --------------------------------------------------------------

Interaction::Interaction(std::unique_ptr<Env> env, std::uint64_t seed)
    : env_(std::move(env)), rng_(seed) {}

const Transition& Interaction::step(Agent* agent, ReplayBuffer& buffer, bool random_actions) {
  if (needs_reset_) {
    state_ = env_->reset(rng_);
    needs_reset_ = false;
  }
  std::vector<double> action;
  if (random_actions || agent == nullptr) {
    action.resize(env_->spec().action_dim);
    for (auto& v : action) v = rng_.uniform(-1.0, 1.0);
  } else {
    action = agent->act(state_, /*deterministic=*/false);
  }
  StepResult res = env_->step(action);
  last_ = Transition{state_, std::move(action), res.reward, res.next_state, false};
  buffer.push(last_);
  state_ = std::move(res.next_state);
  needs_reset_ = res.done_timeout;
  ++env_steps_;
  return last_;
}

void train(Agent& agent, Interaction& interaction, ReplayBuffer& buffer,
           const TrainSchedule& schedule, const TrainHooks& hooks) {
  while (interaction.env_steps() < schedule.end_env_step) {
    const bool warmup = interaction.env_steps() < schedule.random_steps;
    interaction.step(&agent, buffer, warmup);
    if (!warmup) {
      for (std::size_t k = 0; k < schedule.utd; ++k) {
        try {
          MetricsDelta d = agent.update_step(buffer, {schedule.behavior_cloning});
          if (hooks.after_update) hooks.after_update(d);
        } catch (const DivergenceError& e) {
          if (hooks.on_divergence) hooks.on_divergence(e);
        }
      }
    }
    const std::uint64_t steps = interaction.env_steps();
    if (schedule.reset != ResetScope::none && schedule.reset_interval_steps > 0 &&
        steps % schedule.reset_interval_steps == 0) {
      agent.reset_parameters(schedule.reset);
    }
    if (hooks.after_env_step) hooks.after_env_step(steps);
  }
}

}  // namespace ofn
