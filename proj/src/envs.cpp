#include "ofnlab/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ofnlab/errors.hpp"
#include "ofnlab/nets.hpp"

namespace ofn {

std::vector<double> Env::reset(Rng& rng) {
  steps_ = 0;
  return reset_impl(rng);
}

StepResult Env::step(std::span<const double> action) {
  if (action.size() != spec_.action_dim) {
    throw ContractViolation(spec_.name + ": expected action of size " +
                            std::to_string(spec_.action_dim));
  }
  std::vector<double> clipped(action.size());
  for (std::size_t i = 0; i < action.size(); ++i) {
    if (!std::isfinite(action[i])) throw ContractViolation(spec_.name + ": non-finite action");
    clipped[i] = std::clamp(action[i], -1.0, 1.0);
  }
  auto [obs, reward] = step_impl(clipped);
  ++steps_;
  return {std::move(obs), reward, steps_ >= spec_.episode_length};
}

// Pendulum -----------------------------------------------------------------

namespace {

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::fmod(a + pi, 2.0 * pi);
  if (a < 0.0) a += 2.0 * pi;
  return a - pi;
}

}  // namespace

Pendulum::Pendulum(PendulumParams params, std::size_t episode_length)
    : Env(EnvSpec{params.sparse ? "pendulum_sparse" : "pendulum",
                  3,
                  1,
                  episode_length,
                  0.0,
                  1.0,
                  {{"gravity", params.gravity},
                   {"mass", params.mass},
                   {"length", params.length},
                   {"dt", params.dt},
                   {"max_torque", params.max_torque},
                   {"max_speed", params.max_speed},
                   {"damping", params.damping},
                   {"substeps", static_cast<double>(params.substeps)}}}),
      params_(params) {
  if (params.substeps < 1) throw ConfigError("pendulum substeps must be positive");
}

void Pendulum::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
}

double Pendulum::mechanical_energy() const {
  const double inertia = params_.mass * params_.length * params_.length / 3.0;
  return 0.5 * inertia * theta_dot_ * theta_dot_ +
         params_.mass * params_.gravity * 0.5 * params_.length * std::cos(theta_);
}

double Pendulum::reward_at(double theta) const {
  if (params_.sparse) return std::abs(wrap_angle(theta)) < params_.sparse_threshold ? 1.0 : 0.0;
  return std::clamp(0.5 * (1.0 + std::cos(theta)), 0.0, 1.0);
}

std::vector<double> Pendulum::observe() const {
  return {std::cos(theta_), std::sin(theta_), theta_dot_};
}

std::vector<double> Pendulum::reset_impl(Rng& rng) {
  theta_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
  theta_dot_ = rng.uniform(-1.0, 1.0);
  return observe();
}

std::pair<std::vector<double>, double> Pendulum::step_impl(std::span<const double> action) {
  const auto& p = params_;
  const double reward = reward_at(theta_);
  const double torque = action[0] * p.max_torque;
  const double h = p.dt / p.substeps;
  for (int k = 0; k < p.substeps; ++k) {
    const double accel = 3.0 * p.gravity / (2.0 * p.length) * std::sin(theta_) +
                         3.0 / (p.mass * p.length * p.length) * torque - p.damping * theta_dot_;
    // Semi-implicit Euler: velocity first, then position with the new velocity.
    theta_dot_ = std::clamp(theta_dot_ + accel * h, -p.max_speed, p.max_speed);
    theta_ = wrap_angle(theta_ + theta_dot_ * h);
  }
  return {observe(), reward};
}

// PuddleReacher ------------------------------------------------------------

PuddleReacher::PuddleReacher(PuddleParams params, std::size_t episode_length)
    : Env(EnvSpec{"puddle_reacher",
                  4,
                  2,
                  episode_length,
                  0.0,
                  1.0,
                  {{"dt", params.dt},
                   {"force", params.force},
                   {"friction", params.friction},
                   {"max_speed", params.max_speed},
                   {"puddle_radius", params.puddle_radius}}}),
      params_(params) {}

double PuddleReacher::reward_at(double x, double y) const {
  const auto& p = params_;
  const double d2 = (x - p.goal_x) * (x - p.goal_x) + (y - p.goal_y) * (y - p.goal_y);
  double r = std::exp(-d2 / (2.0 * p.reward_width * p.reward_width));
  const double pd2 = (x - p.puddle_x) * (x - p.puddle_x) + (y - p.puddle_y) * (y - p.puddle_y);
  if (pd2 < p.puddle_radius * p.puddle_radius) r *= 0.5;
  return std::clamp(r, 0.0, 1.0);
}

std::vector<double> PuddleReacher::reset_impl(Rng& rng) {
  x_ = rng.uniform(-0.9, -0.5);
  y_ = rng.uniform(-0.9, -0.5);
  vx_ = vy_ = 0.0;
  return {x_, y_, vx_, vy_};
}

std::pair<std::vector<double>, double> PuddleReacher::step_impl(std::span<const double> action) {
  const auto& p = params_;
  const double reward = reward_at(x_, y_);
  vx_ = std::clamp(vx_ + (p.force * action[0] - p.friction * vx_) * p.dt, -p.max_speed, p.max_speed);
  vy_ = std::clamp(vy_ + (p.force * action[1] - p.friction * vy_) * p.dt, -p.max_speed, p.max_speed);
  x_ += vx_ * p.dt;
  y_ += vy_ * p.dt;
  // Inelastic walls.
  if (x_ < -1.0 || x_ > 1.0) {
    x_ = std::clamp(x_, -1.0, 1.0);
    vx_ = 0.0;
  }
  if (y_ < -1.0 || y_ > 1.0) {
    y_ = std::clamp(y_, -1.0, 1.0);
    vy_ = 0.0;
  }
  return {{x_, y_, vx_, vy_}, reward};
}

// Factory and evaluation ---------------------------------------------------

std::unique_ptr<Env> make_env(const std::string& name, std::size_t episode_length) {
  if (episode_length == 0) throw ConfigError("episode_length must be positive");
  if (name == "pendulum") return std::make_unique<Pendulum>(PendulumParams{}, episode_length);
  if (name == "pendulum_sparse") {
    PendulumParams p;
    p.sparse = true;
    return std::make_unique<Pendulum>(p, episode_length);
  }
  if (name == "puddle_reacher") return std::make_unique<PuddleReacher>(PuddleParams{}, episode_length);
  throw ConfigError("unknown environment '" + name + "'");
}

std::vector<std::string> env_names() { return {"pendulum", "pendulum_sparse", "puddle_reacher"}; }

double evaluate_policy(const Env& env, const ActorNet& actor, std::size_t n_episodes, Rng& rng) {
  if (n_episodes == 0) return 0.0;
  auto local = env.clone();
  double total = 0.0;
  for (std::size_t ep = 0; ep < n_episodes; ++ep) {
    auto state = local->reset(rng);
    for (;;) {
      Tensor s({1, state.size()}, state);
      Tensor a = actor.act(s, rng, /*deterministic=*/true);
      auto res = local->step(a.data());
      total += res.reward;
      state = std::move(res.next_state);
      if (res.done_timeout) break;
    }
  }
  return total / static_cast<double>(n_episodes);
}

}  // namespace ofn
