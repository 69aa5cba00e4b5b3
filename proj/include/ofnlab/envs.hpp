#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ofnlab/rng.hpp"

namespace ofn {

class ActorNet;

struct EnvSpec {
  std::string name;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t episode_length = 200;
  double reward_min = 0.0;
  double reward_max = 1.0;
  std::map<std::string, double> physics;
};

struct StepResult {
  std::vector<double> next_state;
  double reward = 0.0;
  /// Set when the episode hit its time limit. Not a true terminal state.
  bool done_timeout = false;
};

/// Deterministic continuous-control task with rewards in [0, 1]. Actions are
/// clipped to [-1, 1] before the dynamics see them.
class Env {
 public:
  virtual ~Env() = default;

  const EnvSpec& spec() const { return spec_; }
  std::size_t step_count() const { return steps_; }

  std::vector<double> reset(Rng& rng);
  StepResult step(std::span<const double> action);

  virtual std::unique_ptr<Env> clone() const = 0;

 protected:
  explicit Env(EnvSpec spec) : spec_(std::move(spec)) {}

  virtual std::vector<double> reset_impl(Rng& rng) = 0;
  /// `action` is already clipped. Returns (observation after the step, reward).
  virtual std::pair<std::vector<double>, double> step_impl(std::span<const double> action) = 0;

  EnvSpec spec_;

 private:
  std::size_t steps_ = 0;
};

struct PendulumParams {
  double gravity = 10.0;
  double mass = 1.0;
  double length = 1.0;
  double dt = 0.05;
  /// Semi-implicit Euler sub-steps per env step; keeps the energy error of
  /// the free pendulum well under 1% per episode.
  int substeps = 40;
  double max_torque = 2.0;
  double max_speed = 8.0;
  double damping = 0.0;
  bool sparse = false;
  double sparse_threshold = 0.15;
};

/// Swing-up pendulum. theta = 0 is upright; observation (cos, sin, theta_dot).
/// Dense reward (1 + cos theta) / 2, sparse reward 1 iff |theta| < threshold.
/// The reward is computed on the state the action is applied in.
class Pendulum final : public Env {
 public:
  explicit Pendulum(PendulumParams params = {}, std::size_t episode_length = 200);

  std::unique_ptr<Env> clone() const override { return std::make_unique<Pendulum>(*this); }

  void set_state(double theta, double theta_dot);
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  /// Rod pendulum energy: I theta_dot^2 / 2 + m g (l/2) cos theta.
  double mechanical_energy() const;
  double reward_at(double theta) const;
  const PendulumParams& params() const { return params_; }

 protected:
  std::vector<double> reset_impl(Rng& rng) override;
  std::pair<std::vector<double>, double> step_impl(std::span<const double> action) override;

 private:
  std::vector<double> observe() const;

  PendulumParams params_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

struct PuddleParams {
  double dt = 0.05;
  double force = 2.0;
  double friction = 0.5;
  double max_speed = 2.0;
  double goal_x = 0.6, goal_y = 0.6;
  double puddle_x = 0.0, puddle_y = 0.0, puddle_radius = 0.35;
  double reward_width = 0.25;
};

/// 2-D point mass in [-1, 1]^2 reaching a goal past a puddle that halves the
/// reward. Observation (x, y, vx, vy); action is a force.
class PuddleReacher final : public Env {
 public:
  explicit PuddleReacher(PuddleParams params = {}, std::size_t episode_length = 200);

  std::unique_ptr<Env> clone() const override { return std::make_unique<PuddleReacher>(*this); }

  double reward_at(double x, double y) const;

 protected:
  std::vector<double> reset_impl(Rng& rng) override;
  std::pair<std::vector<double>, double> step_impl(std::span<const double> action) override;

 private:
  PuddleParams params_;
  double x_ = 0, y_ = 0, vx_ = 0, vy_ = 0;
};

/// "pendulum", "pendulum_sparse" or "puddle_reacher".
std::unique_ptr<Env> make_env(const std::string& name, std::size_t episode_length = 200);
std::vector<std::string> env_names();

/// Mean undiscounted return of the deterministic policy over fresh episodes of
/// a clone of `env`. Neither `env` nor `actor` is modified.
double evaluate_policy(const Env& env, const ActorNet& actor, std::size_t n_episodes, Rng& rng);

}  // namespace ofn
