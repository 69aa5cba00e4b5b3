#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ofnlab/autodiff.hpp"
#include "ofnlab/rng.hpp"
#include "ofnlab/tensor.hpp"

namespace ofn {

/// Affine layer; weight is [in x out], bias is [out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out);

  /// U[-1/sqrt(fan_in), 1/sqrt(fan_in)] for weight and bias.
  void initialize(Rng& rng);
  Var apply(Tape& tape, Var x, const std::string& name, bool trainable) const;
};

struct NetShape {
  std::size_t input_dim = 0;
  std::size_t hidden = 256;
  std::size_t layers = 2;
  Activation activation = Activation::relu;
};

/// Q(s, a) = phi(s, a) w, with phi optionally projected onto the unit sphere.
class CriticNet {
 public:
  struct Output {
    Var q;         ///< [B x 1]
    Var features;  ///< [B x hidden], what the head sees
  };

  CriticNet() = default;
  CriticNet(std::string prefix, std::size_t state_dim, std::size_t action_dim, NetShape shape,
            bool ofn, double dropout_rate);

  void initialize(Rng& rng);

  /// `trainable` makes the weights named parameter leaves; otherwise they are
  /// constants and gradients flow only to the inputs. `rng` is needed only
  /// when training with dropout.
  Output forward(Tape& tape, Var state, Var action, bool training, Rng* rng,
                 bool trainable) const;

  /// Gradient-free evaluation.
  Tensor q_values(const Tensor& state, const Tensor& action) const;
  Tensor features(const Tensor& state, const Tensor& action) const;

  std::vector<NamedParam> parameters();
  ParamMap param_map() const;
  void load(const ParamMap& params);

  /// Frobenius norms [layer1, ..., layerN, head].
  std::vector<double> layer_weight_norms() const;

  const std::string& prefix() const { return prefix_; }
  bool ofn() const { return ofn_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t feature_dim() const { return shape_.hidden; }

  std::vector<Linear>& encoder() { return encoder_; }
  const std::vector<Linear>& encoder() const { return encoder_; }
  Linear& head() { return head_; }
  const Linear& head() const { return head_; }

 private:
  std::string name(std::size_t layer, const char* field) const;

  std::string prefix_;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  NetShape shape_;
  bool ofn_ = false;
  double dropout_rate_ = 0.0;
  std::vector<Linear> encoder_;
  Linear head_;
};

/// Tanh-squashed diagonal Gaussian policy.
class ActorNet {
 public:
  struct Sample {
    Var action;                   ///< [B x action_dim], in (-1, 1)
    std::optional<Var> log_prob;  ///< [B x 1], stochastic mode only
    Var mean;
    Var log_std;
  };

  ActorNet() = default;
  ActorNet(std::string prefix, std::size_t state_dim, std::size_t action_dim, NetShape shape,
           double log_std_min, double log_std_max);

  void initialize(Rng& rng);

  /// Reparameterized sample a = tanh(mu + sigma * noise) with the
  /// change-of-variables corrected log-density. `noise` is [B x action_dim];
  /// pass std::nullopt for the deterministic action tanh(mu).
  Sample sample(Tape& tape, Var state, const std::optional<Tensor>& noise, bool trainable) const;

  /// Draws the noise from `rng`.
  Sample sample(Tape& tape, Var state, Rng& rng, bool trainable) const;

  /// Gradient-free action for environment interaction.
  Tensor act(const Tensor& state, Rng& rng, bool deterministic) const;

  std::vector<NamedParam> parameters();
  ParamMap param_map() const;
  void load(const ParamMap& params);

  std::size_t action_dim() const { return action_dim_; }
  std::size_t state_dim() const { return state_dim_; }
  double log_std_min() const { return log_std_min_; }
  double log_std_max() const { return log_std_max_; }

 private:
  std::string prefix_;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  NetShape shape_;
  double log_std_min_ = -10.0;
  double log_std_max_ = 2.0;
  std::vector<Linear> trunk_;
  Linear mean_head_;
  Linear log_std_head_;
};

/// target <- (1 - tau) target + tau online, for every parameter. 0 < tau <= 1.
void polyak_update(CriticNet& target, const CriticNet& online, double tau);

/// Copies parameter values from `online` into `target` (same architecture).
void hard_copy(CriticNet& target, const CriticNet& online);

}  // namespace ofn
