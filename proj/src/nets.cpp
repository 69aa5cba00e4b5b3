#include "ofnlab/nets.hpp"

#include <cmath>
#include <numbers>

#include "ofnlab/errors.hpp"

namespace ofn {

Linear::Linear(std::size_t in, std::size_t out) : weight({in, out}), bias({out}) {}

void Linear::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(weight.rows()));
  for (auto& w : weight.data()) w = rng.uniform(-bound, bound);
  for (auto& b : bias.data()) b = rng.uniform(-bound, bound);
}

Var Linear::apply(Tape& tape, Var x, const std::string& name, bool trainable) const {
  Var w = trainable ? tape.parameter(name + ".weight", weight) : tape.constant(weight);
  Var b = trainable ? tape.parameter(name + ".bias", bias) : tape.constant(bias);
  return linear(x, w, b);
}

namespace {

std::vector<Linear> make_stack(std::size_t input, const NetShape& shape) {
  if (shape.layers == 0 || shape.hidden == 0) {
    throw ConfigError("networks need at least one hidden layer of positive width");
  }
  std::vector<Linear> stack;
  stack.reserve(shape.layers);
  for (std::size_t i = 0; i < shape.layers; ++i) {
    stack.emplace_back(i == 0 ? input : shape.hidden, shape.hidden);
  }
  return stack;
}

void push_linear(std::vector<NamedParam>& out, const std::string& name, Linear& l) {
  out.push_back({name + ".weight", &l.weight});
  out.push_back({name + ".bias", &l.bias});
}

void load_into(const ParamMap& params, std::vector<NamedParam> slots) {
  for (auto& slot : slots) {
    auto it = params.find(slot.name);
    if (it == params.end()) throw ContractViolation("missing parameter '" + slot.name + "'");
    if (!it->second.same_shape(*slot.tensor)) {
      throw ContractViolation("parameter '" + slot.name + "' has shape " +
                              shape_string(it->second.shape()) + ", expected " +
                              shape_string(slot.tensor->shape()));
    }
    *slot.tensor = it->second;
  }
}

ParamMap to_map(const std::vector<NamedParam>& slots) {
  ParamMap out;
  for (const auto& s : slots) out.emplace(s.name, *s.tensor);
  return out;
}

}  // namespace

// CriticNet ----------------------------------------------------------------

CriticNet::CriticNet(std::string prefix, std::size_t state_dim, std::size_t action_dim,
                     NetShape shape, bool ofn, double dropout_rate)
    : prefix_(std::move(prefix)),
      state_dim_(state_dim),
      action_dim_(action_dim),
      shape_(shape),
      ofn_(ofn),
      dropout_rate_(dropout_rate),
      encoder_(make_stack(state_dim + action_dim, shape)),
      head_(shape.hidden, 1) {
  shape_.input_dim = state_dim + action_dim;
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
}

void CriticNet::initialize(Rng& rng) {
  for (auto& l : encoder_) l.initialize(rng);
  head_.initialize(rng);
}

std::string CriticNet::name(std::size_t layer, const char* field) const {
  return prefix_ + ".encoder.layer" + std::to_string(layer + 1) + field;
}

CriticNet::Output CriticNet::forward(Tape& tape, Var state, Var action, bool training, Rng* rng,
                                     bool trainable) const {
  if (state.value().cols() != state_dim_ || action.value().cols() != action_dim_) {
    throw ContractViolation("critic expects state dim " + std::to_string(state_dim_) +
                            " and action dim " + std::to_string(action_dim_) + ", got " +
                            shape_string(state.value().shape()) + " and " +
                            shape_string(action.value().shape()));
  }
  Var h = concat_cols(state, action);
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    h = activation(encoder_[i].apply(tape, h, name(i, ""), trainable), shape_.activation);
    if (training && dropout_rate_ > 0.0) {
      if (rng == nullptr) throw ContractViolation("dropout in training mode needs an rng");
      h = dropout(h, dropout_rate_, *rng, true);
    }
  }
  if (ofn_) h = unit_ball_project(h);
  Var q = head_.apply(tape, h, prefix_ + ".head", trainable);
  return {q, h};
}

Tensor CriticNet::q_values(const Tensor& state, const Tensor& action) const {
  Tape tape;
  auto out = forward(tape, tape.constant(state), tape.constant(action), false, nullptr, false);
  return out.q.value();
}

Tensor CriticNet::features(const Tensor& state, const Tensor& action) const {
  Tape tape;
  auto out = forward(tape, tape.constant(state), tape.constant(action), false, nullptr, false);
  return out.features.value();
}

std::vector<NamedParam> CriticNet::parameters() {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) push_linear(out, name(i, ""), encoder_[i]);
  push_linear(out, prefix_ + ".head", head_);
  return out;
}

ParamMap CriticNet::param_map() const {
  return to_map(const_cast<CriticNet*>(this)->parameters());
}

void CriticNet::load(const ParamMap& params) { load_into(params, parameters()); }

std::vector<double> CriticNet::layer_weight_norms() const {
  std::vector<double> norms;
  for (const auto& l : encoder_) norms.push_back(std::sqrt(l.weight.squared_norm()));
  norms.push_back(std::sqrt(head_.weight.squared_norm()));
  return norms;
}

// ActorNet -----------------------------------------------------------------

ActorNet::ActorNet(std::string prefix, std::size_t state_dim, std::size_t action_dim,
                   NetShape shape, double log_std_min, double log_std_max)
    : prefix_(std::move(prefix)),
      state_dim_(state_dim),
      action_dim_(action_dim),
      shape_(shape),
      log_std_min_(log_std_min),
      log_std_max_(log_std_max),
      trunk_(make_stack(state_dim, shape)),
      mean_head_(shape.hidden, action_dim),
      log_std_head_(shape.hidden, action_dim) {
  shape_.input_dim = state_dim;
  if (!(log_std_min < log_std_max)) throw ConfigError("log std bounds must satisfy min < max");
}

void ActorNet::initialize(Rng& rng) {
  for (auto& l : trunk_) l.initialize(rng);
  mean_head_.initialize(rng);
  log_std_head_.initialize(rng);
}

ActorNet::Sample ActorNet::sample(Tape& tape, Var state, const std::optional<Tensor>& noise,
                                  bool trainable) const {
  if (state.value().cols() != state_dim_) {
    throw ContractViolation("actor expects state dim " + std::to_string(state_dim_) + ", got " +
                            shape_string(state.value().shape()));
  }
  Var h = state;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    const std::string n = prefix_ + ".trunk.layer" + std::to_string(i + 1);
    h = activation(trunk_[i].apply(tape, h, n, trainable), shape_.activation);
  }
  Var mean = mean_head_.apply(tape, h, prefix_ + ".mean", trainable);
  Var log_std = clamp(log_std_head_.apply(tape, h, prefix_ + ".log_std", trainable),
                      log_std_min_, log_std_max_);
  if (!noise) return {tanh(mean), std::nullopt, mean, log_std};

  const Tensor& z = *noise;
  if (!z.same_shape(mean.value())) {
    throw ContractViolation("actor noise shape " + shape_string(z.shape()) + " vs mean " +
                            shape_string(mean.value().shape()));
  }
  // log N(u; mu, sigma) = -z^2/2 - log sigma - log(2 pi)/2 with z fixed by the
  // reparameterization, so only the log sigma term carries a gradient.
  Tensor z_term(z.shape());
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < z.size(); ++i) z_term[i] = -0.5 * z[i] * z[i] - half_log_2pi;

  Var u = add(mean, mul(exp(log_std), tape.constant(z)));
  Var action = tanh(u);
  Var gaussian = row_sum(sub(tape.constant(std::move(z_term)), log_std));
  Var log_prob = sub(gaussian, row_sum(log1m_tanh_sq(u)));
  return {action, log_prob, mean, log_std};
}

ActorNet::Sample ActorNet::sample(Tape& tape, Var state, Rng& rng, bool trainable) const {
  Tensor z({state.value().rows(), action_dim_});
  for (auto& v : z.data()) v = rng.normal();
  return sample(tape, state, std::optional<Tensor>(std::move(z)), trainable);
}

Tensor ActorNet::act(const Tensor& state, Rng& rng, bool deterministic) const {
  Tape tape;
  Var s = tape.constant(state);
  auto out = deterministic ? sample(tape, s, std::nullopt, false) : sample(tape, s, rng, false);
  return out.action.value();
}

std::vector<NamedParam> ActorNet::parameters() {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    push_linear(out, prefix_ + ".trunk.layer" + std::to_string(i + 1), trunk_[i]);
  }
  push_linear(out, prefix_ + ".mean", mean_head_);
  push_linear(out, prefix_ + ".log_std", log_std_head_);
  return out;
}

ParamMap ActorNet::param_map() const { return to_map(const_cast<ActorNet*>(this)->parameters()); }

void ActorNet::load(const ParamMap& params) { load_into(params, parameters()); }

// Target maintenance -------------------------------------------------------

namespace {

template <class F>
void zip_params(CriticNet& target, const CriticNet& online, F f) {
  auto t = target.parameters();
  auto o = const_cast<CriticNet&>(online).parameters();
  if (t.size() != o.size()) throw ContractViolation("target and online critics differ in depth");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!t[i].tensor->same_shape(*o[i].tensor)) {
      throw ContractViolation("target/online shape mismatch at '" + t[i].name + "'");
    }
    f(*t[i].tensor, *o[i].tensor);
  }
}

}  // namespace

void polyak_update(CriticNet& target, const CriticNet& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ContractViolation("polyak tau must be in (0, 1]");
  zip_params(target, online, [tau](Tensor& t, const Tensor& o) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - tau) * t[i] + tau * o[i];
  });
}

void hard_copy(CriticNet& target, const CriticNet& online) {
  zip_params(target, online, [](Tensor& t, const Tensor& o) { t.storage() = o.storage(); });
}

}  // namespace ofn
