#include "ofnlab/optim.hpp"

#include <cmath>

#include "ofnlab/errors.hpp"

namespace ofn {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  if (name == "sgd_momentum") return OptimizerKind::sgd_momentum;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam, rmsprop or sgd_momentum)");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rmsprop: return "rmsprop";
    case OptimizerKind::sgd_momentum: return "sgd_momentum";
  }
  return "adam";
}

void OptimizerState::reset() {
  step_count = 0;
  m.clear();
  v.clear();
}

namespace {

const Tensor& checked_grad(const GradientMap& grads, const NamedParam& p) {
  auto it = grads.find(p.name);
  if (it == grads.end()) throw ContractViolation("no gradient for parameter '" + p.name + "'");
  if (!it->second.same_shape(*p.tensor)) {
    throw ContractViolation("gradient shape mismatch for '" + p.name + "'");
  }
  return it->second;
}

void require_finite(const GradientMap& grads, std::span<const NamedParam> params) {
  for (const auto& p : params) {
    if (!checked_grad(grads, p).all_finite()) {
      throw DivergenceError(p.name, "non-finite gradient for parameter '" + p.name + "'");
    }
  }
}

Tensor& slot(ParamMap& moments, const NamedParam& p) {
  auto it = moments.find(p.name);
  if (it == moments.end()) it = moments.emplace(p.name, Tensor(p.tensor->shape(), 0.0)).first;
  return it->second;
}

void require_kind(const OptimizerState& s, OptimizerKind k) {
  if (s.kind != k) {
    throw ContractViolation("optimizer state is " + to_string(s.kind) + ", step requested " +
                            to_string(k));
  }
}

void decoupled_decay(const OptimizerHyper& h, Tensor& p) {
  if (h.weight_decay != 0.0) p.mat() *= (1.0 - h.lr * h.weight_decay);
}

}  // namespace

void adam_step(OptimizerState& state, const GradientMap& grads, std::span<const NamedParam> params) {
  require_kind(state, OptimizerKind::adam);
  require_finite(grads, params);
  const auto& h = state.hyper;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = h.bias_correction ? 1.0 - std::pow(h.beta1, t) : 1.0;
  const double c2 = h.bias_correction ? 1.0 - std::pow(h.beta2, t) : 1.0;
  for (const auto& p : params) {
    const Tensor& g = checked_grad(grads, p);
    Tensor& m = slot(state.m, p);
    Tensor& v = slot(state.v, p);
    Tensor& w = *p.tensor;
    decoupled_decay(h, w);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

void rmsprop_step(OptimizerState& state, const GradientMap& grads,
                  std::span<const NamedParam> params) {
  require_kind(state, OptimizerKind::rmsprop);
  require_finite(grads, params);
  const auto& h = state.hyper;
  ++state.step_count;
  for (const auto& p : params) {
    const Tensor& g = checked_grad(grads, p);
    Tensor& v = slot(state.v, p);
    Tensor& w = *p.tensor;
    decoupled_decay(h, w);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      // Same expression shape as adam_step so beta1 = 0 without bias
      // correction reproduces this update bit for bit.
      const double m_hat = g[i] / 1.0;
      const double v_hat = v[i] / 1.0;
      w[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

void sgd_momentum_step(OptimizerState& state, const GradientMap& grads,
                       std::span<const NamedParam> params) {
  require_kind(state, OptimizerKind::sgd_momentum);
  require_finite(grads, params);
  const auto& h = state.hyper;
  ++state.step_count;
  for (const auto& p : params) {
    const Tensor& g = checked_grad(grads, p);
    Tensor& m = slot(state.m, p);
    Tensor& w = *p.tensor;
    decoupled_decay(h, w);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = h.momentum * m[i] + g[i];
      w[i] -= h.lr * m[i];
    }
  }
}

void optimizer_step(OptimizerState& state, const GradientMap& grads,
                    std::span<const NamedParam> params) {
  switch (state.kind) {
    case OptimizerKind::adam: adam_step(state, grads, params); break;
    case OptimizerKind::rmsprop: rmsprop_step(state, grads, params); break;
    case OptimizerKind::sgd_momentum: sgd_momentum_step(state, grads, params); break;
  }
}

MomentNorms moment_norms(const OptimizerState& state) {
  double sm = 0.0, sv = 0.0;
  for (const auto& [_, t] : state.m) sm += t.squared_norm();
  for (const auto& [_, t] : state.v) sv += t.squared_norm();
  return {std::sqrt(sm), std::sqrt(sv)};
}

}  // namespace ofn
