#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "ofnlab/tensor.hpp"

namespace ofn {

enum class OptimizerKind { adam, rmsprop, sgd_momentum };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerHyper {
  double lr = 4e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
  /// Decoupled decay p <- p - lr * wd * p applied before the moment update.
  /// Zero unless the decoupled variant is selected; the default L2 penalty
  /// lives in the loss instead.
  double weight_decay = 0.0;
  /// Adam only. Disabling it (with beta1 = 0) reduces Adam to RMSProp.
  bool bias_correction = true;
};

/// Per-parameter moment accumulators plus step counter. A value type: copying
/// a state snapshots it.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  std::uint64_t step_count = 0;
  ParamMap m;  ///< first moment (adam) or momentum buffer (sgd_momentum)
  ParamMap v;  ///< second moment (adam, rmsprop)
  OptimizerHyper hyper;

  OptimizerState() = default;
  OptimizerState(OptimizerKind k, OptimizerHyper h) : kind(k), hyper(h) {}

  /// Drops all moments and the step counter; kind and hyperparameters stay.
  void reset();
};

struct MomentNorms {
  double m_norm = 0.0;
  double v_norm = 0.0;
};

/// Every gradient must be finite; otherwise DivergenceError naming the first
/// offending parameter is thrown and neither params nor state are touched.
void adam_step(OptimizerState& state, const GradientMap& grads, std::span<const NamedParam> params);
void rmsprop_step(OptimizerState& state, const GradientMap& grads,
                  std::span<const NamedParam> params);
void sgd_momentum_step(OptimizerState& state, const GradientMap& grads,
                       std::span<const NamedParam> params);
/// Dispatches on state.kind.
void optimizer_step(OptimizerState& state, const GradientMap& grads,
                    std::span<const NamedParam> params);

/// Global L2 norms over all first- and second-moment tensors.
MomentNorms moment_norms(const OptimizerState& state);

}  // namespace ofn
