#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ofnlab/rng.hpp"
#include "ofnlab/sac.hpp"
#include "ofnlab/tensor.hpp"

namespace ofn {

/// One line of metrics.jsonl.
struct MetricsRecord {
  std::uint64_t env_step = 0;
  std::uint64_t grad_step = 0;
  std::optional<double> eval_return;
  double mean_q_in_dist = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double adam_m_norm = 0.0;
  double adam_v_norm = 0.0;
  std::size_t srank = 0;
  std::vector<double> layer_norms;
  bool diverged = false;
  std::uint64_t seed = 0;
  double wallclock_s = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

/// Non-finite reals are written as null and read back as NaN.
nlohmann::json to_json(const MetricsRecord& r);
MetricsRecord metrics_from_json(const nlohmann::json& j);

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
std::vector<double> symmetric_eigenvalues(RowMatrix a);

/// Singular values of `m` via the eigenvalues of the smaller Gram matrix,
/// descending.
std::vector<double> singular_values(const Tensor& m);

/// Smallest k with sum_{i<=k} sigma_i / sum_i sigma_i >= 1 - delta, for
/// singular values sorted descending. Zero if all of them vanish.
std::size_t effective_rank_from_singular_values(std::span<const double> sigma, double delta);

/// srank_delta of a feature matrix [N x d]. 0 for an all-zero matrix.
std::size_t effective_rank(const Tensor& features, double delta);

/// mean_q > kappa * r_max / (1 - gamma).
bool divergence_flag(double mean_q, double gamma, double r_max, double kappa);

struct SnapshotSettings {
  double srank_delta = 0.01;
  double kappa = 2.0;
  double r_max = 1.0;
  /// Multiple of the feature dimension used as the srank probe size.
  std::size_t srank_probe_factor = 10;
};

/// Probes critic 1 on fresh uniform samples from the buffer (mean Q on a
/// batch_size probe, srank on srank_probe_factor * feature_dim samples) and
/// packages it with the critic optimizer moments and layer norms. `last`
/// supplies the losses and temperature of the most recent update.
MetricsRecord snapshot(const Agent& agent, const ReplayBuffer& buffer, std::uint64_t env_step,
                       const MetricsDelta& last, Rng& probe_rng, const SnapshotSettings& settings);

}  // namespace ofn
