#include "ofnlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ofnlab/errors.hpp"

namespace ofn {

namespace {

nlohmann::json real(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

double read_real(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

nlohmann::json to_json(const MetricsRecord& r) {
  nlohmann::json norms = nlohmann::json::array();
  for (double n : r.layer_norms) norms.push_back(real(n));
  // nlohmann::ordered_json would keep insertion order; a plain json object
  // sorts keys, which is equally deterministic.
  return nlohmann::json{{"env_step", r.env_step},
                        {"grad_step", r.grad_step},
                        {"eval_return", r.eval_return ? real(*r.eval_return) : nlohmann::json()},
                        {"mean_q_in_dist", real(r.mean_q_in_dist)},
                        {"critic_loss", real(r.critic_loss)},
                        {"actor_loss", real(r.actor_loss)},
                        {"alpha", real(r.alpha)},
                        {"adam_m_norm", real(r.adam_m_norm)},
                        {"adam_v_norm", real(r.adam_v_norm)},
                        {"srank", r.srank},
                        {"layer_norms", norms},
                        {"diverged", r.diverged},
                        {"seed", r.seed},
                        {"wallclock_s", real(r.wallclock_s)}};
}

MetricsRecord metrics_from_json(const nlohmann::json& j) {
  MetricsRecord r;
  r.env_step = j.at("env_step").get<std::uint64_t>();
  r.grad_step = j.at("grad_step").get<std::uint64_t>();
  if (!j.at("eval_return").is_null()) r.eval_return = j.at("eval_return").get<double>();
  r.mean_q_in_dist = read_real(j, "mean_q_in_dist");
  r.critic_loss = read_real(j, "critic_loss");
  r.actor_loss = read_real(j, "actor_loss");
  r.alpha = read_real(j, "alpha");
  r.adam_m_norm = read_real(j, "adam_m_norm");
  r.adam_v_norm = read_real(j, "adam_v_norm");
  r.srank = j.at("srank").get<std::size_t>();
  for (const auto& n : j.at("layer_norms")) {
    r.layer_norms.push_back(n.is_null() ? std::numeric_limits<double>::quiet_NaN() : n.get<double>());
  }
  r.diverged = j.at("diverged").get<bool>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.wallclock_s = read_real(j, "wallclock_s");
  return r;
}

std::vector<double> symmetric_eigenvalues(RowMatrix a) {
  const Eigen::Index n = a.rows();
  if (n != a.cols()) throw ContractViolation("symmetric_eigenvalues needs a square matrix");
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      diag += a(i, i) * a(i, i);
      for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    }
    if (off <= 1e-30 * diag || off == 0.0) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle that annihilates a(p, q) (Golub & Van Loan 8.5.2).
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(eig.begin(), eig.end(), std::greater<>());
  return eig;
}

std::vector<double> singular_values(const Tensor& m) {
  const auto x = m.mat();
  RowMatrix gram = x.rows() >= x.cols() ? RowMatrix(x.transpose() * x) : RowMatrix(x * x.transpose());
  auto eig = symmetric_eigenvalues(std::move(gram));
  for (auto& e : eig) e = std::sqrt(std::max(e, 0.0));
  return eig;
}

std::size_t effective_rank_from_singular_values(std::span<const double> sigma, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ContractViolation("srank delta must be in (0, 1)");
  double total = 0.0;
  for (double s : sigma) total += s;
  if (total <= 0.0) return 0;
  double running = 0.0;
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    running += sigma[k];
    if (running / total >= 1.0 - delta) return k + 1;
  }
  return sigma.size();
}

std::size_t effective_rank(const Tensor& features, double delta) {
  if (features.rank() != 2) throw ContractViolation("effective_rank needs an [N x d] matrix");
  const auto sigma = singular_values(features);
  return effective_rank_from_singular_values(sigma, delta);
}

bool divergence_flag(double mean_q, double gamma, double r_max, double kappa) {
  if (!(gamma < 1.0)) throw ContractViolation("divergence_flag needs gamma < 1");
  // NaN Q counts as diverged.
  return !(mean_q <= kappa * r_max / (1.0 - gamma));
}

MetricsRecord snapshot(const Agent& agent, const ReplayBuffer& buffer, std::uint64_t env_step,
                       const MetricsDelta& last, Rng& probe_rng, const SnapshotSettings& settings) {
  MetricsRecord r;
  r.env_step = env_step;
  r.grad_step = agent.grad_steps();
  r.critic_loss = last.critic_loss;
  r.actor_loss = last.actor_loss;
  r.alpha = agent.alpha();
  const auto norms = moment_norms(agent.critic_optimizer());
  r.adam_m_norm = norms.m_norm;
  r.adam_v_norm = norms.v_norm;
  const CriticNet& critic = agent.critics().front();
  r.layer_norms = critic.layer_weight_norms();
  if (!buffer.empty()) {
    Batch probe = buffer.sample(agent.config().batch_size, probe_rng);
    r.mean_q_in_dist = critic.q_values(probe.s, probe.a).mat().mean();
    Batch rank_probe = buffer.sample(settings.srank_probe_factor * critic.feature_dim(), probe_rng);
    const Tensor phi = critic.features(rank_probe.s, rank_probe.a);
    r.srank = phi.all_finite() ? effective_rank(phi, settings.srank_delta) : 0;
  }
  r.diverged = divergence_flag(r.mean_q_in_dist, agent.config().gamma, settings.r_max, settings.kappa);
  return r;
}

}  // namespace ofn
