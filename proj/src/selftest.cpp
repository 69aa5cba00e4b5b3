#include "ofnlab/selftest.hpp"

#include <cmath>
#include <functional>
#include <ostream>

#include "ofnlab/aggregate.hpp"
#include "ofnlab/autodiff.hpp"
#include "ofnlab/config.hpp"
#include "ofnlab/diagnostics.hpp"
#include "ofnlab/nets.hpp"
#include "ofnlab/optim.hpp"

namespace ofn {

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

bool critic_gradient_matches() {
  Rng rng(11);
  CriticNet critic("critic.0", 3, 1, {0, 8, 2, Activation::elu}, true, 0.0);
  critic.initialize(rng);
  const Tensor s = random_tensor({5, 3}, rng);
  const Tensor a = random_tensor({5, 1}, rng);
  Tape tape;
  auto out = critic.forward(tape, tape.constant(s), tape.constant(a), false, nullptr, true);
  const auto grads = tape.backward(sum_squares(out.q));
  const auto fd = finite_difference_gradient(
      [&](const ParamMap& p) {
        CriticNet c = critic;
        c.load(p);
        return c.q_values(s, a).squared_norm();
      },
      critic.param_map(), 1e-5);
  for (const auto& [name, g] : grads) {
    const Tensor& f = fd.at(name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double scale = std::max({std::abs(g[i]), std::abs(f[i]), 1e-6});
      if (std::abs(g[i] - f[i]) / scale > 1e-5) return false;
    }
  }
  return true;
}

bool unit_ball_norms() {
  Rng rng(12);
  Tape tape;
  Var y = unit_ball_project(tape.constant(random_tensor({16, 32}, rng)));
  const auto m = y.value().mat();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (std::abs(m.row(r).norm() - 1.0) > 1e-9) return false;
  }
  return true;
}

bool adam_first_step() {
  Tensor x = Tensor::scalar(1.0);
  NamedParam p{"x", &x};
  OptimizerState st(OptimizerKind::adam, {});
  adam_step(st, {{"x", Tensor::scalar(0.3)}}, std::span<const NamedParam>(&p, 1));
  return std::abs((1.0 - x.item()) - 4e-3) < 1e-9;
}

bool polyak_fixed_point() {
  Rng rng(13);
  CriticNet online("critic.0", 2, 1, {0, 4, 2, Activation::relu}, false, 0.0);
  online.initialize(rng);
  CriticNet target = online;
  polyak_update(target, online, 0.3);
  const auto t = target.param_map();
  for (const auto& [name, o] : online.param_map()) {
    for (std::size_t i = 0; i < o.size(); ++i) {
      if (std::abs(t.at(name)[i] - o[i]) > 1e-15) return false;
    }
  }
  return true;
}

bool srank_identity() {
  Tensor eye({100, 100});
  for (std::size_t i = 0; i < 100; ++i) eye(i, i) = 1.0;
  return effective_rank(eye, 0.01) == 99;
}

bool iqm_reference() {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
  return interquartile_mean(x) == 4.5;
}

bool config_round_trip() {
  RunConfig c;
  c.agent.critic_lr = 0.1 + 0.2;
  c.agent.ofn = true;
  c.experiment.name = "self test";
  c.prime.optimizer = OptimizerKind::sgd_momentum;
  return parse_config(serialize_config(c)) == c;
}

}  // namespace

int run_selftest(std::ostream& out) {
  const std::pair<const char*, std::function<bool()>> checks[] = {
      {"critic gradient vs finite differences", critic_gradient_matches},
      {"unit-ball projection norms", unit_ball_norms},
      {"adam first step", adam_first_step},
      {"polyak fixed point", polyak_fixed_point},
      {"srank of identity", srank_identity},
      {"iqm of 1..8", iqm_reference},
      {"config round trip", config_round_trip},
  };
  int failures = 0;
  for (const auto& [name, check] : checks) {
    bool ok = false;
    try {
      ok = check();
    } catch (const std::exception& e) {
      out << "error in " << name << ": " << e.what() << '\n';
    }
    out << (ok ? "ok   " : "FAIL ") << name << '\n';
    failures += ok ? 0 : 1;
  }
  return failures;
}

}  // namespace ofn
