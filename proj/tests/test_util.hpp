#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "ofnlab/autodiff.hpp"
#include "ofnlab/tensor.hpp"

namespace ofn::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Elementwise |a - f| / max(|a|, |f|, floor) over every gradient entry.
/// Central differences carry ~1e-10 of rounding noise, so entries that are
/// exactly zero are judged on the floor scale.
inline double max_relative_error(const GradientMap& analytic, const GradientMap& numeric,
                                 double floor = 1e-4) {
  double worst = 0.0;
  for (const auto& [name, g] : analytic) {
    const Tensor& f = numeric.at(name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double denom = std::max({std::abs(g[i]), std::abs(f[i]), floor});
      worst = std::max(worst, std::abs(g[i] - f[i]) / denom);
    }
  }
  return worst;
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Gradient of sum(build(inputs) * w) for a fixed random weighting w, both by
/// reverse mode and by central differences. Returns the max relative error.
inline double primitive_gradient_error(const Builder& build, const std::vector<Tensor>& inputs,
                                       Rng& rng, double h = 1e-5) {
  ParamMap params;
  for (std::size_t i = 0; i < inputs.size(); ++i) params.emplace("x" + std::to_string(i), inputs[i]);

  Tensor weight;
  {
    Tape probe;
    std::vector<Var> xs;
    for (const auto& t : inputs) xs.push_back(probe.constant(t));
    weight = random_tensor(build(probe, xs).value().shape(), rng, -1.0, 1.0);
  }
  auto loss = [&](Tape& tape, const std::vector<Var>& xs) {
    return sum(mul(build(tape, xs), tape.constant(weight)));
  };

  Tape tape;
  std::vector<Var> xs;
  for (const auto& [name, t] : params) xs.push_back(tape.parameter(name, t));
  const GradientMap analytic = tape.backward(loss(tape, xs));

  const GradientMap numeric = finite_difference_gradient(
      [&](const ParamMap& p) {
        Tape t;
        std::vector<Var> v;
        for (const auto& [name, x] : p) v.push_back(t.constant(x));
        return loss(t, v).value().item();
      },
      params, h);
  return max_relative_error(analytic, numeric);
}

inline Tensor away_from(Tensor t, double point, double margin, Rng& rng) {
  for (auto& v : t.data()) {
    while (std::abs(v - point) < margin) v = rng.uniform(-2.0, 2.0);
  }
  return t;
}

inline std::vector<std::size_t> random_shape(Rng& rng) {
  return {1 + rng.index(4), 1 + rng.index(5)};
}

struct PrimitiveCase {
  const char* name;
  int arity;
  testing::Builder build;
  std::function<Tensor(std::vector<std::size_t>, Rng&)> make = [](auto s, Rng& r) {
    return random_tensor(std::move(s), r);
  };
  bool same_shape = true;
};

inline std::vector<PrimitiveCase> elementwise_cases() {
  auto kinkless = [](double point) {
    return [point](std::vector<std::size_t> s, Rng& r) { return away_from(random_tensor(s, r), point, 1e-3, r); };
  };
  return {
      {"relu", 1, [](Tape&, const auto& x) { return relu(x[0]); }, kinkless(0.0)},
      {"elu", 1, [](Tape&, const auto& x) { return elu(x[0]); }},
      {"add", 2, [](Tape&, const auto& x) { return add(x[0], x[1]); }},
      {"sub", 2, [](Tape&, const auto& x) { return sub(x[0], x[1]); }},
      {"mul", 2, [](Tape&, const auto& x) { return mul(x[0], x[1]); }},
      {"scale", 1, [](Tape&, const auto& x) { return scale(x[0], -1.7); }},
      {"add_scalar", 1, [](Tape&, const auto& x) { return add_scalar(x[0], 0.3); }},
      {"tanh", 1, [](Tape&, const auto& x) { return tanh(x[0]); }},
      {"exp", 1, [](Tape&, const auto& x) { return exp(x[0]); }},
      {"square", 1, [](Tape&, const auto& x) { return square(x[0]); }},
      {"clamp", 1, [](Tape&, const auto& x) { return clamp(x[0], -1.0, 1.0); },
       [](std::vector<std::size_t> s, Rng& r) {
         return away_from(away_from(random_tensor(s, r), -1.0, 1e-3, r), 1.0, 1e-3, r);
       }},
      {"log1m_tanh_sq", 1, [](Tape&, const auto& x) { return log1m_tanh_sq(x[0]); }},
      {"minimum", 2, [](Tape&, const auto& x) { return minimum(x[0], x[1]); }},
      {"sum", 1, [](Tape&, const auto& x) { return sum(x[0]); }},
      {"mean", 1, [](Tape&, const auto& x) { return mean(x[0]); }},
      {"row_sum", 1, [](Tape&, const auto& x) { return row_sum(x[0]); }},
      {"row_l2_norm", 1, [](Tape&, const auto& x) { return row_l2_norm(x[0]); }},
      {"sum_squares", 1, [](Tape&, const auto& x) { return sum_squares(x[0]); }},
      {"unit_ball_project", 1, [](Tape&, const auto& x) { return unit_ball_project(x[0]); }},
      {"dropout", 1,
       [](Tape&, const auto& x) {
         Rng mask(99);
         return dropout(x[0], 0.3, mask, true);
       }},
  };
}


inline Tensor closed_form_jacobian(std::span<const double> x) {
  double n2 = 0.0;
  for (double v : x) n2 += v * v;
  const double n = std::sqrt(n2);
  const std::size_t d = x.size();
  Tensor j({d, d});
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) j(r, c) = (r == c ? 1.0 / n : 0.0) - x[r] * x[c] / (n * n2);
  }
  return j;
}

// Row r of J^T via one backward pass per output coordinate.
inline Tensor autodiff_jacobian(const Tensor& x_row) {
  const std::size_t d = x_row.cols();
  Tensor j({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    Tape tape;
    Var x = tape.parameter("x", x_row);
    Tensor e({1, d});
    e(0, i) = 1.0;
    const auto g = tape.backward(sum(mul(unit_ball_project(x), tape.constant(e))));
    for (std::size_t c = 0; c < d; ++c) j(i, c) = g.at("x")[c];
  }
  return j;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ofnlab-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& child = {}) const { return (child.empty() ? path_ : path_ / child).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace ofn::testing
