#include "ofnlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ofnlab/errors.hpp"

namespace ofn {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(std::string name, Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true, std::move(name)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (auto id : inputs) needs = needs || nodes_[id].requires_grad;
  Node node{std::move(value), {}, std::move(inputs), {}, needs, {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

GradientMap Tape::backward(Var root) {
  if (&root.tape() != this) throw ContractViolation("backward root belongs to another tape");
  if (root.value().size() != 1) {
    throw ContractViolation("backward root must be a scalar, got shape " +
                            shape_string(root.value().shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(root.id())[0] = 1.0;

  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }

  GradientMap grads;
  for (auto& n : nodes_) {
    if (n.param_name.empty()) continue;
    Tensor g = n.grad.empty() ? Tensor(n.value.shape(), 0.0) : n.grad;
    auto [it, inserted] = grads.try_emplace(n.param_name, g);
    if (!inserted) {
      if (!it->second.same_shape(g)) {
        throw ContractViolation("parameter '" + n.param_name + "' used with two shapes");
      }
      it->second.mat() += g.mat();
    }
  }
  return grads;
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "elu") return Activation::elu;
  throw ConfigError("unknown activation '" + name + "' (expected relu or elu)");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "elu"; }

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw ContractViolation(std::string(op) + ": shape mismatch " +
                            shape_string(a.value().shape()) + " vs " +
                            shape_string(b.value().shape()));
  }
}

// Elementwise unary op with derivative computed from (input, output).
template <class F, class D>
Var unary(Var x, F forward, D derivative) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  const auto xid = x.id();
  return x.tape().record(std::move(out), {xid}, [xid, derivative](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& in = t.value(xid);
    const Tensor& out = t.value(self);
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * derivative(in[i], out[i]);
  });
}

}  // namespace

Var linear(Var input, Var weight, Var bias) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  if (x.rank() != 2 || w.rank() != 2 || x.cols() != w.rows() || b.size() != w.cols()) {
    throw ContractViolation("linear: cannot apply weight " + shape_string(w.shape()) +
                            " and bias " + shape_string(b.shape()) + " to input " +
                            shape_string(x.shape()));
  }
  Tensor out({x.rows(), w.cols()});
  auto o = out.mat();
  o.noalias() = x.mat() * w.mat();
  o.rowwise() += b.mat().row(0);

  const auto xi = input.id(), wi = weight.id(), bi = bias.id();
  return input.tape().record(std::move(out), {xi, wi, bi}, [xi, wi, bi](Tape& t, std::size_t self) {
    const auto g = t.grad(self).mat();
    if (t.requires_grad(xi)) t.grad_buffer(xi).mat().noalias() += g * t.value(wi).mat().transpose();
    if (t.requires_grad(wi)) t.grad_buffer(wi).mat().noalias() += t.value(xi).mat().transpose() * g;
    if (t.requires_grad(bi)) t.grad_buffer(bi).mat().row(0) += g.colwise().sum();
  });
}

Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Var elu(Var x) {
  return unary(
      x, [](double v) { return v >= 0.0 ? v : std::expm1(v); },
      [](double in, double out) { return in >= 0.0 ? 1.0 : out + 1.0; });
}

Var activation(Var x, Activation kind) { return kind == Activation::relu ? relu(x) : elu(x); }

Var unit_ball_project(Var x, double eps) {
  const Tensor& in = x.value();
  if (in.rank() != 2) throw ContractViolation("unit_ball_project expects a [B x d] batch");
  const std::size_t rows = in.rows(), cols = in.cols();
  Tensor out(in.shape());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double n = in.mat().row(static_cast<Eigen::Index>(r)).norm();
    norms[r] = n;
    const double denom = std::max(n, eps);
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = in(r, c) / denom;
  }
  const auto xid = x.id();
  return x.tape().record(
      std::move(out), {xid}, [xid, eps, norms = std::move(norms)](Tape& t, std::size_t self) {
        // J = I/n - x x^T / n^3 is symmetric, so J^T g = g/n - x (x.g)/n^3.
        const auto g = t.grad(self).mat();
        const auto in = t.value(xid).mat();
        auto gx = t.grad_buffer(xid).mat();
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double n = norms[static_cast<std::size_t>(r)];
          if (n < eps) {
            gx.row(r) += g.row(r) / eps;
            continue;
          }
          const double xg = in.row(r).dot(g.row(r));
          gx.row(r) += g.row(r) / n - in.row(r) * (xg / (n * n * n));
        }
      });
}

Var dropout(Var x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const Tensor& in = x.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(in.shape());
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    mask[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
    out[i] = in[i] * mask[i];
  }
  const auto xid = x.id();
  return x.tape().record(std::move(out), {xid},
                         [xid, mask = std::move(mask)](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           Tensor& gx = t.grad_buffer(xid);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                         });
}

Var concat_cols(Var a, Var b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.rows() != tb.rows()) {
    throw ContractViolation("concat_cols: row mismatch " + shape_string(ta.shape()) + " vs " +
                            shape_string(tb.shape()));
  }
  const auto na = static_cast<Eigen::Index>(ta.cols());
  const auto nb = static_cast<Eigen::Index>(tb.cols());
  Tensor out({ta.rows(), ta.cols() + tb.cols()});
  out.mat().leftCols(na) = ta.mat();
  out.mat().rightCols(nb) = tb.mat();
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi, na, nb](Tape& t, std::size_t self) {
    const auto g = t.grad(self).mat();
    if (t.requires_grad(ai)) t.grad_buffer(ai).mat() += g.leftCols(na);
    if (t.requires_grad(bi)) t.grad_buffer(bi).mat() += g.rightCols(nb);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.mat() += b.value().mat();
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = t.grad(self).mat();
    if (t.requires_grad(ai)) t.grad_buffer(ai).mat() += g;
    if (t.requires_grad(bi)) t.grad_buffer(bi).mat() += g;
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  out.mat() -= b.value().mat();
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = t.grad(self).mat();
    if (t.requires_grad(ai)) t.grad_buffer(ai).mat() += g;
    if (t.requires_grad(bi)) t.grad_buffer(bi).mat() -= g;
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  out.mat().array() *= b.value().mat().array();
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const auto g = t.grad(self).mat().array();
    if (t.requires_grad(ai)) t.grad_buffer(ai).mat().array() += g * t.value(bi).mat().array();
    if (t.requires_grad(bi)) t.grad_buffer(bi).mat().array() += g * t.value(ai).mat().array();
  });
}

Var scale(Var x, double c) {
  return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(Var x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double out) { return 1.0 - out * out; });
}

Var exp(Var x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double out) { return out; });
}

Var square(Var x) {
  return unary(
      x, [](double v) { return v * v; }, [](double in, double) { return 2.0 * in; });
}

Var clamp(Var x, double lo, double hi) {
  if (lo > hi) throw ContractViolation("clamp: lo > hi");
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double in, double) { return (in >= lo && in <= hi) ? 1.0 : 0.0; });
}

Var log1m_tanh_sq(Var u) {
  return unary(
      u,
      [](double v) {
        // softplus(z) = max(z, 0) + log1p(exp(-|z|))
        const double z = -2.0 * v;
        const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
        return 2.0 * (std::numbers::ln2 - v - softplus);
      },
      [](double in, double) { return -2.0 * std::tanh(in); });
}

Var minimum(Var a, Var b) {
  require_same_shape(a, b, "minimum");
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) out[i] = std::min(ta[i], tb[i]);
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = t.value(ai);
    const Tensor& vb = t.value(bi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const bool to_a = va[i] <= vb[i];
      if (to_a && t.requires_grad(ai)) t.grad_buffer(ai)[i] += g[i];
      if (!to_a && t.requires_grad(bi)) t.grad_buffer(bi)[i] += g[i];
    }
  });
}

Var sum(Var x) {
  const auto xid = x.id();
  return x.tape().record(Tensor::scalar(x.value().mat().sum()), {xid},
                         [xid](Tape& t, std::size_t self) {
                           t.grad_buffer(xid).mat().array() += t.grad(self)[0];
                         });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  const auto xid = x.id();
  return x.tape().record(Tensor::scalar(x.value().mat().sum() / n), {xid},
                         [xid, n](Tape& t, std::size_t self) {
                           t.grad_buffer(xid).mat().array() += t.grad(self)[0] / n;
                         });
}

Var row_sum(Var x) {
  const Tensor& in = x.value();
  Tensor out({in.rows(), 1});
  out.mat() = in.mat().rowwise().sum();
  const auto xid = x.id();
  return x.tape().record(std::move(out), {xid}, [xid](Tape& t, std::size_t self) {
    const auto g = t.grad(self).mat();
    auto gx = t.grad_buffer(xid).mat();
    gx.colwise() += g.col(0);
  });
}

Var row_l2_norm(Var x) {
  const Tensor& in = x.value();
  Tensor out({in.rows(), 1});
  out.mat() = in.mat().rowwise().norm();
  const auto xid = x.id();
  return x.tape().record(std::move(out), {xid}, [xid](Tape& t, std::size_t self) {
    const auto g = t.grad(self).mat();
    const auto in = t.value(xid).mat();
    const auto n = t.value(self).mat();
    auto gx = t.grad_buffer(xid).mat();
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
      if (n(r, 0) > 0.0) gx.row(r) += in.row(r) * (g(r, 0) / n(r, 0));
    }
  });
}

Var sum_squares(Var x) {
  const auto xid = x.id();
  return x.tape().record(Tensor::scalar(x.value().squared_norm()), {xid},
                         [xid](Tape& t, std::size_t self) {
                           t.grad_buffer(xid).mat() += 2.0 * t.grad(self)[0] * t.value(xid).mat();
                         });
}

GradientMap finite_difference_gradient(const std::function<double(const ParamMap&)>& f,
                                       const ParamMap& params, double h) {
  ParamMap probe = params;
  GradientMap grads;
  for (auto& [name, tensor] : probe) {
    Tensor g(tensor.shape());
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double orig = tensor[i];
      tensor[i] = orig + h;
      const double up = f(probe);
      tensor[i] = orig - h;
      const double down = f(probe);
      tensor[i] = orig;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.emplace(name, std::move(g));
  }
  return grads;
}

}  // namespace ofn
