#include <gtest/gtest.h>

#include <cmath>

#include "ofnlab/autodiff.hpp"
#include "ofnlab/errors.hpp"
#include "test_util.hpp"

namespace ofn {
namespace {

using testing::primitive_gradient_error;
using testing::autodiff_jacobian;
using testing::closed_form_jacobian;
using testing::elementwise_cases;
using testing::random_shape;
using testing::random_tensor;

constexpr int kInstances = 20;
constexpr double kTol = 1e-5;

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor({0, 3}), ContractViolation);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), ContractViolation);
  EXPECT_THROW(Tensor({1, 2, 3}), ContractViolation);
}

TEST(Tensor, MatrixFactoryIsRowMajor) {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m[2], 3.0);
}

TEST(Tape, NonScalarRootIsAContractViolation) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(tape.backward(x), ContractViolation);
}

TEST(Tape, SumOfParametersHasUnitGradient) {
  Tape tape;
  Var w = tape.parameter("w", Tensor::matrix({{1, -2}, {3, 4}}));
  const auto g = tape.backward(sum(w));
  for (double v : g.at("w").data()) EXPECT_EQ(v, 1.0);
}

TEST(Tape, HalfSquaredNormGradientIsTheWeight) {
  Tape tape;
  const Tensor w = Tensor::matrix({{1.5, -2}, {0.25, 4}});
  const auto g = tape.backward(scale(sum_squares(tape.parameter("w", w)), 0.5));
  EXPECT_EQ(g.at("w"), w);
}

TEST(Tape, ReusedNodeAccumulates) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::scalar(3.0));
  const auto g = tape.backward(add(mul(x, x), x));
  EXPECT_DOUBLE_EQ(g.at("x").item(), 7.0);
}

TEST(Tape, RepeatedNamesShareOneEntry) {
  Tape tape;
  Var a = tape.parameter("p", Tensor::scalar(2.0));
  Var b = tape.parameter("p", Tensor::scalar(2.0));
  const auto g = tape.backward(add(scale(a, 3.0), scale(b, 5.0)));
  EXPECT_EQ(g.size(), 1u);
  EXPECT_DOUBLE_EQ(g.at("p").item(), 8.0);
}

TEST(Tape, UnusedParameterGetsZeros) {
  Tape tape;
  Var a = tape.parameter("a", Tensor::scalar(2.0));
  tape.parameter("unused", Tensor::vector({1.0, 1.0}));
  const auto g = tape.backward(square(a));
  EXPECT_EQ(g.at("unused"), Tensor({2}));
}

TEST(Tape, ConstantsNeverRequireGradients) {
  Tape tape;
  Var c = tape.constant(Tensor::scalar(1.0));
  Var y = exp(c);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(tape.backward(sum(y)).empty());
}

TEST(Tape, ReplayIsBitwiseDeterministic) {
  auto run = [] {
    Rng rng(5);
    Tape tape;
    Var x = tape.parameter("x", random_tensor({3, 4}, rng));
    Var w = tape.parameter("w", random_tensor({4, 2}, rng));
    Var b = tape.parameter("b", random_tensor({2}, rng));
    Var y = unit_ball_project(elu(linear(x, w, b)));
    return std::pair{y.value(), tape.backward(sum_squares(tanh(y)))};
  };
  EXPECT_EQ(run(), run());
}

TEST(FiniteDifference, Quadratic) {
  const auto g = finite_difference_gradient(
      [](const ParamMap& p) { return p.at("p").item() * p.at("p").item(); },
      {{"p", Tensor::scalar(3.0)}}, 1e-5);
  EXPECT_NEAR(g.at("p").item(), 6.0, 1e-7);
}

TEST(FiniteDifference, ConstantFunction) {
  const auto g = finite_difference_gradient([](const ParamMap&) { return 4.2; },
                                            {{"p", Tensor::vector({1, 2, 3})}}, 1e-5);
  EXPECT_EQ(g.at("p"), Tensor({3}));
}

TEST(Activations, ReferenceValues) {
  Tape tape;
  EXPECT_EQ(relu(tape.constant(Tensor::vector({-1, 0, 2}))).value(), Tensor::vector({0, 0, 2}));
  EXPECT_EQ(elu(tape.constant(Tensor::vector({0}))).value(), Tensor::vector({0}));
  EXPECT_NEAR(elu(tape.constant(Tensor::vector({-1}))).value()[0], std::exp(-1.0) - 1.0, 1e-15);
}

TEST(Activations, ReluDerivativeAtZeroIsZero) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::vector({0.0, 1.0}));
  const auto g = tape.backward(sum(relu(x)));
  EXPECT_EQ(g.at("x"), Tensor::vector({0.0, 1.0}));
}

TEST(Activations, ParseNames) {
  EXPECT_EQ(parse_activation("elu"), Activation::elu);
  EXPECT_THROW(parse_activation("gelu"), ConfigError);
}


// Finite-difference checks, one per primitive ---------------------------------

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferences) {
  const auto c = elementwise_cases()[GetParam()];
  Rng rng(1000 + GetParam());
  for (int k = 0; k < kInstances; ++k) {
    const auto shape = random_shape(rng);
    std::vector<Tensor> inputs;
    for (int i = 0; i < c.arity; ++i) inputs.push_back(c.make(shape, rng));
    EXPECT_LE(primitive_gradient_error(c.build, inputs, rng), kTol) << c.name << " instance " << k;
  }
}

INSTANTIATE_TEST_SUITE_P(All, PrimitiveGradient,
                         ::testing::Range<std::size_t>(0, elementwise_cases().size()),
                         [](const auto& info) { return std::string(elementwise_cases()[info.param].name); });

TEST(PrimitiveGradient, Linear) {
  Rng rng(7);
  for (int k = 0; k < kInstances; ++k) {
    const std::size_t b = 1 + rng.index(4), n = 1 + rng.index(5), m = 1 + rng.index(5);
    const std::vector<Tensor> in{random_tensor({b, n}, rng), random_tensor({n, m}, rng), random_tensor({m}, rng)};
    EXPECT_LE(primitive_gradient_error([](Tape&, const auto& x) { return linear(x[0], x[1], x[2]); }, in, rng),
              kTol);
  }
}

TEST(PrimitiveGradient, ConcatCols) {
  Rng rng(8);
  for (int k = 0; k < kInstances; ++k) {
    const std::size_t b = 1 + rng.index(4);
    const std::vector<Tensor> in{random_tensor({b, 1 + rng.index(3)}, rng), random_tensor({b, 1 + rng.index(3)}, rng)};
    EXPECT_LE(primitive_gradient_error([](Tape&, const auto& x) { return concat_cols(x[0], x[1]); }, in, rng), kTol);
  }
}

TEST(PrimitiveGradient, TwoLayerMlpWithUnitBallHead) {
  Rng rng(9);
  for (int k = 0; k < kInstances; ++k) {
    const std::vector<Tensor> in{random_tensor({4, 3}, rng), random_tensor({3, 6}, rng), random_tensor({6}, rng),
                                 random_tensor({6, 6}, rng), random_tensor({6}, rng), random_tensor({6, 1}, rng)};
    auto net = [](Tape& t, const std::vector<Var>& x) {
      Var h = elu(linear(x[0], x[1], x[2]));
      h = unit_ball_project(elu(linear(h, x[3], x[4])));
      return linear(h, x[5], t.constant(Tensor::vector({0.1})));
    };
    EXPECT_LE(primitive_gradient_error(net, in, rng), kTol);
  }
}

// Unit-ball projection ----------------------------------------------------

TEST(UnitBall, ThreeFourFiveTriangle) {
  Tape tape;
  const Tensor y = unit_ball_project(tape.constant(Tensor::matrix({{3, 4}}))).value();
  EXPECT_NEAR(y[0], 0.6, 1e-15);
  EXPECT_NEAR(y[1], 0.8, 1e-15);
}

TEST(UnitBall, JacobianAtAxisVector) {
  const Tensor j = autodiff_jacobian(Tensor::matrix({{1, 0}}));
  EXPECT_NEAR(j(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(j(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(j(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(j(1, 1), 1.0, 1e-15);
}

TEST(UnitBall, RowNormsAreOneAcrossScales) {
  Rng rng(21);
  for (int k = 0; k < 200; ++k) {
    const double scale_exp = rng.uniform(-6.0, 6.0);
    Tensor x = random_tensor({3, 1 + rng.index(16)}, rng);
    double n = std::sqrt(x.squared_norm() / 3.0);
    for (auto& v : x.data()) v *= std::pow(10.0, scale_exp) / n;
    Tape tape;
    const auto y = unit_ball_project(tape.constant(x)).value().mat();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      if (x.mat().row(r).norm() >= 1e-6) EXPECT_NEAR(y.row(r).norm(), 1.0, 1e-9);
    }
  }
}

TEST(UnitBall, JacobianMatchesClosedForm) {
  Rng rng(22);
  for (int k = 0; k < 50; ++k) {
    const Tensor x = random_tensor({1, 1 + rng.index(8)}, rng);
    const Tensor ja = autodiff_jacobian(x);
    const Tensor jc = closed_form_jacobian(x.data());
    for (std::size_t i = 0; i < ja.size(); ++i) EXPECT_NEAR(ja[i], jc[i], 1e-10);
  }
}

TEST(UnitBall, GradientsAreTangent) {
  Rng rng(23);
  for (int k = 0; k < 50; ++k) {
    const Tensor x = random_tensor({1, 5}, rng);
    const Tensor j = autodiff_jacobian(x);
    Eigen::VectorXd xv = x.mat().row(0).transpose();
    const Eigen::VectorXd jx = j.mat() * xv;
    EXPECT_LE(jx.norm(), 1e-8 * xv.norm());
  }
}

TEST(UnitBall, ZeroRowStaysFinite) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::matrix({{0, 0, 0}, {1, 2, 2}}));
  Var y = unit_ball_project(x);
  EXPECT_TRUE(y.value().all_finite());
  EXPECT_EQ(y.value()(0, 0), 0.0);
  const auto g = tape.backward(sum(y));
  EXPECT_TRUE(g.at("x").all_finite());
}

TEST(UnitBall, ScaleInvariance) {
  Rng rng(24);
  const Tensor x = random_tensor({2, 7}, rng);
  Tensor x5 = x;
  for (auto& v : x5.data()) v *= 5.0;
  Tape tape;
  const Tensor a = unit_ball_project(tape.constant(x)).value();
  const Tensor b = unit_ball_project(tape.constant(x5)).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

// Dropout -----------------------------------------------------------------

TEST(Dropout, RateZeroAndEvalModeAreIdentity) {
  Rng rng(3);
  Tape tape;
  Var x = tape.constant(random_tensor({4, 5}, rng));
  EXPECT_EQ(dropout(x, 0.0, rng, true).value(), x.value());
  EXPECT_EQ(dropout(x, 0.7, rng, false).value(), x.value());
}

TEST(Dropout, InvalidRateIsAConfigError) {
  Rng rng(3);
  Tape tape;
  Var x = tape.constant(Tensor::vector({1.0}));
  EXPECT_THROW(dropout(x, 1.0, rng, true), ConfigError);
  EXPECT_THROW(dropout(x, -0.1, rng, true), ConfigError);
}

TEST(Dropout, PreservesTheMean) {
  Rng rng(4);
  Tape tape;
  Var x = tape.constant(Tensor({100, 1000}, 1.0));
  const double m = dropout(x, 0.5, rng, true).value().mat().mean();
  EXPECT_GE(m, 0.98);
  EXPECT_LE(m, 1.02);
}

// Numerics ----------------------------------------------------------------

TEST(Log1mTanhSq, StableForLargeArguments) {
  Tape tape;
  const Tensor y = log1m_tanh_sq(tape.constant(Tensor::vector({50.0, -50.0, 0.0}))).value();
  EXPECT_NEAR(y[0], 2.0 * (std::log(2.0) - 50.0), 1e-12);
  EXPECT_NEAR(y[1], 2.0 * (std::log(2.0) - 50.0), 1e-12);
  EXPECT_NEAR(y[2], 0.0, 1e-15);
}

TEST(Minimum, TiesGoToTheFirstArgument) {
  Tape tape;
  Var a = tape.parameter("a", Tensor::scalar(1.0));
  Var b = tape.parameter("b", Tensor::scalar(1.0));
  const auto g = tape.backward(minimum(a, b));
  EXPECT_EQ(g.at("a").item(), 1.0);
  EXPECT_EQ(g.at("b").item(), 0.0);
}

}  // namespace
}  // namespace ofn
