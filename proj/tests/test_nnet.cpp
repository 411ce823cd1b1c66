#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "distloss/nnet.hpp"
#include "distloss/rng.hpp"
#include "oracles.hpp"

using namespace distloss;

namespace {

void expect_code(ErrorCode code, auto&& fn) {
  try {
    fn();
    FAIL() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

std::vector<double> flatten(const std::vector<DenseLayer>& layers) {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

void unflatten(const std::vector<double>& flat, MlpParams& p) {
  std::size_t k = 0;
  for (auto& l : p.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = flat[k++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = flat[k++];
  }
  p.touch();
}

Eigen::MatrixXd random_inputs(Rng& rng, std::size_t d, std::size_t n) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

}  // namespace

TEST(Mlp, InitShapes) {
  const auto p = init_mlp({8, 64, 64, 1}, Activation::relu, 1);
  ASSERT_EQ(p.layers.size(), 3u);
  EXPECT_EQ(p.layers[0].weight.rows(), 64);
  EXPECT_EQ(p.layers[0].weight.cols(), 8);
  EXPECT_EQ(p.layers[2].weight.rows(), 1);
  EXPECT_EQ(p.num_parameters(), 8u * 64 + 64 + 64 * 64 + 64 + 64 + 1);
  expect_code(ErrorCode::InvalidSpec, [] { init_mlp({3, 2}, Activation::relu, 1); });
}

TEST(Mlp, ZeroNetPredictsZero) {
  auto p = init_mlp({3, 5, 1}, Activation::tanh, 2);
  for (auto& l : p.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  Rng rng(1);
  for (double y : forward(p, random_inputs(rng, 3, 7)).predictions) EXPECT_EQ(y, 0.0);
}

TEST(Mlp, IdentityNet) {
  auto p = init_mlp({1, 1}, Activation::relu, 3);
  p.layers[0].weight(0, 0) = 1.0;
  p.layers[0].bias(0) = 0.0;
  const std::vector<std::vector<double>> batch{{-2.0}, {0.5}, {3.0}};
  EXPECT_EQ(forward(p, batch).predictions, (std::vector<double>{-2.0, 0.5, 3.0}));
}

TEST(Mlp, SeededDeterminism) {
  Rng r1(9), r2(9);
  const auto a = forward(init_mlp({4, 16, 16, 1}, Activation::relu, 42), random_inputs(r1, 4, 20));
  const auto b = forward(init_mlp({4, 16, 16, 1}, Activation::relu, 42), random_inputs(r2, 4, 20));
  EXPECT_EQ(a.predictions, b.predictions);
}

TEST(Mlp, ShapeMismatch) {
  const auto p = init_mlp({3, 4, 1}, Activation::relu, 1);
  expect_code(ErrorCode::ShapeMismatch, [&] { forward(p, Eigen::MatrixXd::Zero(2, 5)); });
  const auto r = forward(p, Eigen::MatrixXd::Zero(3, 5));
  expect_code(ErrorCode::ShapeMismatch, [&] { backward(p, r.tape, std::vector<double>(4, 1.0)); });
}

TEST(Mlp, ZeroUpstreamGivesZeroGrads) {
  Rng rng(4);
  const auto p = init_mlp({3, 6, 1}, Activation::relu, 5);
  const auto r = forward(p, random_inputs(rng, 3, 4));
  for (double g : flatten(backward(p, r.tape, std::vector<double>(4, 0.0)))) EXPECT_EQ(g, 0.0);
}

TEST(Mlp, LinearNetWeightGradIsUpstreamTimesInput) {
  auto p = init_mlp({3, 1}, Activation::relu, 5);
  Eigen::MatrixXd x(3, 1);
  x << 1.5, -2.0, 0.25;
  const auto r = forward(p, x);
  const auto g = backward(p, r.tape, std::vector<double>{2.0});
  EXPECT_DOUBLE_EQ(g[0].weight(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(g[0].weight(0, 1), -4.0);
  EXPECT_DOUBLE_EQ(g[0].weight(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(g[0].bias(0), 2.0);
}

TEST(Mlp, StaleTapeRejected) {
  Rng rng(4);
  auto p = init_mlp({2, 3, 1}, Activation::relu, 5);
  const auto r = forward(p, random_inputs(rng, 2, 3));
  auto adam = make_adam(p);
  adam_step(p, backward(p, r.tape, std::vector<double>(3, 1.0)), adam);
  expect_code(ErrorCode::InvalidTape, [&] { backward(p, r.tape, std::vector<double>(3, 1.0)); });
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Rng rng(12);
  for (auto act : {Activation::relu, Activation::tanh}) {
    for (int t = 0; t < 20; ++t) {
      auto p = init_mlp({3, 5, 4, 1}, act, 100 + static_cast<std::uint64_t>(t));
      for (auto& l : p.layers)
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = rng.normal(0, 0.3);
      p.touch();
      const auto x = random_inputs(rng, 3, 6);
      std::vector<double> u(6);
      for (double& v : u) v = rng.normal();
      const auto r = forward(p, x);
      const auto an = flatten(backward(p, r.tape, u));
      auto probe = p;
      const auto fd = oracle::fd_gradient(
          [&](const std::vector<double>& theta) {
            unflatten(theta, probe);
            const auto y = forward(probe, x).predictions;
            double s = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) s += u[j] * y[j];
            return s;
          },
          flatten(p.layers), 1e-6);
      EXPECT_LE(oracle::rel_error(an, fd), 1e-4) << to_string(act) << " trial " << t;
    }
  }
}

TEST(Adam, ZeroGradZeroDecayLeavesParams) {
  auto p = init_mlp({2, 3, 1}, Activation::relu, 1);
  const auto before = flatten(p.layers);
  auto s = make_adam(p, 1e-3, 0.9, 0.999, 1e-8, 0.0);
  MlpGrads zero;
  for (const auto& l : p.layers)
    zero.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  adam_step(p, zero, s);
  EXPECT_EQ(flatten(p.layers), before);
}

TEST(Adam, FirstStepIsSignScaled) {
  // At t = 1 the bias-corrected moments are g and g^2, so the step is
  // -lr * g / (|g| + eps_hat).
  auto p = init_mlp({2, 1}, Activation::relu, 1);
  const auto before = flatten(p.layers);
  auto s = make_adam(p, 0.01, 0.9, 0.999, 1e-8, 0.0);
  MlpGrads g{{Eigen::MatrixXd(1, 2), Eigen::VectorXd(1)}};
  g[0].weight << 0.5, -3.0;
  g[0].bias << 1e-3;
  adam_step(p, g, s);
  const auto after = flatten(p.layers);
  const std::vector<double> grad{0.5, -3.0, 1e-3};
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(after[i] - before[i], -0.01 * grad[i] / (std::abs(grad[i]) + 1e-8), 1e-12);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, WeightDecayEntersGradient) {
  auto p = init_mlp({1, 1}, Activation::relu, 1);
  p.layers[0].weight(0, 0) = 2.0;
  auto s = make_adam(p, 0.1, 0.9, 0.999, 1e-8, 0.5);
  MlpGrads g{{Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1)}};
  adam_step(p, g, s);
  EXPECT_NEAR(p.layers[0].weight(0, 0), 2.0 - 0.1, 1e-6);
  EXPECT_NEAR(s.first[0].weight(0, 0), 0.1 * 1.0, 1e-12);
}

TEST(Adam, NanGradientRejected) {
  auto p = init_mlp({1, 1}, Activation::relu, 1);
  const auto before = flatten(p.layers);
  auto s = make_adam(p);
  MlpGrads g{{Eigen::MatrixXd::Constant(1, 1, std::nan("")), Eigen::VectorXd::Zero(1)}};
  expect_code(ErrorCode::NonFiniteGradient, [&] { adam_step(p, g, s); });
  EXPECT_EQ(flatten(p.layers), before);
  EXPECT_EQ(s.step, 0);
}

TEST(Adam, IdenticalTrajectories) {
  auto run = [] {
    Rng rng(77);
    auto p = init_mlp({3, 8, 1}, Activation::tanh, 7);
    auto s = make_adam(p);
    for (int step = 0; step < 10; ++step) {
      const auto r = forward(p, random_inputs(rng, 3, 5));
      std::vector<double> u(5);
      for (double& v : u) v = rng.normal();
      adam_step(p, backward(p, r.tape, u), s);
    }
    return flatten(p.layers);
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, TrainableMask) {
  auto p = init_mlp({2, 3, 1}, Activation::relu, 1);
  const auto first_before = p.layers[0].weight;
  auto s = make_adam(p);
  MlpGrads g;
  for (const auto& l : p.layers)
    g.push_back({Eigen::MatrixXd::Ones(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Ones(l.bias.size())});
  const auto last_before = p.layers[1].weight;
  adam_step(p, g, s, {false, true});
  EXPECT_EQ(p.layers[0].weight, first_before);
  EXPECT_NE(p.layers[1].weight, last_before);
}
