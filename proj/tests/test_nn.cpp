#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "bcae/nn.hpp"
#include "bcae/nn_io.hpp"

using namespace bcae;

namespace {

DenseLayer layer(Matrix w, Vector b, Activation a) { return DenseLayer{std::move(w), std::move(b), a}; }

Batch column(std::initializer_list<double> v) {
  Batch b(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) b(i++, 0) = x;
  return b;
}

// Central differences of the softmax cross-entropy, written out here so the
// check does not lean on grad_check.
std::vector<double> numeric_gradient(DenseNet net, const Batch& x, const std::vector<std::size_t>& labels) {
  std::vector<double> out;
  auto& layers = net.mutable_layers();
  auto loss = [&] {
    Batch a = x;
    for (const auto& l : layers) {
      Batch z = l.weights * a;
      z.colwise() += l.bias;
      if (l.activation == Activation::ReLU) z = z.cwiseMax(0.0);
      a = z;
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double mx = a.col(j).maxCoeff();
      const double lse = mx + std::log((a.col(j).array() - mx).exp().sum());
      total += lse - a(static_cast<Eigen::Index>(labels[j]), j);
    }
    return total / static_cast<double>(a.cols());
  };
  for (auto& l : layers) {
    auto probe = [&](double& p) {
      const double s = p;
      p = s + 1e-6;
      const double up = loss();
      p = s - 1e-6;
      const double down = loss();
      p = s;
      out.push_back((up - down) / 2e-6);
    };
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) probe(l.weights(r, c));
      probe(l.bias(r));
    }
  }
  return out;
}

}  // namespace

TEST(Activation, NamesRoundTrip) {
  for (auto a : {Activation::ReLU, Activation::Linear, Activation::Softmax}) EXPECT_EQ(parse_activation(to_string(a)), a);
  EXPECT_THROW(parse_activation("tanh"), ConfigError);
}

TEST(DenseNet, RejectsInconsistentShapes) {
  EXPECT_THROW(DenseNet(2, {layer(Matrix::Zero(3, 4), Vector::Zero(3), Activation::ReLU)}), ConfigError);
  EXPECT_THROW(DenseNet(4, {layer(Matrix::Zero(3, 4), Vector::Zero(2), Activation::ReLU)}), ConfigError);
  EXPECT_THROW(DenseNet(0, {}), ConfigError);
  Matrix w = Matrix::Zero(1, 1);
  w(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(DenseNet(1, {layer(w, Vector::Zero(1), Activation::Linear)}), ConfigError);
}

TEST(Forward, IdentityLinearLayerPassesInputThrough) {
  DenseNet net(3, {layer(Matrix::Identity(3, 3), Vector::Zero(3), Activation::Linear)});
  const Batch x = column({0.5, -2.0, 7.0});
  EXPECT_EQ(forward(net, x).output, x);
  EXPECT_EQ(predict(net, x), x);
}

TEST(Forward, ReluClampsNegatives) {
  DenseNet net(2, {layer(Matrix::Identity(2, 2), Vector::Zero(2), Activation::ReLU)});
  EXPECT_EQ(predict(net, column({-1.0, 2.0})), column({0.0, 2.0}));
}

TEST(Forward, RejectsWrongInputHeight) {
  DenseNet net(2, {layer(Matrix::Identity(2, 2), Vector::Zero(2), Activation::ReLU)});
  EXPECT_THROW(predict(net, column({1.0, 2.0, 3.0})), ConfigError);
}

TEST(Softmax, ColumnsSumToOneAndSurviveLargeLogits) {
  Batch z(3, 2);
  z << 1000.0, -5.0, 1001.0, 0.0, 999.0, 5.0;
  const Batch p = softmax_columns(z);
  ASSERT_TRUE(p.allFinite());
  for (Eigen::Index j = 0; j < 2; ++j) EXPECT_NEAR(p.col(j).sum(), 1.0, 1e-12);
  // e^1 / (e^0 + e^1 + e^-1)
  EXPECT_NEAR(p(1, 0), 0.6652409557748219, 1e-12);
}

TEST(CrossEntropy, KnownValues) {
  const std::vector<std::size_t> zero{0};
  EXPECT_NEAR(cross_entropy(column({0.5, 0.5}), zero), 0.6931471805599453, 1e-15);
  EXPECT_DOUBLE_EQ(cross_entropy(column({1.0, 0.0}), zero), 0.0);
  // p_true = 0 is clamped to the floor.
  EXPECT_NEAR(cross_entropy(column({0.0, 1.0}), zero), 27.631021115928547, 1e-9);
}

TEST(CrossEntropy, RejectsBadInputs) {
  EXPECT_THROW(cross_entropy(column({0.5, 0.6}), std::vector<std::size_t>{0}), InputError);
  EXPECT_THROW(cross_entropy(column({0.5, 0.5}), std::vector<std::size_t>{2}), InputError);
  EXPECT_THROW(cross_entropy(column({0.5, 0.5}), std::vector<std::size_t>{0, 1}), InputError);
}

TEST(CrossEntropy, GradientIsProbsMinusOneHotOverBatch) {
  Batch p(2, 2);
  p << 0.2, 0.6, 0.8, 0.4;
  const Batch g = softmax_cross_entropy_grad(p, std::vector<std::size_t>{1, 0});
  Batch expected(2, 2);
  expected << 0.1, -0.2, -0.1, 0.2;
  EXPECT_TRUE(g.isApprox(expected, 1e-15));
}

TEST(Backward, LinearLayerMatchesHandDerivation) {
  Matrix w(2, 3);
  w << 1, 2, 3, 4, 5, 6;
  Vector b(2);
  b << 0.5, -0.5;
  DenseNet net(3, {layer(w, b, Activation::Linear)});
  const Batch x = column({1.0, -1.0, 2.0});
  const auto fr = forward(net, x);
  const Batch up = column({1.0, 3.0});
  const auto g = backward(net, fr.tape, up);
  Matrix dw(2, 3);
  dw << 1, -1, 2, 3, -3, 6;
  EXPECT_EQ(g.layers[0].weights, dw);
  EXPECT_EQ(g.layers[0].bias, Vector(up.col(0)));
  EXPECT_EQ(g.input, column({13.0, 17.0, 21.0}));
}

TEST(Backward, MatchesIndependentFiniteDifferences) {
  Rng rng(11);
  DenseNet net = make_dense_net(4, {{6, Activation::ReLU}, {5, Activation::ReLU}, {3, Activation::Softmax}}, rng);
  for (auto& l : net.mutable_layers())
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.2 * rng.gaussian();
  Batch x(4, 7);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.gaussian();
  const std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2, 1};

  const auto fr = forward(net, x);
  const auto g = backward(net, fr.tape, softmax_cross_entropy_grad(fr.output, labels), GradientAt::Logits);
  std::vector<double> analytic;
  for (const auto& l : g.layers)
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) analytic.push_back(l.weights(r, c));
      analytic.push_back(l.bias(r));
    }
  const auto numeric = numeric_gradient(net, x, labels);
  ASSERT_EQ(analytic.size(), numeric.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) EXPECT_NEAR(analytic[i], numeric[i], 1e-7) << "parameter " << i;
  EXPECT_LT(grad_check(net, x, labels), 1e-4);
}

TEST(Backward, RejectsStaleOrForeignTape) {
  Rng rng(3);
  DenseNet net = make_dense_net(2, {{2, Activation::Linear}}, rng);
  const Batch x = column({1.0, 2.0});
  const auto fr = forward(net, x);
  const DenseNet copy = net;
  EXPECT_THROW(backward(copy, fr.tape, x), UsageError);
  net.mutable_layers();
  EXPECT_THROW(backward(net, fr.tape, x), UsageError);
}

TEST(GradCheck, RejectsBadStep) {
  Rng rng(3);
  DenseNet net = make_dense_net(2, {{2, Activation::Softmax}}, rng);
  const std::vector<std::size_t> labels{0};
  EXPECT_THROW(grad_check(net, column({1.0, 2.0}), labels, 0.0), ConfigError);
  EXPECT_THROW(grad_check(net, column({1.0, 2.0}), labels, 0.1), ConfigError);
}

TEST(Init, HeAndXavierScalesWithZeroBias) {
  Rng rng(5);
  DenseNet net = make_dense_net(400, {{300, Activation::ReLU}, {200, Activation::Linear}}, rng);
  auto sample_sd = [](const Matrix& m) {
    const double mean = m.mean();
    return std::sqrt((m.array() - mean).square().mean());
  };
  EXPECT_NEAR(sample_sd(net.layer(0).weights), std::sqrt(2.0 / 400), 0.02 * std::sqrt(2.0 / 400));
  EXPECT_NEAR(sample_sd(net.layer(1).weights), std::sqrt(1.0 / 300), 0.02 * std::sqrt(1.0 / 300));
  EXPECT_TRUE(net.layer(0).bias.isZero());
  EXPECT_TRUE(net.layer(1).bias.isZero());
}

TEST(Adam, FirstTwoStepsMatchHandEvaluation) {
  DenseNet net(1, {layer(Matrix::Zero(1, 1), Vector::Zero(1), Activation::Linear)});
  AdamState state(net);
  Gradients g;
  g.layers.push_back({Matrix::Constant(1, 1, 1.0), Vector::Zero(1)});
  adam_step(net, g, state);
  EXPECT_DOUBLE_EQ(net.layer(0).weights(0, 0), -0.0009999999900000003);
  EXPECT_EQ(net.layer(0).bias(0), 0.0);
  g.layers[0].weights(0, 0) = 2.0;
  adam_step(net, g, state);
  EXPECT_NEAR(net.layer(0).weights(0, 0), -0.0019651820097183366, 1e-17);
  EXPECT_EQ(state.step_count, 2u);
}

TEST(Adam, RejectsMismatchAndNonFinite) {
  DenseNet net(1, {layer(Matrix::Zero(1, 1), Vector::Zero(1), Activation::Linear)});
  AdamState state(net);
  Gradients bad;
  bad.layers.push_back({Matrix::Zero(2, 1), Vector::Zero(1)});
  EXPECT_THROW(adam_step(net, bad, state), ConfigError);
  Gradients nan;
  nan.layers.push_back({Matrix::Constant(1, 1, std::numeric_limits<double>::quiet_NaN()), Vector::Zero(1)});
  try {
    adam_step(net, nan, state);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.step(), 1u);
  }
  EXPECT_EQ(state.step_count, 0u);
}

TEST(NetIo, RoundTripIsBitExact) {
  Rng rng(9);
  DenseNet net = make_dense_net(3, {{4, Activation::ReLU}, {2, Activation::Softmax}}, rng);
  net.mutable_layers()[0].bias(1) = 1.0 / 3.0;
  std::stringstream s;
  write_net(s, net);
  const DenseNet back = read_net(s);
  ASSERT_EQ(back.depth(), net.depth());
  for (std::size_t i = 0; i < net.depth(); ++i) {
    EXPECT_EQ(back.layer(i).weights, net.layer(i).weights);
    EXPECT_EQ(back.layer(i).bias, net.layer(i).bias);
    EXPECT_EQ(back.layer(i).activation, net.layer(i).activation);
  }
}

TEST(NetIo, FormatIsVersionedText) {
  DenseNet net(1, {layer(Matrix::Constant(1, 1, 0.1), Vector::Constant(1, -2.0), Activation::Linear)});
  std::ostringstream s;
  write_net(s, net);
  EXPECT_EQ(s.str(), "bcae-v1\n1\ndense 1 1 linear\n0.10000000000000001 -2\n");
}

TEST(NetIo, RejectsBadFiles) {
  auto load = [](const std::string& text) {
    std::istringstream in(text);
    return read_net(in);
  };
  EXPECT_THROW(load("bcae-v0\n1\ndense 1 1 linear\n1 0\n"), LoadError);
  EXPECT_THROW(load("bcae-v1\n1\ndense 1 1 linear\n"), LoadError);
  EXPECT_THROW(load("bcae-v1\n1\ndense 1 2 linear\n1 0\n"), LoadError);
  EXPECT_THROW(load("bcae-v1\n1\ndense 1 1 tanh\n1 0\n"), LoadError);
  EXPECT_THROW(load("bcae-v1\n2\ndense 1 2 relu\n1 0\n1 0\ndense 3 1 linear\n1 1 1 0\n"), LoadError);
  EXPECT_THROW(load("bcae-v1\n1\ndense 1 1 linear\n1 abc\n"), LoadError);
  EXPECT_THROW(load(""), LoadError);
}
