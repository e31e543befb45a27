#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "bcae/channel.hpp"
#include "bcae/rng.hpp"

using namespace bcae;

TEST(NoiseVariances, FiveAndThirtyDb) {
  const auto v = derive_noise_variances(5.0, 30.0);
  EXPECT_NEAR(v.sigma2_sq, 0.001, 1e-15);
  EXPECT_NEAR(v.sigma1_sq, 0.31522776601683794, 1e-15);
}

TEST(NoiseVariances, EqualSnrsLeaveNoExtraNoiseForUserOne) {
  const auto v = derive_noise_variances(5.0, 5.0);
  EXPECT_EQ(v.sigma1_sq, 0.0);
  EXPECT_NEAR(v.sigma2_sq, 0.31622776601683794, 1e-15);
}

TEST(NoiseVariances, ScaleWithPower) {
  const auto v = derive_noise_variances(0.0, 10.0, 4.0);
  EXPECT_NEAR(v.sigma2_sq, 0.4, 1e-15);
  EXPECT_NEAR(v.sigma1_sq, 3.6, 1e-15);
}

TEST(NoiseVariances, RejectsNonDegradedAndInvalidInputs) {
  try {
    derive_noise_variances(30.0, 5.0);
    FAIL() << "expected DegradednessError";
  } catch (const DegradednessError& e) {
    EXPECT_NE(std::string(e.what()).find("not degraded"), std::string::npos);
  }
  EXPECT_THROW(derive_noise_variances(NAN, 5.0), ConfigError);
  EXPECT_THROW(derive_noise_variances(0.0, INFINITY), ConfigError);
  EXPECT_THROW(derive_noise_variances(0.0, 5.0, 0.0), ConfigError);
  EXPECT_THROW(ChannelConfig::make(10.0, 9.0), DegradednessError);
}

TEST(ChannelConfig, ReceiverNoiseTotals) {
  const auto c = ChannelConfig::make(-10.0, 30.0);
  EXPECT_NEAR(c.receiver1_noise(), 10.0, 1e-12);
  EXPECT_NEAR(c.receiver2_noise(), 0.001, 1e-15);
}

TEST(NormalizePower, UnitPowerExample) {
  Batch raw(1, 4);
  raw << 3.0, 1.0, -1.0, -3.0;
  const auto n = normalize_power(raw, 1.0);
  const double expected[] = {1.3416407864998738, 0.4472135954999579, -0.4472135954999579, -1.3416407864998738};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(n.x(0, i), expected[i], 1e-15);
  EXPECT_NEAR(n.x.squaredNorm() / 4.0, 1.0, 1e-15);
}

TEST(NormalizePower, MeanSquareEqualsPowerForRandomBatches) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Batch raw(1, 1 + static_cast<Eigen::Index>(rng.uniform_pow2(6)));
    for (Eigen::Index i = 0; i < raw.size(); ++i) raw(i) = 3.0 * rng.gaussian() + 1.0;
    const double p = 0.5 + rng.uniform();
    EXPECT_NEAR(normalize_power(raw, p).x.squaredNorm() / static_cast<double>(raw.size()), p, 1e-12);
  }
}

TEST(NormalizePower, RejectsZeroEnergy) {
  EXPECT_THROW(normalize_power(Batch::Zero(1, 5), 1.0), DegenerateEncoderError);
}

TEST(NormalizePower, BackwardMatchesFiniteDifferences) {
  Rng rng(2);
  Batch raw(1, 6), weights(1, 6);
  for (Eigen::Index i = 0; i < 6; ++i) {
    raw(i) = rng.gaussian();
    weights(i) = rng.gaussian();
  }
  // L = sum(weights .* normalize(raw))
  auto loss = [&](const Batch& r) { return (weights.array() * normalize_power(r, 1.0).x.array()).sum(); };
  const auto fwd = normalize_power(raw, 1.0);
  const Batch g = normalize_power_backward(raw, fwd, weights);
  for (Eigen::Index i = 0; i < 6; ++i) {
    Batch up = raw, down = raw;
    up(i) += 1e-6;
    down(i) -= 1e-6;
    EXPECT_NEAR(g(i), (loss(up) - loss(down)) / 2e-6, 1e-8);
  }
}

TEST(Transmit, ReceiverOneSeesReceiverTwoPlusExtraNoise) {
  const auto cfg = ChannelConfig::make(5.0, 15.0);
  Rng rng(3);
  const Batch x = Batch::Constant(1, 200000, 0.25);
  const auto s = transmit(x, cfg, rng);
  const Eigen::ArrayXXd n2 = (s.y2 - x).array();
  const Eigen::ArrayXXd n1 = (s.y1 - s.y2).array();
  const double n = static_cast<double>(x.size());
  // Sample variance has relative sd sqrt(2/n) ~ 0.3%; allow 5 sd.
  EXPECT_NEAR(n2.square().mean() / cfg.sigma2_sq, 1.0, 5.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(n1.square().mean() / cfg.sigma1_sq, 1.0, 5.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(n2.mean(), 0.0, 5.0 * std::sqrt(cfg.sigma2_sq / n));
  EXPECT_NEAR((n1 * n2).mean(), 0.0, 5.0 * std::sqrt(cfg.sigma1_sq * cfg.sigma2_sq / n));
}

TEST(Transmit, FixedSeedIsBitReproducible) {
  const auto cfg = ChannelConfig::make(0.0, 10.0);
  Batch x(1, 100);
  for (Eigen::Index i = 0; i < 100; ++i) x(i) = 0.01 * static_cast<double>(i);
  Rng a(42), b(42), c(43);
  const auto sa = transmit(x, cfg, a);
  const auto sb = transmit(x, cfg, b);
  const auto sc = transmit(x, cfg, c);
  EXPECT_EQ(sa.y1, sb.y1);
  EXPECT_EQ(sa.y2, sb.y2);
  EXPECT_NE(sa.y2, sc.y2);
}

TEST(Rng, StreamsAreDistinctAndStable) {
  EXPECT_NE(derive_seed(1, Stream::Training, 0), derive_seed(1, Stream::Ser, 0));
  EXPECT_NE(derive_seed(1, Stream::Ser, 0), derive_seed(1, Stream::Ser, 1));
  EXPECT_EQ(derive_seed(1, Stream::Ser, 5), derive_seed(1, Stream::Ser, 5));
  // SplitMix64 reference output for state 0.
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
}

TEST(Rng, GaussianMoments) {
  Rng rng(8);
  const int n = 400000;
  double s = 0.0, s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    s += g;
    s2 += g * g;
    s4 += g * g * g * g;
  }
  EXPECT_NEAR(s / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(s4 / n, 3.0, 5.0 * std::sqrt(96.0 / n));
}

TEST(Rng, UniformStaysInsideOpenInterval) {
  Rng rng(9);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}
