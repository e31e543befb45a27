#ifndef BCAE_CHANNEL_HPP
#define BCAE_CHANNEL_HPP

// Degraded real AWGN broadcast channel:
//
//   y2 = x + n2,   n2 ~ N(0, sigma2_sq),  sigma2_sq = P / SNR2
//   y1 = y2 + n1,  n1 ~ N(0, sigma1_sq),  sigma1_sq = P / SNR1 - sigma2_sq
//
// User 1 is always the weaker receiver and sees the same n2 realization as
// user 2 (physically degraded).

#include <cmath>
#include <string>

#include "bcae/errors.hpp"
#include "bcae/nn.hpp"
#include "bcae/rng.hpp"

namespace bcae {

inline double snr_db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

struct NoiseVariances {
  double sigma1_sq = 0.0;
  double sigma2_sq = 0.0;
};

inline NoiseVariances derive_noise_variances(double snr1_db, double snr2_db, double power = 1.0) {
  if (!std::isfinite(snr1_db) || !std::isfinite(snr2_db))
    throw ConfigError("channel: SNRs must be finite");
  if (!(power > 0.0) || !std::isfinite(power)) throw ConfigError("channel: power must be positive");
  if (snr1_db > snr2_db) throw DegradednessError(snr1_db, snr2_db);
  NoiseVariances v;
  v.sigma2_sq = power / snr_db_to_linear(snr2_db);
  v.sigma1_sq = power / snr_db_to_linear(snr1_db) - v.sigma2_sq;
  // Equal SNRs can round to a tiny negative number.
  if (v.sigma1_sq < 0.0) v.sigma1_sq = 0.0;
  return v;
}

struct ChannelConfig {
  double snr1_db = 0.0;
  double snr2_db = 0.0;
  double power = 1.0;
  double sigma1_sq = 0.0;
  double sigma2_sq = 1.0;

  static ChannelConfig make(double snr1_db, double snr2_db, double power = 1.0) {
    const auto v = derive_noise_variances(snr1_db, snr2_db, power);
    return ChannelConfig{snr1_db, snr2_db, power, v.sigma1_sq, v.sigma2_sq};
  }

  // Total noise variance seen by receiver 1.
  double receiver1_noise() const { return sigma1_sq + sigma2_sq; }
  double receiver2_noise() const { return sigma2_sq; }
};

inline constexpr double kMinEncoderEnergy = 1e-30;

struct NormalizedBatch {
  Batch x;              // scaled output, mean square == power
  double scale = 1.0;   // sqrt(power * N / sum_sq)
  double sum_sq = 0.0;  // sum of squares of the raw input
};

// Scales the whole batch so its average per-element power equals `power`.
inline NormalizedBatch normalize_power(const Batch& raw, double power) {
  if (!(power > 0.0)) throw ConfigError("normalize_power: power must be positive");
  const double sum_sq = raw.squaredNorm();
  if (!(sum_sq >= kMinEncoderEnergy))
    throw DegenerateEncoderError("normalize_power: encoder output has (near) zero energy, sum of squares = " +
                                 std::to_string(sum_sq));
  NormalizedBatch out;
  out.sum_sq = sum_sq;
  out.scale = std::sqrt(power * static_cast<double>(raw.size()) / sum_sq);
  out.x = raw * out.scale;
  return out;
}

// Backward pass of normalize_power. With out = s * raw and s ∝ (sum raw^2)^(-1/2):
//   dL/draw = s * g - s * raw * <g, raw> / sum_sq
inline Batch normalize_power_backward(const Batch& raw, const NormalizedBatch& fwd, const Batch& grad_out) {
  const double inner = (grad_out.array() * raw.array()).sum();
  return fwd.scale * (grad_out - raw * (inner / fwd.sum_sq));
}

struct ChannelSample {
  Batch x;
  Batch y1;
  Batch y2;
};

// Draws n2 then n1 for each element in column-major order.
inline ChannelSample transmit(const Batch& x, const ChannelConfig& cfg, Rng& rng) {
  const double sd1 = std::sqrt(cfg.sigma1_sq);
  const double sd2 = std::sqrt(cfg.sigma2_sq);
  ChannelSample s{x, Batch(x.rows(), x.cols()), Batch(x.rows(), x.cols())};
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double n2 = sd2 * rng.gaussian();
    const double n1 = sd1 * rng.gaussian();
    s.y2(i) = x(i) + n2;
    s.y1(i) = s.y2(i) + n1;
  }
  return s;
}

}  // namespace bcae

#endif  // BCAE_CHANNEL_HPP
