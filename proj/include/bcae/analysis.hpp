#ifndef BCAE_ANALYSIS_HPP
#define BCAE_ANALYSIS_HPP

// Post-training analysis: constellation extraction, per-user power split,
// labeling verdicts, Monte-Carlo SER, and the classical superposition-coding
// baseline with its closed-form SER.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "bcae/autoencoder.hpp"
#include "bcae/channel.hpp"
#include "bcae/errors.hpp"
#include "bcae/nn_io.hpp"
#include "bcae/parallel.hpp"
#include "bcae/rng.hpp"

namespace bcae {

// One real symbol per message pair, stored by joint index s1 * M2 + s2.
struct Constellation {
  std::size_t m1 = 0;
  std::size_t m2 = 0;
  std::vector<double> points;

  std::size_t size() const { return points.size(); }
  double at(std::size_t s1, std::size_t s2) const { return points.at(s1 * m2 + s2); }
  std::size_t s1_of(std::size_t joint) const { return joint / m2; }
  std::size_t s2_of(std::size_t joint) const { return joint % m2; }

  double mean_square() const {
    double s = 0.0;
    for (double x : points) s += x * x;
    return s / static_cast<double>(points.size());
  }

  // Joint indices ordered by position; coincident points by joint index.
  std::vector<std::size_t> sorted_order() const {
    std::vector<std::size_t> idx(points.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
    return idx;
  }
};

// Encodes all M messages in a single batch, so the power normalization is
// taken over the uniform message ensemble.
inline Constellation extract_constellation(const TrainedModel& model) {
  const auto& a = model.arch;
  MessageBatch all;
  for (std::size_t s1 = 0; s1 < a.m1(); ++s1)
    for (std::size_t s2 = 0; s2 < a.m2(); ++s2) {
      all.s1.push_back(s1);
      all.s2.push_back(s2);
    }
  const Batch raw = predict(model.encoder, one_hot_batch(a, all.s1, all.s2));
  const auto norm = normalize_power(raw, model.channel.power);
  Constellation c{a.m1(), a.m2(), {}};
  c.points.assign(norm.x.data(), norm.x.data() + norm.x.size());
  return c;
}

// Number of clusters when points closer than `tol` are merged.
inline std::size_t distinct_point_count(const Constellation& c, double tol = 1e-2) {
  if (c.points.empty()) return 0;
  std::vector<double> xs = c.points;
  std::sort(xs.begin(), xs.end());
  std::size_t n = 1;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] - xs[i - 1] > tol) ++n;
  return n;
}

struct PowerSplit {
  double p1 = 0.0;
  double p2 = 0.0;
  double ratio_db = std::numeric_limits<double>::quiet_NaN();  // NaN when both powers vanish
  double dc_offset = 0.0;

  double user1_fraction() const {
    const double t = p1 + p2;
    return t > 0.0 ? p1 / t : std::numeric_limits<double>::quiet_NaN();
  }
  bool degenerate() const { return std::isnan(ratio_db); }
};

// Orthogonal decomposition x(s1,s2) = dc + u1(s1) + u2(s1,s2), with u1 the
// s1-conditional mean minus dc. Uniform weights throughout, so
// p1 + p2 + dc^2 equals the mean square of the points.
inline PowerSplit power_decomposition(const Constellation& c) {
  PowerSplit ps;
  const double n = static_cast<double>(c.size());
  ps.dc_offset = std::accumulate(c.points.begin(), c.points.end(), 0.0) / n;
  for (std::size_t s1 = 0; s1 < c.m1; ++s1) {
    double row = 0.0;
    for (std::size_t s2 = 0; s2 < c.m2; ++s2) row += c.at(s1, s2);
    const double mean = row / static_cast<double>(c.m2);
    const double u1 = mean - ps.dc_offset;
    ps.p1 += u1 * u1 * static_cast<double>(c.m2);
    for (std::size_t s2 = 0; s2 < c.m2; ++s2) {
      const double u2 = c.at(s1, s2) - mean;
      ps.p2 += u2 * u2;
    }
  }
  ps.p1 /= n;
  ps.p2 /= n;
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (ps.p1 == 0.0 && ps.p2 == 0.0)
    ps.ratio_db = std::numeric_limits<double>::quiet_NaN();
  else if (ps.p2 < 1e-12 * ps.p1)
    ps.ratio_db = inf;
  else if (ps.p1 < 1e-12 * ps.p2)
    ps.ratio_db = -inf;
  else
    ps.ratio_db = 10.0 * std::log10(ps.p1 / ps.p2);
  return ps;
}

// True iff a set of thresholds splits the sorted points into one contiguous
// block per s1 label.
inline bool user1_label_separable(const Constellation& c) {
  const auto order = c.sorted_order();
  std::vector<bool> closed(c.m1, false);
  std::size_t current = c.s1_of(order.front());
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto s1 = c.s1_of(order[i]);
    if (s1 == current) continue;
    closed[current] = true;
    if (closed[s1]) return false;
    current = s1;
  }
  return true;
}

// True iff every pair of neighbouring points (in sorted order) carries s2
// labels at Hamming distance <= 1. Equal labels are allowed.
inline bool detect_gray_user2(const Constellation& c) {
  const auto order = c.sorted_order();
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto a = c.s2_of(order[i - 1]);
    const auto b = c.s2_of(order[i]);
    if (std::popcount(a ^ b) > 1) return false;
  }
  return true;
}

inline std::size_t gray_encode(std::size_t position) { return position ^ (position >> 1); }

inline std::size_t gray_decode(std::size_t label) {
  std::size_t pos = 0;
  for (; label != 0; label >>= 1) pos ^= label;
  return pos;
}

// Unit-power M-PAM level for `label`, with Gray labels along the line.
inline double gray_pam_level(std::size_t label, std::size_t m) {
  const double pos = static_cast<double>(gray_decode(label));
  const double md = static_cast<double>(m);
  return (2.0 * pos - (md - 1.0)) / std::sqrt((md * md - 1.0) / 3.0);
}

// x(s1,s2) = sqrt(f P) pam_M1(s1) + sqrt((1-f) P) pam_M2(s2).
inline Constellation baseline_superposition(const ArchSpec& arch, double power_fraction_user1, double power = 1.0) {
  if (!(power_fraction_user1 >= 0.0 && power_fraction_user1 <= 1.0))
    throw ConfigError("baseline_superposition: power fraction must lie in [0, 1]");
  const double a1 = std::sqrt(power_fraction_user1 * power);
  const double a2 = std::sqrt((1.0 - power_fraction_user1) * power);
  Constellation c{arch.m1(), arch.m2(), std::vector<double>(arch.m())};
  for (std::size_t s1 = 0; s1 < c.m1; ++s1)
    for (std::size_t s2 = 0; s2 < c.m2; ++s2)
      c.points[s1 * c.m2 + s2] = a1 * gray_pam_level(s1, c.m1) + a2 * gray_pam_level(s2, c.m2);
  return c;
}

// Minimum-distance decoder over the constellation: the received value is
// mapped to the nearest point and that point's label is reported. Coincident
// points resolve to the lowest joint index.
class NearestPointDecoder {
 public:
  explicit NearestPointDecoder(const Constellation& c) : c_(c) {
    for (auto j : c.sorted_order()) {
      if (!positions_.empty() && positions_.back() == c.points[j]) continue;
      positions_.push_back(c.points[j]);
      joint_.push_back(j);
    }
    for (std::size_t i = 1; i < positions_.size(); ++i)
      boundaries_.push_back(0.5 * (positions_[i - 1] + positions_[i]));
  }

  // Index of the decision region containing y.
  std::size_t region(double y) const {
    return static_cast<std::size_t>(std::upper_bound(boundaries_.begin(), boundaries_.end(), y) - boundaries_.begin());
  }
  std::size_t joint(double y) const { return joint_[region(y)]; }
  std::size_t s1(double y) const { return c_.s1_of(joint(y)); }
  std::size_t s2(double y) const { return c_.s2_of(joint(y)); }

  std::size_t region_count() const { return positions_.size(); }
  std::size_t region_joint(std::size_t r) const { return joint_[r]; }
  // Region r spans (lower(r), upper(r)]; the ends are infinite.
  double lower(std::size_t r) const {
    return r == 0 ? -std::numeric_limits<double>::infinity() : boundaries_[r - 1];
  }
  double upper(std::size_t r) const {
    return r + 1 == positions_.size() ? std::numeric_limits<double>::infinity() : boundaries_[r];
  }

 private:
  Constellation c_;
  std::vector<double> positions_;
  std::vector<std::size_t> joint_;
  std::vector<double> boundaries_;
};

namespace detail {

// Q(z) = P(N(0,1) > z).
inline double gaussian_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

// P(lo < x + N(0, sd^2) <= hi), evaluated on whichever tail keeps precision.
inline double interval_probability(double x, double sd, double lo, double hi) {
  if (sd == 0.0) return (x > lo && x <= hi) ? 1.0 : 0.0;
  const double a = (lo - x) / sd;
  const double b = (hi - x) / sd;
  if (a >= 0.0) return gaussian_tail(a) - gaussian_tail(b);
  if (b <= 0.0) return gaussian_tail(-b) - gaussian_tail(-a);
  return 1.0 - gaussian_tail(-a) - gaussian_tail(b);
}

}  // namespace detail

struct SerPair {
  double ser1 = 0.0;
  double ser2 = 0.0;
};

// Exact per-user SER of nearest-point decoding on `c`: for every transmitted
// point, the Gaussian mass of each decision region whose label is wrong for
// that user. Receiver 1 sees variance sigma1^2 + sigma2^2, receiver 2 sees
// sigma2^2.
inline SerPair constellation_ser_oracle(const Constellation& c, const ChannelConfig& channel) {
  const NearestPointDecoder dec(c);
  const double sd1 = std::sqrt(channel.receiver1_noise());
  const double sd2 = std::sqrt(channel.receiver2_noise());
  SerPair out;
  for (std::size_t j = 0; j < c.size(); ++j) {
    const double x = c.points[j];
    for (std::size_t r = 0; r < dec.region_count(); ++r) {
      const auto label = dec.region_joint(r);
      if (c.s1_of(label) != c.s1_of(j)) out.ser1 += detail::interval_probability(x, sd1, dec.lower(r), dec.upper(r));
      if (c.s2_of(label) != c.s2_of(j)) out.ser2 += detail::interval_probability(x, sd2, dec.lower(r), dec.upper(r));
    }
  }
  out.ser1 /= static_cast<double>(c.size());
  out.ser2 /= static_cast<double>(c.size());
  return out;
}

inline SerPair baseline_ser_oracle(const ArchSpec& arch, double power_fraction_user1, const ChannelConfig& channel) {
  return constellation_ser_oracle(baseline_superposition(arch, power_fraction_user1, channel.power), channel);
}

struct SerEstimate {
  double ser1 = 0.0;
  double ser2 = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t errors1 = 0;
  std::uint64_t errors2 = 0;
  double half_width1 = 0.0;
  double half_width2 = 0.0;
};

inline double binomial_half_width_95(double p, std::uint64_t trials) {
  return 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

inline constexpr std::uint64_t kSerChunk = 10000;
inline constexpr std::uint64_t kMinSerTrials = 10000;

namespace detail {

struct ErrorCounts {
  std::uint64_t e1 = 0;
  std::uint64_t e2 = 0;
};

// Splits `trials` into fixed-size chunks, each with its own Ser substream,
// and runs them on up to `jobs` threads. Counts do not depend on `jobs`.
inline SerEstimate run_ser_chunks(std::uint64_t trials, std::uint64_t seed, unsigned jobs,
                                  const std::function<ErrorCounts(std::uint64_t, Rng&)>& chunk_fn) {
  const std::uint64_t chunks = (trials + kSerChunk - 1) / kSerChunk;
  std::vector<ErrorCounts> counts(chunks);
  parallel_for(chunks, jobs, [&](std::size_t k) {
    Rng rng(seed, Stream::Ser, k);
    const std::uint64_t n = std::min<std::uint64_t>(kSerChunk, trials - k * kSerChunk);
    counts[k] = chunk_fn(n, rng);
  });
  SerEstimate est;
  est.trials = trials;
  for (const auto& c : counts) {
    est.errors1 += c.e1;
    est.errors2 += c.e2;
  }
  est.ser1 = static_cast<double>(est.errors1) / static_cast<double>(trials);
  est.ser2 = static_cast<double>(est.errors2) / static_cast<double>(trials);
  est.half_width1 = binomial_half_width_95(est.ser1, trials);
  est.half_width2 = binomial_half_width_95(est.ser2, trials);
  return est;
}

inline void check_trials(std::uint64_t trials) {
  if (trials < kMinSerTrials)
    throw ConfigError("SER estimation needs at least " + std::to_string(kMinSerTrials) + " trials");
}

}  // namespace detail

// Monte-Carlo SER of the trained decoders. Symbols come from the extracted
// (ensemble-normalized) constellation; noise is drawn fresh per trial.
inline SerEstimate estimate_ser(const TrainedModel& model, const ChannelConfig& channel, std::uint64_t trials,
                                std::uint64_t seed, unsigned jobs = 1) {
  detail::check_trials(trials);
  const Constellation c = extract_constellation(model);
  return detail::run_ser_chunks(trials, seed, jobs, [&](std::uint64_t n, Rng& rng) {
    const auto msgs = sample_messages(model.arch, static_cast<std::size_t>(n), rng);
    Batch x(1, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) x(0, static_cast<Eigen::Index>(i)) = c.at(msgs.s1[i], msgs.s2[i]);
    const auto s = transmit(x, channel, rng);
    const Batch p1 = predict(model.decoder1, s.y1);
    const Batch p2 = predict(model.decoder2, s.y2);
    detail::ErrorCounts e;
    for (std::size_t i = 0; i < n; ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      if (decode(p1.col(col)) != msgs.s1[i]) ++e.e1;
      if (decode(p2.col(col)) != msgs.s2[i]) ++e.e2;
    }
    return e;
  });
}

// Monte-Carlo SER of nearest-point decoding on a fixed constellation; the
// simulation counterpart of constellation_ser_oracle.
inline SerEstimate simulate_constellation_ser(const Constellation& c, const ChannelConfig& channel,
                                              std::uint64_t trials, std::uint64_t seed, unsigned jobs = 1) {
  detail::check_trials(trials);
  const NearestPointDecoder dec(c);
  const unsigned bits = static_cast<unsigned>(std::countr_zero(c.size()));
  return detail::run_ser_chunks(trials, seed, jobs, [&](std::uint64_t n, Rng& rng) {
    std::vector<std::size_t> joint(static_cast<std::size_t>(n));
    Batch x(1, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      joint[i] = static_cast<std::size_t>(rng.uniform_pow2(bits));
      x(0, static_cast<Eigen::Index>(i)) = c.points[joint[i]];
    }
    const auto s = transmit(x, channel, rng);
    detail::ErrorCounts e;
    for (std::size_t i = 0; i < n; ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      if (dec.s1(s.y1(0, col)) != c.s1_of(joint[i])) ++e.e1;
      if (dec.s2(s.y2(0, col)) != c.s2_of(joint[i])) ++e.e2;
    }
    return e;
  });
}

// Constellation CSV: "s1,s2,x", one row per message in joint-index order.
// The same points with the users' roles exchanged: x'(s2, s1) = x(s1, s2).
// At equal SNRs both receivers see the same signal, so a trained model and
// its role-swapped mirror are equally good.
inline Constellation swap_users(const Constellation& c) {
  Constellation out{c.m2, c.m1, std::vector<double>(c.size())};
  for (std::size_t s1 = 0; s1 < c.m1; ++s1)
    for (std::size_t s2 = 0; s2 < c.m2; ++s2) out.points[s2 * c.m1 + s1] = c.at(s1, s2);
  return out;
}

inline void write_constellation_csv(std::ostream& out, const Constellation& c) {
  out << "s1,s2,x\n";
  for (std::size_t j = 0; j < c.size(); ++j)
    out << c.s1_of(j) << ',' << c.s2_of(j) << ',' << format_double(c.points[j]) << '\n';
}

inline Constellation read_constellation_csv(std::istream& in) {
  io::LineReader r(in);
  if (r.next("header") != "s1,s2,x") r.fail("expected header 's1,s2,x'");
  std::vector<std::array<double, 3>> rows;
  std::size_t m1 = 0, m2 = 0;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    const auto t = io::split(line);
    if (t.size() != 3) throw LoadError("constellation csv: expected 3 fields in '" + line + "'");
    const auto s1 = io::parse_count(t[0], r);
    const auto s2 = io::parse_count(t[1], r);
    m1 = std::max<std::size_t>(m1, s1 + 1);
    m2 = std::max<std::size_t>(m2, s2 + 1);
    rows.push_back({static_cast<double>(s1), static_cast<double>(s2), io::parse_double(t[2], r)});
  }
  if (rows.size() != m1 * m2 || rows.empty()) throw LoadError("constellation csv: incomplete message grid");
  Constellation c{m1, m2, std::vector<double>(m1 * m2, std::numeric_limits<double>::quiet_NaN())};
  for (const auto& row : rows) c.points[static_cast<std::size_t>(row[0]) * m2 + static_cast<std::size_t>(row[1])] = row[2];
  for (double x : c.points)
    if (std::isnan(x)) throw LoadError("constellation csv: duplicate or missing message");
  return c;
}

}  // namespace bcae

#endif  // BCAE_ANALYSIS_HPP
