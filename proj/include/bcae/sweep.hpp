#ifndef BCAE_SWEEP_HPP
#define BCAE_SWEEP_HPP

// Power-inversion sweep: for a fixed user-1 SNR, train one model per
// (user-2 SNR, repeat) and report the median power split per point.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "bcae/analysis.hpp"
#include "bcae/autoencoder.hpp"
#include "bcae/channel.hpp"
#include "bcae/parallel.hpp"
#include "bcae/rng.hpp"

namespace bcae {

// Repeat r of every sweep point trains with the same derived seed, so a
// single-point sweep reproduces the corresponding row of a longer one.
inline std::uint64_t sweep_seed(std::uint64_t base_seed, unsigned repeat) {
  return derive_seed(base_seed, Stream::Sweep, repeat);
}

// Median of the non-NaN entries; NaN if there are none.
inline double median(std::vector<double> v) {
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * v[n / 2 - 1] + 0.5 * v[n / 2];
}

struct SweepRun {
  std::uint64_t seed = 0;
  bool ok = false;
  PowerSplit split;
  std::string error;
};

struct SweepPoint {
  double snr2_db = 0.0;
  std::vector<SweepRun> runs;
  double median_user1_fraction = std::numeric_limits<double>::quiet_NaN();
  double median_ratio_db = std::numeric_limits<double>::quiet_NaN();

  bool ok() const {
    return std::any_of(runs.begin(), runs.end(), [](const SweepRun& r) { return r.ok; });
  }
};

struct SweepConfig {
  ArchSpec arch = ArchSpec::table1(1, 1);
  double snr1_db = 10.0;
  std::vector<double> snr2_db;
  unsigned repeats = 3;
  TrainConfig train;  // train.seed is the base seed
  unsigned restarts = 1;  // screened restarts per run
  unsigned jobs = 1;
};

// Inclusive arithmetic grid from..to; the endpoint is kept when it lies
// within 1e-9 of a grid point.
inline std::vector<double> snr_grid(double from, double to, double step) {
  if (!(step > 0.0)) throw ConfigError("sweep: step must be positive");
  if (to < from) throw ConfigError("sweep: --snr2-to is below --snr2-from");
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) out.push_back(from + static_cast<double>(i) * step);
  return out;
}

// Per-run training failures are recorded on the point; the sweep continues.
inline std::vector<SweepPoint> power_inversion_sweep(const SweepConfig& cfg) {
  if (cfg.snr2_db.empty()) throw ConfigError("sweep: no SNR points");
  if (cfg.repeats == 0) throw ConfigError("sweep: repeats must be positive");
  for (double s : cfg.snr2_db)
    if (s < cfg.snr1_db) throw DegradednessError(cfg.snr1_db, s);
  cfg.train.validate();
  cfg.arch.validate();

  std::vector<SweepPoint> points(cfg.snr2_db.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    points[p].snr2_db = cfg.snr2_db[p];
    points[p].runs.resize(cfg.repeats);
  }
  parallel_for(points.size() * cfg.repeats, cfg.jobs, [&](std::size_t t) {
    auto& run = points[t / cfg.repeats].runs[t % cfg.repeats];
    TrainConfig tc = cfg.train;
    tc.seed = sweep_seed(cfg.train.seed, static_cast<unsigned>(t % cfg.repeats));
    run.seed = tc.seed;
    try {
      const auto channel = ChannelConfig::make(cfg.snr1_db, points[t / cfg.repeats].snr2_db);
      const auto model = train_with_restarts(cfg.arch, channel, tc, {cfg.restarts}).model;
      run.split = power_decomposition(extract_constellation(model));
      run.ok = true;
    } catch (const std::exception& e) {
      run.error = e.what();
    }
  });

  for (auto& pt : points) {
    std::vector<double> fractions, ratios;
    for (const auto& r : pt.runs) {
      if (!r.ok) continue;
      fractions.push_back(r.split.user1_fraction());
      ratios.push_back(r.split.ratio_db);
    }
    pt.median_user1_fraction = median(fractions);
    pt.median_ratio_db = median(ratios);
  }
  return points;
}

// "snr2_db,median_user1_fraction,median_ratio_db,seeds,status"; seeds are
// ';'-separated, status is "ok" or "failed:<count>".
inline void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
  out << "snr2_db,median_user1_fraction,median_ratio_db,seeds,status\n";
  for (const auto& p : points) {
    out << format_double(p.snr2_db) << ',' << format_double(p.median_user1_fraction) << ','
        << format_double(p.median_ratio_db) << ',';
    std::size_t failed = 0;
    for (std::size_t i = 0; i < p.runs.size(); ++i) {
      if (i) out << ';';
      out << p.runs[i].seed;
      if (!p.runs[i].ok) ++failed;
    }
    out << ',' << (failed == 0 ? std::string("ok") : "failed:" + std::to_string(failed)) << '\n';
  }
}

struct SweepRow {
  double snr2_db = 0.0;
  double median_user1_fraction = 0.0;
  double median_ratio_db = 0.0;
  std::vector<std::uint64_t> seeds;
  std::string status;
};

inline std::vector<SweepRow> read_sweep_csv(std::istream& in) {
  io::LineReader r(in);
  if (r.next("header") != "snr2_db,median_user1_fraction,median_ratio_db,seeds,status")
    r.fail("unexpected sweep csv header");
  std::vector<SweepRow> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
      f.push_back(line.substr(start, pos - start));
    f.push_back(line.substr(start));
    if (f.size() != 5) throw LoadError("sweep csv: expected 5 fields in '" + line + "'");
    SweepRow row;
    // strtod accepts "inf" and "nan", which is how non-finite medians are written.
    row.snr2_db = std::strtod(f[0].c_str(), nullptr);
    row.median_user1_fraction = std::strtod(f[1].c_str(), nullptr);
    row.median_ratio_db = std::strtod(f[2].c_str(), nullptr);
    std::replace(f[3].begin(), f[3].end(), ';', ' ');
    for (const auto& s : io::split(f[3])) row.seeds.push_back(io::parse_count(s, r));
    row.status = f[4];
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace bcae

#endif  // BCAE_SWEEP_HPP
