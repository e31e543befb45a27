#ifndef BCAE_REPORT_HPP
#define BCAE_REPORT_HPP

// Analysis report (JSON) and plot-ready outputs for a trained model.

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "bcae/analysis.hpp"
#include "bcae/autoencoder.hpp"

namespace bcae {

struct AnalysisReport {
  PowerSplit power_split;
  bool gray_user2 = false;
  bool user1_separable = false;
  std::size_t distinct_points = 0;
  std::optional<SerEstimate> ser;
};

inline AnalysisReport analyze(const TrainedModel& model, std::uint64_t ser_trials, std::uint64_t seed,
                              unsigned jobs = 1) {
  const auto c = extract_constellation(model);
  AnalysisReport r;
  r.power_split = power_decomposition(c);
  r.gray_user2 = detect_gray_user2(c);
  r.user1_separable = user1_label_separable(c);
  r.distinct_points = distinct_point_count(c);
  if (ser_trials > 0) r.ser = estimate_ser(model, model.channel, ser_trials, seed, jobs);
  return r;
}

// JSON has no infinities; they are written as the strings "inf", "-inf" and
// "nan".
inline nlohmann::json json_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double number_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw LoadError("report: unexpected numeric string '" + s + "'");
  }
  return j.get<double>();
}

inline nlohmann::json config_json(const TrainedModel& m) {
  return {
      {"k1", m.arch.k1},
      {"k2", m.arch.k2},
      {"n", m.arch.n},
      {"arch", m.arch.preset_name()},
      {"snr1_db", m.channel.snr1_db},
      {"snr2_db", m.channel.snr2_db},
      {"power", m.channel.power},
      {"sigma1_sq", m.channel.sigma1_sq},
      {"sigma2_sq", m.channel.sigma2_sq},
      {"seed", m.train.seed},
      {"steps", m.train.steps},
      {"batch", m.train.batch_size},
      {"lr", m.train.learning_rate},
  };
}

inline nlohmann::json report_json(const AnalysisReport& r, const TrainedModel& m) {
  nlohmann::json j;
  j["power_split"] = {
      {"p1", r.power_split.p1},
      {"p2", r.power_split.p2},
      {"ratio_db", json_number(r.power_split.ratio_db)},
      {"dc_offset", r.power_split.dc_offset},
      {"user1_fraction", json_number(r.power_split.user1_fraction())},
  };
  j["gray_user2"] = r.gray_user2;
  j["user1_separable"] = r.user1_separable;
  j["distinct_points"] = r.distinct_points;
  if (r.ser) {
    j["ser"] = {
        {"ser1", r.ser->ser1},
        {"ser2", r.ser->ser2},
        {"trials", r.ser->trials},
        {"half_width_95", {{"user1", r.ser->half_width1}, {"user2", r.ser->half_width2}}},
    };
  } else {
    j["ser"] = nullptr;
  }
  j["config"] = config_json(m);
  return j;
}

// Points sorted by position with both users' labels, for plotting.
inline void write_plot_csv(std::ostream& out, const Constellation& c) {
  out << "x,s1,s2\n";
  for (auto j : c.sorted_order()) out << format_double(c.points[j]) << ',' << c.s1_of(j) << ',' << c.s2_of(j) << '\n';
}

namespace detail {

inline std::string bit_label(std::size_t v, std::size_t m) {
  std::string s;
  for (std::size_t b = m >> 1; b > 0; b >>= 1) s += (v & b) ? '1' : '0';
  return s.empty() ? "0" : s;
}

}  // namespace detail

// Minimal SVG of the 1-D constellation: user-1 labels above the axis, user-2
// labels below.
inline void write_constellation_svg(std::ostream& out, const Constellation& c, const std::string& title) {
  double lim = 0.0;
  for (double x : c.points) lim = std::max(lim, std::abs(x));
  lim = lim > 0.0 ? lim * 1.15 : 1.0;
  const double w = 640, h = 200, mid = 100;
  auto px = [&](double x) { return 20.0 + (x + lim) / (2.0 * lim) * (w - 40.0); };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<text x=\"10\" y=\"20\" font-family=\"monospace\" font-size=\"13\">" << title << "</text>\n";
  out << "<line x1=\"20\" y1=\"" << mid << "\" x2=\"" << w - 20 << "\" y2=\"" << mid << "\" stroke=\"gray\"/>\n";
  out << "<line x1=\"" << px(0.0) << "\" y1=\"" << mid - 6 << "\" x2=\"" << px(0.0) << "\" y2=\"" << mid + 6
      << "\" stroke=\"gray\"/>\n";
  // Coincident points stack their labels.
  std::vector<double> placed;
  for (auto j : c.sorted_order()) {
    const double x = px(c.points[j]);
    int stack = 0;
    for (double p : placed)
      if (std::abs(p - x) < 1.0) ++stack;
    placed.push_back(x);
    out << "<circle cx=\"" << x << "\" cy=\"" << mid << "\" r=\"4\" fill=\"black\"/>\n";
    out << "<text x=\"" << x << "\" y=\"" << mid - 14 - 14 * stack
        << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\" fill=\"#b00\">"
        << detail::bit_label(c.s1_of(j), c.m1) << "</text>\n";
    out << "<text x=\"" << x << "\" y=\"" << mid + 24 + 14 * stack
        << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\" fill=\"#00b\">"
        << detail::bit_label(c.s2_of(j), c.m2) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace bcae

#endif  // BCAE_REPORT_HPP
