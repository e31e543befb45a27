#ifndef BCAE_NN_IO_HPP
#define BCAE_NN_IO_HPP

// Text checkpoint format:
//
//   bcae-v1
//   <layer count>
//   dense <in_dim> <out_dim> <relu|linear|softmax>
//   <out_dim lines: in_dim weights then the bias, 17 significant digits>
//   ...
//
// Seventeen significant digits round-trip every double exactly.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bcae/errors.hpp"
#include "bcae/nn.hpp"

namespace bcae {

inline constexpr const char* kCheckpointVersion = "bcae-v1";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace io {

// Line reader that reports the line number in every error.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::string next(const char* what) {
    std::string line;
    if (!std::getline(in_, line)) throw LoadError("unexpected end of file while reading " + std::string(what));
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw LoadError("line " + std::to_string(line_no_) + ": " + msg);
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline double parse_double(const std::string& tok, const LineReader& r) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size() || errno == ERANGE) r.fail("bad number '" + tok + "'");
  return v;
}

inline unsigned long long parse_count(const std::string& tok, const LineReader& r) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
    r.fail("expected a non-negative integer, got '" + tok + "'");
  errno = 0;
  const unsigned long long v = std::strtoull(tok.c_str(), nullptr, 10);
  if (errno == ERANGE) r.fail("integer out of range '" + tok + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string t; ss >> t;) out.push_back(t);
  return out;
}

inline void expect_version(LineReader& r) {
  const auto line = r.next("version header");
  if (line != kCheckpointVersion)
    r.fail("unsupported checkpoint version '" + line + "' (expected " + kCheckpointVersion + ")");
}

}  // namespace io

// Layer count plus layers; no version line.
inline void write_net_body(std::ostream& out, const DenseNet& net) {
  out << net.depth() << '\n';
  for (const auto& l : net.layers()) {
    out << "dense " << l.in_dim() << ' ' << l.out_dim() << ' ' << to_string(l.activation) << '\n';
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) out << format_double(l.weights(r, c)) << ' ';
      out << format_double(l.bias(r)) << '\n';
    }
  }
}

inline DenseNet read_net_body(io::LineReader& r) {
  const auto count_tokens = io::split(r.next("layer count"));
  if (count_tokens.size() != 1) r.fail("expected a layer count");
  const auto count = io::parse_count(count_tokens[0], r);
  if (count == 0) r.fail("a net needs at least one layer");
  if (count > 1024) r.fail("implausible layer count");

  std::vector<DenseLayer> layers;
  std::size_t input_dim = 0;
  for (unsigned long long k = 0; k < count; ++k) {
    const auto h = io::split(r.next("layer header"));
    if (h.size() != 4 || h[0] != "dense") r.fail("expected 'dense <in> <out> <activation>'");
    const auto in = io::parse_count(h[1], r);
    const auto outd = io::parse_count(h[2], r);
    if (in == 0 || outd == 0 || in > (1u << 16) || outd > (1u << 16)) r.fail("bad layer dimensions");
    DenseLayer l;
    try {
      l.activation = parse_activation(h[3]);
    } catch (const ConfigError& e) {
      r.fail(e.what());
    }
    l.weights.resize(static_cast<Eigen::Index>(outd), static_cast<Eigen::Index>(in));
    l.bias.resize(static_cast<Eigen::Index>(outd));
    for (unsigned long long row = 0; row < outd; ++row) {
      const auto toks = io::split(r.next("weight row"));
      if (toks.size() != in + 1) r.fail("expected " + std::to_string(in + 1) + " values per row");
      for (unsigned long long c = 0; c < in; ++c)
        l.weights(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = io::parse_double(toks[c], r);
      l.bias(static_cast<Eigen::Index>(row)) = io::parse_double(toks[in], r);
    }
    if (k == 0) input_dim = in;
    layers.push_back(std::move(l));
  }
  try {
    return DenseNet(input_dim, std::move(layers));
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
}

inline void write_net(std::ostream& out, const DenseNet& net) {
  out << kCheckpointVersion << '\n';
  write_net_body(out, net);
}

inline DenseNet read_net(std::istream& in) {
  io::LineReader r(in);
  io::expect_version(r);
  return read_net_body(r);
}

// Writes to a sibling temp file and renames it over the target.
template <class Writer>
void write_file_atomically(const std::filesystem::path& path, Writer&& writer) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    writer(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void save_net(const DenseNet& net, const std::filesystem::path& path) {
  write_file_atomically(path, [&](std::ostream& out) { write_net(out, net); });
}

inline DenseNet load_net(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return read_net(in);
}

}  // namespace bcae

#endif  // BCAE_NN_IO_HPP
