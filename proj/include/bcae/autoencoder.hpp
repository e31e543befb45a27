#ifndef BCAE_AUTOENCODER_HPP
#define BCAE_AUTOENCODER_HPP

// Two-user broadcast autoencoder.
//
//   one_hot(s1 * M2 + s2) -> Dense+ReLU (M) -> Dense+Linear (1) -> power norm
//     -> degraded AWGN channel -> y1 -> decoder 1 -> softmax over M1
//                              -> y2 -> decoder 2 -> softmax over M2
//
// Loss is the sum of the two batch-mean cross-entropies; the encoder, the
// normalization and both decoders are trained jointly with Adam.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bcae/channel.hpp"
#include "bcae/errors.hpp"
#include "bcae/nn.hpp"
#include "bcae/nn_io.hpp"
#include "bcae/parallel.hpp"
#include "bcae/rng.hpp"

namespace bcae {

// Upper bound on k1 + k2; the one-hot input grows as 2^(k1+k2).
inline constexpr unsigned kMaxTotalBits = 10;

enum class ArchPreset { Table1, Table2 };

inline std::string_view to_string(ArchPreset p) { return p == ArchPreset::Table1 ? "table1" : "table2"; }

inline ArchPreset parse_arch_preset(std::string_view s) {
  if (s == "table1") return ArchPreset::Table1;
  if (s == "table2") return ArchPreset::Table2;
  throw ConfigError("unknown architecture preset '" + std::string(s) + "' (expected table1 or table2)");
}

struct ArchSpec {
  unsigned k1 = 1;
  unsigned k2 = 1;
  unsigned n = 1;  // channel uses; only 1 is supported
  std::vector<std::size_t> decoder1_hidden;
  std::vector<std::size_t> decoder2_hidden;

  std::size_t m1() const { return std::size_t{1} << k1; }
  std::size_t m2() const { return std::size_t{1} << k2; }
  std::size_t m() const { return std::size_t{1} << (k1 + k2); }

  // Encoder hidden width M; decoder hidden widths M1 and M2.
  static ArchSpec table1(unsigned k1, unsigned k2) {
    ArchSpec a{k1, k2, 1, {}, {}};
    a.validate_bits();
    a.decoder1_hidden = {a.m1()};
    a.decoder2_hidden = {a.m2()};
    return a;
  }

  // Two hidden layers of width M in each decoder.
  static ArchSpec table2(unsigned k1, unsigned k2) {
    ArchSpec a{k1, k2, 1, {}, {}};
    a.validate_bits();
    a.decoder1_hidden = {a.m(), a.m()};
    a.decoder2_hidden = {a.m(), a.m()};
    return a;
  }

  static ArchSpec preset(ArchPreset p, unsigned k1, unsigned k2) {
    return p == ArchPreset::Table1 ? table1(k1, k2) : table2(k1, k2);
  }

  // "table1", "table2" or "custom".
  std::string preset_name() const {
    if (k1 + k2 > kMaxTotalBits || k1 == 0 || k2 == 0) return "custom";
    if (*this == table1(k1, k2)) return "table1";
    if (*this == table2(k1, k2)) return "table2";
    return "custom";
  }

  void validate_bits() const {
    if (k1 == 0 || k2 == 0) throw ConfigError("arch: k1 and k2 must be positive");
    if (k1 + k2 > kMaxTotalBits)
      throw ConfigError("arch: k1 + k2 = " + std::to_string(k1 + k2) + " exceeds the one-hot limit of " +
                        std::to_string(kMaxTotalBits));
    if (n != 1) throw ConfigError("arch: only n = 1 channel use is supported");
  }

  void validate() const {
    validate_bits();
    for (auto w : decoder1_hidden)
      if (w == 0) throw ConfigError("arch: zero-width decoder layer");
    for (auto w : decoder2_hidden)
      if (w == 0) throw ConfigError("arch: zero-width decoder layer");
  }

  bool operator==(const ArchSpec&) const = default;
};

struct TrainConfig {
  std::size_t batch_size = 1000;
  double learning_rate = 0.001;
  std::uint64_t steps = 20000;
  std::uint64_t seed = 0;
  std::uint64_t snapshot_every = 10;

  void validate() const {
    if (batch_size < 2) throw ConfigError("train: batch_size must be at least 2");
    if (steps < 1) throw ConfigError("train: steps must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("train: learning rate must be positive");
    if (snapshot_every < 1) throw ConfigError("train: snapshot_every must be at least 1");
  }
};

struct HistoryPoint {
  std::uint64_t step;
  double loss;
};

struct TrainedModel {
  DenseNet encoder;
  DenseNet decoder1;
  DenseNet decoder2;
  ArchSpec arch;
  ChannelConfig channel;
  TrainConfig train;
  std::vector<HistoryPoint> history;  // not part of the checkpoint
  // Mean loss over the last 10% of steps; NaN for loaded models.
  double tail_loss = std::numeric_limits<double>::quiet_NaN();
};

inline std::size_t joint_index(std::size_t s1, std::size_t s2, const ArchSpec& arch) {
  if (s1 >= arch.m1())
    throw InputError("joint_index: s1 = " + std::to_string(s1) + " out of range [0, " + std::to_string(arch.m1()) + ")");
  if (s2 >= arch.m2())
    throw InputError("joint_index: s2 = " + std::to_string(s2) + " out of range [0, " + std::to_string(arch.m2()) + ")");
  return s1 * arch.m2() + s2;
}

inline Vector one_hot(std::size_t index, std::size_t size) {
  if (index >= size)
    throw InputError("one_hot: index " + std::to_string(index) + " out of range [0, " + std::to_string(size) + ")");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(size));
  v(static_cast<Eigen::Index>(index)) = 1.0;
  return v;
}

struct MessageBatch {
  std::vector<std::size_t> s1;
  std::vector<std::size_t> s2;

  std::size_t size() const { return s1.size(); }
};

// Uniform, independent s1 and s2: one joint draw per sample, split by the
// joint_index convention.
inline MessageBatch sample_messages(const ArchSpec& arch, std::size_t count, Rng& rng) {
  MessageBatch b;
  b.s1.resize(count);
  b.s2.resize(count);
  const auto m2 = arch.m2();
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_pow2(arch.k1 + arch.k2));
    b.s1[i] = j / m2;
    b.s2[i] = j % m2;
  }
  return b;
}

inline Batch one_hot_batch(const ArchSpec& arch, std::span<const std::size_t> s1, std::span<const std::size_t> s2) {
  if (s1.size() != s2.size()) throw InputError("message batches differ in length");
  if (s1.empty()) throw InputError("empty message batch");
  Batch b = Batch::Zero(static_cast<Eigen::Index>(arch.m()), static_cast<Eigen::Index>(s1.size()));
  for (std::size_t j = 0; j < s1.size(); ++j)
    b(static_cast<Eigen::Index>(joint_index(s1[j], s2[j], arch)), static_cast<Eigen::Index>(j)) = 1.0;
  return b;
}

inline DenseNet make_encoder(const ArchSpec& arch, Rng& rng) {
  const LayerSpec specs[] = {{arch.m(), Activation::ReLU}, {arch.n, Activation::Linear}};
  return make_dense_net(arch.m(), specs, rng);
}

inline DenseNet make_decoder(std::span<const std::size_t> hidden, std::size_t outputs, unsigned n, Rng& rng) {
  std::vector<LayerSpec> specs;
  for (auto w : hidden) specs.push_back({w, Activation::ReLU});
  specs.push_back({outputs, Activation::Softmax});
  return make_dense_net(n, specs, rng);
}

// Fresh, untrained model. Encoder, decoder 1 and decoder 2 are initialized in
// that order from the Init stream of `seed`.
inline TrainedModel init_model(const ArchSpec& arch, const ChannelConfig& channel, const TrainConfig& cfg) {
  arch.validate();
  Rng rng(cfg.seed, Stream::Init);
  TrainedModel m;
  m.arch = arch;
  m.channel = channel;
  m.train = cfg;
  m.encoder = make_encoder(arch, rng);
  m.decoder1 = make_decoder(arch.decoder1_hidden, arch.m1(), arch.n, rng);
  m.decoder2 = make_decoder(arch.decoder2_hidden, arch.m2(), arch.n, rng);
  return m;
}

struct SystemOutput {
  Batch p1;
  Batch p2;
  Batch x;
};

enum class Noise { Off, On };

namespace detail {

// The encoder output depends only on the joint message, so it is evaluated
// once per message (an identity batch of all M one-hot vectors) and gathered
// per sample. Backward scatter-adds the per-sample gradients onto the M
// columns, which gives the same parameter gradients as a per-sample pass.
struct SystemPass {
  std::vector<std::size_t> joint;
  ForwardResult enc;  // over the M distinct messages
  Batch raw;          // gathered encoder output, 1 x batch
  NormalizedBatch norm;
  ForwardResult dec1;
  ForwardResult dec2;
};

inline SystemPass run_system(const TrainedModel& model, const MessageBatch& msgs, Rng* rng, Noise noise) {
  const auto& arch = model.arch;
  if (msgs.s1.size() != msgs.s2.size()) throw InputError("message batches differ in length");
  if (msgs.s1.empty()) throw InputError("empty message batch");
  SystemPass p;
  p.joint.resize(msgs.size());
  for (std::size_t i = 0; i < msgs.size(); ++i) p.joint[i] = joint_index(msgs.s1[i], msgs.s2[i], arch);
  const auto m = static_cast<Eigen::Index>(arch.m());
  p.enc = forward(model.encoder, Batch::Identity(m, m));
  p.raw.resize(p.enc.output.rows(), static_cast<Eigen::Index>(msgs.size()));
  for (std::size_t i = 0; i < msgs.size(); ++i)
    p.raw.col(static_cast<Eigen::Index>(i)) = p.enc.output.col(static_cast<Eigen::Index>(p.joint[i]));
  p.norm = normalize_power(p.raw, model.channel.power);
  if (noise == Noise::On) {
    if (rng == nullptr) throw UsageError("forward_system: noise requested without an rng");
    const auto s = transmit(p.norm.x, model.channel, *rng);
    p.dec1 = forward(model.decoder1, s.y1);
    p.dec2 = forward(model.decoder2, s.y2);
  } else {
    p.dec1 = forward(model.decoder1, p.norm.x);
    p.dec2 = forward(model.decoder2, p.norm.x);
  }
  return p;
}

}  // namespace detail

// Power normalization is over this batch, so x has mean square P exactly.
inline SystemOutput forward_system(const TrainedModel& model, const MessageBatch& msgs, Rng* rng, Noise noise) {
  auto p = detail::run_system(model, msgs, rng, noise);
  return {std::move(p.dec1.output), std::move(p.dec2.output), std::move(p.norm.x)};
}

inline double loss_joint(const Batch& p1, const Batch& p2, std::span<const std::size_t> s1,
                         std::span<const std::size_t> s2) {
  return cross_entropy(p1, s1) + cross_entropy(p2, s2);
}

struct SystemGradients {
  double loss = 0.0;
  Gradients encoder;
  Gradients decoder1;
  Gradients decoder2;
};

// Joint loss and its exact gradient with respect to every encoder and decoder
// parameter. The normalization's shared scale factor is differentiated; the
// noise is treated as a constant.
inline SystemGradients joint_loss_and_gradients(const TrainedModel& model, const MessageBatch& msgs, Rng* rng,
                                                Noise noise) {
  auto p = detail::run_system(model, msgs, rng, noise);
  SystemGradients g;
  g.loss = loss_joint(p.dec1.output, p.dec2.output, msgs.s1, msgs.s2);
  g.decoder1 = backward(model.decoder1, p.dec1.tape, softmax_cross_entropy_grad(p.dec1.output, msgs.s1),
                        GradientAt::Logits);
  g.decoder2 = backward(model.decoder2, p.dec2.tape, softmax_cross_entropy_grad(p.dec2.output, msgs.s2),
                        GradientAt::Logits);
  // y1 and y2 are both x plus constants, so their gradients add at x.
  const Batch dx = g.decoder1.input + g.decoder2.input;
  const Batch draw = normalize_power_backward(p.raw, p.norm, dx);
  Batch dcode = Batch::Zero(p.enc.output.rows(), p.enc.output.cols());
  for (std::size_t i = 0; i < p.joint.size(); ++i)
    dcode.col(static_cast<Eigen::Index>(p.joint[i])) += draw.col(static_cast<Eigen::Index>(i));
  g.encoder = backward(model.encoder, p.enc.tape, dcode);
  return g;
}

// Trains a model from scratch. Deterministic in (arch, channel, cfg).
inline TrainedModel train(const ArchSpec& arch, const ChannelConfig& channel, const TrainConfig& cfg) {
  cfg.validate();
  TrainedModel model = init_model(arch, channel, cfg);
  const AdamOptions opts{cfg.learning_rate};
  AdamState enc_state(model.encoder, opts);
  AdamState dec1_state(model.decoder1, opts);
  AdamState dec2_state(model.decoder2, opts);
  Rng rng(cfg.seed, Stream::Training);
  model.history.reserve(static_cast<std::size_t>(cfg.steps / cfg.snapshot_every + 2));
  const std::uint64_t tail_from = cfg.steps - std::max<std::uint64_t>(1, cfg.steps / 10);
  double tail_sum = 0.0;
  for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
    const auto msgs = sample_messages(arch, cfg.batch_size, rng);
    auto g = joint_loss_and_gradients(model, msgs, &rng, Noise::On);
    if (!std::isfinite(g.loss)) throw TrainingError("train: loss is not finite", step);
    if ((step - 1) % cfg.snapshot_every == 0 || step == cfg.steps) model.history.push_back({step, g.loss});
    if (step > tail_from) tail_sum += g.loss;
    try {
      adam_step(model.encoder, g.encoder, enc_state);
      adam_step(model.decoder1, g.decoder1, dec1_state);
      adam_step(model.decoder2, g.decoder2, dec2_state);
    } catch (const TrainingError& e) {
      throw TrainingError(e.what(), step);
    }
  }
  model.tail_loss = tail_sum / static_cast<double>(cfg.steps - tail_from);
  return model;
}

// Screened restarts. Training from a single seed often settles in a poor
// local optimum (e.g. the users' roles swapped), and which basin a run lands
// in is fixed early. Each candidate seed is trained for screen_steps; the one
// with the lowest tail loss is then trained for the full budget. The result
// is exactly train() at the chosen seed, which the model records.
struct RestartConfig {
  unsigned count = 1;
  std::uint64_t screen_steps = 0;  // 0: a quarter of the full budget
  unsigned jobs = 1;

  void validate() const {
    if (count < 1) throw ConfigError("train: restarts must be at least 1");
  }
};

struct RestartCandidate {
  std::uint64_t seed = 0;
  double screen_loss = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty if screening succeeded
};

struct RestartResult {
  TrainedModel model;
  std::vector<RestartCandidate> candidates;
  std::size_t chosen = 0;
};

// Candidate 0 is the base seed itself, so one restart is plain training.
inline std::uint64_t restart_seed(std::uint64_t base_seed, unsigned index) {
  return index == 0 ? base_seed : derive_seed(base_seed, Stream::Restart, index);
}

inline RestartResult train_with_restarts(const ArchSpec& arch, const ChannelConfig& channel, const TrainConfig& cfg,
                                         const RestartConfig& rc) {
  cfg.validate();
  rc.validate();
  if (rc.count == 1) return {train(arch, channel, cfg), {{cfg.seed, std::numeric_limits<double>::quiet_NaN(), {}}}, 0};

  const std::uint64_t screen =
      std::min(cfg.steps, rc.screen_steps > 0 ? rc.screen_steps : std::max<std::uint64_t>(1, cfg.steps / 4));
  std::vector<RestartCandidate> cands(rc.count);
  parallel_for(cands.size(), rc.jobs, [&](std::size_t i) {
    TrainConfig c = cfg;
    c.seed = restart_seed(cfg.seed, static_cast<unsigned>(i));
    c.steps = screen;
    cands[i].seed = c.seed;
    try {
      cands[i].screen_loss = train(arch, channel, c).tail_loss;
    } catch (const std::exception& e) {
      cands[i].error = e.what();
    }
  });

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (cands[i].error.empty() && (!best || cands[i].screen_loss < cands[*best].screen_loss)) best = i;
  if (!best) throw TrainingError("train: every restart failed; first: " + cands[0].error, 0);

  TrainConfig c = cfg;
  c.seed = cands[*best].seed;
  return {train(arch, channel, c), std::move(cands), *best};
}

// Argmax; ties go to the lowest index.
inline std::size_t decode(const Eigen::Ref<const Vector>& p) {
  if (p.size() == 0) throw InputError("decode: empty probability column");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i)
    if (p(i) > p(best)) best = i;
  return static_cast<std::size_t>(best);
}

// Model checkpoint: the net format with a metadata preamble.
//
//   bcae-v1
//   arch <k1> <k2> <n>
//   channel <snr1_db> <snr2_db> <P>
//   train <seed> <steps> <batch> <lr>
//   <encoder> <decoder1> <decoder2>   (each: layer count line + layers)
inline void write_model(std::ostream& out, const TrainedModel& m) {
  out << kCheckpointVersion << '\n';
  out << "arch " << m.arch.k1 << ' ' << m.arch.k2 << ' ' << m.arch.n << '\n';
  out << "channel " << format_double(m.channel.snr1_db) << ' ' << format_double(m.channel.snr2_db) << ' '
      << format_double(m.channel.power) << '\n';
  out << "train " << m.train.seed << ' ' << m.train.steps << ' ' << m.train.batch_size << ' '
      << format_double(m.train.learning_rate) << '\n';
  write_net_body(out, m.encoder);
  write_net_body(out, m.decoder1);
  write_net_body(out, m.decoder2);
}

namespace detail {

inline std::vector<std::string> tagged_line(io::LineReader& r, const char* tag, std::size_t values) {
  auto t = io::split(r.next(tag));
  if (t.size() != values + 1 || t[0] != tag)
    r.fail(std::string("expected '") + tag + "' followed by " + std::to_string(values) + " values");
  t.erase(t.begin());
  return t;
}

inline std::vector<std::size_t> hidden_widths(const DenseNet& net) {
  std::vector<std::size_t> w;
  for (std::size_t i = 0; i + 1 < net.depth(); ++i) w.push_back(net.layer(i).out_dim());
  return w;
}

inline void check_model_shapes(const TrainedModel& m) {
  const auto& a = m.arch;
  const auto& e = m.encoder;
  if (e.input_dim() != a.m() || e.output_dim() != a.n)
    throw LoadError("encoder shape does not match arch (expected " + std::to_string(a.m()) + " -> 1)");
  auto check_decoder = [&](const DenseNet& d, std::size_t outputs, const char* name) {
    if (d.input_dim() != a.n || d.output_dim() != outputs)
      throw LoadError(std::string(name) + " shape does not match arch");
    if (d.layers().back().activation != Activation::Softmax)
      throw LoadError(std::string(name) + " must end in a softmax layer");
  };
  check_decoder(m.decoder1, a.m1(), "decoder1");
  check_decoder(m.decoder2, a.m2(), "decoder2");
}

}  // namespace detail

inline TrainedModel read_model(std::istream& in) {
  io::LineReader r(in);
  io::expect_version(r);
  TrainedModel m;
  const auto arch = detail::tagged_line(r, "arch", 3);
  m.arch.k1 = static_cast<unsigned>(io::parse_count(arch[0], r));
  m.arch.k2 = static_cast<unsigned>(io::parse_count(arch[1], r));
  m.arch.n = static_cast<unsigned>(io::parse_count(arch[2], r));
  try {
    m.arch.validate_bits();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  const auto ch = detail::tagged_line(r, "channel", 3);
  try {
    m.channel = ChannelConfig::make(io::parse_double(ch[0], r), io::parse_double(ch[1], r), io::parse_double(ch[2], r));
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  const auto tr = detail::tagged_line(r, "train", 4);
  m.train.seed = io::parse_count(tr[0], r);
  m.train.steps = io::parse_count(tr[1], r);
  m.train.batch_size = static_cast<std::size_t>(io::parse_count(tr[2], r));
  m.train.learning_rate = io::parse_double(tr[3], r);
  m.encoder = read_net_body(r);
  m.decoder1 = read_net_body(r);
  m.decoder2 = read_net_body(r);
  m.arch.decoder1_hidden = detail::hidden_widths(m.decoder1);
  m.arch.decoder2_hidden = detail::hidden_widths(m.decoder2);
  detail::check_model_shapes(m);
  return m;
}

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  write_file_atomically(path, [&](std::ostream& out) { write_model(out, m); });
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    return read_model(in);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace bcae

#endif  // BCAE_AUTOENCODER_HPP
