#ifndef BCAE_NN_HPP
#define BCAE_NN_HPP

// Minimal dense-network engine: forward pass with an activation tape, exact
// reverse-mode gradients, softmax cross-entropy, and Adam. Batches are stored
// column-major, one sample per column (dim x batch_size). All arithmetic is
// double precision.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bcae/errors.hpp"
#include "bcae/rng.hpp"

namespace bcae {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Batch = Eigen::MatrixXd;

// Probabilities are clamped to this before taking the log in cross_entropy.
inline constexpr double kProbabilityFloor = 1e-12;

enum class Activation { ReLU, Linear, Softmax };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::ReLU:
      return "relu";
    case Activation::Linear:
      return "linear";
    case Activation::Softmax:
      return "softmax";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "linear") return Activation::Linear;
  if (s == "softmax") return Activation::Softmax;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  Vector bias;     // out_dim
  Activation activation = Activation::Linear;

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }

  bool all_finite() const { return weights.allFinite() && bias.allFinite(); }
};

struct LayerSpec {
  std::size_t out_dim;
  Activation activation;
};

namespace detail {

// Each net object gets a fresh identity, including copies, so a tape can
// only be replayed on the exact object that recorded it.
class NetIdentity {
 public:
  NetIdentity() : value_(next()) {}
  NetIdentity(const NetIdentity&) : value_(next()) {}
  NetIdentity& operator=(const NetIdentity&) { return *this; }
  std::uint64_t value() const { return value_; }

 private:
  static std::uint64_t next() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }
  std::uint64_t value_;
};

}  // namespace detail

class DenseNet {
 public:
  DenseNet() = default;

  DenseNet(std::size_t input_dim, std::vector<DenseLayer> layers)
      : input_dim_(input_dim), layers_(std::move(layers)) {
    if (input_dim_ == 0) throw ConfigError("DenseNet: input_dim must be positive");
    std::size_t expected = input_dim_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.out_dim() == 0) throw ConfigError("DenseNet: layer " + std::to_string(i) + " has zero width");
      if (l.in_dim() != expected)
        throw ConfigError("DenseNet: layer " + std::to_string(i) + " expects in_dim " +
                          std::to_string(l.in_dim()) + " but previous width is " + std::to_string(expected));
      if (static_cast<std::size_t>(l.bias.size()) != l.out_dim())
        throw ConfigError("DenseNet: layer " + std::to_string(i) + " bias length mismatch");
      if (!l.all_finite()) throw ConfigError("DenseNet: layer " + std::to_string(i) + " has non-finite parameters");
      expected = l.out_dim();
    }
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return layers_.empty() ? input_dim_ : layers_.back().out_dim(); }
  std::size_t depth() const { return layers_.size(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }

  // Any mutable access invalidates outstanding tapes.
  std::vector<DenseLayer>& mutable_layers() {
    ++revision_;
    return layers_;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  std::uint64_t identity() const { return id_.value(); }
  std::uint64_t revision() const { return revision_; }

 private:
  std::size_t input_dim_ = 0;
  std::vector<DenseLayer> layers_;
  detail::NetIdentity id_;
  std::uint64_t revision_ = 0;
};

// He scaling for ReLU layers, Xavier (1/in_dim) otherwise; zero biases.
inline DenseNet make_dense_net(std::size_t input_dim, std::span<const LayerSpec> specs, Rng& rng) {
  std::vector<DenseLayer> layers;
  layers.reserve(specs.size());
  std::size_t in = input_dim;
  for (const auto& s : specs) {
    DenseLayer l;
    l.activation = s.activation;
    const double gain = s.activation == Activation::ReLU ? 2.0 : 1.0;
    const double stddev = std::sqrt(gain / static_cast<double>(in));
    l.weights.resize(static_cast<Eigen::Index>(s.out_dim), static_cast<Eigen::Index>(in));
    // Row-major fill keeps the draw order independent of Eigen's storage.
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = stddev * rng.gaussian();
    l.bias = Vector::Zero(static_cast<Eigen::Index>(s.out_dim));
    layers.push_back(std::move(l));
    in = s.out_dim;
  }
  return DenseNet(input_dim, std::move(layers));
}

inline DenseNet make_dense_net(std::size_t input_dim, std::initializer_list<LayerSpec> specs, Rng& rng) {
  return make_dense_net(input_dim, std::span<const LayerSpec>(specs.begin(), specs.size()), rng);
}

// Column-wise softmax with max subtraction.
inline Batch softmax_columns(const Batch& logits) {
  const Eigen::RowVectorXd max = logits.colwise().maxCoeff();
  Batch out = (logits.rowwise() - max).array().exp().matrix();
  const Eigen::RowVectorXd sum = out.colwise().sum();
  out.array().rowwise() /= sum.array();
  return out;
}

inline Batch apply_activation(Activation a, Batch z) {
  switch (a) {
    case Activation::ReLU:
      return z.cwiseMax(0.0);
    case Activation::Linear:
      return z;
    case Activation::Softmax:
      return softmax_columns(z);
  }
  return z;
}

// Everything backward() needs: the input to every layer plus the final output.
struct Tape {
  std::uint64_t net_identity = 0;
  std::uint64_t net_revision = 0;
  std::vector<Batch> activations;  // activations[i] is the input to layer i; back() is the output
};

struct ForwardResult {
  Batch output;
  Tape tape;
};

namespace detail {

inline void check_input(const DenseNet& net, const Batch& input) {
  if (static_cast<std::size_t>(input.rows()) != net.input_dim())
    throw ConfigError("forward: input has " + std::to_string(input.rows()) + " rows, net expects " +
                      std::to_string(net.input_dim()));
  if (input.cols() < 1) throw ConfigError("forward: empty batch");
}

}  // namespace detail

inline ForwardResult forward(const DenseNet& net, const Batch& input) {
  detail::check_input(net, input);
  ForwardResult r;
  r.tape.net_identity = net.identity();
  r.tape.net_revision = net.revision();
  r.tape.activations.reserve(net.depth() + 1);
  r.tape.activations.push_back(input);
  for (const auto& l : net.layers()) {
    Batch z = l.weights * r.tape.activations.back();
    z.colwise() += l.bias;
    r.tape.activations.push_back(apply_activation(l.activation, std::move(z)));
  }
  r.output = r.tape.activations.back();
  return r;
}

// Forward pass without keeping a tape.
inline Batch predict(const DenseNet& net, const Batch& input) {
  detail::check_input(net, input);
  Batch a = input;
  for (const auto& l : net.layers()) {
    Batch z = l.weights * a;
    z.colwise() += l.bias;
    a = apply_activation(l.activation, std::move(z));
  }
  return a;
}

namespace detail {

inline void check_probs_and_labels(const Batch& probs, std::span<const std::size_t> labels) {
  if (static_cast<std::size_t>(probs.cols()) != labels.size())
    throw InputError("cross_entropy: " + std::to_string(labels.size()) + " labels for a batch of " +
                     std::to_string(probs.cols()));
  if (labels.empty()) throw InputError("cross_entropy: empty batch");
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] >= static_cast<std::size_t>(probs.rows()))
      throw InputError("cross_entropy: label " + std::to_string(labels[j]) + " out of range [0, " +
                       std::to_string(probs.rows()) + ")");
  }
}

}  // namespace detail

// Mean over the batch of -log(max(p_true, kProbabilityFloor)).
inline double cross_entropy(const Batch& probs, std::span<const std::size_t> labels) {
  detail::check_probs_and_labels(probs, labels);
  const Eigen::RowVectorXd sums = probs.colwise().sum();
  for (Eigen::Index j = 0; j < sums.size(); ++j) {
    if (!(std::abs(sums(j) - 1.0) <= 1e-6))
      throw InputError("cross_entropy: column " + std::to_string(j) + " is not a probability vector");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const double p = probs(static_cast<Eigen::Index>(labels[j]), static_cast<Eigen::Index>(j));
    total -= std::log(std::max(p, kProbabilityFloor));
  }
  return total / static_cast<double>(labels.size());
}

// Gradient of the batch-mean cross-entropy with respect to the logits that
// produced `probs` through a softmax: (probs - one_hot) / batch_size.
inline Batch softmax_cross_entropy_grad(const Batch& probs, std::span<const std::size_t> labels) {
  detail::check_probs_and_labels(probs, labels);
  Batch g = probs;
  for (std::size_t j = 0; j < labels.size(); ++j)
    g(static_cast<Eigen::Index>(labels[j]), static_cast<Eigen::Index>(j)) -= 1.0;
  g /= static_cast<double>(labels.size());
  return g;
}

struct LayerGrad {
  Matrix weights;
  Vector bias;
};

struct Gradients {
  std::vector<LayerGrad> layers;
  Batch input;  // dL/d(input), for chaining into whatever fed the net
};

// Where the upstream gradient handed to backward() lives.
enum class GradientAt {
  Output,  // dL/d(net output)
  Logits,  // dL/d(pre-activation of the last layer); pairs with softmax_cross_entropy_grad
};

inline Gradients backward(const DenseNet& net, const Tape& tape, const Batch& upstream,
                          GradientAt at = GradientAt::Output) {
  if (tape.net_identity != net.identity() || tape.net_revision != net.revision() ||
      tape.activations.size() != net.depth() + 1)
    throw UsageError("backward: tape was not recorded on this net (or the net changed since)");
  const Batch& out = tape.activations.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
    throw UsageError("backward: upstream gradient shape does not match the recorded output");

  const auto n = net.depth();
  Gradients g;
  g.layers.resize(n);
  Batch delta = upstream;
  for (std::size_t k = n; k-- > 0;) {
    const auto& l = net.layer(k);
    const Batch& y = tape.activations[k + 1];
    const bool skip_activation = at == GradientAt::Logits && k + 1 == n;
    if (!skip_activation) {
      switch (l.activation) {
        case Activation::ReLU:
          delta = (y.array() > 0.0).select(delta, 0.0);
          break;
        case Activation::Linear:
          break;
        case Activation::Softmax: {
          // dz = y * (delta - sum(y * delta)) per column
          const Eigen::RowVectorXd dot = (y.array() * delta.array()).colwise().sum();
          delta = y.array() * (delta.rowwise() - dot).array();
          break;
        }
      }
    }
    const Batch& x = tape.activations[k];
    g.layers[k].weights = delta * x.transpose();
    g.layers[k].bias = delta.rowwise().sum();
    delta = l.weights.transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

struct AdamOptions {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::uint64_t step_count = 0;
  std::vector<LayerGrad> first_moment;
  std::vector<LayerGrad> second_moment;

  AdamState() = default;
  explicit AdamState(const DenseNet& net, AdamOptions opts = {}) : options(opts) {
    for (const auto& l : net.layers()) {
      LayerGrad zero{Matrix::Zero(l.weights.rows(), l.weights.cols()), Vector::Zero(l.bias.size())};
      first_moment.push_back(zero);
      second_moment.push_back(std::move(zero));
    }
  }
};

namespace detail {

template <class Param, class Grad>
void adam_update(Param& p, const Grad& g, Param& m, Param& v, const AdamOptions& o, double c1, double c2) {
  m = o.beta1 * m + (1.0 - o.beta1) * g;
  v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
  p.array() -= o.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + o.epsilon);
}

}  // namespace detail

// Bias-corrected Adam update in place.
inline void adam_step(DenseNet& net, const Gradients& grads, AdamState& state) {
  const auto& layers = net.layers();
  if (grads.layers.size() != layers.size() || state.first_moment.size() != layers.size())
    throw ConfigError("adam_step: gradient/state layer count does not match the net");
  const std::uint64_t t = state.step_count + 1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& g = grads.layers[i];
    if (g.weights.rows() != layers[i].weights.rows() || g.weights.cols() != layers[i].weights.cols() ||
        g.bias.size() != layers[i].bias.size())
      throw ConfigError("adam_step: gradient shape mismatch at layer " + std::to_string(i));
    if (!g.weights.allFinite() || !g.bias.allFinite())
      throw TrainingError("adam_step: non-finite gradient at layer " + std::to_string(i), t);
  }
  const double c1 = 1.0 - std::pow(state.options.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(state.options.beta2, static_cast<double>(t));
  auto& mut = net.mutable_layers();
  for (std::size_t i = 0; i < mut.size(); ++i) {
    detail::adam_update(mut[i].weights, grads.layers[i].weights, state.first_moment[i].weights,
                        state.second_moment[i].weights, state.options, c1, c2);
    detail::adam_update(mut[i].bias, grads.layers[i].bias, state.first_moment[i].bias,
                        state.second_moment[i].bias, state.options, c1, c2);
    if (!mut[i].all_finite()) throw TrainingError("adam_step: parameters became non-finite", t);
  }
  state.step_count = t;
}

// Visits every scalar parameter in a fixed order: per layer, weights row by
// row, then bias.
template <class F>
void for_each_parameter(std::vector<DenseLayer>& layers, F&& f) {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    auto& l = layers[k];
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) f(k, l.weights(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) f(k, l.bias(r));
  }
}

template <class F>
void for_each_parameter(const std::vector<LayerGrad>& grads, F&& f) {
  for (std::size_t k = 0; k < grads.size(); ++k) {
    const auto& g = grads[k];
    for (Eigen::Index r = 0; r < g.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < g.weights.cols(); ++c) f(k, g.weights(r, c));
    for (Eigen::Index r = 0; r < g.bias.size(); ++r) f(k, g.bias(r));
  }
}

// Relative error used by every gradient comparison in this project.
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

// Softmax cross-entropy of the net's output against labels. If the last layer
// is already a softmax its output is used as-is; otherwise the output is
// treated as logits.
inline double classification_loss(const DenseNet& net, const Batch& input, std::span<const std::size_t> labels) {
  Batch out = predict(net, input);
  if (net.depth() == 0 || net.layers().back().activation != Activation::Softmax) out = softmax_columns(out);
  return cross_entropy(out, labels);
}

// Max relative error between backward() and central differences of
// classification_loss over every parameter.
inline double grad_check(const DenseNet& net, const Batch& input, std::span<const std::size_t> labels,
                         double eps = 1e-5) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw ConfigError("grad_check: eps must lie in (0, 1e-2]");
  const bool softmax_head = net.depth() > 0 && net.layers().back().activation == Activation::Softmax;
  auto fr = forward(net, input);
  const Batch probs = softmax_head ? fr.output : softmax_columns(fr.output);
  const Batch dlogits = softmax_cross_entropy_grad(probs, labels);
  const Gradients analytic = backward(net, fr.tape, dlogits, GradientAt::Logits);

  std::vector<double> analytic_flat;
  for_each_parameter(analytic.layers, [&](std::size_t, double g) { analytic_flat.push_back(g); });

  DenseNet probe = net;
  auto& layers = probe.mutable_layers();
  std::size_t idx = 0;
  double worst = 0.0;
  for_each_parameter(layers, [&](std::size_t, double& p) {
    const double saved = p;
    p = saved + eps;
    const double up = classification_loss(probe, input, labels);
    p = saved - eps;
    const double down = classification_loss(probe, input, labels);
    p = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = relative_error(analytic_flat[idx++], numeric);
    worst = std::isnan(err) ? std::numeric_limits<double>::infinity() : std::max(worst, err);
  });
  return worst;
}

}  // namespace bcae

#endif  // BCAE_NN_HPP
