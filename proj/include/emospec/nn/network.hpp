#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "emospec/error.hpp"
#include "emospec/nn/layers.hpp"
#include "emospec/nn/tensor.hpp"
#include "emospec/rng.hpp"

namespace emospec::nn {

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct NetworkSpec {
  Shape input;  // (H, W, C), no batch dimension
  std::vector<LayerSpec> layers;

  [[nodiscard]] std::string serialize() const {
    std::string s = "input" + shape_string(input);
    for (const auto& l : layers) s += ";" + nn::serialize(l);
    return s;
  }
  [[nodiscard]] std::uint64_t fingerprint() const {
    const auto s = serialize();
    return fnv1a(s.data(), s.size());
  }
  // Per-layer input shapes plus the final output shape (size layers + 1).
  [[nodiscard]] std::vector<Shape> shapes() const {
    if (layers.empty()) throw InvalidArgument("network has no layers");
    std::vector<Shape> out{input};
    for (std::size_t i = 0; i < layers.size(); ++i) out.push_back(infer_shape(i, layers[i], out.back()));
    return out;
  }
  [[nodiscard]] std::size_t class_count() const {
    const auto s = shapes();
    return s.back().size() == 1 ? s.back()[0] : 0;
  }
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

enum class PoolPlacement { after_convs, between_convs };

inline std::string to_string(PoolPlacement p) { return p == PoolPlacement::after_convs ? "after_convs" : "between_convs"; }
inline PoolPlacement pool_placement_from_string(const std::string& s) {
  if (s == "after_convs") return PoolPlacement::after_convs;
  if (s == "between_convs") return PoolPlacement::between_convs;
  throw InvalidArgument("unknown pool placement '" + s + "'");
}

// Sizes of the hybrid CNN-LSTM stack.
struct ModelConfig {
  std::string variant{"reduced"};
  std::size_t conv1{4};
  std::size_t conv2{4};
  std::size_t lstm1{8};
  std::size_t lstm2{8};
  std::size_t dense{16};
  double dropout{0.2};
  PoolPlacement pool{PoolPlacement::after_convs};

  static ModelConfig full() { return {"full", 32, 64, 256, 128, 64, 0.2, PoolPlacement::after_convs}; }
  static ModelConfig reduced() { return {}; }
};

inline NetworkSpec build_spec(const ModelConfig& m, const Shape& input, std::size_t classes) {
  if (classes < 2) throw InvalidArgument("network needs at least 2 classes");
  NetworkSpec s;
  s.input = input;
  auto& L = s.layers;
  L.push_back(Conv2D{m.conv1});
  L.push_back(ReLU{});
  if (m.pool == PoolPlacement::between_convs) L.push_back(MaxPool2D{});
  L.push_back(Conv2D{m.conv2});
  L.push_back(ReLU{});
  if (m.pool == PoolPlacement::after_convs) L.push_back(MaxPool2D{});
  L.push_back(Dropout{m.dropout});
  L.push_back(Flatten{});
  L.push_back(RepeatVector{4});
  L.push_back(LSTM{m.lstm1, true});
  L.push_back(Dropout{m.dropout});
  L.push_back(LSTM{m.lstm2, false});
  L.push_back(Dropout{m.dropout});
  L.push_back(Dense{m.dense});
  L.push_back(ReLU{});
  L.push_back(Dropout{m.dropout});
  L.push_back(Dense{classes});
  L.push_back(Softmax{});
  (void)s.shapes();
  return s;
}

template <typename T>
using ParamList = std::vector<std::vector<Tensor<T>>>;

template <typename T>
class Network {
 public:
  Network() = default;
  Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)), shapes_(spec_.shapes()) {
    params_.resize(spec_.layers.size());
    Rng rng = make_rng(seed, {0x1417});
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      for (const auto& s : param_shapes(spec_.layers[i], shapes_[i])) params_[i].emplace_back(s);
      init_params(spec_.layers[i], shapes_[i], params_[i], rng);
    }
  }

  [[nodiscard]] const NetworkSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const std::vector<Shape>& shapes() const noexcept { return shapes_; }
  [[nodiscard]] std::size_t layer_count() const noexcept { return spec_.layers.size(); }
  [[nodiscard]] std::size_t class_count() const { return shapes_.back().at(0); }
  [[nodiscard]] const ParamList<T>& params() const noexcept { return params_; }
  [[nodiscard]] std::uint64_t version() const noexcept { return version_; }

  // Mutable access invalidates forward caches taken earlier.
  ParamList<T>& mutable_params() noexcept {
    ++version_;
    return params_;
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : params_)
      for (const auto& t : layer) n += t.size();
    return n;
  }

  [[nodiscard]] std::uint64_t weights_fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& layer : params_)
      for (const auto& t : layer) h = fnv1a(t.data(), t.size() * sizeof(T), h);
    return h;
  }

  template <typename U>
  [[nodiscard]] Network<U> cast() const {
    Network<U> out;
    out.spec_ = spec_;
    out.shapes_ = shapes_;
    out.params_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i)
      for (const auto& t : params_[i]) out.params_[i].push_back(t.template cast<U>());
    return out;
  }

 private:
  template <typename>
  friend class Network;

  NetworkSpec spec_;
  std::vector<Shape> shapes_;
  ParamList<T> params_;
  std::uint64_t version_{0};
};

template <typename T>
struct LayerAux {
  std::vector<T> mask;
  std::vector<std::uint32_t> argmax;
  kernels::LstmCache<T> lstm;
};

template <typename T>
struct ForwardCache {
  std::vector<Tensor<T>> activations;  // activations[i] is the input of layer i
  std::vector<LayerAux<T>> aux;
  bool training{false};
  std::uint64_t version{0};
  const void* owner{nullptr};

  [[nodiscard]] const Tensor<T>& output() const { return activations.back(); }
};

struct ForwardOptions {
  bool training{false};
  // Re-apply the dropout masks already stored in the cache instead of drawing
  // new ones (finite-difference checks need a fixed mask).
  bool reuse_masks{false};
};

namespace detail {

template <typename T>
void check_batch_shape(const Network<T>& net, std::size_t layer, const Tensor<T>& x) {
  const auto& want = net.shapes()[layer];
  bool ok = x.rank() == want.size() + 1 && x.dim(0) > 0;
  for (std::size_t d = 0; ok && d < want.size(); ++d) ok = x.dim(d + 1) == want[d];
  if (!ok) {
    Shape w{0};
    w.insert(w.end(), want.begin(), want.end());
    std::string expected = shape_string(w);
    expected.replace(1, 1, "B");
    throw InvalidArgument("layer " + std::to_string(layer) + " (" +
                          std::string(layer_name(net.spec().layers[layer])) + "): expected input " + expected +
                          ", got " + shape_string(x.shape));
  }
}

template <typename T>
void run_layer(const Network<T>& net, std::size_t i, ForwardCache<T>& cache, const ForwardOptions& opt, Rng* rng) {
  const auto& spec = net.spec().layers[i];
  const auto& p = net.params()[i];
  const Tensor<T>& in = cache.activations[i];
  Tensor<T>& out = cache.activations[i + 1];
  auto& aux = cache.aux[i];
  std::visit(overloaded{[&](const Conv2D& l) { kernels::conv2d_forward(l, in, p[0], p[1], out); },
                        [&](const ReLU&) { kernels::relu_forward(in, out); },
                        [&](const MaxPool2D& l) { kernels::maxpool_forward(l, in, out, aux.argmax); },
                        [&](const Dropout& l) {
                          if (opt.training && opt.reuse_masks && aux.mask.size() == in.size()) {
                            out = in;
                            for (std::size_t j = 0; j < out.size(); ++j) out[j] *= aux.mask[j];
                            return;
                          }
                          if (opt.training && !rng) throw InvalidArgument("training forward needs an rng");
                          Rng dummy;
                          kernels::dropout_forward(l, in, out, aux.mask, opt.training, rng ? *rng : dummy);
                        },
                        [&](const Flatten&) {
                          out = in;
                          out.shape = {in.dim(0), in.size() / in.dim(0)};
                        },
                        [&](const RepeatVector& l) { kernels::repeat_forward(l, in, out); },
                        [&](const LSTM& l) { kernels::lstm_forward(l, in, p[0], p[1], p[2], out, aux.lstm); },
                        [&](const Dense&) { kernels::dense_forward(in, p[0], p[1], out); },
                        [&](const Softmax&) { kernels::softmax_forward(in, out); }},
             spec);
  if (!out.all_finite())
    throw NumericError("non-finite activation in layer " + std::to_string(i) + " (" + std::string(layer_name(spec)) +
                       ")");
}

}  // namespace detail

// Runs layers [begin, end) on cache.activations[begin], which must be set.
template <typename T>
void forward_range(const Network<T>& net, ForwardCache<T>& cache, std::size_t begin, std::size_t end,
                   const ForwardOptions& opt, Rng* rng) {
  const std::size_t L = net.layer_count();
  if (cache.activations.size() != L + 1) cache.activations.resize(L + 1);
  if (cache.aux.size() != L) cache.aux.resize(L);
  detail::check_batch_shape(net, begin, cache.activations[begin]);
  for (std::size_t i = begin; i < end; ++i) detail::run_layer(net, i, cache, opt, rng);
  cache.training = opt.training;
  cache.version = net.version();
  cache.owner = &net;
}

// Probabilities (B, classes); every intermediate stays in `cache`.
template <typename T>
const Tensor<T>& forward(const Network<T>& net, const Tensor<T>& batch, ForwardCache<T>& cache,
                         const ForwardOptions& opt, Rng* rng = nullptr) {
  cache.activations.resize(net.layer_count() + 1);
  cache.activations[0] = batch;
  forward_range(net, cache, 0, net.layer_count(), opt, rng);
  return cache.output();
}

template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& batch, bool training, Rng& rng) {
  ForwardCache<T> cache;
  return forward(net, batch, cache, ForwardOptions{training, false}, &rng);
}

template <typename T>
Tensor<T> infer(const Network<T>& net, const Tensor<T>& batch) {
  ForwardCache<T> cache;
  return forward(net, batch, cache, ForwardOptions{false, false});
}

inline constexpr double kLossEpsilon = 1e-12;

template <typename T>
double loss_ce(const Tensor<T>& probs, const Tensor<T>& onehot) {
  if (probs.shape != onehot.shape || probs.rank() != 2)
    throw InvalidArgument("loss_ce: shape mismatch " + shape_string(probs.shape) + " vs " + shape_string(onehot.shape));
  const std::size_t B = probs.dim(0), K = probs.dim(1);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    double row = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double y = static_cast<double>(onehot[b * K + k]);
      if (y != 0.0) row -= y * std::log(static_cast<double>(probs[b * K + k]) + kLossEpsilon);
    }
    total += row;
  }
  return total / static_cast<double>(B);
}

template <typename T>
Tensor<T> one_hot(std::span<const int> labels, std::size_t classes) {
  Tensor<T> y({labels.size(), classes});
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes)
      throw InvalidArgument("label " + std::to_string(labels[b]) + " outside " + std::to_string(classes) + " classes");
    y[b * classes + static_cast<std::size_t>(labels[b])] = T(1);
  }
  return y;
}

template <typename T>
struct Gradients {
  ParamList<T> params;           // shaped like Network::params()
  std::vector<Tensor<T>> inputs;  // inputs[i] = dL/d(input of layer i), only when kept
};

struct BackwardOptions {
  // Keep every layer's input gradient with the exact per-step values
  // (disables the repeated-input shortcut in LSTM backward).
  bool keep_input_grads{false};
  // Test hook: perturb the Conv2D kernel gradient.
  bool corrupt_conv{false};
};

namespace detail {

template <typename T>
void check_cache(const Network<T>& net, const ForwardCache<T>& cache) {
  if (cache.activations.size() != net.layer_count() + 1 || cache.owner != &net)
    throw InvalidArgument("backward: missing forward cache for this network");
  if (cache.version != net.version()) throw InvalidArgument("backward: stale forward cache (weights changed since forward)");
  if (!cache.training) throw InvalidArgument("backward: cache comes from an inference forward pass");
}

}  // namespace detail

// Backpropagates `dout`, the gradient with respect to the output of layer
// `last`, down to the input.
template <typename T>
Gradients<T> backward_from(const Network<T>& net, const ForwardCache<T>& cache, std::size_t last, Tensor<T> dout,
                           const BackwardOptions& opt = {}) {
  detail::check_cache(net, cache);
  const std::size_t L = net.layer_count();
  Gradients<T> g;
  g.params.resize(L);
  for (std::size_t i = 0; i < L; ++i)
    for (const auto& t : net.params()[i]) g.params[i].emplace_back(t.shape);
  if (opt.keep_input_grads) g.inputs.resize(L);
  if (dout.shape != cache.activations[last + 1].shape)
    throw InvalidArgument("backward: upstream gradient shape " + shape_string(dout.shape) + " does not match output " +
                          shape_string(cache.activations[last + 1].shape));

  Tensor<T> din;
  for (std::size_t i = last + 1; i-- > 0;) {
    const auto& spec = net.spec().layers[i];
    const auto& p = net.params()[i];
    auto& gp = g.params[i];
    const Tensor<T>& in = cache.activations[i];
    const auto& aux = cache.aux[i];
    const bool need_din = i > 0 || opt.keep_input_grads;
    std::visit(overloaded{[&](const Conv2D& l) {
                            kernels::conv2d_backward(l, in, p[0], dout, gp[0], gp[1], need_din ? &din : nullptr);
                            if (opt.corrupt_conv) gp[0][0] += T(0.5) + std::abs(gp[0][0]);
                          },
                          [&](const ReLU&) { kernels::relu_backward(in, dout, din); },
                          [&](const MaxPool2D&) { kernels::maxpool_backward(in.shape, aux.argmax, dout, din); },
                          [&](const Dropout&) { kernels::dropout_backward(aux.mask, dout, din); },
                          [&](const Flatten&) {
                            din = std::move(dout);
                            din.shape = in.shape;
                          },
                          [&](const RepeatVector&) { kernels::repeat_backward(dout, din); },
                          [&](const LSTM& l) {
                            kernels::lstm_backward(l, in, p[0], p[1], aux.lstm, dout, gp[0], gp[1], gp[2],
                                                   need_din ? &din : nullptr, opt.keep_input_grads);
                          },
                          [&](const Dense&) {
                            kernels::dense_backward(in, p[0], dout, gp[0], gp[1], need_din ? &din : nullptr);
                          },
                          [&](const Softmax&) { kernels::softmax_backward(cache.activations[i + 1], dout, din); }},
               spec);
    if (!need_din) break;
    if (opt.keep_input_grads) g.inputs[i] = din;
    dout = std::move(din);
    din = Tensor<T>();
  }
  return g;
}

// Gradient of the mean cross-entropy. With a Softmax head the combined
// identity dL/dlogits = (p - y) / B is used.
template <typename T>
Gradients<T> backward(const Network<T>& net, const ForwardCache<T>& cache, const Tensor<T>& onehot,
                      const BackwardOptions& opt = {}) {
  detail::check_cache(net, cache);
  const auto& probs = cache.output();
  if (probs.shape != onehot.shape)
    throw InvalidArgument("backward: labels " + shape_string(onehot.shape) + " vs output " + shape_string(probs.shape));
  const std::size_t L = net.layer_count();
  const T inv_b = T(1) / static_cast<T>(probs.dim(0));
  Tensor<T> d(probs.shape);
  if (std::holds_alternative<Softmax>(net.spec().layers.back())) {
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = (probs[j] - onehot[j]) * inv_b;
    if (!opt.keep_input_grads) return backward_from(net, cache, L - 2, std::move(d), opt);
    auto g = backward_from(net, cache, L - 2, d, opt);
    g.inputs[L - 1] = std::move(d);
    return g;
  }
  for (std::size_t j = 0; j < d.size(); ++j)
    d[j] = onehot[j] != T(0) ? -onehot[j] / (probs[j] + static_cast<T>(kLossEpsilon)) * inv_b : T(0);
  return backward_from(net, cache, L - 1, std::move(d), opt);
}

// Argmax per row; ties go to the lowest class index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& probs) {
  const std::size_t B = probs.dim(0), K = probs.dim(1);
  std::vector<int> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (probs[b * K + k] > probs[b * K + best]) best = k;
    out[b] = static_cast<int>(best);
  }
  return out;
}

template <typename T>
std::vector<int> predict(const Network<T>& net, const Tensor<T>& batch) {
  return argmax_rows(infer(net, batch));
}

}  // namespace emospec::nn
