#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "emospec/nn/network.hpp"

namespace emospec::nn {

struct GradcheckOptions {
  double step{1e-5};
  double tolerance{1e-4};
  std::uint64_t seed{1};
  double kink_threshold{1e-4};
  bool corrupt_conv{false};  // test hook, see BackwardOptions
};

struct GradcheckEntry {
  std::string layer;  // layer type name
  double max_rel_error{0.0};
  std::size_t checked{0};  // number of compared partial derivatives
  std::size_t kinks{0};    // points skipped because the loss is not differentiable there
  bool pass{true};
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;  // one per layer type, in network order
  [[nodiscard]] bool pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
  }
};

inline double relative_error(double analytic, double numeric) {
  // The floor keeps round-off in vanishing derivatives (|g| < 1e-8, where the
  // central difference carries ~1e-11 absolute error) from reading as failure.
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
}

// The small network used by the finite-difference suite: every layer type
// appears at least once.
inline NetworkSpec gradcheck_spec() {
  NetworkSpec s;
  s.input = {8, 6, 3};
  s.layers = {Conv2D{2}, ReLU{},          Conv2D{2},  ReLU{},       MaxPool2D{}, Dropout{0.2}, Flatten{},
              RepeatVector{4}, LSTM{5, true}, Dropout{0.2}, LSTM{4, false}, Dense{6}, ReLU{}, Dropout{0.2},
              Dense{3},   Softmax{}};
  return s;
}

// Compares backward() against central differences of the mean cross-entropy
// in 64-bit arithmetic, with dropout masks held fixed. Each layer is checked
// on its weights and on the gradient with respect to its input.
inline GradcheckReport gradcheck(const NetworkSpec& spec, std::size_t batch, const GradcheckOptions& opt = {}) {
  Network<double> net(spec, opt.seed);
  const std::size_t L = net.layer_count();
  const std::size_t classes = net.class_count();
  Rng rng = make_rng(opt.seed, {0x6c});
  std::normal_distribution<double> normal(0.0, 1.0);
  // Positive conv/dense biases keep ReLU units (and whole samples) from
  // sitting exactly on the kink at zero.
  std::uniform_real_distribution<double> bias(0.1, 0.5);
  for (std::size_t i = 0; i < L; ++i)
    if (std::holds_alternative<Conv2D>(spec.layers[i]) || std::holds_alternative<Dense>(spec.layers[i]))
      for (auto& v : net.mutable_params()[i][1].values) v = bias(rng);

  Shape in_shape{batch};
  in_shape.insert(in_shape.end(), spec.input.begin(), spec.input.end());
  Tensor<double> x(in_shape);
  for (auto& v : x.values) v = normal(rng);
  std::vector<int> labels(batch);
  for (std::size_t b = 0; b < batch; ++b) labels[b] = static_cast<int>((2 * b) % classes);
  const auto y = one_hot<double>(labels, classes);

  ForwardCache<double> cache;
  forward(net, x, cache, ForwardOptions{true, false}, &rng);
  BackwardOptions bopt;
  bopt.keep_input_grads = true;
  bopt.corrupt_conv = opt.corrupt_conv;
  const auto grads = backward(net, cache, y, bopt);
  const double base = loss_ce(cache.output(), y);

  const ForwardOptions replay{true, true};
  ForwardCache<double> probe = cache;
  auto loss_from = [&](std::size_t layer) {
    forward_range(net, probe, layer, L, replay, nullptr);
    return loss_ce(probe.output(), y);
  };

  GradcheckReport report;
  auto entry_for = [&](const std::string& name) -> GradcheckEntry& {
    for (auto& e : report.entries)
      if (e.layer == name) return e;
    report.entries.push_back({name, 0.0, 0, 0, true});
    return report.entries.back();
  };
  // A ReLU or max-pool tie within one step of the probe point makes the two
  // one-sided slopes disagree; such points have no derivative to compare.
  auto record = [&](GradcheckEntry& e, double analytic, double up, double center, double down) {
    const double right = (up - center) / opt.step, left = (center - down) / opt.step;
    if (std::abs(right - left) > opt.kink_threshold) {
      ++e.kinks;
      return;
    }
    const double numeric = (up - down) / (2.0 * opt.step);
    const double err = relative_error(analytic, numeric);
    e.max_rel_error = std::max(e.max_rel_error, err);
    ++e.checked;
    if (!(err < opt.tolerance)) e.pass = false;
  };

  for (std::size_t i = 0; i < L; ++i) {
    auto& e = entry_for(std::string(layer_name(spec.layers[i])));
    // Input gradient.
    probe = cache;
    for (std::size_t j = 0; j < cache.activations[i].size(); ++j) {
      const double orig = cache.activations[i][j];
      probe.activations[i][j] = orig + opt.step;
      const double up = loss_from(i);
      probe.activations[i][j] = orig - opt.step;
      const double down = loss_from(i);
      probe.activations[i][j] = orig;
      record(e, grads.inputs[i][j], up, base, down);
    }
    // Weight gradients.
    for (std::size_t t = 0; t < net.params()[i].size(); ++t) {
      for (std::size_t j = 0; j < net.params()[i][t].size(); ++j) {
        const double orig = net.params()[i][t][j];
        net.mutable_params()[i][t][j] = orig + opt.step;
        probe.activations[0] = x;
        const double up = loss_from(0);
        net.mutable_params()[i][t][j] = orig - opt.step;
        const double down = loss_from(0);
        net.mutable_params()[i][t][j] = orig;
        record(e, grads.params[i][t][j], up, base, down);
      }
    }
  }
  for (auto& e : report.entries)
    if (e.checked == 0) e.pass = false;
  return report;
}

inline GradcheckReport gradcheck(const GradcheckOptions& opt = {}) { return gradcheck(gradcheck_spec(), 2, opt); }

}  // namespace emospec::nn
