#pragma once

#include <cmath>
#include <cstdint>

#include "emospec/error.hpp"
#include "emospec/nn/network.hpp"

namespace emospec::nn {

struct AdamConfig {
  double lr{1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double epsilon{1e-8};

  void validate() const {
    if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
      throw InvalidArgument("invalid Adam hyperparameters");
  }
};

template <typename T>
struct AdamState {
  ParamList<T> m;
  ParamList<T> v;
  std::uint64_t step{0};

  AdamState() = default;
  explicit AdamState(const Network<T>& net) {
    for (const auto& layer : net.params()) {
      m.emplace_back();
      v.emplace_back();
      for (const auto& t : layer) {
        m.back().emplace_back(t.shape);
        v.back().emplace_back(t.shape);
      }
    }
  }
};

// One bias-corrected Adam update of every weight tensor.
template <typename T>
void adam_step(Network<T>& net, AdamState<T>& state, const ParamList<T>& grads, const AdamConfig& cfg) {
  auto& params = net.mutable_params();
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw InvalidArgument("adam_step: gradient/state layout does not match the network");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(cfg.lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(cfg.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size()) throw InvalidArgument("adam_step: gradient count mismatch");
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      auto& w = params[i][j];
      auto& m = state.m[i][j];
      auto& v = state.v[i][j];
      const auto& g = grads[i][j];
      if (g.shape != w.shape) throw InvalidArgument("adam_step: gradient shape mismatch");
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = b1 * m[k] + (T(1) - b1) * g[k];
        v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
        w[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_c2 + eps);
      }
    }
  }
}

}  // namespace emospec::nn
