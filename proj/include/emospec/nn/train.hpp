#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "emospec/error.hpp"
#include "emospec/nn/adam.hpp"
#include "emospec/nn/network.hpp"
#include "emospec/rng.hpp"

namespace emospec::nn {

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size{256};
  std::size_t max_epochs{100};
  std::size_t patience{30};  // early stopping on val_loss
  double val_fraction{0.1};
  std::uint64_t seed{0};

  void validate() const {
    adam.validate();
    if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
    if (max_epochs == 0) throw InvalidArgument("max_epochs must be positive");
    if (patience == 0 || patience > max_epochs) throw InvalidArgument("patience must be in [1, max_epochs]");
    if (!(val_fraction > 0.0 && val_fraction < 0.5)) throw InvalidArgument("val_fraction must be in (0, 0.5)");
  }
};

struct EpochStats {
  std::size_t epoch{0};  // 1-based
  double train_loss{0};
  double train_accuracy{0};
  double val_loss{0};
  double val_accuracy{0};
  std::uint64_t weights_fingerprint{0};

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch{0};  // epoch whose weights were restored
  std::uint64_t best_fingerprint{0};
  bool early_stopped{false};

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainHooks {
  // Sees (and may rewrite) each epoch's validation metrics before the
  // stopping and checkpoint rules read them.
  std::function<void(EpochStats&)> on_validation;
};

template <typename T>
struct TrainResult {
  Network<T> net;  // best-val_accuracy snapshot
  TrainHistory history;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Per class, a seeded shuffle moves round(fraction * n_c) instances to
// validation. Every class in [0, classes) must be present.
inline Split stratified_split(std::span<const std::size_t> indices, std::span<const int> labels_of_indices,
                              std::size_t classes, double fraction, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int c = labels_of_indices[i];
    if (c < 0 || static_cast<std::size_t>(c) >= classes)
      throw InvalidArgument("label " + std::to_string(c) + " outside " + std::to_string(classes) + " classes");
    by_class[static_cast<std::size_t>(c)].push_back(indices[i]);
  }
  Rng rng = make_rng(seed, {0x5b17});
  Split out;
  for (std::size_t c = 0; c < classes; ++c) {
    auto& members = by_class[c];
    if (members.empty()) throw DataError("class " + std::to_string(c) + " absent from training split");
    emospec::shuffle(members.begin(), members.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    out.val.insert(out.val.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
  }
  if (out.val.empty() || out.train.empty()) throw DataError("too few instances for a validation split");
  return out;
}

namespace detail {

// Source provides sample_size(), label(i) and fill<T>(i, span<T>).
template <typename T, typename Source>
void gather(const Source& src, std::span<const std::size_t> idx, const Shape& sample_shape, Tensor<T>& batch,
            std::vector<int>& labels) {
  Shape s{idx.size()};
  s.insert(s.end(), sample_shape.begin(), sample_shape.end());
  batch.shape = s;
  const std::size_t n = src.sample_size();
  batch.values.resize(idx.size() * n);
  labels.resize(idx.size());
  for (std::size_t b = 0; b < idx.size(); ++b) {
    src.template fill<T>(idx[b], std::span<T>(batch.values).subspan(b * n, n));
    labels[b] = src.label(idx[b]);
  }
}

template <typename T>
std::size_t count_correct(const Tensor<T>& probs, std::span<const int> labels) {
  const auto pred = argmax_rows(probs);
  std::size_t n = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) n += pred[b] == labels[b];
  return n;
}

}  // namespace detail

// Mean loss and accuracy of an inference pass over `idx`.
template <typename T, typename Source>
std::pair<double, double> evaluate(const Network<T>& net, const Source& src, std::span<const std::size_t> idx,
                                   std::size_t batch_size) {
  Tensor<T> batch;
  std::vector<int> labels;
  ForwardCache<T> cache;
  double loss = 0.0;
  std::size_t correct = 0;
  const Shape& sample_shape = net.shapes().front();
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const auto chunk = idx.subspan(start, std::min(batch_size, idx.size() - start));
    detail::gather(src, chunk, sample_shape, batch, labels);
    const auto& probs = forward(net, batch, cache, ForwardOptions{false, false});
    loss += loss_ce(probs, one_hot<T>(labels, net.class_count())) * static_cast<double>(chunk.size());
    correct += detail::count_correct(probs, labels);
  }
  const auto n = static_cast<double>(idx.size());
  return {loss / n, static_cast<double>(correct) / n};
}

template <typename T, typename Source>
std::vector<int> predict(const Network<T>& net, const Source& src, std::span<const std::size_t> idx,
                         std::size_t batch_size = 256) {
  Tensor<T> batch;
  std::vector<int> labels, out;
  ForwardCache<T> cache;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const auto chunk = idx.subspan(start, std::min(batch_size, idx.size() - start));
    detail::gather(src, chunk, net.shapes().front(), batch, labels);
    const auto pred = argmax_rows(forward(net, batch, cache, ForwardOptions{false, false}));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

// Mini-batch Adam on `indices` of `src` with a stratified validation
// carve-out, early stopping on val_loss and restoration of the weights with
// the best val_accuracy.
template <typename T, typename Source>
TrainResult<T> train(Network<T> net, const Source& src, std::span<const std::size_t> indices, const TrainConfig& cfg,
                     const TrainHooks& hooks = {}) {
  cfg.validate();
  if (indices.empty()) throw DataError("train: empty training set");
  if (src.sample_size() != shape_size(net.shapes().front()))
    throw InvalidArgument("train: sample size " + std::to_string(src.sample_size()) + " does not match network input " +
                          shape_string(net.shapes().front()));
  std::vector<int> idx_labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) idx_labels[i] = src.label(indices[i]);
  const std::size_t classes = net.class_count();
  const Split split = stratified_split(indices, idx_labels, classes, cfg.val_fraction, derive_seed(cfg.seed, {1}));

  Rng rng = make_rng(cfg.seed, {2});
  AdamState<T> adam(net);
  ForwardCache<T> cache;
  Tensor<T> batch;
  std::vector<int> labels;
  std::vector<std::size_t> order = split.train;

  TrainResult<T> result{net, {}};
  double best_loss = std::numeric_limits<double>::infinity();
  double best_acc = -std::numeric_limits<double>::infinity();
  std::size_t since_improved = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    emospec::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto chunk = std::span<const std::size_t>(order).subspan(start, std::min(cfg.batch_size, order.size() - start));
      detail::gather(src, chunk, net.shapes().front(), batch, labels);
      const auto y = one_hot<T>(labels, classes);
      const auto& probs = forward(net, batch, cache, ForwardOptions{true, false}, &rng);
      const double loss = loss_ce(probs, y);
      if (!std::isfinite(loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(chunk.size());
      correct += detail::count_correct(probs, labels);
      const auto grads = backward(net, cache, y);
      adam_step(net, adam, grads.params, cfg.adam);
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(order.size());
    st.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    std::tie(st.val_loss, st.val_accuracy) = evaluate(net, src, split.val, cfg.batch_size);
    st.weights_fingerprint = net.weights_fingerprint();
    if (hooks.on_validation) hooks.on_validation(st);
    if (!std::isfinite(st.val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.epochs.push_back(st);

    if (st.val_accuracy > best_acc) {
      best_acc = st.val_accuracy;
      result.net = net;
      result.history.best_epoch = epoch;
      result.history.best_fingerprint = st.weights_fingerprint;
    }
    if (st.val_loss < best_loss) {
      best_loss = st.val_loss;
      since_improved = 0;
    } else if (++since_improved >= cfg.patience) {
      result.history.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace emospec::nn
