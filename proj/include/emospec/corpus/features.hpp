#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <cstddef>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "emospec/corpus/epoch.hpp"
#include "emospec/error.hpp"
#include "emospec/signal/filter.hpp"
#include "emospec/signal/stft.hpp"

namespace emospec::corpus {

// One classifier instance: channel `channel` of epoch `epoch` with its class.
struct InstanceRef {
  std::size_t epoch{0};
  std::size_t channel{0};
  int label{0};

  friend bool operator==(const InstanceRef&, const InstanceRef&) = default;
};

// Every (labeled epoch, channel) pair, epoch-major then channel-minor.
// Epochs the scheme cannot label are skipped.
inline std::vector<InstanceRef> flatten(const EpochSet& set, const LabelScheme& scheme) {
  if (set.records.empty()) throw DataError("flatten: empty epoch set");
  scheme.validate();
  const auto& g = set.manifest.geometry;
  std::vector<InstanceRef> out;
  out.reserve(set.records.size() * g.channels);
  for (std::size_t e = 0; e < set.records.size(); ++e) {
    const auto& r = set.records[e];
    if (r.channel_count != g.channels || r.samples_per_channel != g.samples)
      throw DataError("flatten: epoch " + std::to_string(e) + " breaks the set's homogeneous geometry");
    const auto cls = class_of(r, scheme);
    if (!cls) continue;
    for (std::size_t c = 0; c < r.channel_count; ++c) out.push_back({e, c, *cls});
  }
  return out;
}

// The 64-bit time series behind an instance.
inline signal::TimeSeries instance_series(const EpochSet& set, const InstanceRef& ref) {
  const auto& r = set.records.at(ref.epoch);
  const auto ch = r.channel(ref.channel);
  return signal::TimeSeries(std::vector<double>(ch.begin(), ch.end()), r.fs);
}

inline constexpr std::size_t kInstanceChannels = 3;

// rows x cols x 3 classifier input (row = frequency bin, col = frame),
// channel-interleaved. All three channel planes are copies of the same
// power image.
struct InstanceTensor {
  std::size_t rows{0};
  std::size_t cols{0};
  std::size_t channels{kInstanceChannels};
  std::vector<float> values;
  int label{0};

  [[nodiscard]] float at(std::size_t r, std::size_t c, std::size_t ch) const {
    return values[(r * cols + c) * channels + ch];
  }
};

struct FeaturePipeline {
  std::optional<signal::FilterSpec> filter;
  signal::StftPlan plan;
  signal::Scaling scaling{signal::Scaling::log_minmax};
  double log_epsilon{signal::kDefaultLogEpsilon};
};

namespace detail {

inline std::vector<float> power_plane(const signal::Spectrogram& sg) {
  for (double v : sg.power)
    if (!std::isfinite(v)) throw NumericError("featurize: non-finite spectrogram entry");
  return std::vector<float>(sg.power.begin(), sg.power.end());
}

inline signal::Spectrogram scaled_spectrogram(const signal::TimeSeries& x, const signal::StftPlan& plan,
                                              signal::Scaling scaling, double epsilon) {
  return signal::apply_scaling(signal::spectrogram(signal::stft(x, plan)), scaling, epsilon);
}

}  // namespace detail

// stft -> spectrogram -> scaling -> replicate into 3 identical planes.
inline InstanceTensor featurize(const signal::TimeSeries& x, const signal::StftPlan& plan,
                                signal::Scaling scaling = signal::Scaling::log_minmax, int label = 0,
                                double epsilon = signal::kDefaultLogEpsilon) {
  const auto sg = detail::scaled_spectrogram(x, plan, scaling, epsilon);
  const auto plane = detail::power_plane(sg);
  InstanceTensor t;
  t.rows = sg.bins;
  t.cols = sg.frames;
  t.label = label;
  t.values.resize(plane.size() * kInstanceChannels);
  for (std::size_t i = 0; i < plane.size(); ++i)
    for (std::size_t ch = 0; ch < kInstanceChannels; ++ch) t.values[i * kInstanceChannels + ch] = plane[i];
  return t;
}

// A featurized corpus held as one plane per instance; the channel
// replication happens when a sample is copied out with fill().
class FeatureSet {
 public:
  FeatureSet() = default;
  FeatureSet(std::size_t rows, std::size_t cols, int class_count)
      : rows_(rows), cols_(cols), class_count_(class_count) {}

  [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t channels() const noexcept { return kInstanceChannels; }
  [[nodiscard]] std::size_t sample_size() const noexcept { return rows_ * cols_ * kInstanceChannels; }
  [[nodiscard]] int class_count() const noexcept { return class_count_; }
  [[nodiscard]] int label(std::size_t i) const { return labels_[i]; }
  [[nodiscard]] const std::vector<int>& labels() const noexcept { return labels_; }
  [[nodiscard]] const std::vector<InstanceRef>& sources() const noexcept { return sources_; }

  [[nodiscard]] std::span<const float> plane(std::size_t i) const {
    return std::span<const float>(planes_).subspan(i * rows_ * cols_, rows_ * cols_);
  }

  void push_back(std::span<const float> plane, int label, InstanceRef source = {}) {
    if (plane.size() != rows_ * cols_) throw InvalidArgument("FeatureSet: plane size mismatch");
    planes_.insert(planes_.end(), plane.begin(), plane.end());
    labels_.push_back(label);
    sources_.push_back(source);
  }

  // Writes instance i as rows x cols x 3 (channel-interleaved) into dst.
  template <typename T>
  void fill(std::size_t i, std::span<T> dst) const {
    const auto p = plane(i);
    for (std::size_t j = 0; j < p.size(); ++j)
      for (std::size_t ch = 0; ch < kInstanceChannels; ++ch) dst[j * kInstanceChannels + ch] = static_cast<T>(p[j]);
  }

  [[nodiscard]] InstanceTensor tensor(std::size_t i) const {
    InstanceTensor t;
    t.rows = rows_;
    t.cols = cols_;
    t.label = labels_[i];
    t.values.resize(sample_size());
    fill<float>(i, t.values);
    return t;
  }

 private:
  friend FeatureSet featurize_set(const EpochSet&, const LabelScheme&, const FeaturePipeline&, unsigned);

  std::size_t rows_{0};
  std::size_t cols_{0};
  int class_count_{0};
  std::vector<float> planes_;
  std::vector<int> labels_;
  std::vector<InstanceRef> sources_;
};

// flatten + (optional filter) + featurize over a whole corpus. Work is split
// across `threads` workers; output order is the flatten order regardless.
inline FeatureSet featurize_set(const EpochSet& set, const LabelScheme& scheme, const FeaturePipeline& pipeline,
                                unsigned threads = 1) {
  const auto refs = flatten(set, scheme);
  const auto& g = set.manifest.geometry;
  pipeline.plan.validate();
  if (g.samples < pipeline.plan.frame_size)
    throw InvalidArgument("featurize: signal shorter than frame (L=" + std::to_string(g.samples) +
                          ", N=" + std::to_string(pipeline.plan.frame_size) + ")");
  std::optional<signal::BiquadCascade> filter;
  if (pipeline.filter) {
    auto spec = *pipeline.filter;
    spec.fs = g.fs;
    filter = signal::design_bandpass(spec);
  }

  FeatureSet out(pipeline.plan.bins(), pipeline.plan.frames(g.samples), scheme.class_count());
  const std::size_t plane_size = out.rows_ * out.cols_;
  out.planes_.resize(refs.size() * plane_size);
  out.labels_.resize(refs.size());
  out.sources_ = refs;

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto x = instance_series(set, refs[i]);
      if (filter) x = signal::apply_filter(*filter, x);
      const auto sg = detail::scaled_spectrogram(x, pipeline.plan, pipeline.scaling, pipeline.log_epsilon);
      const auto plane = detail::power_plane(sg);
      std::copy(plane.begin(), plane.end(), out.planes_.begin() + static_cast<std::ptrdiff_t>(i * plane_size));
      out.labels_[i] = refs[i].label;
    }
  };

  const std::size_t n = refs.size();
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(n * w / workers, n * (w + 1) / workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace emospec::corpus
