#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "emospec/error.hpp"

namespace emospec::signal {

// One channel of sampled EEG. Amplitudes are in arbitrary units (microvolts
// by convention); fs is in Hz.
class TimeSeries {
 public:
  TimeSeries(std::vector<double> samples, double fs) : samples_(std::move(samples)), fs_(fs) {
    if (samples_.empty()) throw InvalidArgument("TimeSeries: empty sample vector");
    if (!(fs_ > 0.0) || !std::isfinite(fs_))
      throw InvalidArgument("TimeSeries: sampling rate must be positive, got " + std::to_string(fs_));
    for (std::size_t i = 0; i < samples_.size(); ++i)
      if (!std::isfinite(samples_[i]))
        throw InvalidArgument("TimeSeries: non-finite sample at index " + std::to_string(i));
  }

  [[nodiscard]] std::size_t size() const noexcept { return samples_.size(); }
  [[nodiscard]] double fs() const noexcept { return fs_; }
  [[nodiscard]] const std::vector<double>& samples() const noexcept { return samples_; }
  [[nodiscard]] double operator[](std::size_t i) const noexcept { return samples_[i]; }
  [[nodiscard]] double duration_s() const noexcept { return static_cast<double>(samples_.size()) / fs_; }

 private:
  std::vector<double> samples_;
  double fs_;
};

}  // namespace emospec::signal
