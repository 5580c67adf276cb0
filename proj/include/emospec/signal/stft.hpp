#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emospec/error.hpp"
#include "emospec/signal/dft.hpp"
#include "emospec/signal/time_series.hpp"

namespace emospec::signal {

enum class WindowKind { hann, rectangular, hamming };

inline std::string_view to_string(WindowKind w) {
  switch (w) {
    case WindowKind::hann: return "hann";
    case WindowKind::rectangular: return "rectangular";
    case WindowKind::hamming: return "hamming";
  }
  return "?";
}

inline WindowKind window_from_string(std::string_view s) {
  if (s == "hann") return WindowKind::hann;
  if (s == "rectangular" || s == "rect") return WindowKind::rectangular;
  if (s == "hamming") return WindowKind::hamming;
  throw InvalidArgument("unknown window kind '" + std::string(s) + "'");
}

// Periodic (DFT-even) windows of length n.
inline std::vector<double> make_window(WindowKind kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = std::cos(two_pi * static_cast<double>(i) / static_cast<double>(n));
    switch (kind) {
      case WindowKind::hann: w[i] = 0.5 - 0.5 * c; break;
      case WindowKind::hamming: w[i] = 0.54 - 0.46 * c; break;
      case WindowKind::rectangular: break;
    }
  }
  return w;
}

struct StftPlan {
  std::size_t frame_size{0};  // N
  std::size_t hop{0};         // H
  WindowKind window{WindowKind::hann};

  void validate() const {
    if (frame_size < 2) throw InvalidArgument("StftPlan: frame size must be >= 2, got " + std::to_string(frame_size));
    if (hop < 1 || hop > frame_size)
      throw InvalidArgument("StftPlan: hop must satisfy 1 <= H <= N, got H=" + std::to_string(hop) +
                            " N=" + std::to_string(frame_size));
  }

  [[nodiscard]] std::size_t bins() const noexcept { return bin_count(frame_size); }

  // floor((L - N) / H) + 1; zero when the signal is shorter than one frame.
  [[nodiscard]] std::size_t frames(std::size_t length) const noexcept {
    if (length < frame_size) return 0;
    return (length - frame_size) / hop + 1;
  }

  // 0.5 s frames with a 0.25 s hop, rounded to whole samples (half away from zero).
  static StftPlan for_rate(double fs, WindowKind window = WindowKind::hann) {
    if (!(fs > 0.0)) throw InvalidArgument("StftPlan::for_rate: fs must be positive");
    StftPlan p;
    p.frame_size = static_cast<std::size_t>(std::lround(0.5 * fs));
    p.hop = static_cast<std::size_t>(std::lround(0.25 * fs));
    p.window = window;
    p.validate();
    return p;
  }
};

// Complex coefficients S(m, k), stored frame-major: at(m, k).
struct ComplexStft {
  std::size_t frames{0};
  std::size_t bins{0};
  std::size_t frame_size{0};
  std::size_t hop{0};
  double fs{1.0};
  std::vector<Complex> coefficients;

  [[nodiscard]] Complex& at(std::size_t m, std::size_t k) { return coefficients[m * bins + k]; }
  [[nodiscard]] const Complex& at(std::size_t m, std::size_t k) const { return coefficients[m * bins + k]; }
};

// Power image chi(m, k), stored bin-major (rows = bins, cols = frames) so it
// reads as the K x M classifier image.
struct Spectrogram {
  std::size_t bins{0};
  std::size_t frames{0};
  double df{0.0};  // Hz per bin
  double dt{0.0};  // seconds per hop
  std::vector<double> power;

  [[nodiscard]] double& at(std::size_t k, std::size_t m) { return power[k * frames + m]; }
  [[nodiscard]] double at(std::size_t k, std::size_t m) const { return power[k * frames + m]; }
};

// S(m,k) = sum_n x(n + mH) w(n) e^{-i 2 pi k n / N}. No padding; trailing
// samples that do not fill a frame are dropped.
inline ComplexStft stft(std::span<const double> x, double fs, const StftPlan& plan) {
  plan.validate();
  if (x.size() < plan.frame_size)
    throw InvalidArgument("stft: signal shorter than frame (L=" + std::to_string(x.size()) +
                          ", N=" + std::to_string(plan.frame_size) + ")");
  ComplexStft out;
  out.frames = plan.frames(x.size());
  out.bins = plan.bins();
  out.frame_size = plan.frame_size;
  out.hop = plan.hop;
  out.fs = fs;
  out.coefficients.resize(out.frames * out.bins);

  const auto window = make_window(plan.window, plan.frame_size);
  const bool rectangular = plan.window == WindowKind::rectangular;
  std::vector<double> frame(plan.frame_size);
  for (std::size_t m = 0; m < out.frames; ++m) {
    const std::size_t start = m * plan.hop;
    for (std::size_t n = 0; n < plan.frame_size; ++n)
      frame[n] = rectangular ? x[start + n] : x[start + n] * window[n];
    const auto spectrum = dft(frame);
    std::copy(spectrum.begin(), spectrum.end(), out.coefficients.begin() + static_cast<std::ptrdiff_t>(m * out.bins));
  }
  return out;
}

inline ComplexStft stft(const TimeSeries& x, const StftPlan& plan) { return stft(x.samples(), x.fs(), plan); }

// chi(m, k) = |S(m, k)|^2
inline Spectrogram spectrogram(const ComplexStft& s) {
  Spectrogram out;
  out.bins = s.bins;
  out.frames = s.frames;
  out.df = s.frame_size > 0 ? s.fs / static_cast<double>(s.frame_size) : 0.0;
  out.dt = static_cast<double>(s.hop) / s.fs;
  out.power.resize(s.bins * s.frames);
  for (std::size_t m = 0; m < s.frames; ++m)
    for (std::size_t k = 0; k < s.bins; ++k) out.at(k, m) = std::norm(s.at(m, k));
  return out;
}

enum class Scaling { raw, log, log_minmax };

inline std::string_view to_string(Scaling s) {
  switch (s) {
    case Scaling::raw: return "raw";
    case Scaling::log: return "log";
    case Scaling::log_minmax: return "log+minmax";
  }
  return "?";
}

inline Scaling scaling_from_string(std::string_view s) {
  if (s == "raw") return Scaling::raw;
  if (s == "log") return Scaling::log;
  if (s == "log+minmax" || s == "log_minmax") return Scaling::log_minmax;
  throw InvalidArgument("unknown scaling mode '" + std::string(s) + "' (expected raw | log | log+minmax)");
}

inline constexpr double kDefaultLogEpsilon = 1e-10;

// Entry -> log10(entry + epsilon).
inline Spectrogram log_scale(Spectrogram sg, double epsilon = kDefaultLogEpsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("log_scale: epsilon must be positive");
  for (double& v : sg.power) v = std::log10(v + epsilon);
  return sg;
}

// log10(entry + epsilon), then min-max rescale of the whole instance to [0, 1].
// A constant image maps to all zeros.
inline Spectrogram log_normalize(Spectrogram sg, double epsilon = kDefaultLogEpsilon) {
  sg = log_scale(std::move(sg), epsilon);
  if (sg.power.empty()) return sg;
  const auto [lo_it, hi_it] = std::minmax_element(sg.power.begin(), sg.power.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  for (double& v : sg.power) v = range > 0.0 ? (v - lo) / range : 0.0;
  return sg;
}

inline Spectrogram apply_scaling(Spectrogram sg, Scaling mode, double epsilon = kDefaultLogEpsilon) {
  switch (mode) {
    case Scaling::raw: return sg;
    case Scaling::log: return log_scale(std::move(sg), epsilon);
    case Scaling::log_minmax: return log_normalize(std::move(sg), epsilon);
  }
  return sg;
}

}  // namespace emospec::signal
