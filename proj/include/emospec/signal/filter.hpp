#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <vector>

#include "emospec/error.hpp"
#include "emospec/signal/time_series.hpp"

namespace emospec::signal {

struct FilterSpec {
  int order{5};
  double low_hz{1.0};
  double high_hz{40.0};
  double fs{250.0};

  // Throws InvalidArgument naming the violated bound.
  void validate() const {
    std::ostringstream msg;
    if (order < 1) {
      msg << "invalid filter order " << order << ": must be >= 1";
      throw InvalidArgument(msg.str());
    }
    if (!(fs > 0.0) || !std::isfinite(fs)) {
      msg << "invalid sampling rate " << fs << " Hz: must be positive";
      throw InvalidArgument(msg.str());
    }
    if (!(low_hz > 0.0)) {
      msg << "invalid cutoffs: low_hz (" << low_hz << ") must be > 0";
      throw InvalidArgument(msg.str());
    }
    if (!(low_hz < high_hz)) {
      msg << "invalid cutoffs: low_hz (" << low_hz << ") must be below high_hz (" << high_hz << ")";
      throw InvalidArgument(msg.str());
    }
    if (!(high_hz < fs / 2.0)) {
      msg << "invalid cutoffs: high_hz (" << high_hz << ") must be below Nyquist (" << fs / 2.0 << " Hz)";
      throw InvalidArgument(msg.str());
    }
  }
};

// H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0{1.0}, b1{0.0}, b2{0.0};
  double a1{0.0}, a2{0.0};

  [[nodiscard]] std::complex<double> response(std::complex<double> z_inv) const {
    const auto z2 = z_inv * z_inv;
    return (b0 + b1 * z_inv + b2 * z2) / (1.0 + a1 * z_inv + a2 * z2);
  }

  [[nodiscard]] std::array<std::complex<double>, 2> poles() const {
    // Roots of z^2 + a1 z + a2.
    const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2, 0.0));
    return {(-a1 + disc) / 2.0, (-a1 - disc) / 2.0};
  }
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  double gain{1.0};

  // Complex response at frequency f_hz for sampling rate fs.
  [[nodiscard]] std::complex<double> response(double f_hz, double fs) const {
    const double w = 2.0 * std::numbers::pi * f_hz / fs;
    const std::complex<double> z_inv = std::polar(1.0, -w);
    std::complex<double> h{gain, 0.0};
    for (const auto& s : sections) h *= s.response(z_inv);
    return h;
  }

  [[nodiscard]] double magnitude(double f_hz, double fs) const { return std::abs(response(f_hz, fs)); }

  [[nodiscard]] double magnitude_db(double f_hz, double fs) const {
    return 20.0 * std::log10(magnitude(f_hz, fs));
  }

  [[nodiscard]] std::vector<std::complex<double>> poles() const {
    std::vector<std::complex<double>> out;
    out.reserve(sections.size() * 2);
    for (const auto& s : sections)
      for (const auto& p : s.poles()) out.push_back(p);
    return out;
  }

  [[nodiscard]] bool stable() const {
    for (const auto& p : poles())
      if (!(std::abs(p) < 1.0)) return false;
    return true;
  }
};

namespace detail {

inline std::complex<double> bilinear(std::complex<double> s, double fs) {
  const double k = 2.0 * fs;
  return (k + s) / (k - s);
}

inline Biquad section_from_poles(std::complex<double> z1, std::complex<double> z2) {
  // Zeros at z = +1 and z = -1: numerator 1 - z^-2.
  const std::complex<double> sum = z1 + z2;
  const std::complex<double> prod = z1 * z2;
  Biquad s;
  s.b0 = 1.0;
  s.b1 = 0.0;
  s.b2 = -1.0;
  s.a1 = -sum.real();
  s.a2 = prod.real();
  return s;
}

}  // namespace detail

// Butterworth bandpass: analog lowpass prototype -> lowpass-to-bandpass
// transform at the prewarped edges -> bilinear transform. Each prototype pole
// yields one second-order section, so the cascade has `order` sections. The
// gain is normalized to unity at the geometric center frequency, where the
// analog bandpass response is exactly 1.
inline BiquadCascade design_bandpass(const FilterSpec& spec) {
  spec.validate();
  using cd = std::complex<double>;
  const double pi = std::numbers::pi;
  const double fs = spec.fs;
  const double w_lo = 2.0 * fs * std::tan(pi * spec.low_hz / fs);
  const double w_hi = 2.0 * fs * std::tan(pi * spec.high_hz / fs);
  const double bw = w_hi - w_lo;
  const double w0_sq = w_lo * w_hi;
  const int n = spec.order;

  BiquadCascade out;
  out.sections.reserve(static_cast<std::size_t>(n));
  // Prototype poles p_k = exp(i*pi*(2k+n-1)/(2n)), k = 1..n. Only the upper
  // half-plane member of each conjugate pair is visited; the real pole (odd n)
  // is handled on its own.
  for (int k = 1; k <= n; ++k) {
    const double theta = pi * static_cast<double>(2 * k + n - 1) / (2.0 * n);
    const cd p = std::polar(1.0, theta);
    const cd half = p * bw / 2.0;
    const cd root = std::sqrt(half * half - w0_sq);
    const cd s_plus = half + root;
    const cd s_minus = half - root;
    if (2 * k - 1 == n) {
      // Real prototype pole: its two bandpass poles are either both real or a
      // conjugate pair; either way they form one real section.
      out.sections.push_back(detail::section_from_poles(detail::bilinear(s_plus, fs), detail::bilinear(s_minus, fs)));
    } else if (p.imag() > 0.0) {
      const cd z_plus = detail::bilinear(s_plus, fs);
      const cd z_minus = detail::bilinear(s_minus, fs);
      out.sections.push_back(detail::section_from_poles(z_plus, std::conj(z_plus)));
      out.sections.push_back(detail::section_from_poles(z_minus, std::conj(z_minus)));
    }
  }

  const double f_center = fs / pi * std::atan(std::sqrt(w0_sq) / (2.0 * fs));
  out.gain = 1.0;
  out.gain = 1.0 / out.magnitude(f_center, fs);
  return out;
}

// Causal single pass (transposed direct form II per section), zero initial state.
inline TimeSeries apply_filter(const BiquadCascade& filter, const TimeSeries& x) {
  std::vector<double> y(x.samples());
  for (const auto& s : filter.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] *= filter.gain;
    if (!std::isfinite(y[i])) throw NumericError("apply_filter: non-finite output at index " + std::to_string(i));
  }
  return TimeSeries(std::move(y), x.fs());
}

}  // namespace emospec::signal
