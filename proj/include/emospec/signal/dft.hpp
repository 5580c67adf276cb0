#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "emospec/error.hpp"

namespace emospec::signal {

using Complex = std::complex<double>;

// Number of nonnegative-frequency bins kept for a length-n frame.
constexpr std::size_t bin_count(std::size_t n) noexcept { return n / 2 + 1; }

// Mixed-radix decimation-in-time transform for any length n >= 1. Lengths
// with large prime factors fall back to O(n * p) butterflies, which is still
// the direct sum for prime n.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n), twiddle_(n) {
    if (n == 0) throw InvalidArgument("FftPlan: length must be positive");
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      twiddle_[j] = Complex(std::cos(angle), std::sin(angle));
    }
    std::size_t rest = n;
    for (std::size_t p : {4u, 2u, 3u, 5u}) {
      while (rest % p == 0) {
        factors_.push_back(p);
        rest /= p;
      }
    }
    for (std::size_t p = 7; p * p <= rest; p += 2) {
      while (rest % p == 0) {
        factors_.push_back(p);
        rest /= p;
      }
    }
    if (rest > 1) factors_.push_back(rest);
  }

  [[nodiscard]] std::size_t size() const noexcept { return n_; }

  // Full complex spectrum of a real frame. `out` must hold size() values.
  void forward(std::span<const double> in, std::span<Complex> out) const {
    if (in.size() != n_ || out.size() != n_) throw InvalidArgument("FftPlan::forward: length mismatch");
    std::vector<Complex> buf(in.begin(), in.end());
    std::vector<Complex> scratch(n_);
    recurse(buf.data(), 1, out.data(), n_, 0, scratch.data());
  }

  // Process-wide cache so repeated frames of the same length share one plan.
  static std::shared_ptr<const FftPlan> cached(std::size_t n) {
    static std::mutex mu;
    static std::unordered_map<std::size_t, std::shared_ptr<const FftPlan>> plans;
    std::lock_guard lock(mu);
    auto& slot = plans[n];
    if (!slot) slot = std::make_shared<const FftPlan>(n);
    return slot;
  }

 private:
  // out[0..n) = DFT of in[0], in[stride], ..., in[(n-1)*stride].
  void recurse(const Complex* in, std::size_t stride, Complex* out, std::size_t n, std::size_t level,
               Complex* scratch) const {
    if (n == 1) {
      out[0] = in[0];
      return;
    }
    const std::size_t p = factors_[level];
    const std::size_t m = n / p;
    for (std::size_t q = 0; q < p; ++q) recurse(in + q * stride, stride * p, out + q * m, m, level + 1, scratch);

    // Twiddles for this level are W_n^j = W_N^(j * stride_n) with stride_n = N / n.
    const std::size_t tw_stride = n_ / n;
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t q = 0; q < p; ++q) scratch[q] = out[q * m + k];
      for (std::size_t r = 0; r < p; ++r) {
        const std::size_t idx = k + r * m;
        Complex acc = scratch[0];
        for (std::size_t q = 1; q < p; ++q) {
          const std::size_t e = (q * idx) % n;
          acc += scratch[q] * twiddle_[e * tw_stride];
        }
        out[idx] = acc;
      }
    }
  }

  std::size_t n_;
  std::vector<Complex> twiddle_;
  std::vector<std::size_t> factors_;
};

// X(k) = sum_n x(n) e^{-i 2 pi n k / N} for k = 0..floor(N/2).
inline std::vector<Complex> dft(std::span<const double> frame) {
  if (frame.size() < 2) throw InvalidArgument("dft: frame length must be >= 2, got " + std::to_string(frame.size()));
  const auto plan = FftPlan::cached(frame.size());
  std::vector<Complex> full(frame.size());
  plan->forward(frame, full);
  full.resize(bin_count(frame.size()));
  return full;
}

}  // namespace emospec::signal
