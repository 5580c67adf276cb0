#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "emospec/signal/stft.hpp"
#include "oracles.hpp"

using namespace emospec;
using namespace emospec::signal;

namespace {

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> x(n);
  for (double& v : x) v = nd(rng);
  return x;
}

double max_abs(const std::vector<Complex>& v) {
  double m = 0.0;
  for (const auto& c : v) m = std::max(m, std::abs(c));
  return m;
}

}  // namespace

TEST(Dft, DcSignal) {
  const auto X = dft(std::vector<double>(8, 1.0));
  ASSERT_EQ(X.size(), 5u);
  EXPECT_NEAR(X[0].real(), 8.0, 1e-12);
  EXPECT_NEAR(X[0].imag(), 0.0, 1e-12);
  for (std::size_t k = 1; k < 5; ++k) EXPECT_LT(std::abs(X[k]), 1e-12);
}

TEST(Dft, SingleBinCosine) {
  std::vector<double> x(16);
  for (std::size_t n = 0; n < 16; ++n) x[n] = std::cos(2.0 * std::numbers::pi * 2.0 * n / 16.0);
  const auto X = dft(x);
  ASSERT_EQ(X.size(), 9u);
  EXPECT_NEAR(std::abs(X[2]), 8.0, 1e-9);
  for (std::size_t k = 0; k < X.size(); ++k)
    if (k != 2) {
      EXPECT_LE(std::abs(X[k]), 1e-9) << k;
    }
}

TEST(Dft, MatchesDirectSummationOracle) {
  for (std::size_t n : {2u, 3u, 7u, 64u, 100u, 125u, 128u, 97u, 210u, 1000u}) {
    const auto x = random_signal(n, n);
    const auto X = dft(x);
    const auto ref = oracle::dft_half(x);
    ASSERT_EQ(X.size(), n / 2 + 1);
    const double scale = max_abs(ref);
    for (std::size_t k = 0; k < X.size(); ++k) EXPECT_LE(std::abs(X[k] - ref[k]), 1e-9 * scale) << "n=" << n << " k=" << k;
  }
}

TEST(Dft, Random128MatchesOracle) {
  const auto x = random_signal(128, 99);
  const auto X = dft(x);
  const auto ref = oracle::dft_half(x);
  const double scale = max_abs(ref);
  for (std::size_t k = 0; k < X.size(); ++k) EXPECT_LE(std::abs(X[k] - ref[k]), 1e-9 * scale);
}

TEST(Dft, RejectsShortFrame) { EXPECT_THROW(dft(std::vector<double>{1.0}), InvalidArgument); }

TEST(Dft, ParsevalFullSpectrum) {
  for (std::size_t n : {16u, 63u, 125u}) {
    const auto x = random_signal(n, 7 * n);
    std::vector<Complex> full(n);
    FftPlan(n).forward(x, full);
    double time_energy = 0.0, freq_energy = 0.0;
    for (double v : x) time_energy += v * v;
    for (const auto& c : full) freq_energy += std::norm(c);
    EXPECT_NEAR(time_energy, freq_energy / static_cast<double>(n), 1e-10 * time_energy);
  }
}

TEST(StftPlanTest, ForRateMatchesDatasetGeometries) {
  const auto deap = StftPlan::for_rate(128.0);
  EXPECT_EQ(deap.frame_size, 64u);
  EXPECT_EQ(deap.hop, 32u);
  const auto seed = StftPlan::for_rate(200.0);
  EXPECT_EQ(seed.frame_size, 100u);
  EXPECT_EQ(seed.hop, 50u);
  const auto dens = StftPlan::for_rate(250.0);
  EXPECT_EQ(dens.frame_size, 125u);
  EXPECT_EQ(dens.hop, 63u);
}

TEST(StftPlanTest, Validation) {
  EXPECT_THROW((StftPlan{1, 1, WindowKind::hann}.validate()), InvalidArgument);
  EXPECT_THROW((StftPlan{8, 0, WindowKind::hann}.validate()), InvalidArgument);
  EXPECT_THROW((StftPlan{8, 9, WindowKind::hann}.validate()), InvalidArgument);
  EXPECT_NO_THROW((StftPlan{8, 8, WindowKind::hann}.validate()));
}

TEST(Stft, DatasetShapes) {
  struct Case {
    std::size_t L, N, H, frames, bins;
  };
  for (const auto& c : {Case{8064, 64, 32, 251, 33}, Case{16000, 100, 50, 319, 51}, Case{1751, 125, 63, 26, 63}}) {
    const auto s = stft(std::vector<double>(c.L, 0.5), 100.0, StftPlan{c.N, c.H, WindowKind::hann});
    EXPECT_EQ(s.frames, c.frames);
    EXPECT_EQ(s.bins, c.bins);
    EXPECT_EQ(s.coefficients.size(), c.frames * c.bins);
  }
}

TEST(Stft, ShorterThanFrameIsError) {
  try {
    stft(std::vector<double>(10, 0.0), 100.0, StftPlan{16, 8, WindowKind::hann});
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("signal shorter than frame"), std::string::npos);
  }
}

TEST(Stft, FrameArithmeticSweep) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t N = 2 + rng() % 300;
    const std::size_t H = 1 + rng() % N;
    const std::size_t L = N + rng() % 5000;
    const StftPlan p{N, H, WindowKind::hann};
    const std::size_t frames = p.frames(L);
    ASSERT_EQ(frames, (L - N) / H + 1);
    ASSERT_LT((frames - 1) * H + N - 1, L);
    ASSERT_GE(frames * H + N - 1, L);  // one more frame would overrun
  }
}

TEST(Stft, NonOverlappingRectangularEqualsPerFrameDft) {
  const auto x = random_signal(640, 21);
  const StftPlan plan{64, 64, WindowKind::rectangular};
  const auto s = stft(x, 128.0, plan);
  ASSERT_EQ(s.frames, 10u);
  for (std::size_t m = 0; m < s.frames; ++m) {
    const auto X = dft(std::span<const double>(x).subspan(m * 64, 64));
    for (std::size_t k = 0; k < s.bins; ++k) {
      EXPECT_EQ(s.at(m, k).real(), X[k].real());
      EXPECT_EQ(s.at(m, k).imag(), X[k].imag());
    }
  }
}

TEST(Stft, HannFramesMatchWindowedOracle) {
  const auto x = random_signal(500, 8);
  const StftPlan plan{100, 37, WindowKind::hann};
  const auto s = stft(x, 200.0, plan);
  const auto w = make_window(WindowKind::hann, 100);
  for (std::size_t m = 0; m < s.frames; ++m) {
    std::vector<double> frame(100);
    for (std::size_t n = 0; n < 100; ++n) frame[n] = x[m * 37 + n] * w[n];
    const auto ref = oracle::dft_half(frame);
    const double scale = max_abs(ref);
    for (std::size_t k = 0; k < s.bins; ++k) EXPECT_LE(std::abs(s.at(m, k) - ref[k]), 1e-9 * scale);
  }
}

TEST(Window, PeriodicHannAndHamming) {
  const auto h = make_window(WindowKind::hann, 8);
  EXPECT_DOUBLE_EQ(h[0], 0.0);
  EXPECT_NEAR(h[4], 1.0, 1e-15);
  const auto m = make_window(WindowKind::hamming, 8);
  EXPECT_NEAR(m[0], 0.08, 1e-15);
  EXPECT_NEAR(m[4], 1.0, 1e-15);
}

TEST(SpectrogramTest, SquaredMagnitude) {
  ComplexStft s;
  s.frames = 2;
  s.bins = 2;
  s.frame_size = 2;
  s.hop = 1;
  s.fs = 10.0;
  s.coefficients = {Complex(3, 4), Complex(0, 0), Complex(0, 0), Complex(0, 0)};
  const auto sg = spectrogram(s);
  EXPECT_EQ(sg.at(0, 0), 25.0);
  EXPECT_EQ(sg.at(1, 0), 0.0);
  EXPECT_EQ(sg.bins, 2u);
  EXPECT_EQ(sg.frames, 2u);
  EXPECT_DOUBLE_EQ(sg.df, 5.0);
  EXPECT_DOUBLE_EQ(sg.dt, 0.1);
}

TEST(SpectrogramTest, ZeroInZeroOut) {
  const auto sg = spectrogram(stft(std::vector<double>(256, 0.0), 128.0, StftPlan{64, 32, WindowKind::hann}));
  for (double v : sg.power) EXPECT_EQ(v, 0.0);
}

TEST(SpectrogramTest, MatchesConjugateProduct) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  ComplexStft s;
  s.frames = 7;
  s.bins = 9;
  s.frame_size = 16;
  s.hop = 4;
  s.fs = 100.0;
  s.coefficients.resize(63);
  for (auto& c : s.coefficients) c = {nd(rng), nd(rng)};
  const auto sg = spectrogram(s);
  for (std::size_t m = 0; m < 7; ++m)
    for (std::size_t k = 0; k < 9; ++k) {
      const Complex c = s.at(m, k);
      const double ref = (c * std::conj(c)).real();
      EXPECT_NEAR(sg.at(k, m), ref, 1e-12 * std::max(1.0, ref));
      EXPECT_GE(sg.at(k, m), 0.0);
    }
}

TEST(SpectrogramTest, EvenInSignal) {
  auto x = random_signal(1000, 12);
  const StftPlan plan{125, 63, WindowKind::hann};
  const auto a = spectrogram(stft(x, 250.0, plan));
  for (double& v : x) v = -v;
  const auto b = spectrogram(stft(x, 250.0, plan));
  ASSERT_EQ(a.power.size(), b.power.size());
  for (std::size_t i = 0; i < a.power.size(); ++i) EXPECT_EQ(a.power[i], b.power[i]);
}

TEST(LogNormalize, ConstantMapsToZero) {
  Spectrogram sg{3, 4, 1.0, 1.0, std::vector<double>(12, 7.5)};
  const auto out = log_normalize(sg, 1e-10);
  for (double v : out.power) EXPECT_EQ(v, 0.0);
}

TEST(LogNormalize, EndpointsMapToUnitInterval) {
  const double eps = 1e-10;
  Spectrogram sg{1, 4, 1.0, 1.0, {0.0, 99.0 * eps, 1e-3, 1e4}};
  const auto out = log_normalize(sg, eps);
  EXPECT_EQ(out.power[0], 0.0);
  EXPECT_EQ(out.power[3], 1.0);
  EXPECT_NEAR(out.power[1], (std::log10(100 * eps) - std::log10(eps)) / (std::log10(1e4 + eps) - std::log10(eps)), 1e-12);
}

TEST(LogNormalize, PreservesOrder) {
  std::mt19937_64 rng(9);
  std::lognormal_distribution<double> ln(0.0, 4.0);
  Spectrogram sg{10, 20, 1.0, 1.0, std::vector<double>(200)};
  for (double& v : sg.power) v = ln(rng);
  const auto out = log_normalize(sg, kDefaultLogEpsilon);
  std::vector<std::size_t> before(200), after(200);
  std::iota(before.begin(), before.end(), 0);
  after = before;
  std::stable_sort(before.begin(), before.end(), [&](auto a, auto b) { return sg.power[a] < sg.power[b]; });
  std::stable_sort(after.begin(), after.end(), [&](auto a, auto b) { return out.power[a] < out.power[b]; });
  EXPECT_EQ(before, after);
  for (double v : out.power) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(LogNormalize, RejectsNonPositiveEpsilon) {
  Spectrogram sg{1, 1, 1.0, 1.0, {1.0}};
  EXPECT_THROW(log_normalize(sg, 0.0), InvalidArgument);
}

TEST(ScalingMode, ParseRoundTrip) {
  for (auto m : {Scaling::raw, Scaling::log, Scaling::log_minmax}) EXPECT_EQ(scaling_from_string(to_string(m)), m);
  EXPECT_THROW(scaling_from_string("colormap"), InvalidArgument);
}
