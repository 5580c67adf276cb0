#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "emospec/signal/filter.hpp"

using namespace emospec;
using namespace emospec::signal;

namespace {

// |H(e^{jw})| from raw coefficients, evaluating numerator and denominator
// polynomials of every section separately.
double response_oracle(const BiquadCascade& c, double f, double fs) {
  const double w = 2.0 * std::numbers::pi * f / fs;
  std::complex<double> h = c.gain;
  for (const auto& s : c.sections) {
    std::complex<double> num = 0.0, den = 0.0;
    const double b[3] = {s.b0, s.b1, s.b2};
    const double a[3] = {1.0, s.a1, s.a2};
    for (int i = 0; i < 3; ++i) {
      const auto e = std::exp(std::complex<double>(0.0, -w * i));
      num += b[i] * e;
      den += a[i] * e;
    }
    h *= num / den;
  }
  return std::abs(h);
}

// Direct form I per section, written out as the difference equation.
std::vector<double> difference_equation(const BiquadCascade& c, std::vector<double> x) {
  for (const auto& s : c.sections) {
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t n = 0; n < x.size(); ++n) {
      double acc = s.b0 * x[n];
      if (n >= 1) acc += s.b1 * x[n - 1] - s.a1 * y[n - 1];
      if (n >= 2) acc += s.b2 * x[n - 2] - s.a2 * y[n - 2];
      y[n] = acc;
    }
    x = std::move(y);
  }
  for (double& v : x) v *= c.gain;
  return x;
}

double db(double mag) { return 20.0 * std::log10(mag); }

const FilterSpec kBandpass{5, 1.0, 40.0, 250.0};

}  // namespace

TEST(DesignBandpass, FifthOrderHasFiveSections) {
  const auto c = design_bandpass(kBandpass);
  EXPECT_EQ(c.sections.size(), 5u);
}

TEST(DesignBandpass, PassbandCenterIsUnity) {
  const auto c = design_bandpass(kBandpass);
  const double m = response_oracle(c, 20.0, 250.0);
  EXPECT_GE(m, 0.99);
  EXPECT_LE(m, 1.01);
}

TEST(DesignBandpass, CutoffsAreMinus3dB) {
  const auto c = design_bandpass(kBandpass);
  for (double f : {1.0, 40.0}) {
    const double g = db(response_oracle(c, f, 250.0));
    EXPECT_NEAR(g, -3.0103, 0.2) << "at " << f << " Hz";
  }
}

TEST(DesignBandpass, DenseGridMatchesCascadeEvaluation) {
  const auto c = design_bandpass(kBandpass);
  double peak = 0.0;
  for (int i = 1; i < 1250; ++i) {
    const double f = 0.1 * i;
    const double m = response_oracle(c, f, 250.0);
    EXPECT_NEAR(c.magnitude(f, 250.0), m, 1e-12 * std::max(1.0, m));
    peak = std::max(peak, m);
  }
  // Butterworth: maximally flat, never above unity.
  EXPECT_LE(peak, 1.0 + 1e-9);
}

TEST(DesignBandpass, StopbandAttenuation) {
  const auto c = design_bandpass(kBandpass);
  EXPECT_LT(db(response_oracle(c, 0.1, 250.0)), -30.0);
  EXPECT_LT(db(response_oracle(c, 120.0, 250.0)), -30.0);
}

TEST(DesignBandpass, RejectsInvertedCutoffs) {
  try {
    design_bandpass({5, 40.0, 1.0, 250.0});
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("invalid cutoffs"), std::string::npos);
  }
}

TEST(DesignBandpass, RejectsCutoffAboveNyquist) {
  try {
    design_bandpass({5, 1.0, 125.0, 250.0});
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("Nyquist"), std::string::npos);
  }
  EXPECT_THROW(design_bandpass({0, 1.0, 40.0, 250.0}), InvalidArgument);
  EXPECT_THROW(design_bandpass({5, 0.0, 40.0, 250.0}), InvalidArgument);
}

TEST(DesignBandpass, StableForOrdersUpToTen) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> fs_dist(50.0, 1000.0);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 200; ++trial) {
    const double fs = fs_dist(rng);
    const double nyq = fs / 2.0;
    double a = u(rng) * nyq, b = u(rng) * nyq;
    if (a > b) std::swap(a, b);
    if (b - a < 1e-3 * nyq) continue;
    const int order = 1 + trial % 10;
    const auto c = design_bandpass({order, a, b, fs});
    ASSERT_EQ(c.sections.size(), static_cast<std::size_t>(order));
    for (const auto& p : c.poles()) ASSERT_LT(std::abs(p), 1.0) << "order " << order << " fs " << fs;
  }
}

TEST(ApplyFilter, ZeroInZeroOut) {
  const auto c = design_bandpass(kBandpass);
  const auto y = apply_filter(c, TimeSeries(std::vector<double>(100, 0.0), 250.0));
  ASSERT_EQ(y.size(), 100u);
  for (double v : y.samples()) EXPECT_EQ(v, 0.0);
}

TEST(ApplyFilter, ImpulseResponseMatchesDifferenceEquation) {
  const auto c = design_bandpass(kBandpass);
  std::vector<double> impulse(512, 0.0);
  impulse[0] = 1.0;
  const auto y = apply_filter(c, TimeSeries(impulse, 250.0));
  const auto ref = difference_equation(c, impulse);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12) << i;
}

TEST(ApplyFilter, Linearity) {
  const auto c = design_bandpass(kBandpass);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> x(1000);
  for (double& v : x) v = nd(rng);
  std::vector<double> x2 = x;
  for (double& v : x2) v *= 2.0;
  const auto y1 = apply_filter(c, TimeSeries(x, 250.0));
  const auto y2 = apply_filter(c, TimeSeries(x2, 250.0));
  ASSERT_EQ(y1.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_NEAR(y2[i], 2.0 * y1[i], 1e-12 * std::max(1.0, std::abs(y2[i])));
}

TEST(ApplyFilter, AttenuatesOutOfBandTone) {
  const auto c = design_bandpass(kBandpass);
  std::vector<double> x(5000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * 100.0 * i / 250.0);
  const auto y = apply_filter(c, TimeSeries(x, 250.0));
  double tail = 0.0;
  for (std::size_t i = 2500; i < y.size(); ++i) tail = std::max(tail, std::abs(y[i]));
  EXPECT_LT(tail, 0.01);
}

TEST(TimeSeriesTest, RejectsNonFinite) {
  EXPECT_THROW(TimeSeries({1.0, std::nan("")}, 250.0), InvalidArgument);
  EXPECT_THROW(TimeSeries({1.0, INFINITY}, 250.0), InvalidArgument);
  EXPECT_THROW(TimeSeries({}, 250.0), InvalidArgument);
  EXPECT_THROW(TimeSeries({1.0}, 0.0), InvalidArgument);
}
