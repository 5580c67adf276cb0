#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <span>

#include "emospec/error.hpp"

namespace emospec::eval {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Sample standard deviation (n - 1 denominator).
inline double sample_sd(std::span<const double> x) {
  if (x.size() < 2) throw InvalidArgument("standard deviation needs at least 2 values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("incomplete_beta: x must lie in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fast for x < (a + 1) / (a + b + 2); use the
  // symmetry I_x(a, b) = 1 - I_{1-x}(b, a) otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// Two-sided tail P(|T| >= |t|) of Student's t with df degrees of freedom.
inline double t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw InvalidArgument("t distribution: df must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

// Student's t CDF.
inline double t_cdf(double t, double df) {
  const double tail = 0.5 * t_two_sided_p(t, df);
  return t >= 0.0 ? 1.0 - tail : tail;
}

struct TTestResult {
  double t{0};
  double df{0};
  double p{1};
  double cohen_d{0};
  double ci95_low{0};  // approximate 95% interval for d
  double ci95_high{0};
  double mean_a{0}, mean_b{0};
  double sd_a{0}, sd_b{0};
  std::size_t n_a{0}, n_b{0};
};

// Welch's unequal-variance t-test of mean(a) - mean(b), with Cohen's d on
// the pooled standard deviation sqrt((s_a^2 + s_b^2) / 2).
inline TTestResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InvalidArgument("welch_t: each score set needs at least 2 values");
  TTestResult r;
  r.n_a = a.size();
  r.n_b = b.size();
  r.mean_a = mean(a);
  r.mean_b = mean(b);
  r.sd_a = sample_sd(a);
  r.sd_b = sample_sd(b);
  const double na = static_cast<double>(r.n_a), nb = static_cast<double>(r.n_b);
  const double va = r.sd_a * r.sd_a / na, vb = r.sd_b * r.sd_b / nb;
  if (va + vb == 0.0) throw InvalidArgument("welch_t: both score sets have zero variance");
  const double diff = r.mean_a - r.mean_b;
  r.t = diff / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p = t_two_sided_p(r.t, r.df);
  r.cohen_d = diff / std::sqrt((r.sd_a * r.sd_a + r.sd_b * r.sd_b) / 2.0);
  const double se = std::sqrt((na + nb) / (na * nb) + r.cohen_d * r.cohen_d / (2.0 * (na + nb - 2.0)));
  r.ci95_low = r.cohen_d - 1.96 * se;
  r.ci95_high = r.cohen_d + 1.96 * se;
  return r;
}

}  // namespace emospec::eval
