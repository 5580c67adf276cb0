#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <numbers>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "emospec/corpus/epoch.hpp"
#include "emospec/error.hpp"
#include "emospec/rng.hpp"

namespace emospec::corpus {

struct SynthOptions {
  double snr_db{-14.0};          // class oscillation power over background power
  double noise_rms_uv{10.0};     // background RMS per channel
  double jitter_hz{0.5};         // per-epoch center-frequency jitter (uniform +-)
  double am_depth{0.5};          // amplitude-modulation depth of the class rhythm
  double distractor_max{0.5};    // distractor amplitude as a fraction of the class amplitude
  double channel_gain_spread{0.3};
};

// Class rhythms are spread evenly over 5..30 Hz.
inline double class_center_hz(int cls, int classes) {
  if (classes < 2) throw InvalidArgument("class_center_hz: need >= 2 classes");
  return 5.0 + 25.0 * static_cast<double>(cls) / static_cast<double>(classes - 1);
}

namespace detail {

// Paul Kellet's refined pink-noise filter driven by white Gaussian noise.
class PinkNoise {
 public:
  double next(Rng& rng) {
    const double w = white_(rng);
    b0_ = 0.99886 * b0_ + w * 0.0555179;
    b1_ = 0.99332 * b1_ + w * 0.0750759;
    b2_ = 0.96900 * b2_ + w * 0.1538520;
    b3_ = 0.86650 * b3_ + w * 0.3104856;
    b4_ = 0.55000 * b4_ + w * 0.5329522;
    b5_ = -0.7616 * b5_ - w * 0.0168980;
    const double out = b0_ + b1_ + b2_ + b3_ + b4_ + b5_ + b6_ + w * 0.5362;
    b6_ = w * 0.115926;
    return out;
  }

 private:
  std::normal_distribution<double> white_{0.0, 1.0};
  double b0_{0}, b1_{0}, b2_{0}, b3_{0}, b4_{0}, b5_{0}, b6_{0};
};

// Ratings that every label scheme maps back to `cls`.
inline void assign_labels(EpochRecord& r, int cls, int classes, Rng& rng) {
  std::uniform_real_distribution<double> high(5.6, 9.0), low(1.0, 4.4), any(1.0, 9.0);
  r.discrete_label = cls;
  r.emotional = true;
  if (classes == 4) {
    const bool hv = cls == HVHA || cls == HVLA;
    const bool ha = cls == HVHA || cls == LVHA;
    const double v = hv ? high(rng) : low(rng);
    const double a = ha ? high(rng) : low(rng);
    r.ratings = Ratings{v, a};
  } else if (classes == 3) {
    if (cls == kValenceNeutral) {
      r.emotional = false;
    } else {
      const double v = cls == kValenceLow ? low(rng) : high(rng);
      r.ratings = Ratings{v, any(rng)};
    }
  }
}

}  // namespace detail

inline LabelScheme::Kind natural_scheme(int classes) {
  if (classes == 4) return LabelScheme::Kind::va4;
  if (classes == 3) return LabelScheme::Kind::valence3;
  return LabelScheme::Kind::discrete;
}

// Deterministic synthetic corpus. Epoch e carries class e % classes. Each
// channel is a band-limited, amplitude-modulated oscillation at the class
// center frequency, plus a weaker random-frequency distractor, over 1/f
// background noise.
inline EpochSet synth_generate(const Geometry& geometry, int classes, std::size_t per_class, std::uint64_t seed,
                               const SynthOptions& opt = {}, unsigned threads = 1) {
  geometry.validate();
  if (classes < 2) throw InvalidArgument("synth_generate: classes must be >= 2");
  if (per_class == 0) throw InvalidArgument("synth_generate: per_class must be >= 1");
  const double nyquist = geometry.fs / 2.0;
  if (class_center_hz(classes - 1, classes) + opt.jitter_hz >= nyquist)
    throw InvalidArgument("synth_generate: class rhythms exceed Nyquist for fs=" + std::to_string(geometry.fs));

  EpochSet set;
  set.manifest.dataset_name = "synthetic-" + geometry.name;
  set.manifest.geometry = geometry;
  set.manifest.scheme = natural_scheme(classes);
  set.manifest.seed = seed;
  set.manifest.snr_db = opt.snr_db;

  const std::size_t n_epochs = per_class * static_cast<std::size_t>(classes);
  set.records.resize(n_epochs);

  const double two_pi = 2.0 * std::numbers::pi;
  const double signal_power = opt.noise_rms_uv * opt.noise_rms_uv * std::pow(10.0, opt.snr_db / 10.0);
  // Mean square of (1 + d sin) sin is (1 + d^2 / 2) / 2.
  const double class_amp = std::sqrt(signal_power / (0.5 * (1.0 + opt.am_depth * opt.am_depth / 2.0)));
  const double dt = 1.0 / geometry.fs;
  constexpr std::uint64_t kEpochStream = 0xE90C;

  auto make_epoch = [&](std::size_t e) {
    const int cls = static_cast<int>(e % static_cast<std::size_t>(classes));
    EpochRecord r;
    r.subject_id = static_cast<int>(e % 15) + 1;
    r.trial_id = static_cast<int>(e / 15) + 1;
    r.channel_count = geometry.channels;
    r.samples_per_channel = geometry.samples;
    r.fs = geometry.fs;
    r.samples.resize(geometry.channels * geometry.samples);

    Rng epoch_rng = make_rng(seed, {kEpochStream, e});
    detail::assign_labels(r, cls, classes, epoch_rng);
    std::uniform_real_distribution<double> jitter(-opt.jitter_hz, opt.jitter_hz);
    const double f_class = class_center_hz(cls, classes) + jitter(epoch_rng);

    std::vector<double> noise(geometry.samples);
    for (std::size_t c = 0; c < geometry.channels; ++c) {
      Rng rng = make_rng(seed, {e, c});
      std::uniform_real_distribution<double> phase(0.0, two_pi);
      std::uniform_real_distribution<double> gain(1.0 - opt.channel_gain_spread, 1.0 + opt.channel_gain_spread);
      std::uniform_real_distribution<double> f_am_dist(0.1, 0.5);
      std::uniform_real_distribution<double> f_dis_dist(2.0, 35.0);
      std::uniform_real_distribution<double> dis_frac(0.0, opt.distractor_max);
      const double amp = class_amp * gain(rng);
      const double ph = phase(rng), ph_am = phase(rng), ph_dis = phase(rng);
      const double f_am = f_am_dist(rng);
      const double f_dis = std::min(f_dis_dist(rng), 0.9 * nyquist);
      const double amp_dis = amp * dis_frac(rng);

      detail::PinkNoise pink;
      for (int burn = 0; burn < 512; ++burn) pink.next(rng);
      double sum_sq = 0.0;
      for (double& v : noise) {
        v = pink.next(rng);
        sum_sq += v * v;
      }
      const double noise_scale = opt.noise_rms_uv / std::sqrt(sum_sq / static_cast<double>(noise.size()));

      auto out = r.channel(c);
      for (std::size_t n = 0; n < geometry.samples; ++n) {
        const double t = static_cast<double>(n) * dt;
        const double envelope = 1.0 + opt.am_depth * std::sin(two_pi * f_am * t + ph_am);
        const double v = amp * envelope * std::sin(two_pi * f_class * t + ph) +
                         amp_dis * std::sin(two_pi * f_dis * t + ph_dis) + noise_scale * noise[n];
        out[n] = static_cast<float>(v);
      }
    }
    set.records[e] = std::move(r);
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, n_epochs);
  if (workers == 1) {
    for (std::size_t e = 0; e < n_epochs; ++e) make_epoch(e);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t e = w; e < n_epochs; e += workers) make_epoch(e);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& err : errors)
      if (err) std::rethrow_exception(err);
  }
  return set;
}

}  // namespace emospec::corpus
