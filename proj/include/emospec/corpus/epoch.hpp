#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emospec/corpus/geometry.hpp"
#include "emospec/corpus/labels.hpp"
#include "emospec/error.hpp"

namespace emospec::corpus {

struct Ratings {
  double valence{5.0};
  double arousal{5.0};

  friend bool operator==(const Ratings&, const Ratings&) = default;
};

// One labeled multi-channel epoch. Samples are stored channel-major as
// 32-bit floats, which is also the on-disk precision.
struct EpochRecord {
  int subject_id{0};
  int trial_id{0};
  std::size_t channel_count{0};
  std::size_t samples_per_channel{0};
  double fs{0.0};
  std::vector<float> samples;  // channel_count * samples_per_channel
  std::optional<Ratings> ratings;
  std::optional<int> discrete_label;
  bool emotional{true};

  [[nodiscard]] std::span<const float> channel(std::size_t c) const {
    return std::span<const float>(samples).subspan(c * samples_per_channel, samples_per_channel);
  }
  [[nodiscard]] std::span<float> channel(std::size_t c) {
    return std::span<float>(samples).subspan(c * samples_per_channel, samples_per_channel);
  }

  void validate() const {
    if (samples.size() != channel_count * samples_per_channel)
      throw DataError("epoch (subject " + std::to_string(subject_id) + ", trial " + std::to_string(trial_id) +
                      "): sample count " + std::to_string(samples.size()) + " != channels x samples " +
                      std::to_string(channel_count * samples_per_channel));
    if (!(fs > 0.0)) throw DataError("epoch: fs must be positive");
    if (ratings) {
      auto ok = [](double v) { return v >= kRatingMin && v <= kRatingMax; };
      if (!ok(ratings->valence) || !ok(ratings->arousal)) throw DataError("epoch: rating outside [1, 9]");
    }
  }

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct Manifest {
  std::string dataset_name{"custom"};
  Geometry geometry;
  LabelScheme::Kind scheme{LabelScheme::Kind::va4};
  std::optional<std::uint64_t> seed;  // set for synthetic corpora
  std::optional<double> snr_db;

  friend bool operator==(const Manifest& a, const Manifest& b) {
    return a.dataset_name == b.dataset_name && a.geometry == b.geometry && a.scheme == b.scheme && a.seed == b.seed &&
           a.snr_db == b.snr_db;
  }
};

struct EpochSet {
  Manifest manifest;
  std::vector<EpochRecord> records;

  // Homogeneous geometry across records, matching the manifest.
  void validate() const {
    manifest.geometry.validate();
    const auto& g = manifest.geometry;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      r.validate();
      if (r.channel_count != g.channels || r.samples_per_channel != g.samples || r.fs != g.fs)
        throw DataError("epoch set: record " + std::to_string(i) + " geometry (" + std::to_string(r.channel_count) +
                        " ch x " + std::to_string(r.samples_per_channel) + " @ " + std::to_string(r.fs) +
                        " Hz) differs from manifest");
    }
  }

  friend bool operator==(const EpochSet&, const EpochSet&) = default;
};

// Class of a record under a scheme; nullopt means "unlabelable, drop it".
// Records without the ratings a scheme needs fall back to discrete_label.
inline std::optional<int> class_of(const EpochRecord& r, const LabelScheme& scheme) {
  switch (scheme.kind) {
    case LabelScheme::Kind::va4:
      if (r.ratings) return label_va4(r.ratings->valence, r.ratings->arousal, scheme.va4_threshold);
      break;
    case LabelScheme::Kind::valence3:
      if (!r.emotional || r.ratings)
        return label_valence3(r.ratings ? std::optional<double>(r.ratings->valence) : std::nullopt, r.emotional,
                              scheme.valence3_low, scheme.valence3_high);
      break;
    case LabelScheme::Kind::discrete: break;
  }
  if (r.discrete_label) {
    if (*r.discrete_label < 0 || *r.discrete_label >= scheme.class_count())
      throw DataError("epoch: discrete label " + std::to_string(*r.discrete_label) + " outside scheme's " +
                      std::to_string(scheme.class_count()) + " classes");
    return r.discrete_label;
  }
  throw DataError("epoch (subject " + std::to_string(r.subject_id) + ", trial " + std::to_string(r.trial_id) +
                  ") has neither the ratings required by scheme '" + std::string(to_string(scheme.kind)) +
                  "' nor a discrete label");
}

// Keep only the first `n` samples of every channel.
inline void truncate_samples(EpochSet& set, std::size_t n) {
  if (n == 0) throw InvalidArgument("truncate_samples: length must be positive");
  if (n >= set.manifest.geometry.samples) return;
  for (auto& r : set.records) {
    std::vector<float> kept(r.channel_count * n);
    for (std::size_t c = 0; c < r.channel_count; ++c) {
      const auto src = r.channel(c).first(n);
      std::copy(src.begin(), src.end(), kept.begin() + static_cast<std::ptrdiff_t>(c * n));
    }
    r.samples = std::move(kept);
    r.samples_per_channel = n;
  }
  set.manifest.geometry.samples = n;
}

}  // namespace emospec::corpus
