#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "emospec/error.hpp"

namespace emospec::corpus {

inline constexpr double kRatingMin = 1.0;
inline constexpr double kRatingMax = 9.0;

// Valence-arousal quadrants.
enum Va4Class : int { HVHA = 0, HVLA = 1, LVHA = 2, LVLA = 3 };

// Valence classes with a neutral middle.
enum Valence3Class : int { kValenceLow = 0, kValenceNeutral = 1, kValenceHigh = 2 };

struct LabelScheme {
  // `discrete` takes the record's stored class as-is (used when no ratings exist).
  enum class Kind { va4, valence3, discrete };

  Kind kind{Kind::va4};
  double va4_threshold{5.0};
  double valence3_low{4.5};
  double valence3_high{5.5};
  int discrete_classes{0};

  static LabelScheme va4(double threshold = 5.0) { return {Kind::va4, threshold, 4.5, 5.5, 0}; }
  static LabelScheme valence3(double low = 4.5, double high = 5.5) { return {Kind::valence3, 5.0, low, high, 0}; }
  static LabelScheme discrete(int classes) { return {Kind::discrete, 5.0, 4.5, 5.5, classes}; }

  [[nodiscard]] int class_count() const {
    switch (kind) {
      case Kind::va4: return 4;
      case Kind::valence3: return 3;
      case Kind::discrete: return discrete_classes;
    }
    return 0;
  }

  void validate() const {
    auto in_range = [](double v) { return v >= kRatingMin && v <= kRatingMax; };
    if (!in_range(va4_threshold)) throw InvalidArgument("label scheme: va4 threshold outside [1,9]");
    if (!in_range(valence3_low) || !in_range(valence3_high))
      throw InvalidArgument("label scheme: valence3 thresholds outside [1,9]");
    if (!(valence3_low < valence3_high)) throw InvalidArgument("label scheme: valence3_low must be < valence3_high");
    if (kind == Kind::discrete && discrete_classes < 2) throw InvalidArgument("label scheme: discrete needs >= 2 classes");
  }
};

inline std::string_view to_string(LabelScheme::Kind k) {
  switch (k) {
    case LabelScheme::Kind::va4: return "va4";
    case LabelScheme::Kind::valence3: return "valence3";
    case LabelScheme::Kind::discrete: return "discrete";
  }
  return "?";
}

inline LabelScheme::Kind scheme_kind_from_string(std::string_view s) {
  if (s == "va4") return LabelScheme::Kind::va4;
  if (s == "valence3") return LabelScheme::Kind::valence3;
  if (s == "discrete") return LabelScheme::Kind::discrete;
  throw InvalidArgument("unknown label scheme '" + std::string(s) + "' (expected va4 | valence3 | discrete)");
}

namespace detail {
inline void check_rating(const char* what, double v) {
  if (!(v >= kRatingMin && v <= kRatingMax)) {
    std::ostringstream msg;
    msg << what << " rating " << v << " outside [1, 9]";
    throw InvalidArgument(msg.str());
  }
}
}  // namespace detail

// High means rating >= threshold.
inline int label_va4(double valence, double arousal, double threshold = 5.0) {
  detail::check_rating("valence", valence);
  detail::check_rating("arousal", arousal);
  const bool hv = valence >= threshold;
  const bool ha = arousal >= threshold;
  if (hv) return ha ? HVHA : HVLA;
  return ha ? LVHA : LVLA;
}

// Non-emotional epochs are neutral. Emotional epochs whose valence falls in
// [low, high] carry no class and yield nullopt (the instance is dropped).
inline std::optional<int> label_valence3(std::optional<double> valence, bool emotional, double low = 4.5,
                                         double high = 5.5) {
  if (!emotional) return kValenceNeutral;
  if (!valence) throw InvalidArgument("label_valence3: emotional epoch without a valence rating");
  detail::check_rating("valence", *valence);
  if (*valence < low) return kValenceLow;
  if (*valence > high) return kValenceHigh;
  return std::nullopt;
}

}  // namespace emospec::corpus
