#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emospec/error.hpp"

namespace emospec::eval {

// counts(a, p): instances of actual class a predicted as p (rows = actual).
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}
  ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts) : classes_(classes), counts_(std::move(counts)) {
    if (counts_.size() != classes_ * classes_) throw InvalidArgument("confusion matrix: wrong number of counts");
  }

  [[nodiscard]] std::size_t classes() const noexcept { return classes_; }
  [[nodiscard]] std::uint64_t at(std::size_t actual, std::size_t predicted) const {
    return counts_.at(actual * classes_ + predicted);
  }
  void add(std::size_t actual, std::size_t predicted, std::uint64_t n = 1) { counts_.at(actual * classes_ + predicted) += n; }
  [[nodiscard]] const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

  [[nodiscard]] std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }
  [[nodiscard]] std::uint64_t row_sum(std::size_t actual) const {
    std::uint64_t t = 0;
    for (std::size_t p = 0; p < classes_; ++p) t += at(actual, p);
    return t;
  }
  [[nodiscard]] std::uint64_t col_sum(std::size_t predicted) const {
    std::uint64_t t = 0;
    for (std::size_t a = 0; a < classes_; ++a) t += at(a, predicted);
    return t;
  }
  [[nodiscard]] std::uint64_t support(std::size_t c) const { return row_sum(c); }

  [[nodiscard]] double accuracy() const {
    const auto t = total();
    if (t == 0) return 0.0;
    std::uint64_t diag = 0;
    for (std::size_t c = 0; c < classes_; ++c) diag += at(c, c);
    return static_cast<double>(diag) / static_cast<double>(t);
  }
  // 0 when nothing was predicted as c.
  [[nodiscard]] double precision(std::size_t c) const {
    const auto s = col_sum(c);
    return s == 0 ? 0.0 : static_cast<double>(at(c, c)) / static_cast<double>(s);
  }
  // 0 when class c never occurs.
  [[nodiscard]] double recall(std::size_t c) const {
    const auto s = row_sum(c);
    return s == 0 ? 0.0 : static_cast<double>(at(c, c)) / static_cast<double>(s);
  }
  [[nodiscard]] double f1(std::size_t c) const {
    const double p = precision(c), r = recall(c);
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_{0};
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const int> actual, std::span<const int> predicted, std::size_t classes) {
  if (actual.size() != predicted.size())
    throw InvalidArgument("confusion: " + std::to_string(actual.size()) + " actual vs " +
                          std::to_string(predicted.size()) + " predicted labels");
  if (classes == 0) throw InvalidArgument("confusion: zero classes");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const int a = actual[i], p = predicted[i];
    if (a < 0 || p < 0 || static_cast<std::size_t>(a) >= classes || static_cast<std::size_t>(p) >= classes)
      throw InvalidArgument("confusion: label out of range at index " + std::to_string(i));
    cm.add(static_cast<std::size_t>(a), static_cast<std::size_t>(p));
  }
  return cm;
}

enum class F1Average { macro, micro, weighted };

inline std::string to_string(F1Average a) {
  switch (a) {
    case F1Average::macro: return "macro";
    case F1Average::micro: return "micro";
    case F1Average::weighted: return "weighted";
  }
  return "?";
}

inline F1Average f1_average_from_string(const std::string& s) {
  if (s == "macro") return F1Average::macro;
  if (s == "micro") return F1Average::micro;
  if (s == "weighted") return F1Average::weighted;
  throw InvalidArgument("unknown F1 averaging '" + s + "' (expected macro, micro or weighted)");
}

// F1 in percent.
inline double f1_score(const ConfusionMatrix& cm, F1Average avg = F1Average::macro) {
  const auto total = cm.total();
  if (total == 0) throw InvalidArgument("f1: empty confusion matrix");
  const std::size_t C = cm.classes();
  double score = 0.0;
  switch (avg) {
    case F1Average::macro:
      for (std::size_t c = 0; c < C; ++c) score += cm.f1(c);
      score /= static_cast<double>(C);
      break;
    case F1Average::micro:
      // Single-label classification: micro precision = micro recall = accuracy.
      score = cm.accuracy();
      break;
    case F1Average::weighted:
      for (std::size_t c = 0; c < C; ++c) score += cm.f1(c) * static_cast<double>(cm.support(c));
      score /= static_cast<double>(total);
      break;
  }
  return 100.0 * score;
}

}  // namespace emospec::eval
