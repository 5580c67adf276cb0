#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "emospec/error.hpp"
#include "emospec/rng.hpp"

namespace emospec::eval {

// Repeated K-fold assignment. Each repeat shuffles 0..n-1 with its own seeded
// permutation and cuts it into k contiguous chunks whose sizes differ by at
// most one (the first n % k folds get the extra instance).
struct FoldPlan {
  std::size_t n{0};
  std::size_t k{5};
  std::size_t repeats{5};
  std::uint64_t seed{0};
  std::vector<std::vector<std::size_t>> permutations;  // one per repeat

  [[nodiscard]] std::size_t trial_count() const noexcept { return k * repeats; }

  [[nodiscard]] std::size_t fold_begin(std::size_t fold) const { return fold * (n / k) + std::min(fold, n % k); }
  [[nodiscard]] std::size_t fold_size(std::size_t fold) const { return n / k + (fold < n % k ? 1 : 0); }

  // Held-out instances of (repeat, fold), in permutation order.
  [[nodiscard]] std::vector<std::size_t> test(std::size_t repeat, std::size_t fold) const {
    check(repeat, fold);
    const auto& p = permutations[repeat];
    const auto b = static_cast<std::ptrdiff_t>(fold_begin(fold));
    return {p.begin() + b, p.begin() + b + static_cast<std::ptrdiff_t>(fold_size(fold))};
  }

  // Every instance outside (repeat, fold), in permutation order.
  [[nodiscard]] std::vector<std::size_t> train(std::size_t repeat, std::size_t fold) const {
    check(repeat, fold);
    const auto& p = permutations[repeat];
    const auto b = static_cast<std::ptrdiff_t>(fold_begin(fold));
    std::vector<std::size_t> out(p.begin(), p.begin() + b);
    out.insert(out.end(), p.begin() + b + static_cast<std::ptrdiff_t>(fold_size(fold)), p.end());
    return out;
  }

 private:
  void check(std::size_t repeat, std::size_t fold) const {
    if (repeat >= repeats || fold >= k)
      throw InvalidArgument("fold (" + std::to_string(repeat) + ", " + std::to_string(fold) + ") out of range");
  }
};

namespace detail {

// min(n!, cap) without overflow.
inline std::uint64_t factorial_capped(std::size_t n, std::uint64_t cap) {
  std::uint64_t f = 1;
  for (std::size_t i = 2; i <= n && f < cap; ++i) f = f > cap / i ? cap : f * i;
  return std::min(f, cap);
}

}  // namespace detail

inline FoldPlan make_folds(std::size_t n, std::size_t k, std::size_t repeats, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("k must be at least 2");
  if (repeats < 1) throw InvalidArgument("repeats must be at least 1");
  if (n < k) throw InvalidArgument("need at least k = " + std::to_string(k) + " instances, got " + std::to_string(n));
  if (detail::factorial_capped(n, repeats) < repeats)
    throw InvalidArgument(std::to_string(n) + " instances admit fewer than " + std::to_string(repeats) +
                          " distinct permutations");
  FoldPlan plan{n, k, repeats, seed, {}};
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rng = make_rng(seed, {0xf01d, r});
    std::vector<std::size_t> perm(n);
    do {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      emospec::shuffle(perm.begin(), perm.end(), rng);
    } while (std::find(plan.permutations.begin(), plan.permutations.end(), perm) != plan.permutations.end());
    plan.permutations.push_back(std::move(perm));
  }
  return plan;
}

}  // namespace emospec::eval
