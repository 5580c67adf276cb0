#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "emospec/eval/folds.hpp"

using namespace emospec;
using namespace emospec::eval;

TEST(Folds, EvenSplit) {
  const auto plan = make_folds(100, 5, 5, 1);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t f = 0; f < 5; ++f) {
      EXPECT_EQ(plan.test(r, f).size(), 20u);
      EXPECT_EQ(plan.train(r, f).size(), 80u);
    }
}

TEST(Folds, UnevenSplitSizes) {
  const auto plan = make_folds(101, 5, 1, 9);
  std::multiset<std::size_t> sizes;
  for (std::size_t f = 0; f < 5; ++f) sizes.insert(plan.test(0, f).size());
  EXPECT_EQ(sizes, (std::multiset<std::size_t>{20, 20, 20, 20, 21}));
}

TEST(Folds, Deterministic) {
  EXPECT_EQ(make_folds(57, 5, 5, 3).permutations, make_folds(57, 5, 5, 3).permutations);
  EXPECT_NE(make_folds(57, 5, 5, 3).permutations, make_folds(57, 5, 5, 4).permutations);
}

TEST(Folds, PartitionProperties) {
  for (std::size_t n : {5u, 6u, 13u, 250u, 1001u}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto plan = make_folds(n, 5, 5, seed);
      std::set<std::vector<std::size_t>> perms(plan.permutations.begin(), plan.permutations.end());
      EXPECT_EQ(perms.size(), 5u);
      for (std::size_t r = 0; r < 5; ++r) {
        std::vector<std::size_t> all;
        std::size_t lo = n, hi = 0;
        for (std::size_t f = 0; f < 5; ++f) {
          const auto t = plan.test(r, f);
          lo = std::min(lo, t.size());
          hi = std::max(hi, t.size());
          all.insert(all.end(), t.begin(), t.end());
          auto tr = plan.train(r, f);
          EXPECT_EQ(tr.size() + t.size(), n);
          std::sort(tr.begin(), tr.end());
          for (auto i : t) EXPECT_FALSE(std::binary_search(tr.begin(), tr.end(), i));
        }
        EXPECT_LE(hi - lo, 1u);
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
      }
    }
  }
}

TEST(Folds, TinyInputsStillGetDistinctPermutations) {
  // 3! = 6 orderings: room for 6 repeats, not 7.
  const auto plan = make_folds(3, 2, 6, 1);
  std::set<std::vector<std::size_t>> perms(plan.permutations.begin(), plan.permutations.end());
  EXPECT_EQ(perms.size(), 6u);
  EXPECT_THROW((void)make_folds(3, 2, 7, 1), InvalidArgument);
}

TEST(Folds, Errors) {
  EXPECT_THROW((void)make_folds(4, 5, 5, 1), InvalidArgument);
  EXPECT_THROW((void)make_folds(10, 1, 5, 1), InvalidArgument);
  EXPECT_THROW((void)make_folds(10, 5, 0, 1), InvalidArgument);
  const auto plan = make_folds(10, 5, 2, 1);
  EXPECT_THROW((void)plan.test(2, 0), InvalidArgument);
  EXPECT_THROW((void)plan.train(0, 5), InvalidArgument);
}
