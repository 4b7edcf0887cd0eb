#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "orchestra/similarity.hpp"
#include "support.hpp"

using namespace orchestra;
using testing_support::state;
using testing_support::tlb;

namespace {

// Textbook form with explicit precision and recall.
double f1_textbook(std::size_t common, std::size_t na, std::size_t nb) {
  if (na == 0 && nb == 0) return 1.0;
  if (na == 0 || nb == 0 || common == 0) return 0.0;
  const double p = double(common) / double(na);
  const double r = double(common) / double(nb);
  return 2 * p * r / (p + r);
}

LabeledTurn labeled(DialogueState prev, TurnBelief b) { return {"k", std::move(prev), std::move(b)}; }

} // namespace

TEST(F1Sets, Examples) {
  EXPECT_DOUBLE_EQ(f1_sets<std::string>({"x", "y"}, {"y", "z"}), 0.5);
  EXPECT_DOUBLE_EQ(f1_sets<std::string>({"x", "y"}, {"x", "y"}), 1.0);
  EXPECT_DOUBLE_EQ(f1_sets<std::string>({}, {}), 1.0);
  EXPECT_DOUBLE_EQ(f1_sets<std::string>({"x"}, {}), 0.0);
  EXPECT_DOUBLE_EQ(f1_sets<std::string>({}, {"x"}), 0.0);
  EXPECT_DOUBLE_EQ(f1_sets<std::string>({"x"}, {"y"}), 0.0);
}

TEST(F1Sets, AgreesWithTextbookForm) {
  for (std::size_t na = 0; na <= 12; ++na)
    for (std::size_t nb = 0; nb <= 12; ++nb)
      for (std::size_t c = 0; c <= std::min(na, nb); ++c) {
        std::set<int> a, b;
        for (std::size_t i = 0; i < na; ++i) a.insert(int(i));
        for (std::size_t i = 0; i < nb; ++i) b.insert(int(i < c ? i : 100 + i));
        EXPECT_NEAR(f1_sets(a, b), f1_textbook(c, na, nb), 1e-15);
      }
}

TEST(TlbSimilarity, Examples) {
  const auto a = tlb({{"hotel-area", "west"}, {"hotel-stars", "3"}});
  const auto b = tlb({{"hotel-area", "west"}, {"hotel-stars", "4"}});
  const auto f = slot_f1(a, b);
  EXPECT_DOUBLE_EQ(f.slot_value, 0.5);
  EXPECT_DOUBLE_EQ(f.slot, 1.0);
  EXPECT_DOUBLE_EQ(tlb_similarity(a, b), 0.5);
  EXPECT_DOUBLE_EQ(tlb_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(tlb_similarity(tlb({{"hotel-area", "west"}}), tlb({{"train-day", "monday"}})), -1.0);
}

TEST(StateSimilarity, Examples) {
  EXPECT_DOUBLE_EQ(state_similarity({}, {}), 1.0);
  const auto s = state({{"a-x", "1"}, {"a-y", "2"}});
  EXPECT_DOUBLE_EQ(state_similarity(s, s), 1.0);
  const auto f = slot_f1(s, state({{"a-x", "1"}}));
  EXPECT_NEAR(f.slot_value, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(f.slot, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(state_similarity(s, state({{"a-x", "1"}})), 1.0 / 3.0, 1e-15);
}

TEST(TurnSimilarity, Examples) {
  const auto ctx = state({{"hotel-area", "west"}});
  const auto b1 = tlb({{"hotel-area", "west"}, {"hotel-stars", "3"}});
  const auto b2 = tlb({{"hotel-area", "west"}, {"hotel-stars", "4"}});
  EXPECT_DOUBLE_EQ(turn_similarity(labeled(ctx, b1), labeled(ctx, b1)), 1.5);
  EXPECT_DOUBLE_EQ(turn_similarity(labeled(ctx, b1), labeled(ctx, b2)), 1.0);
  EXPECT_DOUBLE_EQ(turn_similarity(labeled(ctx, b1), labeled(state({{"train-day", "monday"}}), tlb({{"taxi-leaveat", "1"}}))),
                   -1.5);
}

TEST(GradedAccuracy, Examples) {
  const auto gold = tlb({{"restaurant-food", "singaporean"}, {"restaurant-pricerange", "cheap"}});
  EXPECT_DOUBLE_EQ(graded_accuracy(gold, gold), 1.0);
  EXPECT_DOUBLE_EQ(
      graded_accuracy(tlb({{"restaurant-food", "singaporean"}, {"restaurant-pricerange", "affordable"}}), gold), 0.5);
  EXPECT_DOUBLE_EQ(graded_accuracy({}, gold), -1.0);
}

TEST(SimilarityProperty, SymmetryReflexivityRangeDominance) {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto a = testing_support::random_values(rng, 5, 10, 3);
    const auto b = testing_support::random_values(rng, 5, 10, 3);
    const auto sa = testing_support::random_values<DialogueStateTag>(rng, 5, 10, 3);
    const auto sb = testing_support::random_values<DialogueStateTag>(rng, 5, 10, 3);
    const double s = tlb_similarity(a, b);
    EXPECT_EQ(s, tlb_similarity(b, a));
    EXPECT_EQ(tlb_similarity(a, a), 1.0);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
    const auto f = slot_f1(a, b);
    EXPECT_GE(f.slot, f.slot_value);
    EXPECT_EQ(state_similarity(sa, sb), state_similarity(sb, sa));
    const double t = turn_similarity(labeled(sa, a), labeled(sb, b));
    EXPECT_EQ(t, turn_similarity(labeled(sb, b), labeled(sa, a)));
    EXPECT_EQ(turn_similarity(labeled(sa, a), labeled(sa, a)), 1.5);
    EXPECT_GE(t, -1.5);
    EXPECT_LE(t, 1.5);
  }
}
