// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "pmu_sentinel/evaluate.hpp"

using namespace pmu;

namespace {

ConfusionCounts counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn = 0) {
  return {tp, fp, fn, tn};
}

std::vector<bool> negate(const std::vector<bool>& v) {
  std::vector<bool> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = !v[i];
  return out;
}

}  // namespace

TEST(Confusion, ExactMatchHasNoErrors) {
  const AnomalyMask m = AnomalyMask::from_episodes(50, {{5, 12}, {30, 41}});
  const ConfusionCounts c = confusion(m.flags, m, 0);
  EXPECT_EQ(c.false_positives, 0u);
  EXPECT_EQ(c.false_negatives, 0u);
  EXPECT_EQ(c.true_positives, 18u);
  EXPECT_EQ(c.total(), 50u);
}

TEST(Confusion, NoFlagsMissesEveryPositive) {
  const AnomalyMask m = AnomalyMask::from_episodes(40, {{10, 20}});
  const ConfusionCounts c = confusion(std::vector<bool>(40, false), m, 0);
  EXPECT_EQ(c.false_negatives, 10u);
  EXPECT_EQ(c.true_negatives, 30u);
}

TEST(Confusion, LengthMismatchIsAlignmentError) {
  EXPECT_THROW(confusion(std::vector<bool>(9, false), AnomalyMask::none(10)), AlignmentError);
}

TEST(Confusion, ToleranceCreditsNearbyFlags) {
  const AnomalyMask m = AnomalyMask::from_episodes(20, {{8, 11}});
  std::vector<bool> f(20, false);
  f[6] = true;   // two samples early
  f[15] = true;  // far away
  const ConfusionCounts strict = confusion(f, m, 0);
  EXPECT_EQ(strict, counts(0, 2, 3, 15));
  const ConfusionCounts loose = confusion(f, m, 2);
  // Flag at 6 reaches 8; truth 8 finds flag 6; 9 and 10 are too far.
  EXPECT_EQ(loose, counts(2, 1, 2, 15));
}

TEST(Confusion, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(1, 200);
  std::uniform_real_distribution<double> density(0.0, 0.5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = len(rng);
    const auto flags = oracle::random_flags(n, density(rng), rng);
    const AnomalyMask mask = oracle::mask_of(oracle::random_flags(n, density(rng), rng));
    for (std::size_t w : {0u, 1u, 5u}) {
      const ConfusionCounts got = confusion(flags, mask, w);
      const ConfusionCounts want = oracle::confusion(flags, mask.flags, w);
      ASSERT_EQ(got, want) << "trial " << trial << " w " << w;
      ASSERT_EQ(got.total(), n);
    }
  }
}

TEST(Confusion, TrueNegativesMirrorInvertedTruePositives) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto flags = oracle::random_flags(100, 0.3, rng);
    const auto truth = oracle::random_flags(100, 0.2, rng);
    const ConfusionCounts c = confusion(flags, oracle::mask_of(truth), 0);
    const ConfusionCounts inv = confusion(negate(flags), oracle::mask_of(negate(truth)), 0);
    ASSERT_EQ(c.true_negatives, inv.true_positives);
  }
}

TEST(Metrics, HandEvaluation) {
  const ConfusionCounts c = counts(3, 1, 1);
  EXPECT_DOUBLE_EQ(precision(c), 0.75);
  EXPECT_DOUBLE_EQ(recall(c), 0.75);
  EXPECT_DOUBLE_EQ(f1(c), 0.75);
}

TEST(Metrics, PerfectDetection) {
  const ConfusionCounts c = counts(12, 0, 0, 40);
  EXPECT_EQ(precision(c), 1.0);
  EXPECT_EQ(recall(c), 1.0);
  EXPECT_EQ(f1(c), 1.0);
}

TEST(Metrics, ZeroDenominatorsGiveZero) {
  const ConfusionCounts c = counts(0, 0, 0, 100);
  EXPECT_EQ(precision(c), 0.0);
  EXPECT_EQ(recall(c), 0.0);
  EXPECT_EQ(f1(c), 0.0);
}

TEST(Metrics, F1IsBoundedByPrecisionAndRecall) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> k(0, 50);
  for (int trial = 0; trial < 1000; ++trial) {
    const ConfusionCounts c = counts(k(rng), k(rng), k(rng), k(rng));
    const double p = precision(c), r = recall(c), f = f1(c);
    if (p + r > 0.0) {
      ASSERT_LE(std::min(p, r), f + 1e-15);
      ASSERT_LE(f, std::max(p, r) + 1e-15);
      ASSERT_NEAR(f, 2.0 * p * r / (p + r), 1e-15);
    } else {
      ASSERT_EQ(f, 0.0);
    }
  }
}

TEST(EpisodesHit, ToleranceExtendsEpisodeBounds) {
  const AnomalyMask m = AnomalyMask::from_episodes(40, {{5, 10}, {20, 25}, {32, 36}});
  std::vector<bool> f(40, false);
  f[7] = true;
  f[26] = true;
  EXPECT_EQ(episodes_hit(f, m, 0), (std::vector<bool>{true, false, false}));
  EXPECT_EQ(episodes_hit(f, m, 2), (std::vector<bool>{true, true, false}));
}

TEST(ReferenceTable, PublishedRows) {
  ASSERT_EQ(reference_table().size(), 8u);
  const auto* clstm = find_reference("CLSTM", true);
  ASSERT_NE(clstm, nullptr);
  EXPECT_DOUBLE_EQ(clstm->recall, 97.50);
  EXPECT_DOUBLE_EQ(clstm->precision, 96.30);
  EXPECT_DOUBLE_EQ(clstm->f1, 96.89);
  EXPECT_DOUBLE_EQ(find_reference("LSTM", false)->f1, 78.79);
  EXPECT_DOUBLE_EQ(find_reference("BiLSTM", true)->precision, 98.75);
  EXPECT_DOUBLE_EQ(find_reference("CNN", false)->recall, 86.67);
  EXPECT_DOUBLE_EQ(find_reference("CNN", false)->precision, 94.20);
  EXPECT_EQ(find_reference("GRU", true), nullptr);
}

TEST(ReferenceTable, RowsAreSelfConsistent) {
  for (const auto& r : reference_table()) {
    const double f = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    EXPECT_NEAR(f, r.f1, 0.02) << r.model;
  }
}

TEST(EvalReport, JsonRoundTripAndConsistency) {
  const EvalReport r = EvalReport::from_counts("CLSTM", true, counts(40, 3, 2, 900),
                                               {{"tolerance", 5}});
  const auto j = r.to_json();
  EXPECT_EQ(j.at("metric_policy"), kZeroDenominatorPolicy);
  const EvalReport back = EvalReport::from_json(j);
  EXPECT_EQ(back.counts, r.counts);
  EXPECT_EQ(back.f1, r.f1);

  auto tampered = j;
  tampered["f1"] = 12.0;
  EXPECT_THROW(EvalReport::from_json(tampered), IntegrityError);
}

TEST(EvalReport, TableRow) {
  const EvalReport r = EvalReport::from_counts("LSTM", false, counts(3, 1, 1), {});
  EXPECT_EQ(table_row_csv(r), "LSTM,no,75,75,75\n");
  EXPECT_STREQ(kTableCsvHeader, "model,noise_filtration,recall,precision,f1");
}
