#include "idfprobe/stats.h"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "idfprobe/rng.h"

namespace idfprobe {
namespace {

std::vector<std::string> QueryIds(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("q" + std::to_string(i));
  return ids;
}

TEST(PearsonTest, SelfAndNegation) {
  const std::vector<double> x = {0.3, 1.7, 2.2, 9.0, -4.1};
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  EXPECT_EQ(Pearson(x, x).value(), 1.0);
  EXPECT_EQ(Pearson(x, neg).value(), -1.0);
}

TEST(PearsonTest, HandComputedCase) {
  // Centered: dx = (-2,-1,0,1,2), dy = (-2,0,-1,2,1); 8 / sqrt(10 * 10).
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const std::vector<double> y = {1, 3, 2, 5, 4};
  EXPECT_NEAR(Pearson(x, y).value(), 0.8, 1e-12);
}

TEST(PearsonTest, AffineInvariance) {
  SplitMix64 rng(11);
  std::vector<double> x(50), y(50);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.Gaussian();
    y[i] = 0.5 * x[i] + rng.Gaussian();
  }
  const double r = Pearson(x, y).value();
  std::vector<double> ax, ay;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ax.push_back(3.5 * x[i] - 12.0);
    ay.push_back(0.25 * y[i] + 40.0);
  }
  EXPECT_NEAR(Pearson(ax, ay).value(), r, 1e-12);
  std::vector<double> flipped;
  for (double v : y) flipped.push_back(-2.0 * v + 1.0);
  EXPECT_NEAR(Pearson(x, flipped).value(), -r, 1e-12);
}

TEST(PearsonTest, LargeOffsetsKeepPrecision) {
  const std::vector<double> x = {1e9 + 1, 1e9 + 2, 1e9 + 3, 1e9 + 4, 1e9 + 5};
  const std::vector<double> y = {1, 3, 2, 5, 4};
  EXPECT_NEAR(Pearson(x, y).value(), 0.8, 1e-12);
}

TEST(PearsonTest, UndefinedCases) {
  const std::vector<double> one = {1.0};
  EXPECT_FALSE(Pearson(one, one).defined());
  EXPECT_EQ(Pearson(one, one).reason(), SkipReason::kTooShort);
  const std::vector<double> empty;
  EXPECT_EQ(Pearson(empty, empty).reason(), SkipReason::kTooShort);
  const std::vector<double> flat = {2.0, 2.0, 2.0};
  const std::vector<double> y = {1.0, 2.0, 3.0};
  EXPECT_EQ(Pearson(flat, y).reason(), SkipReason::kZeroVariance);
  EXPECT_EQ(Pearson(y, flat).reason(), SkipReason::kZeroVariance);
  EXPECT_THROW(Pearson(flat, y).value(), std::logic_error);
}

TEST(PearsonTest, LengthMismatchThrows) {
  const std::vector<double> a = {1, 2, 3};
  const std::vector<double> b = {1, 2};
  EXPECT_THROW(Pearson(a, b), std::invalid_argument);
}

TEST(PearsonTest, StaysWithinUnitInterval) {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(3), y(3);
    for (int i = 0; i < 3; ++i) {
      x[i] = rng.Uniform();
      y[i] = 7.0 * x[i] + 1e-13 * rng.Uniform();
    }
    const Correlation c = Pearson(x, y);
    if (!c.defined()) continue;
    EXPECT_LE(c.value(), 1.0);
    EXPECT_GE(c.value(), -1.0);
  }
}

TEST(SummarizeTest, MeanAndPopulationStd) {
  const std::vector<QueryCorrelation> v = {
      {"a", Correlation::Of(0.5)},
      {"b", Correlation::Of(1.0)},
      {"c", Correlation::Undefined(SkipReason::kZeroVariance)},
      {"d", Correlation::Undefined(SkipReason::kTooShort)},
      {"e", Correlation::Undefined(SkipReason::kTooShort)}};
  const CorrelationSummary s = Summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 0.75);
  EXPECT_DOUBLE_EQ(s.std, 0.25);
  EXPECT_EQ(s.count, 2u);
  EXPECT_EQ(s.skipped, 3u);
  EXPECT_EQ(s.skipped_zero_variance, 1u);
  EXPECT_EQ(s.skipped_too_short, 2u);
}

TEST(SummarizeTest, IdenticalValuesHaveZeroSpread) {
  std::vector<QueryCorrelation> v;
  for (int i = 0; i < 1000; ++i) v.push_back({"q", Correlation::Of(0.1)});
  const CorrelationSummary s = Summarize(v);
  EXPECT_EQ(s.mean, 0.1);
  EXPECT_EQ(s.std, 0.0);
}

TEST(SummarizeTest, NothingDefined) {
  const std::vector<QueryCorrelation> v = {
      {"a", Correlation::Undefined(SkipReason::kTooShort)}};
  const CorrelationSummary s = Summarize(v);
  EXPECT_TRUE(std::isnan(s.mean));
  EXPECT_TRUE(std::isnan(s.std));
  EXPECT_EQ(s.count, 0u);
  EXPECT_TRUE(std::isnan(Summarize({}).mean));
}

TEST(SplitFractionsTest, Parse) {
  const SplitFractions f = SplitFractions::Parse("0.7,0.2,0.1");
  EXPECT_DOUBLE_EQ(f.train, 0.7);
  EXPECT_DOUBLE_EQ(f.valid, 0.2);
  EXPECT_DOUBLE_EQ(f.test, 0.1);
  EXPECT_THROW(SplitFractions::Parse("0.8,0.1"), std::invalid_argument);
  EXPECT_THROW(SplitFractions::Parse("0.8,0.1,0.2"), std::invalid_argument);
  EXPECT_THROW(SplitFractions::Parse("1,0,0"), std::invalid_argument);
  EXPECT_THROW(SplitFractions::Parse("a,b,c"), std::invalid_argument);
}

TEST(SplitTest, TenQueriesSplitEightOneOne) {
  const SplitAssignment s = SplitQueries(QueryIds(10), 42, {});
  EXPECT_EQ(s.CountOf(Split::kTrain), 8u);
  EXPECT_EQ(s.CountOf(Split::kValid), 1u);
  EXPECT_EQ(s.CountOf(Split::kTest), 1u);
  EXPECT_EQ(s.unit(), SplitUnit::kQuery);
}

TEST(SplitTest, DeterministicAndIndependentOfInputOrder) {
  auto ids = QueryIds(100);
  const SplitAssignment a = SplitQueries(ids, 7, {});
  std::reverse(ids.begin(), ids.end());
  ids.push_back("q3");
  const SplitAssignment b = SplitQueries(ids, 7, {});
  EXPECT_EQ(a.assignment(), b.assignment());
  EXPECT_EQ(a.Fingerprint(), b.Fingerprint());
  EXPECT_NE(a.Fingerprint(), SplitQueries(QueryIds(100), 8, {}).Fingerprint());
}

TEST(SplitTest, PinnedFingerprints) {
  EXPECT_EQ(SplitQueries(QueryIds(100), 7, {}).Fingerprint(), "dab75e2a410662d526d0c046b78930ed191f12d056167ca97c3c616369c6b009");
  EXPECT_EQ(SplitQueries(QueryIds(100), 8, {}).Fingerprint(), "1177e080294c2fd0d802d27ba8c71679a49f92452f7b00601e2228bcb6f3ef55");
}

TEST(SplitTest, PartitionsAreDisjointAndComplete) {
  const SplitAssignment s = SplitQueries(QueryIds(37), 3, SplitFractions{0.6, 0.2, 0.2});
  EXPECT_EQ(s.assignment().size(), 37u);
  EXPECT_EQ(s.CountOf(Split::kTrain) + s.CountOf(Split::kValid) + s.CountOf(Split::kTest),
            37u);
  EXPECT_EQ(s.CountOf(Split::kTrain), 22u);  // round(22.2)
  EXPECT_EQ(s.CountOf(Split::kValid), 8u);   // round(29.6) - 22
  EXPECT_EQ(s.CountOf(Split::kTest), 7u);
  for (const auto& [id, which] : s.assignment()) {
    EXPECT_TRUE(s.MayInclude(id, which));
    EXPECT_TRUE(s.Includes(id, 0, which));
    for (Split other : {Split::kTrain, Split::kValid, Split::kTest}) {
      if (other != which) {
        EXPECT_FALSE(s.Includes(id, 0, other));
      }
    }
  }
  EXPECT_FALSE(s.MayInclude("unknown", Split::kTrain));
  EXPECT_THROW(SplitQueries({}, 1, {}), std::invalid_argument);
}

TEST(SplitTest, TokenUnitAssignsPositionsByTokenId) {
  std::vector<TokenId> tokens;
  for (TokenId t = 1000; t < 1050; ++t) tokens.push_back(t);
  tokens.push_back(1000);
  const SplitAssignment s = SplitTokens(tokens, 42, {});
  EXPECT_EQ(s.unit(), SplitUnit::kToken);
  EXPECT_EQ(s.assignment().size(), 50u);
  EXPECT_EQ(s.CountOf(Split::kTrain), 40u);
  std::set<Split> seen;
  for (TokenId t = 1000; t < 1050; ++t) {
    const Split which = *s.Of(std::to_string(t));
    seen.insert(which);
    EXPECT_TRUE(s.Includes("any-query", t, which));
    EXPECT_TRUE(s.MayInclude("any-query", which));
  }
  EXPECT_EQ(seen.size(), 3u);
}

}  // namespace
}  // namespace idfprobe
