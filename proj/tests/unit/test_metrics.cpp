#include <gtest/gtest.h>

#include <random>

#include "semauto/metrics.hpp"

using namespace semauto;

namespace {

// Independent exact oracle: enumerate every subset of the pooled sample by
// bitmask, rank with a quadratic midrank count.
double exact_p_by_bitmask(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t n = pooled.size(), na = a.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (double v : pooled) {
      less += v < pooled[i];
      equal += v == pooled[i];
    }
    rank[i] = less + (equal + 1) / 2.0;
  }
  double observed = 0;
  for (std::size_t i = 0; i < na; ++i) observed += rank[i];
  const double center = na * (n + 1) / 2.0;
  int extreme = 0, total = 0;
  for (unsigned m = 0; m < (1u << n); ++m) {
    if (static_cast<std::size_t>(__builtin_popcount(m)) != na) continue;
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (m >> i & 1) s += rank[i];
    ++total;
    extreme += std::abs(s - center) >= std::abs(observed - center) - 1e-9;
  }
  return double(extreme) / total;
}

std::vector<RatingTriplet> triplets(UserId u, std::vector<double> r, std::vector<double> re, std::vector<double> rt = {}) {
  std::vector<RatingTriplet> out;
  for (std::size_t i = 0; i < r.size(); ++i) {
    RatingTriplet t{u, static_cast<ItemId>(i + 1), r[i], re[i], std::nullopt};
    if (!rt.empty()) t.r_t = rt[i];
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST(Persuasiveness, Examples) {
  EXPECT_DOUBLE_EQ(persuasiveness(triplets(1, {3, 4}, {3, 4}), 2), 0.0);
  EXPECT_DOUBLE_EQ(persuasiveness(triplets(1, {3, 4}, {4, 4}), 2), 0.5);
  auto two = triplets(1, {3, 3}, {4, 4});
  auto down = triplets(2, {3, 3}, {2, 2});
  two.insert(two.end(), down.begin(), down.end());
  EXPECT_DOUBLE_EQ(persuasiveness(two, 2), 0.0);
}

TEST(Persuasiveness, TranslationShiftsByConstantAndOrderIndependent) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> star(1, 5);
  std::vector<RatingTriplet> recs;
  for (UserId u = 1; u <= 30; ++u)
    for (ItemId i = 1; i <= 2; ++i) recs.push_back({u, i, double(star(rng)), double(star(rng)), double(star(rng))});
  const double base = persuasiveness(recs, 2);
  auto shifted = recs;
  for (auto& t : shifted) *t.r_e += 0.75;
  EXPECT_NEAR(persuasiveness(shifted, 2), base + 0.75, 1e-12);
  auto shuffled = recs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_DOUBLE_EQ(persuasiveness(shuffled, 2), base);
  EXPECT_DOUBLE_EQ(effectiveness(shuffled, 2), effectiveness(recs, 2));
}

TEST(Persuasiveness, MissingRatingNamesUserAndItem) {
  std::vector<RatingTriplet> recs{{7, 42, 3, std::nullopt, std::nullopt}};
  try {
    persuasiveness(recs, 1);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("user 7, item 42"), std::string::npos);
  }
}

TEST(Persuasiveness, WrongCountPerUserRejected) {
  EXPECT_THROW(persuasiveness(triplets(1, {3}, {4}), 2), ContractError);
  EXPECT_THROW(persuasiveness(triplets(1, {3}, {4}), 0), ContractError);
}

TEST(Effectiveness, ExamplesAndSymmetry) {
  EXPECT_DOUBLE_EQ(effectiveness(triplets(1, {3, 3}, {4, 4}, {3, 5}), 2), 1.0);
  EXPECT_DOUBLE_EQ(effectiveness(triplets(1, {3, 3}, {3, 5}, {4, 4}), 2), 1.0);
  EXPECT_DOUBLE_EQ(effectiveness(triplets(1, {1, 2}, {4, 2}, {4, 2}), 2), 0.0);
  EXPECT_THROW(effectiveness(triplets(1, {3}, {4}), 1), ContractError);
}

TEST(Effectiveness, NonNegativeZeroIffEqual) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> star(1, 5);
  for (int t = 0; t < 500; ++t) {
    auto recs = triplets(1, {3, 3}, {double(star(rng)), double(star(rng))}, {double(star(rng)), double(star(rng))});
    const double e = effectiveness(recs, 2);
    EXPECT_GE(e, 0.0);
    EXPECT_EQ(e == 0.0, *recs[0].r_e == *recs[0].r_t && *recs[1].r_e == *recs[1].r_t);
  }
}

TEST(Questionnaire, Examples) {
  using S = Satisfaction;
  std::vector<QuestionnaireAnswer> all{{1, true, true, S::really_captures}, {2, true, true, S::really_captures}};
  auto q = questionnaire_metrics(all);
  EXPECT_DOUBLE_EQ(q.transparency, 1.0);
  EXPECT_DOUBLE_EQ(q.trust, 1.0);
  EXPECT_DOUBLE_EQ(q.satisfaction, 2.0);
  std::vector<QuestionnaireAnswer> four{{1, false, true, S::really_captures},
                                        {2, false, true, S::partially_captures},
                                        {3, false, true, S::does_not_capture},
                                        {4, false, false, S::partially_captures}};
  q = questionnaire_metrics(four);
  EXPECT_DOUBLE_EQ(q.trust, 0.75);
  EXPECT_DOUBLE_EQ(q.transparency, 0.0);
  EXPECT_DOUBLE_EQ(q.satisfaction, 1.0);
  EXPECT_THROW(questionnaire_metrics({}), ContractError);
  EXPECT_EQ(parse_satisfaction("partially"), S::partially_captures);
  EXPECT_THROW(parse_satisfaction("meh"), ConfigError);
}

TEST(RankSum, IdenticalSamples) {
  std::vector<double> a{1, 2, 3};
  auto r = wilcoxon_ranksum(a, a);
  EXPECT_TRUE(r.exact);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
}

TEST(RankSum, SeparatedSamplesExact) {
  std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  auto r = wilcoxon_ranksum(a, b);
  EXPECT_TRUE(r.exact);
  EXPECT_DOUBLE_EQ(r.p_value, 0.1);
  EXPECT_DOUBLE_EQ(r.u, 0.0);
  EXPECT_DOUBLE_EQ(r.rank_sum, 6.0);
  EXPECT_DOUBLE_EQ(wilcoxon_ranksum(b, a).p_value, 0.1);
}

TEST(RankSum, ExactMatchesBitmaskOracleWithTies) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> v(0, 4);
  for (int t = 0; t < 300; ++t) {
    const std::size_t na = 1 + rng() % 6, nb = 1 + rng() % 6;
    std::vector<double> a(na), b(nb);
    for (auto& x : a) x = v(rng);
    for (auto& x : b) x = v(rng);
    const auto r = wilcoxon_exact(a, b);
    EXPECT_NEAR(r.p_value, exact_p_by_bitmask(a, b), 1e-12);
    EXPECT_NEAR(wilcoxon_exact(b, a).p_value, r.p_value, 1e-12);
    EXPECT_GT(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
  }
}

TEST(RankSum, NormalApproximationCloseToExactAtTwelve) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 300; ++t) {
    std::vector<double> a(6), b(6);
    const double shift = 0.3 * (t % 8);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng) + shift;
    const auto approx = wilcoxon_normal(a, b);
    EXPECT_FALSE(approx.exact);
    worst = std::max(worst, std::abs(approx.p_value - exact_p_by_bitmask(a, b)));
  }
  EXPECT_LE(worst, 0.02);
}

TEST(RankSum, PathSelectionAndErrors) {
  std::vector<double> six{1, 2, 3, 4, 5, 6}, seven{1, 2, 3, 4, 5, 6, 7};
  EXPECT_TRUE(wilcoxon_ranksum(six, six).exact);
  EXPECT_FALSE(wilcoxon_ranksum(six, seven).exact);
  EXPECT_THROW(wilcoxon_ranksum({}, six), ContractError);
  std::vector<double> bad{std::nan("")};
  EXPECT_THROW(wilcoxon_ranksum(bad, six), ContractError);
}

TEST(RankSum, LargeSeparatedSamplesTinyP) {
  std::vector<double> a, b;
  for (int i = 0; i < 73; ++i) {
    a.push_back(i % 3);
    b.push_back(2 + i % 3);
  }
  auto r = wilcoxon_ranksum(a, b);
  EXPECT_LT(r.p_value, 1e-6);
  EXPECT_GT(r.p_value, 0.0);
}

TEST(SampleSize, Gate) {
  EXPECT_TRUE(sample_size_gate(73).passed);
  EXPECT_FALSE(sample_size_gate(72).passed);
  EXPECT_FALSE(sample_size_gate(0).passed);
  // 892 subjects over 12 arms, none below the minimum
  std::vector<std::size_t> arms(12, 74);
  arms[0] = 78;
  std::size_t total = 0;
  for (auto n : arms) {
    total += n;
    EXPECT_TRUE(sample_size_gate(n).passed);
  }
  EXPECT_EQ(total, 892u);
}
