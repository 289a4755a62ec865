#include <gtest/gtest.h>

#include <sstream>

#include "semauto/profile.hpp"
#include "support/oracles.hpp"

using namespace semauto;

namespace {

std::shared_ptr<const MaskMatrix> share(MaskMatrix m) { return std::make_shared<const MaskMatrix>(std::move(m)); }

Catalog numbered(std::size_t m, ItemId first = 100) {
  std::vector<CatalogItem> v;
  for (std::size_t i = 0; i < m; ++i) v.push_back({first + static_cast<ItemId>(i), "dbr:m" + std::to_string(i), "M" + std::to_string(i), {}});
  return Catalog(v);
}

UserAutoencoder trained(std::shared_ptr<const MaskMatrix> mask, const RatingVector& x, std::uint64_t seed = 1) {
  TrainConfig c;
  c.seed = seed;
  auto ae = init(std::move(mask), c);
  train(ae, x);
  return ae;
}

}  // namespace

TEST(Profile, UntrainedModelRejected) {
  auto ae = init(share(MaskMatrix::from_dense({{1}})), TrainConfig{});
  EXPECT_THROW(extract_profile(1, ae, RatingVector(1)), ContractError);
}

TEST(Profile, AllZeroRatingsGiveHalfInKeyOrder) {
  std::mt19937_64 rng(2);
  auto ae = trained(share(oracle::random_mask(rng, 5, 6, 0.5)), RatingVector(5));
  auto p = extract_profile(7, ae, RatingVector(5));
  ASSERT_EQ(p.entries.size(), 6u);
  for (std::size_t j = 0; j < 6; ++j) {
    EXPECT_EQ(p.entries[j].column, j);
    EXPECT_DOUBLE_EQ(p.entries[j].weight, 0.5);
  }
}

TEST(Profile, HandComputedWeights) {
  auto ae = init(share(MaskMatrix::from_dense({{1, 1, 0}, {0, 1, 1}})), TrainConfig{});
  for (auto& w : ae.w1()) w = 0.5;
  ae.mark_trained(0.0, {});
  RatingVector x(2);
  x.set_stars(0, 5.0);
  auto p = extract_profile(1, ae, x);
  const auto w = p.weights_by_column(3);
  EXPECT_NEAR(w[0], 0.62246, 5e-6);
  EXPECT_NEAR(w[1], 0.62246, 5e-6);
  EXPECT_DOUBLE_EQ(w[2], 0.5);
  // ties resolved by column
  EXPECT_EQ(p.entries[0].column, 0u);
  EXPECT_EQ(p.entries[1].column, 1u);
  EXPECT_EQ(p.entries[2].column, 2u);
}

// Two disconnected components of three items each: feature 0 only reaches
// highly rated items, feature 1 only low-rated ones. The ordering is a
// tendency of training, not a per-seed guarantee, so it is asserted as a
// clear majority over seeds.
TEST(Profile, LikedFeatureOutranksDislikedOnDisconnectedFixture) {
  auto mask = share(MaskMatrix::from_dense({{1, 0}, {1, 0}, {1, 0}, {0, 1}, {0, 1}, {0, 1}}));
  RatingVector x(6);
  for (std::size_t i = 0; i < 3; ++i) x.set_stars(i, 5.0);
  for (std::size_t i = 3; i < 6; ++i) x.set_stars(i, 1.0);
  int above = 0;
  const int seeds = 200;
  for (int seed = 0; seed < seeds; ++seed) {
    auto p = extract_profile(1, trained(mask, x, seed), x);
    above += p.entries.front().column == 0;
  }
  EXPECT_GE(above, seeds * 85 / 100) << above << "/" << seeds;
}

TEST(Profile, WeightsInSigmoidRangeOnePerFeature) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 10; ++t) {
    auto mask = share(oracle::random_mask(rng, 6, 9, 0.4));
    auto x = oracle::random_ratings(rng, 6);
    auto p = extract_profile(1, trained(mask, x, rng()), x);
    ASSERT_EQ(p.entries.size(), 9u);
    std::set<std::size_t> cols;
    for (std::size_t k = 0; k < p.entries.size(); ++k) {
      cols.insert(p.entries[k].column);
      EXPECT_GT(p.entries[k].weight, 0.0);
      EXPECT_LT(p.entries[k].weight, 1.0);
      if (k) EXPECT_GE(p.entries[k - 1].weight, p.entries[k].weight);
    }
    EXPECT_EQ(cols.size(), 9u);
  }
}

TEST(Recommend, NeverReturnsRatedAndMatchesBruteForce) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    auto mask = share(oracle::random_mask(rng, 4, 5, 0.6));
    auto x = oracle::random_ratings(rng, 4);
    auto ae = trained(mask, x, rng());
    auto cat = numbered(4);
    auto recs = recommend(1, ae, x, cat, 5, /*include_featureless=*/true);
    const auto o = forward(ae, x).output;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < 4; ++i)
      if (!x.is_rated(i) && (!best || o[i] > o[*best])) best = i;
    if (!best) {
      EXPECT_TRUE(recs.items.empty());
      EXPECT_TRUE(recs.short_list);
      continue;
    }
    ASSERT_FALSE(recs.items.empty());
    EXPECT_EQ(recs.items.front().row, *best);
    for (const auto& r : recs.items) EXPECT_FALSE(x.is_rated(r.row));
    for (std::size_t k = 1; k < recs.items.size(); ++k) EXPECT_GE(recs.items[k - 1].score, recs.items[k].score);
    // a strictly increasing transform of the scores keeps the order
    std::vector<std::size_t> by_logit;
    for (std::size_t i = 0; i < 4; ++i)
      if (!x.is_rated(i)) by_logit.push_back(i);
    std::stable_sort(by_logit.begin(), by_logit.end(),
                     [&](auto a, auto b) { return std::log(o[a] / (1 - o[a])) > std::log(o[b] / (1 - o[b])); });
    for (std::size_t k = 0; k < recs.items.size(); ++k) EXPECT_EQ(recs.items[k].row, by_logit[k]);
  }
}

TEST(Recommend, ShortListFlagged) {
  auto mask = share(MaskMatrix::from_dense({{1, 0}, {1, 1}, {0, 1}}));
  RatingVector x(3);
  x.set_stars(0, 4);
  auto recs = recommend(1, trained(mask, x), x, numbered(3), 5);
  EXPECT_EQ(recs.items.size(), 2u);
  EXPECT_TRUE(recs.short_list);
  EXPECT_EQ(recs.requested, 5u);
}

TEST(Recommend, FullyRatedGivesEmptyFlaggedList) {
  auto mask = share(MaskMatrix::from_dense({{1}, {1}}));
  RatingVector x(2);
  x.set_stars(0, 4);
  x.set_stars(1, 2);
  auto recs = recommend(1, trained(mask, x), x, numbered(2), 5);
  EXPECT_TRUE(recs.items.empty());
  EXPECT_TRUE(recs.short_list);
}

TEST(Recommend, EqualScoresOrderedByItemId) {
  auto mask = share(MaskMatrix::from_dense({{1, 1}, {1, 1}, {1, 1}}));
  TrainConfig c;
  auto ae = init(mask, c);
  for (auto& w : ae.w1()) w = 0.3;
  for (auto& w : ae.w2()) w = 0.2;
  ae.mark_trained(0.0, {});
  RatingVector x(3);
  x.set_stars(0, 5);
  // rows 1 and 2 have identical mask rows and weights; ids are reversed
  std::vector<CatalogItem> v{{50, "dbr:a", "A", {}}, {30, "dbr:b", "B", {}}, {20, "dbr:c", "C", {}}};
  auto recs = recommend(1, ae, x, Catalog(v), 5);
  ASSERT_EQ(recs.items.size(), 2u);
  EXPECT_EQ(recs.items[0].score, recs.items[1].score);
  EXPECT_EQ(recs.items[0].item, 20);
  EXPECT_EQ(recs.items[1].item, 30);
}

TEST(Recommend, FeaturelessItemsLeftOutByDefault) {
  auto mask = share(MaskMatrix::from_dense({{1, 1}, {0, 0}, {1, 0}}));
  RatingVector x(3);
  x.set_stars(0, 5);
  auto ae = trained(mask, x);
  auto recs = recommend(1, ae, x, numbered(3), 5);
  ASSERT_EQ(recs.items.size(), 1u);
  EXPECT_EQ(recs.items[0].row, 2u);
  auto all = recommend(1, ae, x, numbered(3), 5, true);
  EXPECT_EQ(all.items.size(), 2u);
}

TEST(Recommend, RepeatedCallsIdentical) {
  std::mt19937_64 rng(8);
  auto mask = share(oracle::random_mask(rng, 9, 6, 0.5));
  auto x = oracle::random_ratings(rng, 9);
  auto ae = trained(mask, x);
  auto a = recommend(1, ae, x, numbered(9), 3);
  auto b = recommend(1, ae, x, numbered(9), 3);
  ASSERT_EQ(a.items.size(), b.items.size());
  for (std::size_t k = 0; k < a.items.size(); ++k) EXPECT_EQ(a.items[k].item, b.items[k].item);
  EXPECT_THROW(recommend(1, ae, x, numbered(9), 0), ContractError);
}

TEST(Export, ProfileAndRecommendationTsv) {
  FeatureSpace space({{"dbo:starring", "dbr:Will_Smith", "Will Smith"}, {"dct:subject", "dbc:Robot_films", "Robot films"}});
  UserProfile p{1, {{1, 0.75}, {0, 0.5}}};
  std::ostringstream out;
  write_profile(out, p, space);
  EXPECT_EQ(out.str(), "rank\tpredicate\tfeatureIRI\tweight\n1\tdct:subject\tdbc:Robot_films\t0.75\n2\tdbo:starring\tdbr:Will_Smith\t0.5\n");
  RecommendationList l{1, {{589, 0, 0.25}}, 5, true};
  std::ostringstream rec;
  write_recommendations(rec, l);
  EXPECT_EQ(rec.str(), "rank\titemId\tscore\n1\t589\t0.25\n");
}
