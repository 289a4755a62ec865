#pragma once

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <vector>

#include "semauto/autoencoder.hpp"
#include "semauto/data.hpp"

namespace semauto {

struct ProfileEntry {
  std::size_t column = 0;  // feature column in the FeatureSpace
  double weight = 0.0;
};

// Knowledge-labeled user profile: one entry per feature, sorted by descending
// weight with ties broken by column (columns are already in feature-key order).
struct UserProfile {
  UserId user = 0;
  std::vector<ProfileEntry> entries;

  // Weight per column, or -1 when absent.
  std::vector<double> weights_by_column(std::size_t columns) const {
    std::vector<double> out(columns, -1.0);
    for (const auto& e : entries) out.at(e.column) = e.weight;
    return out;
  }
};

inline void sort_profile(std::vector<ProfileEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const ProfileEntry& a, const ProfileEntry& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.column < b.column;
  });
}

// Profile weights are the hidden activations of the trained network on the
// user's own rating vector.
inline UserProfile extract_profile(UserId user, const UserAutoencoder& ae, const RatingVector& x) {
  if (!ae.trained()) throw ContractError("extract_profile: autoencoder is not trained");
  const auto act = forward(ae, x);
  UserProfile p{user, {}};
  p.entries.reserve(act.hidden.size());
  for (std::size_t j = 0; j < act.hidden.size(); ++j) p.entries.push_back({j, act.hidden[j]});
  sort_profile(p.entries);
  return p;
}

struct Recommendation {
  ItemId item = 0;
  std::size_t row = 0;
  double score = 0.0;
};

struct RecommendationList {
  UserId user = 0;
  std::vector<Recommendation> items;
  std::size_t requested = 0;
  // Fewer than `requested` unrated items existed.
  bool short_list = false;
};

// Top-n unrated items by reconstructed score; ties broken by item id. Items
// without features always score sigmoid(0) and cannot be explained, so they are
// left out unless `include_featureless` is set.
inline RecommendationList recommend(UserId user, const UserAutoencoder& ae, const RatingVector& x, const Catalog& catalog,
                                    std::size_t n, bool include_featureless = false) {
  if (!ae.trained()) throw ContractError("recommend: autoencoder is not trained");
  if (n == 0) throw ContractError("recommend: N must be positive");
  if (catalog.size() != ae.items()) throw ContractError("recommend: catalog does not match model");
  const auto act = forward(ae, x);
  std::vector<Recommendation> candidates;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (x.is_rated(i)) continue;
    if (!include_featureless) {
      auto [b, e] = ae.mask().row_range(i);
      if (b == e) continue;
    }
    candidates.push_back({catalog[i].id, i, act.output[i]});
  }
  auto better = [](const Recommendation& a, const Recommendation& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  };
  RecommendationList out{user, {}, n, candidates.size() < n};
  const auto keep = std::min(n, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(), better);
  candidates.resize(keep);
  out.items = std::move(candidates);
  return out;
}

// `rank<TAB>predicate<TAB>featureIRI<TAB>weight`, rank starting at 1.
inline void write_profile(std::ostream& out, const UserProfile& profile, const FeatureSpace& space) {
  out << "rank\tpredicate\tfeatureIRI\tweight\n" << std::setprecision(17);
  std::size_t rank = 1;
  for (const auto& e : profile.entries)
    out << rank++ << '\t' << space[e.column].predicate << '\t' << space[e.column].entity << '\t' << e.weight << '\n';
}

// `rank<TAB>itemId<TAB>score`
inline void write_recommendations(std::ostream& out, const RecommendationList& list) {
  out << "rank\titemId\tscore\n" << std::setprecision(17);
  std::size_t rank = 1;
  for (const auto& r : list.items) out << rank++ << '\t' << r.item << '\t' << r.score << '\n';
}

}  // namespace semauto
