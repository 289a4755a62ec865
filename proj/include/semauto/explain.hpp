#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "semauto/data.hpp"
#include "semauto/profile.hpp"
#include "semauto/random.hpp"

namespace semauto {

enum class Style { popularity, non_personalized, pointwise, pairwise };

inline constexpr std::array<Style, 4> kAllStyles{Style::popularity, Style::non_personalized, Style::pointwise,
                                                 Style::pairwise};
inline constexpr std::size_t kDefaultK = 5;

inline std::string_view to_string(Style s) {
  switch (s) {
    case Style::popularity: return "popularity";
    case Style::non_personalized: return "non_personalized";
    case Style::pointwise: return "pointwise";
    case Style::pairwise: return "pairwise";
  }
  return "?";
}

inline Style parse_style(std::string_view s) {
  for (auto style : kAllStyles)
    if (to_string(style) == s) return style;
  throw ConfigError("unknown explanation style '" + std::string(s) +
                    "' (valid: popularity, non_personalized, pointwise, pairwise)");
}

inline bool is_personalized(Style s) { return s == Style::pointwise || s == Style::pairwise; }

// Ordered feature columns. `flagged` marks a degenerate selection (nothing to
// explain with).
struct Selection {
  std::vector<std::size_t> columns;
  bool flagged = false;
};

// Feature columns describing one catalog row (the row support of the mask).
inline std::vector<std::size_t> item_features(const MaskMatrix& mask, std::size_t row) {
  if (row >= mask.rows()) throw ContractError("item_features: row out of range");
  return mask.row_support(row);
}

inline std::vector<std::size_t> item_features(const Catalog& catalog, const MaskMatrix& mask, ItemId item) {
  return item_features(mask, catalog.require_row(item));
}

namespace detail {

inline Selection top_k_excluding(const UserProfile& profile, std::span<const std::size_t> features, std::size_t k,
                                 const std::unordered_set<std::size_t>& excluded) {
  std::unordered_set<std::size_t> wanted(features.begin(), features.end());
  Selection out;
  for (const auto& e : profile.entries) {
    if (out.columns.size() == k) break;
    if (wanted.contains(e.column) && !excluded.contains(e.column)) out.columns.push_back(e.column);
  }
  out.flagged = out.columns.empty();
  return out;
}

}  // namespace detail

// Pointwise explanation: the k highest-weighted profile features that also
// describe the item, in profile order.
inline Selection pointwise(const UserProfile& profile, std::span<const std::size_t> item_features, std::size_t k) {
  if (k == 0) throw ContractError("pointwise: k must be positive");
  return detail::top_k_excluding(profile, item_features, k, {});
}

struct PairSelection {
  Selection first;   // higher-ranked item i
  Selection second;  // item j
};

// Pairwise explanation for i ranked above j. Features shared with i's list stay
// with i; j's list is refilled from its next-ranked features until it holds k
// features disjoint from i's list or j's features run out.
inline PairSelection pairwise(const UserProfile& profile, std::span<const std::size_t> features_i,
                              std::span<const std::size_t> features_j, std::size_t k, double score_i, double score_j) {
  if (k == 0) throw ContractError("pairwise: k must be positive");
  if (!(score_i > score_j)) throw ContractError("pairwise: first item must be ranked strictly above the second");
  PairSelection out;
  out.first = detail::top_k_excluding(profile, features_i, k, {});
  std::unordered_set<std::size_t> taken(out.first.columns.begin(), out.first.columns.end());
  out.second = detail::top_k_excluding(profile, features_j, k, taken);
  return out;
}

// Uniform sample without replacement of min(k, |F_i u F_j|) features, returned
// in column order. Reproducible from `seed`.
inline Selection non_personalized(std::span<const std::size_t> features_i, std::span<const std::size_t> features_j,
                                  std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ContractError("non_personalized: k must be positive");
  std::vector<std::size_t> pool(features_i.begin(), features_i.end());
  pool.insert(pool.end(), features_j.begin(), features_j.end());
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

  std::mt19937_64 rng(seed);
  const bool empty = pool.empty();
  pool = sample_without_replacement(std::move(pool), k, rng);
  std::sort(pool.begin(), pool.end());
  return {std::move(pool), empty};
}

// ---------------------------------------------------------------------------
// Bundles and rendering
// ---------------------------------------------------------------------------

struct ExplainedFeature {
  std::size_t column = 0;
  std::string predicate;
  std::string entity;
  std::string label;
  std::optional<double> weight;  // profile weight, absent for non-personalized picks without a profile

  std::string display() const { return "(" + std::string(local_name(predicate)) + ") " + label; }
};

struct ExplanationBundle {
  Style style = Style::popularity;
  std::size_t k = kDefaultK;
  ItemId item_i = 0;
  std::optional<ItemId> item_j;
  std::vector<ExplainedFeature> features_i;
  std::vector<ExplainedFeature> features_j;
  bool flagged = false;
  std::string rendered;
};

inline constexpr std::string_view kPopularitySentence =
    "We suggest these items since they are very popular among people who like the same movies as you.";

inline std::vector<ExplainedFeature> describe(const Selection& sel, const FeatureSpace& space, const UserProfile* profile) {
  std::vector<double> weights;
  if (profile) weights = profile->weights_by_column(space.size());
  std::vector<ExplainedFeature> out;
  out.reserve(sel.columns.size());
  for (auto col : sel.columns) {
    const auto& f = space[col];
    ExplainedFeature ef{col, f.predicate, f.entity, f.label, std::nullopt};
    if (profile && weights[col] >= 0.0) ef.weight = weights[col];
    out.push_back(std::move(ef));
  }
  return out;
}

// Title lookup used by render; throws when the catalog lacks the item.
inline const std::string& title_of(const Catalog& catalog, ItemId item) {
  auto row = catalog.row_of(item);
  if (!row || catalog[*row].title.empty()) throw Error("render: missing title for item " + std::to_string(item));
  return catalog[*row].title;
}

// Pure function of the bundle and the titles.
inline std::string render(const ExplanationBundle& b, const Catalog& titles) {
  if (b.style == Style::popularity) return std::string(kPopularitySentence);
  if (!b.item_j) throw ContractError("render: personalized templates need two items");
  const auto& ti = title_of(titles, b.item_i);
  const auto& tj = title_of(titles, *b.item_j);

  auto list = [](std::string& out, const std::vector<ExplainedFeature>& fs) {
    for (const auto& f : fs) out += "\n- " + f.display();
  };
  std::string out = "We guess you would like to watch " + ti;
  switch (b.style) {
    case Style::pairwise:
      out += " more than " + tj + " because you may prefer:";
      list(out, b.features_i);
      out += "\nover:";
      list(out, b.features_j);
      break;
    case Style::pointwise:
      out += " and " + tj + " since they are about:";
      list(out, b.features_i);
      out += "\nand:";
      list(out, b.features_j);
      break;
    case Style::non_personalized:
      out += " and " + tj + " since they are about:";
      list(out, b.features_i);
      break;
    case Style::popularity: break;
  }
  return out;
}

struct ExplainRequest {
  Style style = Style::pairwise;
  std::size_t k = kDefaultK;
  std::uint64_t seed = 0;  // non-personalized sampling
};

// Explains the top-2 entries of a recommendation list in the requested style
// and renders the text. `profile` may be null only for the popularity and
// non-personalized styles.
inline ExplanationBundle explain_top2(const ExplainRequest& req, const RecommendationList& recs, const UserProfile* profile,
                                      const Catalog& catalog, const MaskMatrix& mask, const FeatureSpace& space) {
  if (recs.items.size() < 2) throw ContractError("explain: need at least two recommended items");
  if (req.k == 0) throw ContractError("explain: k must be positive");
  const auto& a = recs.items[0];
  const auto& b = recs.items[1];
  ExplanationBundle bundle;
  bundle.style = req.style;
  bundle.k = req.k;
  bundle.item_i = a.item;
  bundle.item_j = b.item;

  const auto fi = item_features(mask, a.row);
  const auto fj = item_features(mask, b.row);
  switch (req.style) {
    case Style::popularity: break;
    case Style::non_personalized: {
      auto sel = non_personalized(fi, fj, req.k, req.seed);
      bundle.features_i = describe(sel, space, profile);
      bundle.flagged = sel.flagged;
      break;
    }
    case Style::pointwise: {
      if (!profile) throw ContractError("explain: pointwise style needs a profile");
      auto si = pointwise(*profile, fi, req.k);
      auto sj = pointwise(*profile, fj, req.k);
      bundle.features_i = describe(si, space, profile);
      bundle.features_j = describe(sj, space, profile);
      bundle.flagged = si.flagged || sj.flagged;
      break;
    }
    case Style::pairwise: {
      if (!profile) throw ContractError("explain: pairwise style needs a profile");
      // Equal scores are ordered by item id in the list; the list order decides.
      const double si = a.score == b.score ? std::nextafter(a.score, 2.0) : a.score;
      auto pair = pairwise(*profile, fi, fj, req.k, si, b.score);
      bundle.features_i = describe(pair.first, space, profile);
      bundle.features_j = describe(pair.second, space, profile);
      bundle.flagged = pair.first.flagged || pair.second.flagged;
      break;
    }
  }
  bundle.rendered = render(bundle, catalog);
  return bundle;
}

}  // namespace semauto
