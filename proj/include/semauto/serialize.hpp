#pragma once

#include <optional>
#include <ostream>
#include <string>

#include "json.hpp"
#include "semauto/explain.hpp"
#include "semauto/metrics.hpp"
#include "semauto/profile.hpp"

namespace semauto {

using Json = nlohmann::ordered_json;

inline Json to_json(const Recommendation& r) { return Json{{"item", r.item}, {"row", r.row}, {"score", r.score}}; }

inline Recommendation recommendation_from_json(const Json& j) {
  return {j.at("item").get<ItemId>(), j.at("row").get<std::size_t>(), j.at("score").get<double>()};
}

inline Json to_json(const ExplainedFeature& f) {
  Json j{{"column", f.column}, {"predicate", f.predicate}, {"entity", f.entity}, {"label", f.label}};
  j["weight"] = f.weight ? Json(*f.weight) : Json(nullptr);
  return j;
}

inline ExplainedFeature explained_feature_from_json(const Json& j) {
  ExplainedFeature f{j.at("column").get<std::size_t>(), j.at("predicate").get<std::string>(),
                     j.at("entity").get<std::string>(), j.at("label").get<std::string>(), std::nullopt};
  if (!j.at("weight").is_null()) f.weight = j.at("weight").get<double>();
  return f;
}

// One bundle record; the explanation export writes one of these per line.
inline Json to_json(const ExplanationBundle& b) {
  Json fi = Json::array(), fj = Json::array();
  for (const auto& f : b.features_i) fi.push_back(to_json(f));
  for (const auto& f : b.features_j) fj.push_back(to_json(f));
  return Json{{"style", to_string(b.style)},
              {"k", b.k},
              {"item_i", b.item_i},
              {"item_j", b.item_j ? Json(*b.item_j) : Json(nullptr)},
              {"features_i", std::move(fi)},
              {"features_j", std::move(fj)},
              {"flagged", b.flagged},
              {"rendered", b.rendered}};
}

inline ExplanationBundle bundle_from_json(const Json& j) {
  ExplanationBundle b;
  b.style = parse_style(j.at("style").get<std::string>());
  b.k = j.at("k").get<std::size_t>();
  b.item_i = j.at("item_i").get<ItemId>();
  if (!j.at("item_j").is_null()) b.item_j = j.at("item_j").get<ItemId>();
  for (const auto& f : j.at("features_i")) b.features_i.push_back(explained_feature_from_json(f));
  for (const auto& f : j.at("features_j")) b.features_j.push_back(explained_feature_from_json(f));
  b.flagged = j.at("flagged").get<bool>();
  b.rendered = j.at("rendered").get<std::string>();
  return b;
}

inline void write_bundle_line(std::ostream& out, const ExplanationBundle& b) { out << to_json(b).dump() << '\n'; }

inline Json to_json(const QuestionnaireAnswer& a) {
  return Json{{"transparency", a.transparency}, {"trust", a.trust}, {"satisfaction", to_string(a.satisfaction)}};
}

}  // namespace semauto
