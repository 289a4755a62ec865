#pragma once

#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <utility>

namespace semauto {

namespace detail {

inline constexpr std::array<std::pair<std::string_view, std::string_view>, 6> kNamespaces{{
    {"http://dbpedia.org/resource/Category:", "dbc:"},
    {"http://dbpedia.org/resource/", "dbr:"},
    {"http://dbpedia.org/ontology/", "dbo:"},
    {"http://purl.org/dc/terms/", "dct:"},
    {"http://www.w3.org/2000/01/rdf-schema#", "rdfs:"},
    {"http://www.w3.org/1999/02/22-rdf-syntax-ns#", "rdf:"},
}};

inline int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace detail

// Rewrites well-known DBpedia namespaces to their conventional prefixes so that
// full IRIs and prefixed names compare equal. Unknown IRIs are returned unchanged.
inline std::string compact_iri(std::string_view iri) {
  for (const auto& [ns, prefix] : detail::kNamespaces) {
    if (iri.starts_with(ns)) {
      std::string out(prefix);
      out.append(iri.substr(ns.size()));
      return out;
    }
  }
  return std::string(iri);
}

// Last segment of an IRI or prefixed name: "dbo:starring" -> "starring".
inline std::string_view local_name(std::string_view iri) {
  auto pos = iri.find_last_of("/#");
  if (pos == std::string_view::npos) pos = iri.find(':');
  return pos == std::string_view::npos ? iri : iri.substr(pos + 1);
}

// Human-readable label derived from an entity IRI:
// "dbc:Cyberpunk_films" -> "Cyberpunk films", "dbr:Will_Smith" -> "Will Smith".
inline std::string iri_label(std::string_view iri) {
  const std::string compact = compact_iri(iri);
  auto name = local_name(compact);
  std::string out;
  out.reserve(name.size());
  for (std::size_t i = 0; i < name.size(); ++i) {
    char c = name[i];
    if (c == '_') {
      out.push_back(' ');
    } else if (c == '%' && i + 2 < name.size() && detail::hex_value(name[i + 1]) >= 0 &&
               detail::hex_value(name[i + 2]) >= 0) {
      out.push_back(static_cast<char>(detail::hex_value(name[i + 1]) * 16 + detail::hex_value(name[i + 2])));
      i += 2;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace semauto
