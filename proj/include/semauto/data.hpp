#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "semauto/error.hpp"
#include "semauto/iri.hpp"

namespace semauto {

using ItemId = std::int64_t;
using UserId = std::int64_t;

// ---------------------------------------------------------------------------
// Triples
// ---------------------------------------------------------------------------

struct Triple {
  std::string subject;
  std::string predicate;
  std::string object;
  bool object_is_literal = false;

  friend bool operator==(const Triple&, const Triple&) = default;
};

enum class TripleFormat { ntriples, tsv };

inline TripleFormat parse_triple_format(std::string_view name) {
  if (name == "ntriples" || name == "nt") return TripleFormat::ntriples;
  if (name == "tsv") return TripleFormat::tsv;
  throw ConfigError("unknown triple format '" + std::string(name) + "' (expected ntriples or tsv)");
}

inline std::string_view to_string(TripleFormat f) { return f == TripleFormat::ntriples ? "ntriples" : "tsv"; }

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

// Cursor over one N-Triples line.
class NTriplesLine {
 public:
  NTriplesLine(std::string_view line, std::size_t lineno) : s_(line), lineno_(lineno) {}

  // Returns the term text and whether it was a literal.
  std::pair<std::string, bool> term() {
    skip_ws();
    if (at_end()) fail("unexpected end of line");
    char c = s_[pos_];
    if (c == '<') {
      auto end = s_.find('>', pos_);
      if (end == std::string_view::npos) fail("unterminated IRI");
      std::string iri(s_.substr(pos_ + 1, end - pos_ - 1));
      pos_ = end + 1;
      if (iri.empty()) fail("empty IRI");
      return {compact_iri(iri), false};
    }
    if (c == '_' && pos_ + 1 < s_.size() && s_[pos_ + 1] == ':') {
      auto start = pos_;
      while (!at_end() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      return {std::string(s_.substr(start, pos_ - start)), false};
    }
    if (c == '"') return {literal(), true};
    fail("expected IRI, blank node or literal");
  }

  void expect_end() {
    skip_ws();
    if (at_end() || s_[pos_] != '.') fail("missing terminating '.'");
    ++pos_;
    skip_ws();
    if (!at_end() && s_[pos_] != '#') fail("trailing characters after '.'");
  }

 private:
  std::string literal() {
    ++pos_;
    std::string out;
    while (true) {
      if (at_end()) fail("unterminated literal");
      char c = s_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (at_end()) fail("dangling escape");
      char e = s_[pos_++];
      switch (e) {
        case 't': out.push_back('\t'); break;
        case 'n': out.push_back('\n'); break;
        case 'r': out.push_back('\r'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'u':
        case 'U': {
          std::size_t len = e == 'u' ? 4 : 8;
          if (pos_ + len > s_.size()) fail("short unicode escape");
          std::uint32_t cp = 0;
          for (std::size_t k = 0; k < len; ++k) {
            int v = hex_value(s_[pos_ + k]);
            if (v < 0) fail("bad unicode escape");
            cp = cp * 16 + static_cast<std::uint32_t>(v);
          }
          pos_ += len;
          append_utf8(out, cp);
          break;
        }
        default: fail("unknown escape");
      }
    }
    // Language tag or datatype are accepted and dropped.
    if (!at_end() && s_[pos_] == '@') {
      while (!at_end() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    } else if (s_.substr(pos_).starts_with("^^")) {
      pos_ += 2;
      term();
    }
    return out;
  }

  static void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }

  void skip_ws() {
    while (!at_end() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end() const { return pos_ >= s_.size(); }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError("n-triples: " + msg, lineno_); }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t lineno_;
};

inline bool looks_like_literal(std::string_view term) {
  return term.size() >= 2 && term.front() == '"' && term.back() == '"';
}

}  // namespace detail

// Parses triples from a stream. Blank lines and '#' comments are skipped.
// TSV rows are `subject<TAB>predicate<TAB>object`; a double-quoted object is a literal.
inline std::vector<Triple> read_triples(std::istream& in, TripleFormat format) {
  std::vector<Triple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    Triple t;
    if (format == TripleFormat::ntriples) {
      detail::NTriplesLine cursor(body, lineno);
      auto [s, s_lit] = cursor.term();
      auto [p, p_lit] = cursor.term();
      auto [o, o_lit] = cursor.term();
      if (s_lit || p_lit) throw ParseError("n-triples: literal in subject or predicate position", lineno);
      cursor.expect_end();
      t = {std::move(s), std::move(p), std::move(o), o_lit};
    } else {
      auto cols = detail::split(body, '\t');
      if (cols.size() != 3) throw ParseError("tsv: expected 3 columns, got " + std::to_string(cols.size()), lineno);
      auto o = detail::trim(cols[2]);
      bool literal = detail::looks_like_literal(o);
      if (literal) o = o.substr(1, o.size() - 2);
      t = {compact_iri(detail::trim(cols[0])), compact_iri(detail::trim(cols[1])),
           literal ? std::string(o) : compact_iri(o), literal};
    }
    if (t.subject.empty() || t.predicate.empty() || (t.object.empty() && !t.object_is_literal))
      throw ParseError("empty triple field", lineno);
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<Triple> load_triples(const std::string& path, TripleFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open triples file: " + path);
  return read_triples(in, format);
}

// ---------------------------------------------------------------------------
// Knowledge-graph configuration
// ---------------------------------------------------------------------------

enum class KgMode { semantic, factual, both };

inline constexpr std::array<KgMode, 3> kAllKgModes{KgMode::semantic, KgMode::factual, KgMode::both};

inline std::string_view to_string(KgMode m) {
  switch (m) {
    case KgMode::semantic: return "semantic";
    case KgMode::factual: return "factual";
    case KgMode::both: return "both";
  }
  return "?";
}

inline KgMode parse_kg_mode(std::string_view s) {
  for (auto m : kAllKgModes)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown KG mode '" + std::string(s) + "' (expected semantic, factual or both)");
}

struct KgConfig {
  KgMode mode = KgMode::both;
  std::set<std::string> categorical_predicates{"dct:subject"};
  std::set<std::string> factual_predicates{"dbo:starring", "dbo:director", "dbo:writer"};

  std::set<std::string> active_predicates() const {
    std::set<std::string> out;
    if (mode != KgMode::factual) out.insert(categorical_predicates.begin(), categorical_predicates.end());
    if (mode != KgMode::semantic) out.insert(factual_predicates.begin(), factual_predicates.end());
    return out;
  }

  void validate() const {
    if (mode != KgMode::factual && categorical_predicates.empty())
      throw ConfigError("KG config: categorical predicate set is empty");
    if (mode != KgMode::semantic && factual_predicates.empty())
      throw ConfigError("KG config: factual predicate set is empty");
  }
};

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

struct CatalogItem {
  ItemId id = 0;
  std::string entity;
  std::string title;
  std::string trailer_url;
};

class Catalog {
 public:
  Catalog() = default;

  explicit Catalog(std::vector<CatalogItem> items, std::size_t excluded = 0)
      : items_(std::move(items)), excluded_(excluded) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (items_[i].entity.empty()) throw ContractError("catalog item " + std::to_string(items_[i].id) + " has no entity");
      if (!index_.emplace(items_[i].id, i).second)
        throw ParseError("duplicate item id " + std::to_string(items_[i].id));
    }
  }

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const std::vector<CatalogItem>& items() const { return items_; }
  const CatalogItem& operator[](std::size_t row) const { return items_.at(row); }

  std::optional<std::size_t> row_of(ItemId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require_row(ItemId id) const {
    auto row = row_of(id);
    if (!row) throw ContractError("unknown item id " + std::to_string(id));
    return *row;
  }

  // Rows dropped at load time because they had no entity IRI.
  std::size_t excluded() const { return excluded_; }

 private:
  std::vector<CatalogItem> items_;
  std::unordered_map<ItemId, std::size_t> index_;
  std::size_t excluded_ = 0;
};

// Reads `itemId<TAB>entityIRI<TAB>title[<TAB>trailerURL]`. A header row whose
// first field is not numeric is skipped.
inline Catalog read_item_mapping(std::istream& in) {
  std::vector<CatalogItem> items;
  std::set<ItemId> seen;
  std::size_t excluded = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty() || line.front() == '#') continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() < 3) throw ParseError("item mapping: expected at least 3 columns", lineno);
    auto id = detail::parse_number<ItemId>(cols[0]);
    if (!id) {
      if (lineno == 1) continue;
      throw ParseError("item mapping: bad item id '" + std::string(cols[0]) + "'", lineno);
    }
    if (!seen.insert(*id).second) throw ParseError("item mapping: duplicate item id " + std::to_string(*id), lineno);
    auto entity = detail::trim(cols[1]);
    if (entity.empty()) {
      ++excluded;
      continue;
    }
    if (entity.front() == '<' && entity.back() == '>') entity = entity.substr(1, entity.size() - 2);
    CatalogItem item{*id, compact_iri(entity), std::string(detail::trim(cols[2])), {}};
    if (cols.size() > 3) item.trailer_url = std::string(detail::trim(cols[3]));
    items.push_back(std::move(item));
  }
  return Catalog(std::move(items), excluded);
}

inline Catalog load_item_mapping(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open item mapping: " + path);
  return read_item_mapping(in);
}

// ---------------------------------------------------------------------------
// Feature space and mask
// ---------------------------------------------------------------------------

struct Feature {
  std::string predicate;
  std::string entity;
  std::string label;

  // "(subject) Cyberpunk films"
  std::string display() const { return "(" + std::string(local_name(predicate)) + ") " + label; }
};

class FeatureSpace {
 public:
  FeatureSpace() = default;

  // Features must be unique by (predicate, entity); column order is the given order.
  explicit FeatureSpace(std::vector<Feature> features) : features_(std::move(features)) {
    for (std::size_t j = 0; j < features_.size(); ++j) {
      if (!index_.emplace(std::pair{features_[j].predicate, features_[j].entity}, j).second)
        throw ContractError("duplicate feature " + features_[j].predicate + " " + features_[j].entity);
    }
  }

  std::size_t size() const { return features_.size(); }
  const std::vector<Feature>& features() const { return features_; }
  const Feature& operator[](std::size_t col) const { return features_.at(col); }

  std::optional<std::size_t> column_of(const std::string& predicate, const std::string& entity) const {
    auto it = index_.find({predicate, entity});
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<Feature> features_;
  std::map<std::pair<std::string, std::string>, std::size_t> index_;
};

// Binary item x feature adjacency stored as sorted (row, col) coordinates with
// a CSR row index. Absent entries are 0.
class MaskMatrix {
 public:
  using Entry = std::pair<std::uint32_t, std::uint32_t>;

  MaskMatrix() = default;

  MaskMatrix(std::size_t rows, std::size_t cols, std::vector<Entry> entries)
      : rows_(rows), cols_(cols), entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end());
    entries_.erase(std::unique(entries_.begin(), entries_.end()), entries_.end());
    row_offsets_.assign(rows_ + 1, 0);
    for (auto [i, j] : entries_) {
      if (i >= rows_ || j >= cols_)
        throw ContractError("mask entry (" + std::to_string(i) + "," + std::to_string(j) + ") out of bounds");
      ++row_offsets_[i + 1];
    }
    for (std::size_t i = 0; i < rows_; ++i) row_offsets_[i + 1] += row_offsets_[i];
  }

  // Dense 0/1 rows, mostly for tests.
  static MaskMatrix from_dense(const std::vector<std::vector<int>>& dense) {
    std::vector<Entry> entries;
    std::size_t cols = dense.empty() ? 0 : dense.front().size();
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (dense[i].size() != cols) throw ContractError("ragged dense mask");
      for (std::size_t j = 0; j < cols; ++j)
        if (dense[i][j]) entries.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
    }
    return MaskMatrix(dense.size(), cols, std::move(entries));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  // Entry positions [begin, end) belonging to row i.
  std::pair<std::size_t, std::size_t> row_range(std::size_t i) const { return {row_offsets_.at(i), row_offsets_.at(i + 1)}; }

  std::vector<std::size_t> row_support(std::size_t i) const {
    auto [b, e] = row_range(i);
    std::vector<std::size_t> out;
    out.reserve(e - b);
    for (auto k = b; k < e; ++k) out.push_back(entries_[k].second);
    return out;
  }

  bool contains(std::size_t i, std::size_t j) const {
    return std::binary_search(entries_.begin(), entries_.end(),
                              Entry{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
  }

  std::vector<std::size_t> featureless_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rows_; ++i)
      if (row_offsets_[i] == row_offsets_[i + 1]) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> empty_columns() const {
    std::vector<bool> hit(cols_, false);
    for (auto [i, j] : entries_) hit[j] = true;
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < cols_; ++j)
      if (!hit[j]) out.push_back(j);
    return out;
  }

  std::vector<std::vector<int>> to_dense() const {
    std::vector<std::vector<int>> d(rows_, std::vector<int>(cols_, 0));
    for (auto [i, j] : entries_) d[i][j] = 1;
    return d;
  }

  friend bool operator==(const MaskMatrix& a, const MaskMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.entries_ == b.entries_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Entry> entries_;
  std::vector<std::size_t> row_offsets_{0};
};

struct KgProjection {
  FeatureSpace space;
  MaskMatrix mask;
  std::size_t literals_rejected = 0;
};

// Builds the feature space reachable from the catalog under `config` and the
// item x feature mask. Columns are sorted by (predicate, entity). Literal
// objects on active predicates are rejected and counted. Labels come from
// rdfs:label literals when present, otherwise from the entity IRI.
inline KgProjection build_feature_space(std::span<const Triple> triples, const Catalog& catalog, const KgConfig& config) {
  if (catalog.empty()) throw ContractError("build_feature_space: empty catalog");
  config.validate();
  const auto active = config.active_predicates();

  std::unordered_map<std::string, std::vector<std::size_t>> rows_by_entity;
  for (std::size_t i = 0; i < catalog.size(); ++i) rows_by_entity[catalog[i].entity].push_back(i);

  std::unordered_map<std::string, std::string> labels;
  std::set<std::tuple<std::string, std::string, std::size_t>> edges;  // (predicate, entity, row)
  std::size_t literals = 0;
  for (const auto& t : triples) {
    if (t.object_is_literal) {
      if (t.predicate == "rdfs:label") labels.try_emplace(t.subject, t.object);
      if (active.contains(t.predicate)) ++literals;
      continue;
    }
    if (!active.contains(t.predicate)) continue;
    auto it = rows_by_entity.find(t.subject);
    if (it == rows_by_entity.end()) continue;
    for (auto row : it->second) edges.emplace(t.predicate, t.object, row);
  }

  std::vector<Feature> features;
  std::vector<MaskMatrix::Entry> entries;
  entries.reserve(edges.size());
  for (const auto& [predicate, entity, row] : edges) {
    if (features.empty() || features.back().predicate != predicate || features.back().entity != entity) {
      auto label = labels.find(entity);
      features.push_back({predicate, entity, label != labels.end() ? label->second : iri_label(entity)});
    }
    entries.emplace_back(static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(features.size() - 1));
  }
  if (features.empty()) throw Error("empty feature space under KG mode " + std::string(to_string(config.mode)));

  const auto n = features.size();
  return {FeatureSpace(std::move(features)), MaskMatrix(catalog.size(), n, std::move(entries)), literals};
}

// `rows cols nnz` header then one 0-based `i j` pair per line in sorted order.
inline void write_mask(std::ostream& out, const MaskMatrix& mask) {
  out << mask.rows() << ' ' << mask.cols() << ' ' << mask.nnz() << '\n';
  for (auto [i, j] : mask.entries()) out << i << ' ' << j << '\n';
}

inline MaskMatrix read_mask(std::istream& in) {
  std::size_t rows = 0, cols = 0, nnz = 0;
  if (!(in >> rows >> cols >> nnz)) throw ParseError("mask: bad header", 1);
  std::vector<MaskMatrix::Entry> entries;
  entries.reserve(nnz);
  for (std::size_t k = 0; k < nnz; ++k) {
    std::uint32_t i = 0, j = 0;
    if (!(in >> i >> j)) throw ParseError("mask: truncated entry list", k + 2);
    entries.emplace_back(i, j);
  }
  MaskMatrix mask(rows, cols, std::move(entries));
  if (mask.nnz() != nnz) throw ParseError("mask: duplicate entries");
  return mask;
}

// `col<TAB>predicate<TAB>entity<TAB>label`
inline void write_feature_index(std::ostream& out, const FeatureSpace& space) {
  out << "col\tpredicate\tentity\tlabel\n";
  for (std::size_t j = 0; j < space.size(); ++j)
    out << j << '\t' << space[j].predicate << '\t' << space[j].entity << '\t' << space[j].label << '\n';
}

inline FeatureSpace read_feature_index(std::istream& in) {
  std::vector<Feature> features;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != 4) throw ParseError("feature index: expected 4 columns", lineno);
    auto col = detail::parse_number<std::size_t>(cols[0]);
    if (!col || *col != features.size()) throw ParseError("feature index: columns must be contiguous", lineno);
    features.push_back({std::string(cols[1]), std::string(cols[2]), std::string(cols[3])});
  }
  return FeatureSpace(std::move(features));
}

// ---------------------------------------------------------------------------
// Ratings
// ---------------------------------------------------------------------------

struct RatingRecord {
  UserId user = 0;
  ItemId item = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;
};

inline constexpr double kMinStars = 0.5;
inline constexpr double kMaxStars = 5.0;

class RatingsTable {
 public:
  RatingsTable() = default;

  // Keeps the latest timestamp per (user, item); on equal timestamps the later record wins.
  explicit RatingsTable(std::vector<RatingRecord> records, std::size_t rejected = 0) : rejected_(rejected) {
    std::map<std::pair<UserId, ItemId>, RatingRecord> latest;
    for (auto& r : records) {
      auto [it, inserted] = latest.try_emplace({r.user, r.item}, r);
      if (!inserted) {
        ++duplicates_;
        if (r.timestamp >= it->second.timestamp) it->second = r;
      }
    }
    records_.reserve(latest.size());
    for (auto& [key, r] : latest) records_.push_back(r);
    for (std::size_t k = 0; k < records_.size(); ++k) {
      auto& range = by_user_[records_[k].user];
      if (range.second == 0) range.first = k;
      range.second = k + 1;
    }
  }

  std::size_t size() const { return records_.size(); }
  const std::vector<RatingRecord>& records() const { return records_; }
  std::size_t rejected() const { return rejected_; }
  std::size_t duplicates() const { return duplicates_; }

  std::vector<UserId> users() const {
    std::vector<UserId> out;
    for (auto& [u, range] : by_user_) out.push_back(u);
    return out;
  }

  bool has_user(UserId u) const { return by_user_.contains(u); }

  std::span<const RatingRecord> of_user(UserId u) const {
    auto it = by_user_.find(u);
    if (it == by_user_.end()) return {};
    return std::span<const RatingRecord>(records_).subspan(it->second.first, it->second.second - it->second.first);
  }

  std::optional<double> rating(UserId u, ItemId i) const {
    for (const auto& r : of_user(u))
      if (r.item == i) return r.rating;
    return std::nullopt;
  }

  // Number of ratings per item, used to rank catalog popularity.
  std::unordered_map<ItemId, std::size_t> item_counts() const {
    std::unordered_map<ItemId, std::size_t> out;
    for (const auto& r : records_) ++out[r.item];
    return out;
  }

 private:
  std::vector<RatingRecord> records_;
  std::map<UserId, std::pair<std::size_t, std::size_t>> by_user_;
  std::size_t rejected_ = 0;
  std::size_t duplicates_ = 0;
};

// MovieLens CSV with header containing userId, movieId, rating, timestamp
// (any column order). Ratings outside [0.5, 5] are dropped and counted.
inline RatingsTable read_ratings(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("ratings: missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split(line, ',');
  auto column = [&](std::string_view name) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (detail::trim(header[c]) == name) return c;
    throw ParseError("ratings: missing column '" + std::string(name) + "'", 1);
  };
  const std::size_t cu = column("userId"), ci = column("movieId"), cr = column("rating"), ct = column("timestamp");
  const std::size_t width = std::max({cu, ci, cr, ct}) + 1;

  std::vector<RatingRecord> records;
  std::size_t rejected = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cols = detail::split(line, ',');
    if (cols.size() < width) throw ParseError("ratings: missing columns", lineno);
    auto user = detail::parse_number<UserId>(cols[cu]);
    auto item = detail::parse_number<ItemId>(cols[ci]);
    auto rating = detail::parse_number<double>(cols[cr]);
    auto ts = detail::parse_number<std::int64_t>(cols[ct]);
    if (!user || !item || !rating || !ts) throw ParseError("ratings: malformed record", lineno);
    if (!(*rating >= kMinStars && *rating <= kMaxStars)) {
      ++rejected;
      continue;
    }
    records.push_back({*user, *item, *rating, *ts});
  }
  return RatingsTable(std::move(records), rejected);
}

inline RatingsTable load_ratings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ratings file: " + path);
  return read_ratings(in);
}

}  // namespace semauto
