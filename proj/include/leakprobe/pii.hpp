#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "leakprobe/corpus.hpp"

namespace leakprobe::pii {

enum class Category { Person, Organization, Gpe, Facility, Money, Date, Cardinal };

inline constexpr std::array<Category, 7> kAllCategories = {
    Category::Person, Category::Organization, Category::Gpe,     Category::Facility,
    Category::Money,  Category::Date,         Category::Cardinal};

std::string_view to_string(Category c);

/// Case-insensitive; accepts the enum names plus the usual NER labels
/// (PERSON, ORG, GPE, FAC, MONEY, DATE, CARDINAL).
Category parse_category(std::string_view name);

/// Named categories come from the gazetteer and are case-folded when
/// canonicalized; the others come from patterns and keep their bytes.
constexpr bool is_named(Category c) {
  return c == Category::Person || c == Category::Organization || c == Category::Gpe ||
         c == Category::Facility;
}

/// `start`/`end` are code point offsets into the source text.
struct Mention {
  std::string surface;
  Category category = Category::Person;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string source_id;

  bool operator==(const Mention&) const = default;
};

/// Trim, collapse whitespace runs, strip enclosing quote pairs, and lower-case
/// ASCII letters for named categories. Idempotent. Throws EmptyAfterTrim.
std::string canonicalize(std::string_view surface, Category category);

// ---------------------------------------------------------------------------

struct Entry {
  Category category = Category::Person;
  std::string canonical;

  auto operator<=>(const Entry&) const = default;
  bool operator==(const Entry&) const = default;
};

enum class Provenance { FineTunedGenerations, BaseGenerations, GroundTruth, Derived };

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view name);

class PiiSet {
 public:
  explicit PiiSet(Provenance provenance = Provenance::Derived) : provenance_(provenance) {}

  /// Canonicalizes `surface` and inserts it.
  void add(Category category, std::string_view surface);
  /// Inserts an already-canonical entry; throws NotCanonical otherwise.
  void insert(Entry entry);
  void merge(const PiiSet& other);

  bool contains(const Entry& e) const { return entries_.count(e) != 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t count(Category c) const;

  const std::set<Entry>& entries() const { return entries_; }
  Provenance provenance() const { return provenance_; }
  void set_provenance(Provenance p) { provenance_ = p; }

  bool operator==(const PiiSet&) const = default;

 private:
  std::set<Entry> entries_;
  Provenance provenance_;
};

PiiSet set_difference(const PiiSet& a, const PiiSet& b);
PiiSet set_intersection(const PiiSet& a, const PiiSet& b);
PiiSet set_union(const PiiSet& a, const PiiSet& b);

nlohmann::json to_json(const PiiSet& set);
PiiSet pii_set_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------

/// A candidate match in byte offsets before overlap resolution.
struct RawMatch {
  std::size_t begin = 0;
  std::size_t end = 0;
  Category category = Category::Person;
};

/// Named-entity lists matched as whole-token sequences. A space inside an
/// entry matches any run of whitespace in the text; a match must not start
/// or end inside a token. Immutable once built.
class Gazetteer {
 public:
  Gazetteer();
  explicit Gazetteer(const std::map<Category, std::vector<std::string>>& names,
                     const std::set<Category>& case_sensitive = {});
  ~Gazetteer();
  Gazetteer(const Gazetteer&);
  Gazetteer& operator=(const Gazetteer&);
  Gazetteer(Gazetteer&&) noexcept;
  Gazetteer& operator=(Gazetteer&&) noexcept;

  /// JSON object: category name -> list of strings, plus an optional
  /// "case_sensitive" list of category names.
  static Gazetteer from_json(const nlohmann::json& j);
  static Gazetteer load(std::istream& in);

  const std::vector<std::string>& names(Category c) const;
  bool case_fold(Category c) const;
  std::size_t size() const;

  void find_all(std::string_view text, std::vector<RawMatch>& out) const;

 private:
  struct Trie;
  std::map<Category, std::vector<std::string>> names_;
  std::set<Category> case_sensitive_;
  std::unique_ptr<Trie> folded_;
  std::unique_ptr<Trie> exact_;
};

struct PatternRule {
  Category category;
  std::string source;
  std::regex regex;
};

/// Regular-expression rules for Money, Date and Cardinal. Matches are kept
/// only when they do not start or end inside a token.
class PatternSet {
 public:
  static PatternSet defaults();
  static PatternSet defaults_for(const std::set<Category>& enabled);
  static PatternSet none() { return PatternSet{}; }
  /// JSON object: category name -> list of ECMAScript regexes.
  static PatternSet from_json(const nlohmann::json& j);

  void add(Category category, std::string source);
  const std::vector<PatternRule>& rules() const { return rules_; }

  void find_all(std::string_view text, std::vector<RawMatch>& out) const;

 private:
  std::vector<PatternRule> rules_;
};

/// Mentions sorted by start offset; overlaps resolved longest match first,
/// then earlier start, then category order.
std::vector<Mention> extract_pii(std::string_view text, const Gazetteer& gazetteer,
                                 const PatternSet& patterns, std::string_view source_id = {});

/// Overlap resolution on byte-offset candidates, exposed for testing.
std::vector<RawMatch> resolve_overlaps(std::string_view text, std::vector<RawMatch> candidates);

/// JSONL with keys source_id, start, end, surface, category. When `sources`
/// is given, spans are re-sliced against the matching source text.
std::vector<Mention> import_external_annotations(
    std::istream& source, const std::map<std::string, std::string>* sources = nullptr);

nlohmann::json to_json(const Mention& m);

// ---------------------------------------------------------------------------
// Set construction over many texts. The parallel kernels split work per text
// with OpenMP and merge thread-local sets; the serial versions are the
// reference they are tested against.

PiiSet extract_set(const std::vector<std::string_view>& texts, const Gazetteer& gazetteer,
                   const PatternSet& patterns, Provenance provenance);
PiiSet extract_set_serial(const std::vector<std::string_view>& texts, const Gazetteer& gazetteer,
                          const PatternSet& patterns, Provenance provenance);

/// Union of canonical mentions over every subject and body.
PiiSet build_ground_truth(const std::vector<corpus::EmailRecord>& records, const Gazetteer& gazetteer,
                          const PatternSet& patterns);
PiiSet build_ground_truth_serial(const std::vector<corpus::EmailRecord>& records,
                                 const Gazetteer& gazetteer, const PatternSet& patterns);

}  // namespace leakprobe::pii
