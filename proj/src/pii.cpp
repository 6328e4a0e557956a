#include "leakprobe/pii.hpp"

#include <algorithm>
#include <istream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <optional>

#include "leakprobe/error.hpp"
#include "leakprobe/text.hpp"

namespace leakprobe::pii {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Person: return "Person";
    case Category::Organization: return "Organization";
    case Category::Gpe: return "Gpe";
    case Category::Facility: return "Facility";
    case Category::Money: return "Money";
    case Category::Date: return "Date";
    case Category::Cardinal: return "Cardinal";
  }
  return "Unknown";
}

Category parse_category(std::string_view name) {
  const std::string lower = text::to_lower_ascii(text::trim(name));
  static const std::map<std::string, Category, std::less<>> names = {
      {"person", Category::Person},     {"per", Category::Person},
      {"organization", Category::Organization}, {"organisation", Category::Organization},
      {"org", Category::Organization},  {"gpe", Category::Gpe},
      {"facility", Category::Facility}, {"fac", Category::Facility},
      {"money", Category::Money},       {"date", Category::Date},
      {"cardinal", Category::Cardinal},
  };
  auto it = names.find(lower);
  if (it == names.end()) throw Error(ErrorKind::UnknownCategory, "unknown PII category '" + std::string(name) + "'");
  return it->second;
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::FineTunedGenerations: return "FineTunedGenerations";
    case Provenance::BaseGenerations: return "BaseGenerations";
    case Provenance::GroundTruth: return "GroundTruth";
    case Provenance::Derived: return "Derived";
  }
  return "Derived";
}

Provenance parse_provenance(std::string_view name) {
  for (auto p : {Provenance::FineTunedGenerations, Provenance::BaseGenerations, Provenance::GroundTruth,
                 Provenance::Derived}) {
    if (to_string(p) == name) return p;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown provenance '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Canonicalization

namespace {

constexpr std::array<std::string_view, 7> kQuotes = {"\"", "'", "`", "“", "”", "‘", "’"};

std::optional<std::size_t> quote_prefix(std::string_view s) {
  for (auto q : kQuotes) {
    if (s.starts_with(q)) return q.size();
  }
  return std::nullopt;
}

std::optional<std::size_t> quote_suffix(std::string_view s) {
  for (auto q : kQuotes) {
    if (s.ends_with(q)) return q.size();
  }
  return std::nullopt;
}

// Whitespace collapse plus quote stripping to a fixed point.
std::string normalize_surface(std::string_view surface) {
  std::string s = text::collapse_whitespace(surface);
  for (;;) {
    auto pre = quote_prefix(s);
    auto suf = quote_suffix(s);
    if (!pre || !suf || *pre + *suf > s.size()) break;
    s = text::collapse_whitespace(std::string_view(s).substr(*pre, s.size() - *pre - *suf));
  }
  return s;
}

}  // namespace

std::string canonicalize(std::string_view surface, Category category) {
  std::string s = normalize_surface(surface);
  if (s.empty()) throw Error(ErrorKind::EmptyAfterTrim, "PII surface is empty after trimming");
  if (is_named(category)) s = text::to_lower_ascii(s);
  return s;
}

// ---------------------------------------------------------------------------
// PiiSet

void PiiSet::add(Category category, std::string_view surface) {
  entries_.insert(Entry{category, canonicalize(surface, category)});
}

void PiiSet::insert(Entry entry) {
  if (entry.canonical.empty() || canonicalize(entry.canonical, entry.category) != entry.canonical) {
    throw Error(ErrorKind::NotCanonical, "entry '" + entry.canonical + "' is not canonical");
  }
  entries_.insert(std::move(entry));
}

void PiiSet::merge(const PiiSet& other) { entries_.insert(other.entries_.begin(), other.entries_.end()); }

std::size_t PiiSet::count(Category c) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [c](const Entry& e) { return e.category == c; }));
}

PiiSet set_difference(const PiiSet& a, const PiiSet& b) {
  PiiSet out(Provenance::Derived);
  for (const auto& e : a.entries()) {
    if (!b.contains(e)) out.insert(e);
  }
  return out;
}

PiiSet set_intersection(const PiiSet& a, const PiiSet& b) {
  PiiSet out(Provenance::Derived);
  for (const auto& e : a.entries()) {
    if (b.contains(e)) out.insert(e);
  }
  return out;
}

PiiSet set_union(const PiiSet& a, const PiiSet& b) {
  PiiSet out(Provenance::Derived);
  out.merge(a);
  out.merge(b);
  return out;
}

json to_json(const PiiSet& set) {
  ordered_json entries = ordered_json::array();
  for (const auto& e : set.entries()) {
    entries.push_back(ordered_json{{"category", to_string(e.category)}, {"canonical", e.canonical}});
  }
  ordered_json out{{"provenance", to_string(set.provenance())}, {"entries", std::move(entries)}};
  return json::parse(out.dump());
}

PiiSet pii_set_from_json(const json& j) {
  try {
    PiiSet out(parse_provenance(j.at("provenance").get<std::string>()));
    for (const auto& e : j.at("entries")) {
      out.insert(Entry{parse_category(e.at("category").get<std::string>()), e.at("canonical").get<std::string>()});
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedRow, std::string("bad PII set document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Gazetteer

struct Gazetteer::Trie {
  struct Node {
    std::vector<std::pair<unsigned char, std::uint32_t>> children;  // sorted by key
    std::uint8_t accept = 0;                                         // bit per Category
  };
  std::vector<Node> nodes{Node{}};
  bool fold = true;

  std::optional<std::uint32_t> child(std::uint32_t node, unsigned char key) const {
    const auto& ch = nodes[node].children;
    auto it = std::lower_bound(ch.begin(), ch.end(), key,
                               [](const auto& p, unsigned char k) { return p.first < k; });
    if (it == ch.end() || it->first != key) return std::nullopt;
    return it->second;
  }

  void insert(std::string_view entry, Category category) {
    std::uint32_t node = 0;
    for (char ch : entry) {
      const auto key = static_cast<unsigned char>(fold ? text::ascii_lower(ch) : ch);
      auto next = child(node, key);
      if (!next) {
        nodes.push_back(Node{});
        const auto id = static_cast<std::uint32_t>(nodes.size() - 1);
        auto& children = nodes[node].children;
        children.insert(std::lower_bound(children.begin(), children.end(), key,
                                         [](const auto& p, unsigned char k) { return p.first < k; }),
                        {key, id});
        next = id;
      }
      node = *next;
    }
    nodes[node].accept |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(category));
  }

  void scan(std::string_view s, std::vector<RawMatch>& out) const {
    const std::size_t n = s.size();
    for (std::size_t p = 0; p < n; ++p) {
      const auto first = static_cast<unsigned char>(s[p]);
      if (text::is_space(first)) continue;
      if (text::is_word_byte(first) && p > 0 && text::is_word_byte(static_cast<unsigned char>(s[p - 1]))) continue;
      std::uint32_t node = 0;
      std::size_t i = p;
      while (i < n) {
        const auto c = static_cast<unsigned char>(s[i]);
        unsigned char key;
        std::size_t next_i;
        if (text::is_space(c)) {
          key = ' ';
          next_i = i;
          while (next_i < n && text::is_space(static_cast<unsigned char>(s[next_i]))) ++next_i;
        } else {
          key = static_cast<unsigned char>(fold ? text::ascii_lower(static_cast<char>(c)) : static_cast<char>(c));
          next_i = i + 1;
        }
        auto next = child(node, key);
        if (!next) break;
        node = *next;
        i = next_i;
        const auto accept = nodes[node].accept;
        if (accept != 0 && key != ' ' &&
            (i == n || !text::is_word_byte(static_cast<unsigned char>(s[i])) ||
             !text::is_word_byte(static_cast<unsigned char>(s[i - 1])))) {
          for (auto cat : kAllCategories) {
            if (accept & (1u << static_cast<unsigned>(cat))) out.push_back({p, i, cat});
          }
        }
      }
    }
  }
};

Gazetteer::Gazetteer() : Gazetteer(std::map<Category, std::vector<std::string>>{}) {}

Gazetteer::Gazetteer(const std::map<Category, std::vector<std::string>>& names,
                     const std::set<Category>& case_sensitive)
    : case_sensitive_(case_sensitive), folded_(std::make_unique<Trie>()), exact_(std::make_unique<Trie>()) {
  exact_->fold = false;
  for (const auto& [category, list] : names) {
    if (!is_named(category)) {
      throw Error(ErrorKind::InvalidGazetteer,
                  "gazetteer category " + std::string(to_string(category)) + " is matched by patterns, not names");
    }
    const bool fold = !case_sensitive_.count(category);
    auto& stored = names_[category];
    for (const auto& raw : list) {
      std::string entry = normalize_surface(raw);
      if (entry.empty()) throw Error(ErrorKind::InvalidGazetteer, "empty gazetteer entry");
      if (fold) entry = text::to_lower_ascii(entry);
      (fold ? *folded_ : *exact_).insert(entry, category);
      stored.push_back(std::move(entry));
    }
    std::sort(stored.begin(), stored.end());
    stored.erase(std::unique(stored.begin(), stored.end()), stored.end());
  }
}

Gazetteer::~Gazetteer() = default;
Gazetteer::Gazetteer(const Gazetteer& o)
    : names_(o.names_),
      case_sensitive_(o.case_sensitive_),
      folded_(std::make_unique<Trie>(*o.folded_)),
      exact_(std::make_unique<Trie>(*o.exact_)) {}
Gazetteer& Gazetteer::operator=(const Gazetteer& o) {
  if (this != &o) *this = Gazetteer(o);
  return *this;
}
Gazetteer::Gazetteer(Gazetteer&&) noexcept = default;
Gazetteer& Gazetteer::operator=(Gazetteer&&) noexcept = default;

Gazetteer Gazetteer::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidGazetteer, "gazetteer must be a JSON object");
  std::map<Category, std::vector<std::string>> names;
  std::set<Category> case_sensitive;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "case_sensitive") {
        for (const auto& c : value) case_sensitive.insert(parse_category(c.get<std::string>()));
        continue;
      }
      auto& list = names[parse_category(key)];
      for (const auto& v : value) list.push_back(v.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidGazetteer, e.what());
  }
  return Gazetteer(names, case_sensitive);
}

Gazetteer Gazetteer::load(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidGazetteer, e.what());
  }
  return from_json(j);
}

const std::vector<std::string>& Gazetteer::names(Category c) const {
  static const std::vector<std::string> empty;
  auto it = names_.find(c);
  return it == names_.end() ? empty : it->second;
}

bool Gazetteer::case_fold(Category c) const { return !case_sensitive_.count(c); }

std::size_t Gazetteer::size() const {
  std::size_t n = 0;
  for (const auto& [c, list] : names_) n += list.size();
  return n;
}

void Gazetteer::find_all(std::string_view s, std::vector<RawMatch>& out) const {
  if (folded_->nodes.size() > 1) folded_->scan(s, out);
  if (exact_->nodes.size() > 1) exact_->scan(s, out);
}

// ---------------------------------------------------------------------------
// Patterns

namespace {

const std::string kNumber = R"((?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?)";
const std::string kScale = R"((?:[Mm]illion|[Bb]illion|[Tt]rillion|[Tt]housand))";
const std::string kMonth =
    "(?:January|February|March|April|May|June|July|August|September|October|November|December|"
    R"(Jan\.|Feb\.|Mar\.|Apr\.|Jun\.|Jul\.|Aug\.|Sept\.|Sep\.|Oct\.|Nov\.|Dec\.))";
const std::string kWeekday = "(?:Monday|Tuesday|Wednesday|Thursday|Friday|Saturday|Sunday)";

const std::vector<std::pair<Category, std::string>>& default_rules() {
  static const std::vector<std::pair<Category, std::string>> rules = {
      {Category::Money, R"(\$\s?)" + kNumber + R"((?:\s)" + kScale + R"(\b)?)"},
      {Category::Money, kNumber + R"((?:\s)" + kScale + R"()?\s[Dd]ollars\b)"},
      {Category::Money, kNumber + R"(\s(?:[Mm]illion|[Bb]illion|[Tt]rillion)\b)"},
      {Category::Date, R"(\d{1,2}/\d{1,2}/(?:\d{4}|\d{2}))"},
      {Category::Date, R"(\d{4}-\d{2}-\d{2})"},
      {Category::Date, "(?:" + kWeekday + R"(,\s)?)" + kMonth + R"(\s\d{1,2}(?:st|nd|rd|th)?(?:,\s\d{4})?)"},
      {Category::Date, kMonth + R"(\s\d{4})"},
      {Category::Cardinal, kNumber},
  };
  return rules;
}

bool is_number_joiner(char c) { return c == '.' || c == ',' || c == '/' || c == '-'; }

}  // namespace

PatternSet PatternSet::defaults() {
  return defaults_for({Category::Money, Category::Date, Category::Cardinal});
}

PatternSet PatternSet::defaults_for(const std::set<Category>& enabled) {
  PatternSet set;
  for (const auto& [category, source] : default_rules()) {
    if (enabled.count(category)) set.add(category, source);
  }
  return set;
}

PatternSet PatternSet::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "pattern file must be a JSON object");
  PatternSet set;
  try {
    for (const auto& [key, value] : j.items()) {
      const Category c = parse_category(key);
      for (const auto& v : value) set.add(c, v.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, e.what());
  }
  return set;
}

void PatternSet::add(Category category, std::string source) {
  if (is_named(category)) {
    throw Error(ErrorKind::InvalidArgument,
                "patterns cover Money, Date and Cardinal; " + std::string(to_string(category)) + " uses the gazetteer");
  }
  try {
    std::regex re(source, std::regex::ECMAScript | std::regex::optimize);
    rules_.push_back({category, std::move(source), std::move(re)});
  } catch (const std::regex_error& e) {
    throw Error(ErrorKind::InvalidArgument, "bad pattern '" + source + "': " + e.what());
  }
}

void PatternSet::find_all(std::string_view s, std::vector<RawMatch>& out) const {
  const bool has_digit = std::any_of(s.begin(), s.end(), [](char c) { return text::is_digit(static_cast<unsigned char>(c)); });
  const std::size_t n = s.size();
  for (const auto& rule : rules_) {
    if (!has_digit && rule.source.find("\\d") != std::string::npos) continue;
    for (std::cregex_iterator it(s.data(), s.data() + n, rule.regex), end; it != end; ++it) {
      const auto b = static_cast<std::size_t>(it->position());
      const auto e = b + static_cast<std::size_t>(it->length());
      if (e == b) continue;
      const auto first = static_cast<unsigned char>(s[b]);
      const auto last = static_cast<unsigned char>(s[e - 1]);
      if (b > 0 && text::is_word_byte(first) && text::is_word_byte(static_cast<unsigned char>(s[b - 1]))) continue;
      if (e < n && text::is_word_byte(last) && text::is_word_byte(static_cast<unsigned char>(s[e]))) continue;
      // a number glued to more digits, as in 1.2.3 or 713-853-1234, is not split
      if (text::is_digit(first) && b >= 2 && is_number_joiner(s[b - 1]) &&
          text::is_digit(static_cast<unsigned char>(s[b - 2]))) {
        continue;
      }
      if (text::is_digit(last) && e + 1 < n && is_number_joiner(s[e]) &&
          text::is_digit(static_cast<unsigned char>(s[e + 1]))) {
        continue;
      }
      out.push_back({b, e, rule.category});
    }
  }
}

// ---------------------------------------------------------------------------
// Extraction

std::vector<RawMatch> resolve_overlaps(std::string_view s, std::vector<RawMatch> candidates) {
  struct Keyed {
    RawMatch m;
    std::size_t chars;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(candidates.size());
  for (const auto& m : candidates) keyed.push_back({m, text::utf8_length(s.substr(m.begin, m.end - m.begin))});
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.chars != b.chars) return a.chars > b.chars;
    if (a.m.begin != b.m.begin) return a.m.begin < b.m.begin;
    return a.m.category < b.m.category;
  });
  std::vector<bool> taken(s.size(), false);
  std::vector<RawMatch> kept;
  for (const auto& k : keyed) {
    bool free = true;
    for (std::size_t i = k.m.begin; i < k.m.end && free; ++i) free = !taken[i];
    if (!free) continue;
    std::fill(taken.begin() + static_cast<std::ptrdiff_t>(k.m.begin),
              taken.begin() + static_cast<std::ptrdiff_t>(k.m.end), true);
    kept.push_back(k.m);
  }
  std::sort(kept.begin(), kept.end(), [](const RawMatch& a, const RawMatch& b) { return a.begin < b.begin; });
  return kept;
}

std::vector<Mention> extract_pii(std::string_view s, const Gazetteer& gazetteer, const PatternSet& patterns,
                                 std::string_view source_id) {
  std::vector<Mention> out;
  if (s.empty()) return out;
  std::vector<RawMatch> candidates;
  gazetteer.find_all(s, candidates);
  patterns.find_all(s, candidates);
  const auto kept = resolve_overlaps(s, std::move(candidates));

  out.reserve(kept.size());
  std::size_t byte = 0;
  std::size_t chars = 0;
  for (const auto& m : kept) {
    chars += text::utf8_length(s.substr(byte, m.begin - byte));
    const std::size_t len = text::utf8_length(s.substr(m.begin, m.end - m.begin));
    out.push_back({std::string(s.substr(m.begin, m.end - m.begin)), m.category, chars, chars + len,
                   std::string(source_id)});
    byte = m.end;
    chars += len;
  }
  return out;
}

json to_json(const Mention& m) {
  ordered_json j{{"source_id", m.source_id},
                 {"start", m.start},
                 {"end", m.end},
                 {"surface", m.surface},
                 {"category", to_string(m.category)}};
  return json::parse(j.dump());
}

std::vector<Mention> import_external_annotations(std::istream& source,
                                                 const std::map<std::string, std::string>* sources) {
  std::vector<Mention> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(source, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    Mention m;
    try {
      const json j = json::parse(line);
      m.source_id = j.at("source_id").get<std::string>();
      const auto start = j.at("start").get<std::int64_t>();
      const auto end = j.at("end").get<std::int64_t>();
      if (start < 0 || end < 0) throw Error(ErrorKind::SpanMismatch, "negative offset", n);
      m.start = static_cast<std::size_t>(start);
      m.end = static_cast<std::size_t>(end);
      m.surface = j.at("surface").get<std::string>();
      const std::string category = j.at("category").get<std::string>();
      try {
        m.category = parse_category(category);
      } catch (const Error& e) {
        throw Error(ErrorKind::UnknownCategory, "unknown category '" + category + "'", n);
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedRow, e.what(), n);
    }
    if (m.start >= m.end || m.end - m.start != text::utf8_length(m.surface)) {
      throw Error(ErrorKind::SpanMismatch, "span length does not match surface '" + m.surface + "'", n);
    }
    if (sources) {
      auto it = sources->find(m.source_id);
      if (it != sources->end()) {
        if (m.end > text::utf8_length(it->second) || text::utf8_slice(it->second, m.start, m.end) != m.surface) {
          throw Error(ErrorKind::SpanMismatch, "span does not re-slice to '" + m.surface + "'", n);
        }
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace leakprobe::pii
