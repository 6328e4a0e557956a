#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <sstream>

#include "leakprobe/error.hpp"
#include "leakprobe/pii.hpp"
#include "leakprobe/rng.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace leakprobe;
using namespace leakprobe::pii;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

std::vector<std::string> surfaces(const std::vector<Mention>& ms) {
  std::vector<std::string> out;
  for (const auto& m : ms) out.push_back(m.surface);
  return out;
}

}  // namespace

TEST(Canonicalize, Rules) {
  EXPECT_EQ(canonicalize("  Jeff   Skilling ", Category::Person), "jeff skilling");
  EXPECT_EQ(canonicalize("\"'Enron'\"", Category::Organization), "enron");
  EXPECT_EQ(canonicalize("\xE2\x80\x9CHouston\xE2\x80\x9D", Category::Gpe), "houston");
  EXPECT_EQ(canonicalize("$4.5 Million", Category::Money), "$4.5 Million");
  EXPECT_EQ(kind_of([] { canonicalize(" \"\" ", Category::Person); }), ErrorKind::EmptyAfterTrim);
}

TEST(Canonicalize, Idempotent) {
  SplitMix64 rng(8);
  const std::string alphabet = "aB \t\"'`xY.";
  for (int i = 0; i < 3000; ++i) {
    std::string s;
    for (std::size_t k = 0, n = 1 + rng.below(12); k < n; ++k) s += alphabet[rng.below(alphabet.size())];
    for (auto c : kAllCategories) {
      std::string once;
      try {
        once = canonicalize(s, c);
      } catch (const Error&) {
        continue;
      }
      ASSERT_EQ(canonicalize(once, c), once) << '"' << s << '"';
    }
  }
}

TEST(Category, ParseAliases) {
  EXPECT_EQ(parse_category("PERSON"), Category::Person);
  EXPECT_EQ(parse_category("org"), Category::Organization);
  EXPECT_EQ(parse_category("FAC"), Category::Facility);
  EXPECT_EQ(parse_category("gpe"), Category::Gpe);
  EXPECT_EQ(kind_of([] { parse_category("LOC"); }), ErrorKind::UnknownCategory);
}

TEST(PiiSet, InsertRequiresCanonicalAndJsonRoundTrips) {
  PiiSet s(Provenance::GroundTruth);
  s.add(Category::Person, "Ada  Brennan");
  s.add(Category::Money, "$5");
  EXPECT_TRUE(s.contains({Category::Person, "ada brennan"}));
  EXPECT_EQ(kind_of([&] { s.insert({Category::Person, "Ada"}); }), ErrorKind::NotCanonical);
  EXPECT_EQ(s.count(Category::Person), 1u);
  const auto back = pii_set_from_json(to_json(s));
  EXPECT_EQ(back, s);
  EXPECT_EQ(back.provenance(), Provenance::GroundTruth);
}

TEST(PiiSet, OperationsMatchOracle) {
  SplitMix64 rng(77);
  const std::vector<std::string> pool = {"a", "b", "c", "d"};
  for (int i = 0; i < 500; ++i) {
    PiiSet a, b;
    for (int k = 0; k < 6; ++k) {
      a.add(kAllCategories[rng.below(7)], pool[rng.below(4)]);
      b.add(kAllCategories[rng.below(7)], pool[rng.below(4)]);
    }
    const auto ea = oracle::entries_of(a), eb = oracle::entries_of(b);
    ASSERT_TRUE(oracle::same(oracle::entries_of(set_difference(a, b)), oracle::minus(ea, eb)));
    ASSERT_TRUE(oracle::same(oracle::entries_of(set_intersection(a, b)), oracle::intersect(ea, eb)));
    ASSERT_TRUE(oracle::same(oracle::entries_of(set_union(a, b)), oracle::unite(ea, eb)));
  }
}

TEST(Gazetteer, WholeTokensWhitespaceRunsAndCase) {
  const Gazetteer gaz({{Category::Gpe, {"New York", "York"}}, {Category::Organization, {"ACME"}}},
                      {Category::Organization});
  const auto none = PatternSet::none();
  EXPECT_EQ(surfaces(extract_pii("from new\n  york today", gaz, none)), std::vector<std::string>{"new\n  york"});
  EXPECT_TRUE(extract_pii("Yorkshire and NewYork", gaz, none).empty());
  EXPECT_EQ(surfaces(extract_pii("ACME vs Acme", gaz, none)), std::vector<std::string>{"ACME"});
  EXPECT_FALSE(gaz.case_fold(Category::Organization));
}

TEST(Gazetteer, FromJsonRejectsNumericCategories) {
  EXPECT_EQ(kind_of([] { Gazetteer::from_json(nlohmann::json{{"MONEY", {"$1"}}}); }), ErrorKind::InvalidGazetteer);
  EXPECT_EQ(kind_of([] { Gazetteer::from_json(nlohmann::json{{"LOC", {"x"}}}); }), ErrorKind::UnknownCategory);
  const auto g = Gazetteer::from_json(nlohmann::json{{"PERSON", {"Ada"}}, {"case_sensitive", {"PERSON"}}});
  EXPECT_EQ(g.size(), 1u);
  EXPECT_FALSE(g.case_fold(Category::Person));
}

TEST(Patterns, CustomRulesAndNamedRejection) {
  auto p = PatternSet::from_json(nlohmann::json{{"CARDINAL", {"#\\d+"}}});
  const auto ms = extract_pii("ticket #42 closed", Gazetteer(), p);
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].surface, "#42");
  EXPECT_EQ(kind_of([] { PatternSet::from_json(nlohmann::json{{"PERSON", {"[A-Z]\\w+"}}}); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { PatternSet::from_json(nlohmann::json{{"DATE", {"("}}}); }), ErrorKind::InvalidArgument);
}

TEST(Patterns, DefaultsForSubsetOnly) {
  const auto p = PatternSet::defaults_for({Category::Money});
  const auto ms = extract_pii("paid $40 on 2001-01-01 for 7 items", Gazetteer(), p);
  EXPECT_EQ(surfaces(ms), std::vector<std::string>{"$40"});
}

TEST(Overlaps, LongestThenEarliestThenCategory) {
  const std::string s = "abcdefgh";
  const auto kept = resolve_overlaps(
      s, {{0, 3, Category::Cardinal}, {2, 6, Category::Date}, {5, 8, Category::Money}, {2, 6, Category::Money}});
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].begin, 2u);
  EXPECT_EQ(kept[0].category, Category::Money);  // Money precedes Date in category order

  const auto tie = resolve_overlaps(s, {{3, 6, Category::Person}, {1, 4, Category::Person}, {6, 8, Category::Person}});
  ASSERT_EQ(tie.size(), 2u);
  EXPECT_EQ(tie[0].begin, 1u);
  EXPECT_EQ(tie[1].begin, 6u);
}

TEST(Extraction, OffsetsAreCodePoints) {
  const Gazetteer gaz({{Category::Gpe, {"Houston"}}});
  const std::string s = "Caf\xC3\xA9 in Houston";
  const auto ms = extract_pii(s, gaz, PatternSet::none(), "doc");
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].start, 8u);
  EXPECT_EQ(ms[0].end, 15u);
  EXPECT_EQ(ms[0].source_id, "doc");
}

TEST(Annotations, ImportValidatesSpans) {
  const std::map<std::string, std::string> sources = {{"d1", "Ada met Bo"}};
  std::istringstream ok(R"({"source_id":"d1","start":0,"end":3,"surface":"Ada","category":"PERSON"})");
  const auto ms = import_external_annotations(ok, &sources);
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].category, Category::Person);

  std::istringstream bad_len(R"({"source_id":"d1","start":0,"end":4,"surface":"Ada","category":"PERSON"})");
  EXPECT_EQ(kind_of([&] { import_external_annotations(bad_len); }), ErrorKind::SpanMismatch);
  std::istringstream bad_slice(R"({"source_id":"d1","start":4,"end":7,"surface":"Ada","category":"PERSON"})");
  EXPECT_EQ(kind_of([&] { import_external_annotations(bad_slice, &sources); }), ErrorKind::SpanMismatch);
  std::istringstream bad_cat(R"({"source_id":"d1","start":0,"end":3,"surface":"Ada","category":"LOC"})");
  EXPECT_EQ(kind_of([&] { import_external_annotations(bad_cat); }), ErrorKind::UnknownCategory);
  std::istringstream bad_row("not json\n");
  EXPECT_EQ(kind_of([&] { import_external_annotations(bad_row); }), ErrorKind::MalformedRow);
}

TEST(Kernels, ParallelMatchesSerial) {
  const auto corpus = synth::make_corpus(200, 400, 19);
  const auto gaz = corpus.gazetteer();
  const auto pats = PatternSet::defaults();
  EXPECT_EQ(build_ground_truth(corpus.records, gaz, pats), build_ground_truth_serial(corpus.records, gaz, pats));
  std::vector<std::string_view> texts;
  for (const auto& r : corpus.records) texts.push_back(r.body);
  const auto par = extract_set(texts, gaz, pats, Provenance::FineTunedGenerations);
  EXPECT_EQ(par, extract_set_serial(texts, gaz, pats, Provenance::FineTunedGenerations));
  EXPECT_EQ(par.size(), corpus.planted.size());
}

TEST(Synthetic, OracleScanFindsEveryPlantedEntry) {
  const auto corpus = synth::make_corpus(50, 120, 7);
  oracle::Entries all;
  for (const auto& r : corpus.records) {
    for (const auto& e : synth::oracle_scan(r.body, corpus.planted)) all.push_back(e);
  }
  EXPECT_EQ(oracle::dedup(all).size(), 120u);
}
