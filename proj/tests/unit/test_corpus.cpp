#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "leakprobe/corpus.hpp"
#include "leakprobe/error.hpp"
#include "support/synthetic.hpp"

using namespace leakprobe;
using namespace leakprobe::corpus;

namespace {

std::vector<EmailRecord> parse_csv(const std::string& s) {
  std::istringstream in(s);
  return parse_email_corpus(in, InputFormat::Csv);
}

ErrorKind kind_of(const std::function<void()>& fn, std::size_t* line = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (line) *line = e.line().value_or(0);
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

std::string body_of(std::size_t words, std::size_t sentences) { return synth::filler_text(words, sentences, words); }

}  // namespace

TEST(CorpusParse, QuotedFieldsAndGeneratedIds) {
  const auto rs = parse_csv(
      "folder,subject,body\n"
      "inbox,\"Re: lunch, today\",\"Line one.\nLine \"\"two\"\".\"\n"
      "sent,hello,short\n");
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(rs[0].id, "email-000001");
  EXPECT_EQ(rs[0].subject, "Re: lunch, today");
  EXPECT_EQ(rs[0].body, "Line one.\nLine \"two\".");
  EXPECT_EQ(rs[0].sentence_count, 2u);
  EXPECT_EQ(rs[1].id, "email-000002");
}

TEST(CorpusParse, Errors) {
  EXPECT_EQ(kind_of([] { parse_csv("folder,subject\nx,y\n"); }), ErrorKind::MissingField);
  std::size_t line = 0;
  EXPECT_EQ(kind_of([] { parse_csv("folder,subject,body\na,b,c,d\n"); }, &line), ErrorKind::MalformedRow);
  EXPECT_EQ(line, 2u);
  EXPECT_EQ(kind_of([] { parse_csv("folder,subject,body\na,b,c\na,\xC3,c\n"); }, &line), ErrorKind::InvalidEncoding);
  EXPECT_EQ(line, 3u);
  EXPECT_EQ(kind_of([] { parse_csv("id,folder,subject,body\nx,a,b,c\nx,a,b,c\n"); }), ErrorKind::DuplicateId);
}

TEST(CorpusParse, JsonlMatchesCsv) {
  std::istringstream in(
      "{\"id\":\"a\",\"folder\":\"f\",\"subject\":\"s\",\"body\":\"b one. b two.\"}\n"
      "{\"id\":\"b\",\"folder\":\"f\",\"subject\":\"s\",\"body\":\"\"}\n");
  const auto rs = parse_email_corpus(in, InputFormat::Jsonl);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_TRUE(rs[1].empty_body);
  std::ostringstream out;
  write_records_jsonl(rs, out);
  std::istringstream back(out.str());
  const auto again = read_records_jsonl(back);
  ASSERT_EQ(again.size(), 2u);
  EXPECT_EQ(again[0].body, rs[0].body);
}

TEST(Filter, FirstFailingRuleIsRecorded) {
  std::vector<EmailRecord> rs = {
      make_record("a", "f", "s", body_of(30, 2)),
      make_record("b", "f", "s", body_of(20, 3)),
      make_record("c", "f", "s", body_of(300, 3)),
      make_record("d", "f", "s", body_of(40, 4) + " click here to unsubscribe."),
      make_record("e", "f", "s", "1234 5678 9012 3456 7890 1234 5678 9012. 12 34 56 78 90 12 34 56. 1 2 3 4 5 6 7 8 9 "
                                 "0 a b c d e f."),
      make_record("f", "f", "s", body_of(40, 4)),
  };
  const auto result = apply_filter_policy(rs, FilterPolicy::with_default_heuristics());
  ASSERT_EQ(result.kept.size(), 1u);
  EXPECT_EQ(result.kept[0].id, "f");
  std::map<std::string, std::string> reasons;
  for (const auto& r : result.rejected) reasons[r.record.id] = r.reason;
  EXPECT_EQ(reasons["a"], "min_sentences");
  EXPECT_EQ(reasons["b"], "min_words");
  EXPECT_EQ(reasons["c"], "max_words");
  EXPECT_EQ(reasons["d"], "promotion");
  EXPECT_EQ(reasons["e"], "low_natural_language");
}

TEST(Filter, ThresholdsOnlyIgnoresHeuristics) {
  const auto r = make_record("d", "f", "s", body_of(40, 4) + " newsletter.");
  EXPECT_EQ(apply_filter_policy({r}, FilterPolicy::thresholds_only()).kept.size(), 1u);
  EXPECT_EQ(apply_filter_policy({r}, FilterPolicy::with_default_heuristics()).kept.size(), 0u);
}

TEST(Filter, InvalidPolicy) {
  auto p = FilterPolicy::thresholds_only();
  p.min_words = 300;
  EXPECT_EQ(kind_of([&] { p.validate(); }), ErrorKind::InvalidPolicy);
}

TEST(Split, DeterministicDisjointAndComplete) {
  const auto corpus = synth::make_corpus(30, 30, 3);
  auto shuffled = corpus.records;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto a = split_train_ood(corpus.records, 20, 42);
  const auto b = split_train_ood(shuffled, 20, 42);  // input order does not matter
  ASSERT_EQ(a.train.size(), 20u);
  ASSERT_EQ(a.ood.size(), 10u);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].id, b.train[i].id);
    ids.insert(a.train[i].id);
  }
  for (const auto& r : a.ood) EXPECT_TRUE(ids.insert(r.id).second);
  EXPECT_EQ(ids.size(), 30u);
  const auto c = split_train_ood(corpus.records, 20, 43);
  bool differs = false;
  for (std::size_t i = 0; i < 20; ++i) differs = differs || c.train[i].id != a.train[i].id;
  EXPECT_TRUE(differs);
  EXPECT_EQ(kind_of([&] { split_train_ood(corpus.records, 31, 1); }), ErrorKind::InsufficientRecords);
}

TEST(Examples, ClassificationAndAutocomplete) {
  const auto r = make_record("a", "legal", "Deal terms", "Body text here.");
  const auto cls = build_classification_examples({r});
  ASSERT_EQ(cls.size(), 1u);
  EXPECT_EQ(cls[0].prompt, "Body text here.\n\n###\n\n");
  EXPECT_EQ(cls[0].completion, " legal");
  const auto ac = build_autocomplete_examples({r});
  EXPECT_EQ(ac[0].prompt, "Generate the body of an email from the following subject line. Subject: Deal terms");
  EXPECT_EQ(ac[0].completion, " Body text here.");

  EXPECT_EQ(kind_of([] { build_classification_examples({make_record("a", "", "s", "b")}); }), ErrorKind::MissingLabel);
  EXPECT_EQ(kind_of([] { build_autocomplete_examples({make_record("a", "f", "", "b")}); }), ErrorKind::MissingSubject);
  EXPECT_EQ(kind_of([&] { build_classification_examples({r}, ""); }), ErrorKind::InvalidArgument);
}

TEST(Export, EmptyIsAnErrorAndRoundTripIsLossless) {
  std::ostringstream out;
  EXPECT_EQ(kind_of([&] { export_finetune_file({}, out); }), ErrorKind::NoExamples);

  const auto ex = build_classification_examples({make_record("a", "x", "s", "quote \" and \\ and \n newline \xC3\xA9")});
  std::ostringstream sink;
  EXPECT_EQ(export_finetune_file(ex, sink), 1u);
  EXPECT_EQ(sink.str().back(), '\n');
  std::istringstream in(sink.str());
  const auto back = parse_finetune_file(in);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].first, ex[0].prompt);
  EXPECT_EQ(back[0].second, ex[0].completion);

  std::ostringstream internal;
  write_examples_jsonl(ex, internal);
  std::istringstream internal_in(internal.str());
  EXPECT_EQ(read_examples_jsonl(internal_in), ex);
}
