#include <gtest/gtest.h>

#include "leakprobe/rng.hpp"
#include "leakprobe/text.hpp"
#include "support/oracles.hpp"

using namespace leakprobe;

TEST(Text, Utf8Validation) {
  EXPECT_TRUE(text::is_valid_utf8("plain"));
  EXPECT_TRUE(text::is_valid_utf8("S\xC3\xA3o Paulo"));
  EXPECT_FALSE(text::is_valid_utf8("\xC3"));            // truncated
  EXPECT_FALSE(text::is_valid_utf8("\xC0\xAF"));        // overlong
  EXPECT_FALSE(text::is_valid_utf8("\xED\xA0\x80"));    // surrogate
  EXPECT_FALSE(text::is_valid_utf8("\xF4\x90\x80\x80"));  // above U+10FFFF
}

TEST(Text, CodePointOffsets) {
  const std::string s = "Zo\xC3\xAB met S\xC3\xA3o";
  EXPECT_EQ(text::utf8_length(s), 11u);
  EXPECT_EQ(text::utf8_slice(s, 0, 3), "Zo\xC3\xAB");
  EXPECT_EQ(text::utf8_slice(s, 8, 11), "S\xC3\xA3o");
}

TEST(Text, WhitespaceHelpers) {
  EXPECT_EQ(text::trim("  a b \n"), "a b");
  EXPECT_EQ(text::collapse_whitespace(" a \t\n b  "), "a b");
  EXPECT_EQ(text::to_lower_ascii("AbC \xC3\x89"), "abc \xC3\x89");
  EXPECT_TRUE(text::contains_ci("Please UNSUBSCRIBE now", "unsubscribe"));
}

TEST(Text, CountsAgreeWithNaiveOracle) {
  SplitMix64 rng(5);
  const std::string alphabet = "ab .!?\n\t,";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const auto n = rng.below(40);
    for (std::size_t k = 0; k < n; ++k) s += alphabet[rng.below(alphabet.size())];
    ASSERT_EQ(text::count_words(s), oracle::words(s)) << '"' << s << '"';
    ASSERT_EQ(text::count_sentences(s), oracle::sentences(s)) << '"' << s << '"';
  }
}

TEST(Text, SentenceRules) {
  EXPECT_EQ(text::count_sentences(""), 0u);
  EXPECT_EQ(text::count_sentences("no terminator"), 1u);
  EXPECT_EQ(text::count_sentences("One. Two! Three?"), 3u);
  EXPECT_EQ(text::count_sentences("Wait... what?!"), 2u);
}

TEST(Rng, BelowStaysInRangeAndStreamsAreIndependentOfOrder) {
  SplitMix64 rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(rng.below(7), 7u);
  auto a = SplitMix64::for_index(9, 3);
  auto b = SplitMix64::for_index(9, 3);
  EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(SplitMix64::for_index(9, 3).next(), SplitMix64::for_index(9, 4).next());
}
