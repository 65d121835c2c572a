#include <gtest/gtest.h>

#include <sstream>

#include "genrefool/stopwords.hpp"
#include "genrefool/text.hpp"

using namespace genrefool;

namespace {

std::vector<std::string> surfaces(const std::vector<Token>& toks) {
  std::vector<std::string> out;
  for (const auto& t : toks) out.push_back(t.surface);
  return out;
}

}  // namespace

TEST(Tokenize, WordsAndPunctuation) {
  const std::string text = "you should try.";
  const auto toks = tokenize(text);
  EXPECT_EQ(surfaces(toks), (std::vector<std::string>{"you", "should", "try", "."}));
  EXPECT_TRUE(toks[2].is_word);
  EXPECT_FALSE(toks[3].is_word);
  for (const auto& t : toks) EXPECT_EQ(text.substr(t.start, t.end - t.start), t.surface);
}

TEST(Tokenize, CurrencyAndDigitsAreNotWords) {
  const auto toks = tokenize("£5 per year");
  ASSERT_EQ(surfaces(toks), (std::vector<std::string>{"£", "5", "per", "year"}));
  EXPECT_FALSE(toks[0].is_word);
  EXPECT_FALSE(toks[1].is_word);
  EXPECT_TRUE(toks[2].is_word);
}

TEST(Tokenize, InternalApostropheStaysInWord) {
  const auto toks = tokenize("don't");
  ASSERT_EQ(toks.size(), 1u);
  EXPECT_EQ(toks[0].surface, "don't");
  EXPECT_TRUE(toks[0].is_word);
  EXPECT_EQ(surfaces(tokenize("dogs' ")), (std::vector<std::string>{"dogs", "'"}));
}

TEST(Tokenize, EmptyAndCyrillic) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("   \n").empty());
  const auto toks = tokenize("Суд постановил: ДА.");
  ASSERT_EQ(toks.size(), 5u);
  EXPECT_EQ(toks[0].lower, "суд");
  EXPECT_EQ(toks[3].lower, "да");
  EXPECT_EQ(count_words(toks), 3u);
}

TEST(Tokenize, SpansReconstructInput) {
  const std::string text = "  Hello,  world!\tIt's 2024 — fine…";
  const auto toks = tokenize(text);
  std::string rebuilt;
  std::size_t pos = 0;
  for (const auto& t : toks) {
    for (; pos < t.start; ++pos) EXPECT_TRUE(text[pos] == ' ' || text[pos] == '\t');
    rebuilt += text.substr(t.start, t.end - t.start);
    pos = t.end;
  }
  EXPECT_EQ(rebuilt, "Hello,world!It's2024—fine…");
}

TEST(ReplaceTokens, SingleEdit) {
  EXPECT_EQ(replace_tokens("this charity is owned", {{0, "that"}}), "that charity is owned");
}

TEST(ReplaceTokens, EmptyEditSetIsIdentity) {
  const std::string text = "Odd  spacing ,kept\n";
  EXPECT_EQ(replace_tokens(text, {}), text);
}

TEST(ReplaceTokens, TwoEditsPreserveEverythingElse) {
  const std::string text = "you  should try, please.";
  const auto out = replace_tokens(text, {{4, "yes"}, {1, "ought"}});
  EXPECT_EQ(out, "you  ought try, yes.");
  const auto before = tokenize(text), after = tokenize(out);
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i)
    if (i != 1 && i != 4) EXPECT_EQ(before[i].surface, after[i].surface);
}

TEST(ReplaceTokens, Errors) {
  EXPECT_THROW(replace_tokens("a b", {{2, "x"}}), Error);
  EXPECT_THROW(replace_tokens("a b", {{0, "x"}, {0, "y"}}), Error);
  EXPECT_THROW(replace_tokens("a b", {{0, ""}}), Error);
}

TEST(DeleteToken, RemovesOneAdjacentSpace) {
  const std::string text = "one two three";
  const auto toks = tokenize(text);
  EXPECT_EQ(delete_token(text, toks[0]), "two three");
  EXPECT_EQ(delete_token(text, toks[1]), "one three");
  EXPECT_EQ(delete_token(text, toks[2]), "one two");
  const std::string punct = "end.";
  EXPECT_EQ(delete_token(punct, tokenize(punct)[0]), ".");
}

TEST(MatchCase, Patterns) {
  EXPECT_EQ(match_case("This", "that"), "That");
  EXPECT_EQ(match_case("USA", "america"), "AMERICA");
  EXPECT_EQ(match_case("said", "stating"), "stating");
  EXPECT_EQ(match_case("I", "we"), "We");
  EXPECT_EQ(match_case("Суд", "закон"), "Закон");
  EXPECT_EQ(match_case("ДОГОВОР", "закон"), "ЗАКОН");
}

TEST(CaseMapping, RoundTripsAsciiLatinCyrillic) {
  EXPECT_EQ(to_lower("ÀÉÎÕÜ Ÿ ЁЖИК"), "àéîõü ÿ ёжик");
  EXPECT_EQ(to_upper("àéîõü ÿ ёжик"), "ÀÉÎÕÜ Ÿ ЁЖИК");
}

TEST(StopWords, ParseAndBuiltins) {
  std::istringstream in("# comment\nThe\n\n  of  \nand # trailing\n");
  const auto s = parse_stopwords(in, "test");
  EXPECT_EQ(s.size(), 3u);
  EXPECT_TRUE(s.contains("the"));
  EXPECT_TRUE(s.contains("and"));
  EXPECT_FALSE(s.contains("The"));

  const auto en = builtin_stopwords("en");
  EXPECT_TRUE(en.contains("shall"));
  EXPECT_TRUE(en.contains("the"));
  EXPECT_FALSE(en.contains("court"));
  const auto ru = builtin_stopwords("ru");
  EXPECT_TRUE(ru.contains("и"));
  EXPECT_EQ(builtin_stopwords("xx").size(), 0u);
}
