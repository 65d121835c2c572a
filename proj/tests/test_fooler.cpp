#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "genrefool/fooler.hpp"
#include "oracles/instances.hpp"
#include "oracles/oracles.hpp"

using namespace genrefool;

namespace {

// Words placed on the unit circle at the given angles (degrees), so cosine
// similarities are cos(angle difference).
EmbeddingStore circle_store(const std::vector<std::pair<std::string, double>>& words) {
  std::vector<std::string> w;
  std::vector<float> v;
  for (const auto& [word, deg] : words) {
    w.push_back(word);
    v.push_back(static_cast<float>(std::cos(deg * M_PI / 180.0)));
    v.push_back(static_cast<float>(std::sin(deg * M_PI / 180.0)));
  }
  return EmbeddingStore(w, v, 2);
}

FilterConfig loose() {
  FilterConfig f;
  f.word_sim_min = -1.0;
  f.sent_sim_min = -1.0;
  return f;
}

}  // namespace

TEST(Importance, ConstantVictimGivesZeros) {
  const auto v = ConstantVictim({"A", "B"}, {0.6, 0.4});
  const auto scores = importance_scores("one two three", "A", v, {});
  ASSERT_EQ(scores.size(), 3u);
  for (const auto& s : scores) EXPECT_EQ(s.score, 0.0);
  EXPECT_EQ(scores[0].token_index, 0u);  // ties keep token order
  EXPECT_EQ(scores[2].token_index, 2u);
}

TEST(Importance, FlipAddsNewClassGain) {
  const double w = std::log(9.0) + std::log(7.0 / 3.0);
  oracle::BowVictim v({"Legal", "Review"}, {{"shall", {w, 0.0}}}, {0.0, std::log(7.0 / 3.0)});
  const auto scores = importance_scores("you shall", "Legal", v, {});
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_EQ(scores[0].token_index, 1u);
  EXPECT_NEAR(scores[0].score, (0.9 - 0.3) + (0.7 - 0.1), 1e-12);
  EXPECT_NEAR(scores[1].score, 0.0, 1e-15);  // "you" is never read
}

TEST(Importance, RequiresPredictedReference) {
  const auto v = ConstantVictim({"A", "B"}, {0.6, 0.4});
  EXPECT_THROW(importance_scores("x y", "B", v, {}), Error);
  EXPECT_THROW(importance_scores("x y", "Q", v, {}), Error);
}

TEST(Importance, MatchesOracleOnRandomDocuments) {
  const auto world = oracle::make_tiny_world(21, 30);
  SplitMix64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto doc = world.random_doc(rng, 1, 8);
    const auto want = oracle::importance(doc, *world.victim);
    const std::size_t y = oracle::first_argmax(world.victim->probs(doc));
    const auto got = importance_scores(doc, world.labels[y], *world.victim, {});
    ASSERT_EQ(got.size(), want.size());
    for (const auto& s : got) EXPECT_NEAR(s.score, want[s.token_index], 1e-12);
    for (std::size_t j = 1; j < got.size(); ++j) EXPECT_GE(got[j - 1].score, got[j].score);
  }
}

TEST(Importance, StopWordsSkippedWhenDisabled) {
  const auto v = ConstantVictim({"A", "B"}, {0.6, 0.4});
  FilterConfig f;
  f.attack_stopwords = false;
  const StopWordList stop({"the"}, "t");
  const auto scores = importance_scores("The cat, the hat", "A", v, f, &stop);
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_EQ(scores[0].token_index, 1u);
  EXPECT_EQ(scores[1].token_index, 4u);
}

TEST(Candidates, ThresholdSelfAndOrder) {
  const auto store = circle_store({{"should", 0}, {"ought", 20}, {"need", 40}, {"banana", 80}, {"zebra", 170}});
  AttackResources res{&store};
  FilterConfig f;
  const auto c = candidates("Should", res, f);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].word, "ought");
  EXPECT_EQ(c[1].word, "need");
  EXPECT_NEAR(c[0].similarity, std::cos(20 * M_PI / 180), 1e-6);

  f.word_sim_min = 0.99;
  EXPECT_TRUE(candidates("should", res, f).empty());
  EXPECT_TRUE(candidates("unknownword", res, {}).empty());
}

TEST(Candidates, PosFilter) {
  const auto store = circle_store({{"court", 0}, {"judge", 10}, {"rule", 20}, {"tribunal", 30}});
  std::istringstream lex("court\tNOUN\njudge\tNOUN\nrule\tVERB\n");
  const auto pos = PosLexicon::parse(lex);
  AttackResources res{&store, nullptr, nullptr, nullptr, &pos};
  FilterConfig f;
  f.pos_filter = true;
  std::vector<std::string> got;
  for (const auto& c : candidates("court", res, f)) got.push_back(c.word);
  EXPECT_EQ(got, (std::vector<std::string>{"judge", "tribunal"}));  // unknown tags pass
  f.pos_filter = false;
  EXPECT_EQ(candidates("court", res, f).size(), 3u);
}

TEST(Candidates, MultiTokenNeighborsDropped) {
  const auto store = circle_store({{"fine", 0}, {"well-being", 5}, {"good", 10}, {"ok.", 12}});
  AttackResources res{&store};
  std::vector<std::string> got;
  for (const auto& c : candidates("fine", res, {})) got.push_back(c.word);
  EXPECT_EQ(got, (std::vector<std::string>{"good"}));
}

TEST(Attack, OneWordFlip) {
  const auto store = circle_store({{"buy", 0}, {"think", 10}});
  oracle::BowVictim v({"Promotion", "Argument"}, {{"buy", {2, 0}}, {"think", {0, 2}}}, {0, 0});
  AttackResources res{&store};
  const auto r = attack_untargeted({"d1", "Buy", "Promotion", Split::train}, v, res, loose());
  EXPECT_EQ(r.status, AttackStatus::success);
  ASSERT_EQ(r.replacements.size(), 1u);
  EXPECT_EQ(r.replacements[0].replacement, "Think");
  EXPECT_EQ(r.final_text, "Think");
  EXPECT_EQ(r.final_label, "Argument");
  EXPECT_EQ(r.victim_queries, 3u);  // original, one deletion, one candidate
}

TEST(Attack, PromotionParagraphThisToThat) {
  const auto store = circle_store({{"this", 0}, {"that", 15}, {"charity", 90}, {"owned", 150}, {"is", 200}});
  oracle::BowVictim v({"Promotion", "Argument"}, {{"this", {1.0, 0}}, {"that", {0, 1.0}}, {"charity", {0.5, 0}}},
                      {0, 0.2});
  AttackResources res{&store};
  FilterConfig f;
  f.sent_sim_min = 0.0;
  MeanEmbeddingScorer scorer(store);
  res.scorer = &scorer;
  const auto r = attack_untargeted({"p", "this charity is owned", "Promotion", Split::train}, v, res, f);
  ASSERT_EQ(r.status, AttackStatus::success);
  ASSERT_EQ(r.replacements.size(), 1u);
  EXPECT_EQ(r.replacements[0].original, "this");
  EXPECT_EQ(r.replacements[0].replacement, "that");
  EXPECT_EQ(r.final_text, "that charity is owned");
  EXPECT_EQ(r.final_label, "Argument");
}

TEST(Attack, TargetedOneWord) {
  const auto store = circle_store({{"buy", 0}, {"think", 10}});
  oracle::BowVictim v({"Promotion", "Argument"}, {{"buy", {2, 0}}, {"think", {0, 2}}}, {0, 0});
  AttackResources res{&store};
  const auto r = attack_targeted({"d", "buy", "Argument", Split::train}, v, res, loose());
  EXPECT_EQ(r.status, AttackStatus::success);
  EXPECT_EQ(r.final_label, "Argument");
  const auto na = attack_targeted({"d", "buy", "Promotion", Split::train}, v, res, loose());
  EXPECT_EQ(na.status, AttackStatus::not_attackable);
  EXPECT_EQ(na.victim_queries, 1u);
}

TEST(Attack, ConstantVictimNeverSucceeds) {
  const auto store = circle_store({{"a", 0}, {"b", 10}, {"c", 20}});
  const auto v = ConstantVictim({"X", "Y"}, {0.7, 0.3});
  AttackResources res{&store};
  const auto r = attack_untargeted({"d", "a b c", "X", Split::train}, v, res, loose());
  EXPECT_EQ(r.status, AttackStatus::failure);
  EXPECT_EQ(r.final_label, "X");
  EXPECT_EQ(r.replacements.size(), 3u);  // each committed, none flips
}

TEST(Attack, SentenceFilterBlocksCandidates) {
  const auto store = circle_store({{"buy", 0}, {"think", 80}});
  oracle::BowVictim v({"Promotion", "Argument"}, {{"buy", {2, 0}}, {"think", {0, 2}}}, {0, 0});
  MeanEmbeddingScorer scorer(store);
  AttackResources res{&store, nullptr, &scorer};
  FilterConfig f;
  f.word_sim_min = 0.0;
  f.sent_sim_min = 0.5;  // cos 80deg = 0.17
  EXPECT_EQ(attack_untargeted({"d", "buy", "Promotion", Split::train}, v, res, f).status, AttackStatus::failure);
  f.sent_sim_min = 0.1;
  EXPECT_EQ(attack_untargeted({"d", "buy", "Promotion", Split::train}, v, res, f).status, AttackStatus::success);
}

TEST(Attack, BudgetLimitsReplacements) {
  EXPECT_EQ(replacement_budget({}, 7), 7u);
  FilterConfig f;
  f.max_replaced_fraction = 0.25;
  EXPECT_EQ(replacement_budget(f, 7), 2u);
  EXPECT_EQ(replacement_budget(f, 8), 2u);
  const auto store = circle_store({{"a", 0}, {"b", 10}, {"c", 20}, {"d", 30}});
  const auto v = ConstantVictim({"X", "Y"}, {0.7, 0.3});
  AttackResources res{&store};
  auto g = loose();
  g.max_replaced_fraction = 0.25;
  EXPECT_EQ(attack_untargeted({"d", "a b c d", "X", Split::train}, v, res, g).replacements.size(), 1u);
}

TEST(Attack, JsonRoundTrip) {
  const auto store = circle_store({{"buy", 0}, {"think", 10}});
  oracle::BowVictim v({"Promotion", "Argument"}, {{"buy", {2, 0}}, {"think", {0, 2}}}, {0, 0});
  AttackResources res{&store};
  auto r = attack_untargeted({"d1", "Buy now", "Promotion", Split::train}, v, res, loose());
  EXPECT_EQ(attack_result_from_json(to_json(r)), r);
  r.replacements[0].similarity.reset();
  const auto j = to_json(r);
  EXPECT_TRUE(j["replacements"][0]["similarity"].is_null());
  EXPECT_EQ(attack_result_from_json(j), r);
  auto bad = j;
  bad["schema_version"] = 99;
  EXPECT_THROW(attack_result_from_json(bad), ParseError);
}

// Small-scale version of the greedy-vs-exhaustive check.
TEST(Attack, GreedySuccessesAreReachable) {
  const auto world = oracle::make_tiny_world(77, 25);
  SplitMix64 rng(9);
  AttackResources res{world.store.get()};
  auto f = loose();
  f.k = 3;
  int successes = 0;
  for (int i = 0; i < 60; ++i) {
    const auto text = world.random_doc(rng, 1, 5);
    const std::size_t pred = oracle::first_argmax(world.victim->probs(text));
    const auto r = attack_untargeted({"x", text, world.labels[pred], Split::train}, *world.victim, res, f);
    EXPECT_EQ(world.labels[oracle::first_argmax(world.victim->probs(r.final_text))], r.final_label);
    if (!r.success()) continue;
    ++successes;
    const auto words = oracle::split_spaces(text);
    std::vector<std::vector<std::string>> cands;
    for (const auto& w : words) cands.push_back(oracle::candidate_words(*world.store, w, 3, -1.0));
    EXPECT_TRUE(oracle::reachable(words, cands, words.size(), *world.victim,
                                  [&](const ProbRow& p) { return oracle::first_argmax(p) != pred; }));
  }
  EXPECT_GT(successes, 0);
}
