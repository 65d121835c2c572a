#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "genrefool/victim.hpp"
#include "oracles/oracles.hpp"

using namespace genrefool;

namespace {

NativeLinearVictim random_model(SplitMix64& rng, std::size_t features, std::size_t labels) {
  std::vector<std::string> vocab, names;
  for (std::size_t f = 0; f < features; ++f) vocab.push_back("f" + std::to_string(f));
  for (std::size_t l = 0; l < labels; ++l) names.push_back("L" + std::to_string(l));
  WeightMatrix w(labels, features + 1);
  for (auto& v : w.data) v = rng.normal();
  return NativeLinearVictim(names, FeatureExtractor::tfidf(vocab, std::vector<double>(features, 1.0), true), w, {});
}

std::vector<Example> random_batch(SplitMix64& rng, std::size_t features, std::size_t labels, std::size_t n) {
  std::vector<Example> batch;
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    for (std::size_t f = 0; f < features; ++f)
      if (rng.bernoulli(0.6)) {
        ex.x.index.push_back(static_cast<std::uint32_t>(f));
        ex.x.value.push_back(rng.normal());
      }
    ex.label = rng.below(labels);
    batch.push_back(ex);
  }
  return batch;
}

double max_rel_error(const WeightMatrix& a, const WeightMatrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double denom = std::max({std::abs(a.data[i]), std::abs(b.data[i]), 1e-6});
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / denom);
  }
  return worst;
}

Corpus shall_corpus() {
  Corpus c{LabelSet({"Legal", "Review"}), {}};
  const char* legal[] = {"the tenant shall pay rent", "you shall not pass", "it shall apply from today",
                         "parties shall agree in writing", "the court shall decide"};
  const char* review[] = {"the tenant was lovely", "you will not regret it", "it applies well today",
                          "parties were great fun", "the court looked nice"};
  for (int i = 0; i < 5; ++i) {
    c.docs.push_back({"l" + std::to_string(i), legal[i], "Legal", Split::train});
    c.docs.push_back({"r" + std::to_string(i), review[i], "Review", Split::train});
  }
  return c;
}

}  // namespace

TEST(Victim, ArgmaxFirstMaxAndDistribution) {
  EXPECT_EQ(argmax({0.2, 0.4, 0.4}), 1u);
  EXPECT_TRUE(is_distribution({0.5, 0.5}));
  EXPECT_FALSE(is_distribution({0.5, 0.6}));
  EXPECT_FALSE(is_distribution({1.5, -0.5}));
}

TEST(Victim, ConstantVictimIsConstant) {
  const auto v = ConstantVictim::uniform({"A", "B", "C", "D"});
  const std::vector<std::string> texts{"x", "", "something else"};
  for (const auto& p : v.predict_proba(texts)) EXPECT_EQ(p, ProbRow(4, 0.25));
  EXPECT_THROW(ConstantVictim({"A"}, {0.5, 0.5}), Error);
}

TEST(Victim, TfidfFeaturesMatchFormula) {
  const std::vector<std::string> texts{"a a b", "b c", "c c c d"};
  const auto fx = FeatureExtractor::fit_tfidf(texts, 100, true);
  // df: a=1, b=2, c=2, d=1; vocab sorted by df desc then word.
  EXPECT_EQ(fx.vocab(), (std::vector<std::string>{"b", "c", "a", "d"}));
  const double idf_a = std::log(4.0 / 2.0) + 1.0, idf_b = std::log(4.0 / 3.0) + 1.0;
  const auto f = fx("A a b zzz");
  ASSERT_EQ(f.index, (std::vector<std::uint32_t>{0, 2}));
  const double va = 2 * idf_a, vb = idf_b, n = std::sqrt(va * va + vb * vb);
  EXPECT_NEAR(f.value[0], vb / n, 1e-15);
  EXPECT_NEAR(f.value[1], va / n, 1e-15);
  EXPECT_EQ(FeatureExtractor::fit_tfidf(texts, 2, true).vocab(), (std::vector<std::string>{"b", "c"}));
}

TEST(Victim, LossMatchesIndependentFormula) {
  SplitMix64 rng(3);
  auto m = random_model(rng, 6, 4);
  const auto batch = random_batch(rng, 6, 4, 7);
  EXPECT_NEAR(m.loss(batch, 0.3), oracle::linear_loss(m.weights(), batch, 0.3), 1e-10);
}

TEST(Victim, GradientAtZeroClosedForm) {
  std::vector<std::string> vocab{"a", "b", "c"};
  NativeLinearVictim m({"X", "Y", "Z"}, FeatureExtractor::tfidf(vocab, {1, 1, 1}, true), WeightMatrix(3, 4), {});
  Example ex{{{0, 2}, {0.6, 0.8}}, 1};
  const auto g = m.gradient(std::span<const Example>(&ex, 1), 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    const double coeff = 1.0 / 3.0 - (r == 1 ? 1.0 : 0.0);
    EXPECT_NEAR(g.at(r, 0), coeff * 0.6, 1e-15);
    EXPECT_NEAR(g.at(r, 1), 0.0, 1e-15);
    EXPECT_NEAR(g.at(r, 2), coeff * 0.8, 1e-15);
    EXPECT_NEAR(g.at(r, 3), coeff, 1e-15);
  }
}

TEST(Victim, GradientMatchesFiniteDifferences) {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = random_model(rng, 5, 3);
    const auto batch = random_batch(rng, 5, 3, 1 + rng.below(6));
    const double l2 = trial % 2 ? 0.05 : 0.0;
    const auto g = m.gradient(batch, l2);
    WeightMatrix fd(g.rows, g.cols);
    const double h = 1e-5;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double keep = m.weights().data[i];
      m.mutable_weights().data[i] = keep + h;
      const double up = m.loss(batch, l2);
      m.mutable_weights().data[i] = keep - h;
      const double down = m.loss(batch, l2);
      m.mutable_weights().data[i] = keep;
      fd.data[i] = (up - down) / (2 * h);
    }
    EXPECT_LE(max_rel_error(g, fd), 1e-4) << "trial " << trial;
  }
}

TEST(Victim, DuplicateExampleDoublesGradient) {
  SplitMix64 rng(5);
  auto m = random_model(rng, 4, 3);
  const auto one = random_batch(rng, 4, 3, 1);
  const std::vector<Example> two{one[0], one[0]};
  const auto g1 = m.gradient(one, 0.0), g2 = m.gradient(two, 0.0);
  for (std::size_t i = 0; i < g1.data.size(); ++i) EXPECT_EQ(g2.data[i], 2.0 * g1.data[i]);
}

TEST(Victim, SeparableCorpusReachesFullAccuracy) {
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 4;
  const auto c = shall_corpus();
  const auto m = train_native(c, cfg);
  for (const auto& d : c.docs) EXPECT_EQ(m.labels()[argmax(m.predict_one(d.text))], d.label) << d.text;
}

TEST(Victim, ZeroEpochsIsUniform) {
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto m = train_native(shall_corpus(), cfg);
  const auto p = m.predict_one("the tenant shall pay");
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Victim, EmptyTextIsBiasOnlySoftmax) {
  SplitMix64 rng(8);
  const auto m = random_model(rng, 4, 3);
  ProbRow z;
  for (std::size_t r = 0; r < 3; ++r) z.push_back(m.weights().at(r, 4));
  softmax_inplace(z);
  const auto p = m.predict_one("");
  for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(p[r], z[r], 1e-15);
}

TEST(Victim, TrainingIsDeterministic) {
  TrainConfig cfg;
  cfg.seed = 12;
  const auto a = train_native(shall_corpus(), cfg);
  const auto b = train_native(shall_corpus(), cfg);
  EXPECT_EQ(a.weights(), b.weights());
  cfg.seed = 13;
  EXPECT_FALSE(train_native(shall_corpus(), cfg).weights() == a.weights());
}

TEST(Victim, TrainingErrors) {
  auto c = shall_corpus();
  c.labels = LabelSet({"Legal", "Review", "News"});
  EXPECT_THROW(train_native(c, {}), Error);
  TrainConfig wild;
  wild.learning_rate = 1e308;
  wild.momentum = 0.0;
  try {
    train_native(shall_corpus(), wild);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(Victim, SaveLoadIsBitExact) {
  TrainConfig cfg;
  cfg.seed = 4;
  const auto m = train_native(shall_corpus(), cfg);
  const auto path = (std::filesystem::temp_directory_path() / ("gf-model-" + std::to_string(::getpid()) + ".json")).string();
  m.save(path);
  const auto back = NativeLinearVictim::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.weights(), m.weights());
  EXPECT_EQ(back.labels(), m.labels());
  EXPECT_EQ(back.predict_one("you shall pay"), m.predict_one("you shall pay"));
}

TEST(Victim, MeanEmbeddingFeatures) {
  auto store = std::make_shared<const EmbeddingStore>(std::vector<std::string>{"shall", "lovely"},
                                                      std::vector<float>{1, 0, 0, 1}, 2);
  TrainConfig cfg;
  cfg.features = FeatureKind::embedding;
  cfg.epochs = 100;
  Corpus c{LabelSet({"Legal", "Review"}), {}};
  c.docs = {{"a", "shall shall", "Legal", Split::train}, {"b", "lovely", "Review", Split::train}};
  const auto m = train_native(c, cfg, store);
  EXPECT_EQ(argmax(m.predict_one("it shall")), 0u);
  EXPECT_EQ(argmax(m.predict_one("so lovely")), 1u);
  EXPECT_THROW(NativeLinearVictim::from_json(m.to_json()), Error);
  EXPECT_EQ(NativeLinearVictim::from_json(m.to_json(), store).weights(), m.weights());
}
