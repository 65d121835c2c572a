#pragma once

// Synthetic genre corpora with a controllable topical bias, plus a matching
// word-vector file.
//
// Every genre has three sources of words:
//   function words  shared English stop words, drawn from a genre-specific
//                   frequency profile (the stylistic signal);
//   style words     pseudo-words owned by one genre. Style word j of every
//                   genre sits in the same synonym set j, so its embedding
//                   neighbors are the matching style words of other genres;
//   topic words     pseudo-words of one topic pool, clustered per topic
//                   around a shared centre. Genre g prefers topic g with
//                   probability `bias`, otherwise it draws a topic uniformly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "genrefool/corpus.hpp"
#include "genrefool/embeddings.hpp"
#include "genrefool/error.hpp"
#include "genrefool/rng.hpp"

namespace genrefool {

struct SyntheticBiasSpec {
  std::size_t genres = 10;
  std::size_t docs_per_genre = 60;
  std::size_t test_docs_per_genre = 20;
  std::size_t style_words_per_genre = 20;
  std::size_t topic_words_per_topic = 15;
  double bias = 0.9;
  std::size_t min_length = 40;
  std::size_t max_length = 80;
  double function_share = 0.45;
  double style_share = 0.15;  // the rest are topic words
  double register_spread = 1.2;  // log-scale spread of per-genre class usage
  double function_spread = 0.3;  // per-word spread within a class
  double function_noise = 0.3;   // embedding distance of a word from its class centre
  std::size_t dim = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (genres < 2) throw Error("need at least 2 genres");
    if (docs_per_genre == 0) throw Error("docs per genre must be positive");
    if (!(bias >= 0.0 && bias <= 1.0)) throw Error("bias must lie in [0, 1]");
    if (min_length == 0 || min_length > max_length) throw Error("bad document length range");
    if (function_share < 0.0 || style_share < 0.0 || function_share + style_share > 1.0)
      throw Error("word-source shares must be non-negative and sum to at most 1");
    if (dim < 2) throw Error("embedding dimension must be at least 2");
    if (style_words_per_genre == 0 || topic_words_per_topic == 0) throw Error("word pools must be non-empty");
    if (register_spread < 0.0 || function_spread < 0.0 || function_noise < 0.0)
      throw Error("spreads must be non-negative");
  }
};

struct SyntheticData {
  Corpus corpus;
  std::vector<std::string> function_words;
  std::vector<std::vector<std::string>> style_words;  // [genre][synonym set]
  std::vector<std::vector<std::string>> topic_words;  // [topic][rank]
  std::vector<std::string> vocab;                     // embedding rows
  std::vector<float> vectors;                         // row-major vocab x dim, 6-decimal values
  std::size_t dim = 0;

  EmbeddingStore store() const { return EmbeddingStore(vocab, vectors, dim); }
};

// Function words in four register classes (prepositions, auxiliaries,
// modals and connectives, pronouns). Genres differ in how much they use
// each class; class members sit close together in the embedding space.
inline const std::vector<std::vector<std::string>>& synthetic_function_classes() {
  static const std::vector<std::vector<std::string>> classes = {
      {"the", "of", "to", "in", "for", "with", "on", "by", "at", "from"},
      {"is", "was", "be", "are", "have", "been", "has", "will", "would", "could"},
      {"and", "that", "as", "or", "but", "not", "should", "may", "must", "shall"},
      {"it", "this", "we", "you", "they", "our", "their", "which", "there", "he"}};
  return classes;
}

inline const std::vector<std::string>& synthetic_function_words() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w;
    for (const auto& c : synthetic_function_classes()) w.insert(w.end(), c.begin(), c.end());
    return w;
  }();
  return words;
}

namespace detail {

inline std::string pseudo_word(SplitMix64& rng) {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  std::string w;
  const std::size_t syllables = 2 + rng.below(2);
  for (std::size_t s = 0; s < syllables; ++s) {
    w.push_back(consonants[rng.below(consonants.size())]);
    w.push_back(vowels[rng.below(vowels.size())]);
  }
  if (rng.bernoulli(0.5)) w.push_back(consonants[rng.below(consonants.size())]);
  return w;
}

inline std::vector<double> gaussian(SplitMix64& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal() / std::sqrt(static_cast<double>(dim));
  return v;
}

inline std::size_t sample_weighted(SplitMix64& rng, const std::vector<double>& cumulative) {
  const double u = rng.unit() * cumulative.back();
  return static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
}

inline std::vector<double> cumulative(const std::vector<double>& w) {
  std::vector<double> c(w.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) c[i] = (s += w[i]);
  return c;
}

inline float round6(double x) { return static_cast<float>(std::round(x * 1e6) / 1e6); }

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticBiasSpec& spec) {
  spec.validate();
  SyntheticData out;
  out.dim = spec.dim;
  const std::size_t G = spec.genres;

  std::vector<std::string> names;
  const auto ftd = LabelSet::ftd();
  for (std::size_t g = 0; g < G; ++g) names.push_back(g < ftd.size() ? ftd[g] : "Genre" + std::to_string(g + 1));
  out.corpus.labels = LabelSet(names);

  // Vocabulary and embeddings come from their own streams so that the bias
  // setting changes only the documents.
  SplitMix64 words_rng(derive_seed(spec.seed, 1));
  SplitMix64 vec_rng(derive_seed(spec.seed, 2));
  SplitMix64 profile_rng(derive_seed(spec.seed, 3));

  std::set<std::string> used(synthetic_function_words().begin(), synthetic_function_words().end());
  auto fresh = [&]() {
    for (;;) {
      auto w = detail::pseudo_word(words_rng);
      if (used.insert(w).second) return w;
    }
  };
  out.function_words = synthetic_function_words();
  out.style_words.assign(G, {});
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t j = 0; j < spec.style_words_per_genre; ++j) out.style_words[g].push_back(fresh());
  out.topic_words.assign(G, {});
  for (std::size_t t = 0; t < G; ++t)
    for (std::size_t j = 0; j < spec.topic_words_per_topic; ++j) out.topic_words[t].push_back(fresh());

  const std::size_t D = spec.dim;
  auto emit = [&](const std::string& w, const std::vector<double>& v) {
    out.vocab.push_back(w);
    for (double x : v) out.vectors.push_back(detail::round6(x));
  };
  for (const auto& cls : synthetic_function_classes()) {
    const auto centre = detail::gaussian(vec_rng, D);
    for (const auto& w : cls) {
      const auto noise = detail::gaussian(vec_rng, D);
      std::vector<double> v(D);
      for (std::size_t d = 0; d < D; ++d) v[d] = centre[d] + spec.function_noise * noise[d];
      emit(w, v);
    }
  }

  std::vector<std::vector<double>> synonym_base, genre_offset;
  for (std::size_t j = 0; j < spec.style_words_per_genre; ++j) synonym_base.push_back(detail::gaussian(vec_rng, D));
  for (std::size_t g = 0; g < G; ++g) genre_offset.push_back(detail::gaussian(vec_rng, D));
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t j = 0; j < spec.style_words_per_genre; ++j) {
      const auto noise = detail::gaussian(vec_rng, D);
      std::vector<double> v(D);
      for (std::size_t d = 0; d < D; ++d) v[d] = synonym_base[j][d] + 0.35 * genre_offset[g][d] + 0.1 * noise[d];
      emit(out.style_words[g][j], v);
    }

  const auto centre = detail::gaussian(vec_rng, D);
  for (std::size_t t = 0; t < G; ++t) {
    const auto topic_dir = detail::gaussian(vec_rng, D);
    for (std::size_t j = 0; j < spec.topic_words_per_topic; ++j) {
      const auto noise = detail::gaussian(vec_rng, D);
      std::vector<double> v(D);
      for (std::size_t d = 0; d < D; ++d) v[d] = centre[d] + 0.5 * topic_dir[d] + 0.25 * noise[d];
      emit(out.topic_words[t][j], v);
    }
  }

  // Genre-specific function-word profiles: a log-normal weight per class
  // times a smaller per-word factor.
  std::vector<std::vector<double>> function_cdf;
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<double> w;
    for (const auto& cls : synthetic_function_classes()) {
      const double level = spec.register_spread * profile_rng.normal();
      for (std::size_t i = 0; i < cls.size(); ++i) w.push_back(std::exp(level + spec.function_spread * profile_rng.normal()));
    }
    function_cdf.push_back(detail::cumulative(w));
  }
  std::vector<double> zipf;
  for (std::size_t j = 0; j < spec.topic_words_per_topic; ++j) zipf.push_back(1.0 / static_cast<double>(j + 1));
  const auto topic_cdf = detail::cumulative(zipf);

  SplitMix64 doc_rng(derive_seed(spec.seed, 4));
  auto make_doc = [&](std::size_t g) {
    const std::size_t topic = doc_rng.bernoulli(spec.bias) ? g : static_cast<std::size_t>(doc_rng.below(G));
    const std::size_t len = spec.min_length + doc_rng.below(spec.max_length - spec.min_length + 1);
    std::string text;
    std::size_t until_stop = 8 + doc_rng.below(7);
    bool capital = true;
    for (std::size_t i = 0; i < len; ++i) {
      const double u = doc_rng.unit();
      std::string w;
      if (u < spec.function_share) {
        w = out.function_words[detail::sample_weighted(doc_rng, function_cdf[g])];
      } else if (u < spec.function_share + spec.style_share) {
        w = out.style_words[g][doc_rng.below(spec.style_words_per_genre)];
      } else {
        w = out.topic_words[topic][detail::sample_weighted(doc_rng, topic_cdf)];
      }
      if (capital) {
        w[0] = static_cast<char>(w[0] - 'a' + 'A');
        capital = false;
      }
      if (!text.empty()) text.push_back(' ');
      text += w;
      if (--until_stop == 0 || i + 1 == len) {
        text.push_back('.');
        until_stop = 8 + doc_rng.below(7);
        capital = true;
      }
    }
    return text;
  };

  std::size_t counter = 0;
  auto add_docs = [&](std::size_t per_genre, Split split, const char* prefix) {
    // Interleave genres so corpus order carries no label structure.
    for (std::size_t i = 0; i < per_genre; ++i)
      for (std::size_t g = 0; g < G; ++g) {
        Document d;
        d.id = std::string(prefix) + std::to_string(++counter);
        d.label = names[g];
        d.split = split;
        d.text = make_doc(g);
        out.corpus.docs.push_back(std::move(d));
      }
  };
  add_docs(spec.docs_per_genre, Split::train, "syn-");
  add_docs(spec.test_docs_per_genre, Split::test, "syn-test-");
  return out;
}

}  // namespace genrefool
