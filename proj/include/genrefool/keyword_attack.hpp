#pragma once

// Per-genre tf-idf keywords and the keyword-swap attack.
//
// Each genre is one pseudo-document (all its texts concatenated):
// tf is the within-genre count, idf = log(G / df) over the G genres.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "genrefool/corpus.hpp"
#include "genrefool/error.hpp"
#include "genrefool/rng.hpp"
#include "genrefool/text.hpp"
#include "genrefool/victim.hpp"

namespace genrefool {

struct Keyword {
  std::string word;
  double score = 0.0;
};

struct GenreKeywords {
  std::vector<std::string> genres;
  std::vector<std::vector<Keyword>> lists;  // parallel to genres

  std::optional<std::size_t> index_of(std::string_view genre) const {
    for (std::size_t i = 0; i < genres.size(); ++i)
      if (genres[i] == genre) return i;
    return std::nullopt;
  }
};

inline GenreKeywords extract_keywords(const Corpus& corpus, std::size_t top_m, const StopWordList& stop) {
  const std::size_t G = corpus.labels.size();
  std::vector<std::unordered_map<std::string, double>> tf(G);
  for (const auto& d : corpus.docs) {
    auto& counts = tf[corpus.label_index(d)];
    for (const auto& t : tokenize(d.text))
      if (t.is_word && !stop.contains(t.lower)) counts[t.lower] += 1.0;
  }
  std::vector<std::size_t> docs_per_genre = corpus.label_counts();
  for (std::size_t g = 0; g < G; ++g)
    if (docs_per_genre[g] == 0) throw Error("genre " + corpus.labels[g] + " has no documents");

  std::unordered_map<std::string, std::size_t> df;
  for (const auto& counts : tf)
    for (const auto& kv : counts) ++df[kv.first];

  GenreKeywords out;
  out.genres = corpus.labels.names();
  out.lists.resize(G);
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<Keyword> scored;
    for (const auto& [w, c] : tf[g]) {
      const double score = c * std::log(static_cast<double>(G) / static_cast<double>(df[w]));
      if (score > 0.0) scored.push_back({w, score});
    }
    std::sort(scored.begin(), scored.end(), [](const Keyword& a, const Keyword& b) {
      return a.score > b.score || (a.score == b.score && a.word < b.word);
    });
    if (scored.size() < top_m && top_m > 0)
      std::clog << "warning: genre " << out.genres[g] << " has only " << scored.size() << " keywords (asked for "
                << top_m << ")\n";
    if (scored.size() > top_m) scored.resize(top_m);
    out.lists[g] = std::move(scored);
  }
  return out;
}

// genre<TAB>rank<TAB>word<TAB>score, rank starting at 1.
inline void write_keywords_tsv(std::ostream& out, const GenreKeywords& kw) {
  for (std::size_t g = 0; g < kw.genres.size(); ++g)
    for (std::size_t r = 0; r < kw.lists[g].size(); ++r) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", kw.lists[g][r].score);
      out << kw.genres[g] << '\t' << r + 1 << '\t' << kw.lists[g][r].word << '\t' << buf << '\n';
    }
}

enum class SwapUnit { list, occurrence };

struct KeywordSwapConfig {
  double percent = 100.0;
  std::uint64_t seed = 0;
  SwapUnit unit = SwapUnit::list;
};

struct KeywordSwap {
  std::string text;
  struct Edit {
    std::size_t token_index;
    std::string original;
    std::string replacement;
  };
  std::vector<Edit> edits;
};

// Number of list entries (or occurrences) covered by `percent`.
inline std::size_t keyword_quota(double percent, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(percent * static_cast<double>(n) / 100.0 - 1e-9));
}

// List mode: the top ceil(percent * |list| / 100) keywords of the genre are
// selected and every occurrence of each is replaced. Each selected keyword
// draws one replacement: a uniformly chosen other genre with a non-empty
// list, then a uniform keyword from that genre's list.
// Occurrence mode: among the tokens matching any keyword of the genre,
// a seeded ceil(percent * count / 100) subset is replaced, one draw per token.
inline KeywordSwap keyword_swap(std::string_view text, const std::string& from_genre, const GenreKeywords& keywords,
                                const KeywordSwapConfig& config) {
  if (!(config.percent > 0.0 && config.percent <= 100.0)) throw Error("swap percent must be in (0, 100]");
  const auto from = keywords.index_of(from_genre);
  if (!from) throw Error("no keywords for genre " + from_genre);

  std::vector<std::size_t> donors;
  for (std::size_t g = 0; g < keywords.genres.size(); ++g)
    if (g != *from && !keywords.lists[g].empty()) donors.push_back(g);

  KeywordSwap out;
  const auto tokens = tokenize(text);
  const auto& list = keywords.lists[*from];
  if (donors.empty() || list.empty()) {
    out.text = std::string(text);
    return out;
  }

  SplitMix64 rng(config.seed);
  auto draw = [&]() -> const std::string& {
    const auto g = donors[rng.below(donors.size())];
    const auto& l = keywords.lists[g];
    return l[rng.below(l.size())].word;
  };

  std::vector<std::pair<std::size_t, std::string>> chosen;  // token index -> replacement (lowercase)
  if (config.unit == SwapUnit::list) {
    const std::size_t n = std::min(keyword_quota(config.percent, list.size()), list.size());
    std::unordered_map<std::string, std::string> mapping;
    for (std::size_t i = 0; i < n; ++i) mapping.emplace(list[i].word, draw());
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i].is_word)
        if (auto it = mapping.find(tokens[i].lower); it != mapping.end()) chosen.emplace_back(i, it->second);
  } else {
    std::unordered_set<std::string> all;
    for (const auto& k : list) all.insert(k.word);
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i].is_word && all.count(tokens[i].lower)) hits.push_back(i);
    shuffle(std::span<std::size_t>(hits), rng);
    hits.resize(std::min(hits.size(), keyword_quota(config.percent, hits.size())));
    std::sort(hits.begin(), hits.end());
    for (auto i : hits) chosen.emplace_back(i, draw());
  }

  std::vector<TokenEdit> edits;
  for (const auto& [i, repl] : chosen) {
    const std::string surface = match_case(tokens[i].surface, repl);
    edits.push_back({i, surface});
    out.edits.push_back({i, tokens[i].surface, surface});
  }
  out.text = replace_tokens(text, tokens, std::move(edits));
  return out;
}

struct SweepRow {
  double percent = 0.0;
  std::size_t attacked = 0;  // correctly classified documents
  std::size_t broken = 0;
  double broken_pct() const noexcept {
    return attacked == 0 ? 0.0 : 100.0 * static_cast<double>(broken) / static_cast<double>(attacked);
  }
};

struct SweepResult {
  std::vector<SweepRow> rows;
  bool partial = false;
  std::string error;
};

// Per-document seeds come from the document id, so results do not depend on
// corpus order.
inline std::uint64_t document_seed(std::uint64_t seed, std::string_view doc_id) noexcept {
  return derive_seed(seed, fnv1a(doc_id));
}

inline SweepResult keyword_attack_sweep(const Corpus& corpus, const VictimModel& victim, const GenreKeywords& keywords,
                                        const std::vector<double>& percents, std::uint64_t seed,
                                        SwapUnit unit = SwapUnit::list) {
  for (const auto& l : corpus.labels.names())
    if (std::find(victim.labels().begin(), victim.labels().end(), l) == victim.labels().end())
      throw Error("victim does not know label " + l);
  SweepResult res;
  for (double p : percents) res.rows.push_back({p, 0, 0});
  try {
    for (const auto& d : corpus.docs) {
      const auto gold = static_cast<std::size_t>(
          std::find(victim.labels().begin(), victim.labels().end(), d.label) - victim.labels().begin());
      if (argmax(victim.predict_one(d.text)) != gold) continue;
      for (auto& row : res.rows) {
        ++row.attacked;
        const auto swapped = keyword_swap(d.text, d.label, keywords, {row.percent, document_seed(seed, d.id), unit});
        if (argmax(victim.predict_one(swapped.text)) != gold) ++row.broken;
      }
    }
  } catch (const Error& e) {
    res.partial = true;
    res.error = e.what();
  }
  return res;
}

// percent,attacked,broken,broken_pct
inline void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << "percent,attacked,broken,broken_pct\n";
  for (const auto& row : r.rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%g,%zu,%zu,%.2f\n", row.percent, row.attacked, row.broken, row.broken_pct());
    out << buf;
  }
}

}  // namespace genrefool
