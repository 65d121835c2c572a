#pragma once

// Importance-ranked embedding-substitution attack (a TextFooler variant
// that may also replace stop words).
//
// Words are ranked once, on the original text, by how much deleting them
// moves the victim. Walking that ranking, each word's embedding neighbors
// are tried on the current working text; the first candidate that reaches
// the goal label wins, otherwise the candidate that moves the gold
// probability furthest in the goal direction is committed and the walk
// continues.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "genrefool/embeddings.hpp"
#include "genrefool/error.hpp"
#include "genrefool/text.hpp"
#include "genrefool/victim.hpp"

namespace genrefool {

enum class AttackMode { untargeted, targeted };

inline const char* to_string(AttackMode m) noexcept { return m == AttackMode::untargeted ? "untargeted" : "targeted"; }

inline std::optional<AttackMode> parse_attack_mode(std::string_view s) {
  if (s == "untargeted") return AttackMode::untargeted;
  if (s == "targeted") return AttackMode::targeted;
  return std::nullopt;
}

struct FilterConfig {
  std::size_t k = 15;
  double word_sim_min = 0.5;
  double sent_sim_min = 0.84;
  bool pos_filter = false;
  bool attack_stopwords = true;
  double max_replaced_fraction = 1.0;

  void validate() const {
    if (k < 1) throw Error("k must be at least 1");
    if (word_sim_min < -1.0 || word_sim_min > 1.0) throw Error("word similarity threshold must lie in [-1, 1]");
    if (sent_sim_min < -1.0 || sent_sim_min > 1.0) throw Error("sentence similarity threshold must lie in [-1, 1]");
    if (!(max_replaced_fraction > 0.0 && max_replaced_fraction <= 1.0))
      throw Error("replacement budget must lie in (0, 1]");
  }
};

// word<TAB>TAG per line; tags are coarse (NOUN, VERB, ...).
class PosLexicon {
 public:
  PosLexicon() = default;
  explicit PosLexicon(std::unordered_map<std::string, std::string> tags) : tags_(std::move(tags)) {}

  static PosLexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open POS lexicon " + path);
    return parse(in);
  }

  static PosLexicon parse(std::istream& in) {
    std::unordered_map<std::string, std::string> tags;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError("line " + std::to_string(line_no) + ": expected word<TAB>tag");
      tags.emplace(to_lower(trim(std::string_view(line).substr(0, tab))),
                   std::string(trim(std::string_view(line).substr(tab + 1))));
    }
    return PosLexicon(std::move(tags));
  }

  std::optional<std::string> tag(std::string_view word) const {
    auto it = tags_.find(std::string(word));
    if (it == tags_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::unordered_map<std::string, std::string> tags_;
};

struct ImportanceScore {
  std::size_t token_index = 0;
  double score = 0.0;
};

struct Candidate {
  std::string word;
  double similarity = 0.0;
};

struct Replacement {
  std::size_t token_index = 0;
  std::string original;
  std::string replacement;
  std::optional<double> similarity;  // absent for keyword swaps

  bool operator==(const Replacement&) const = default;
};

enum class AttackStatus { success, failure, not_attackable };

inline const char* to_string(AttackStatus s) noexcept {
  switch (s) {
    case AttackStatus::success: return "success";
    case AttackStatus::failure: return "failure";
    case AttackStatus::not_attackable: return "not_attackable";
  }
  return "failure";
}

inline std::optional<AttackStatus> parse_attack_status(std::string_view s) {
  if (s == "success") return AttackStatus::success;
  if (s == "failure") return AttackStatus::failure;
  if (s == "not_attackable") return AttackStatus::not_attackable;
  return std::nullopt;
}

struct AttackResult {
  std::string doc_id;
  AttackMode mode = AttackMode::untargeted;
  AttackStatus status = AttackStatus::failure;
  std::string gold_label;
  std::string original_prediction;
  std::string final_label;
  std::vector<Replacement> replacements;
  std::size_t victim_queries = 0;
  std::string original_text;
  std::string final_text;

  bool success() const noexcept { return status == AttackStatus::success; }
  bool operator==(const AttackResult&) const = default;
};

// Everything an attack reads; all of it is shared, read-only state.
struct AttackResources {
  const EmbeddingStore* store = nullptr;
  const NeighborCache* neighbors = nullptr;  // optional memo over `store`
  const SentenceScorer* scorer = nullptr;    // null: no sentence filter
  const StopWordList* stopwords = nullptr;   // null: nothing is a stop word
  const PosLexicon* pos = nullptr;
};

inline bool eligible_token(const Token& t, const FilterConfig& config, const StopWordList* stop) {
  if (!t.is_word) return false;
  if (!config.attack_stopwords && stop && stop->contains(t.lower)) return false;
  return true;
}

inline std::size_t replacement_budget(const FilterConfig& config, std::size_t word_count) {
  return static_cast<std::size_t>(std::ceil(config.max_replaced_fraction * static_cast<double>(word_count) - 1e-9));
}

namespace detail {

inline std::size_t label_position(const VictimModel& victim, std::string_view label) {
  const auto& ls = victim.labels();
  auto it = std::find(ls.begin(), ls.end(), label);
  if (it == ls.end()) throw Error("victim does not know label " + std::string(label));
  return static_cast<std::size_t>(it - ls.begin());
}

// Scores every eligible token against the reference label `y`, given the
// victim's distribution on the full text.
inline std::vector<ImportanceScore> rank_by_deletion(std::string_view text, const std::vector<Token>& tokens,
                                                     std::size_t y, const ProbRow& base, const VictimModel& victim,
                                                     const FilterConfig& config, const StopWordList* stop) {
  std::vector<std::size_t> positions;
  std::vector<std::string> reduced;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!eligible_token(tokens[i], config, stop)) continue;
    positions.push_back(i);
    reduced.push_back(delete_token(text, tokens[i]));
  }
  std::vector<ImportanceScore> scores;
  if (positions.empty()) return scores;
  const auto probs = victim.predict_proba(reduced);
  for (std::size_t j = 0; j < positions.size(); ++j) {
    const auto& p = probs[j];
    const std::size_t flipped = argmax(p);
    double s = base[y] - p[y];
    if (flipped != y) s += p[flipped] - base[flipped];
    scores.push_back({positions[j], s});
  }
  std::stable_sort(scores.begin(), scores.end(), [](const ImportanceScore& a, const ImportanceScore& b) {
    return a.score > b.score;
  });
  return scores;
}

}  // namespace detail

// Importance of each eligible word of `text` for label `reference`, which
// must be the victim's prediction on the text. Sorted descending, ties by
// token position.
inline std::vector<ImportanceScore> importance_scores(std::string_view text, std::string_view reference,
                                                      const VictimModel& victim, const FilterConfig& config,
                                                      const StopWordList* stop = nullptr) {
  const std::size_t y = detail::label_position(victim, reference);
  const auto base = victim.predict_one(std::string(text));
  if (argmax(base) != y) throw Error("importance scores need the victim to predict " + std::string(reference));
  return detail::rank_by_deletion(text, tokenize(text), y, base, victim, config, stop);
}

// Top-k neighbors of `word` that clear the word-similarity threshold, are
// not the word itself, form a single word token, and (with the POS filter
// on) share its coarse tag whenever both are in the lexicon.
inline std::vector<Candidate> candidates(std::string_view word, const AttackResources& res, const FilterConfig& config) {
  if (!res.store) throw Error("candidate generation needs an embedding store");
  const std::string lower = to_lower(word);
  std::optional<NeighborList> list =
      res.neighbors ? res.neighbors->get(lower, config.k) : top_k_neighbors(*res.store, lower, config.k);
  std::vector<Candidate> out;
  if (!list) return out;
  std::optional<std::string> own_tag;
  if (config.pos_filter && res.pos) own_tag = res.pos->tag(lower);
  for (const auto& nb : list->neighbors) {
    if (nb.similarity < config.word_sim_min) continue;
    if (nb.word == lower) continue;
    const auto toks = tokenize(nb.word);
    if (toks.size() != 1 || !toks[0].is_word || toks[0].surface.size() != nb.word.size()) continue;
    if (own_tag) {
      const auto tag = res.pos->tag(nb.word);
      if (tag && *tag != *own_tag) continue;
    }
    out.push_back({nb.word, nb.similarity});
  }
  return out;
}

namespace detail {

inline std::string render(std::string_view text, const std::vector<Token>& tokens,
                          const std::map<std::size_t, std::string>& edits) {
  std::vector<TokenEdit> list;
  list.reserve(edits.size());
  for (const auto& [i, s] : edits) list.push_back({i, s});
  return replace_tokens(text, tokens, std::move(list));
}

}  // namespace detail

// Runs the greedy substitution search on one document. Untargeted mode
// attacks documents the victim gets right and succeeds once the prediction
// leaves the gold label; targeted mode attacks misclassified documents and
// succeeds once the prediction becomes gold. Documents outside the mode's
// population come back as not_attackable.
inline AttackResult attack_document(const Document& doc, AttackMode mode, const VictimModel& victim,
                                    const AttackResources& res, const FilterConfig& config) {
  config.validate();
  CountingVictim counted(victim);
  AttackResult r;
  r.doc_id = doc.id;
  r.mode = mode;
  r.gold_label = doc.label;
  r.original_text = doc.text;
  r.final_text = doc.text;

  const std::size_t gold = detail::label_position(victim, doc.label);
  const auto& labels = victim.labels();
  ProbRow current = counted.predict_one(doc.text);
  const std::size_t predicted = argmax(current);
  r.original_prediction = labels[predicted];
  r.final_label = labels[predicted];

  const bool untargeted = mode == AttackMode::untargeted;
  if ((predicted == gold) != untargeted) {
    r.status = AttackStatus::not_attackable;
    r.victim_queries = counted.queries();
    return r;
  }
  auto reached = [&](const ProbRow& p) { return untargeted ? argmax(p) != gold : argmax(p) == gold; };

  const auto tokens = tokenize(doc.text);
  const auto ranking =
      detail::rank_by_deletion(doc.text, tokens, predicted, current, counted, config, res.stopwords);
  const std::size_t budget = replacement_budget(config, count_words(tokens));

  std::map<std::size_t, std::string> edits;
  r.status = AttackStatus::failure;
  for (const auto& item : ranking) {
    if (r.replacements.size() >= budget) break;
    const Token& tok = tokens[item.token_index];
    const auto cands = candidates(tok.lower, res, config);
    if (cands.empty()) continue;

    std::vector<std::size_t> kept;
    std::vector<std::string> texts;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      auto trial = edits;
      trial[item.token_index] = match_case(tok.surface, cands[c].word);
      std::string text = detail::render(doc.text, tokens, trial);
      if (res.scorer) {
        const auto s = res.scorer->score(doc.text, text);
        if (s && *s < config.sent_sim_min) continue;
      }
      kept.push_back(c);
      texts.push_back(std::move(text));
    }
    if (kept.empty()) continue;

    const auto probs = counted.predict_proba(texts);
    std::optional<std::size_t> pick;
    for (std::size_t j = 0; j < kept.size(); ++j)
      if (reached(probs[j])) {
        pick = j;
        break;
      }
    const bool done = pick.has_value();
    if (!pick) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < kept.size(); ++j) {
        const bool better = untargeted ? probs[j][gold] < probs[best][gold] : probs[j][gold] > probs[best][gold];
        if (better) best = j;
      }
      pick = best;
    }

    const auto& cand = cands[kept[*pick]];
    edits[item.token_index] = match_case(tok.surface, cand.word);
    r.replacements.push_back({item.token_index, tok.surface, edits[item.token_index], cand.similarity});
    r.final_text = std::move(texts[*pick]);
    current = probs[*pick];
    if (done) {
      r.status = AttackStatus::success;
      break;
    }
  }
  r.final_label = labels[argmax(current)];
  r.victim_queries = counted.queries();
  return r;
}

inline AttackResult attack_untargeted(const Document& doc, const VictimModel& victim, const AttackResources& res,
                                      const FilterConfig& config) {
  return attack_document(doc, AttackMode::untargeted, victim, res, config);
}

inline AttackResult attack_targeted(const Document& doc, const VictimModel& victim, const AttackResources& res,
                                    const FilterConfig& config) {
  return attack_document(doc, AttackMode::targeted, victim, res, config);
}

inline constexpr int kAttackResultSchema = 1;

inline nlohmann::json to_json(const AttackResult& r) {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& x : r.replacements) {
    nlohmann::json e = {{"token_index", x.token_index}, {"original", x.original}, {"new", x.replacement}};
    e["similarity"] = x.similarity ? nlohmann::json(*x.similarity) : nlohmann::json(nullptr);
    reps.push_back(std::move(e));
  }
  return {{"schema_version", kAttackResultSchema},
          {"doc_id", r.doc_id},
          {"mode", to_string(r.mode)},
          {"status", to_string(r.status)},
          {"success", r.success()},
          {"gold_label", r.gold_label},
          {"original_prediction", r.original_prediction},
          {"final_label", r.final_label},
          {"replacements", std::move(reps)},
          {"victim_queries", r.victim_queries},
          {"original_text", r.original_text},
          {"final_text", r.final_text}};
}

inline AttackResult attack_result_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kAttackResultSchema) throw ParseError("unsupported attack result schema");
  AttackResult r;
  r.doc_id = j.at("doc_id").get<std::string>();
  auto mode = parse_attack_mode(j.at("mode").get<std::string>());
  auto status = parse_attack_status(j.at("status").get<std::string>());
  if (!mode || !status) throw ParseError("bad mode or status in attack result");
  r.mode = *mode;
  r.status = *status;
  r.gold_label = j.at("gold_label").get<std::string>();
  r.original_prediction = j.at("original_prediction").get<std::string>();
  r.final_label = j.at("final_label").get<std::string>();
  for (const auto& e : j.at("replacements")) {
    Replacement x;
    x.token_index = e.at("token_index").get<std::size_t>();
    x.original = e.at("original").get<std::string>();
    x.replacement = e.at("new").get<std::string>();
    if (!e.at("similarity").is_null()) x.similarity = e.at("similarity").get<double>();
    r.replacements.push_back(std::move(x));
  }
  r.victim_queries = j.at("victim_queries").get<std::size_t>();
  r.original_text = j.at("original_text").get<std::string>();
  r.final_text = j.at("final_text").get<std::string>();
  return r;
}

// Side-by-side view of one result with replaced words in bold.
inline void write_diff_markdown(std::ostream& out, const AttackResult& r) {
  const auto tokens = tokenize(r.original_text);
  std::map<std::size_t, std::string> orig_marks, new_marks;
  for (const auto& x : r.replacements) {
    orig_marks[x.token_index] = "**" + x.original + "**";
    new_marks[x.token_index] = "**" + x.replacement + "**";
  }
  out << "### " << r.doc_id << " (" << to_string(r.mode) << ", " << to_string(r.status) << ")\n\n";
  out << "Original (label: " << r.original_prediction << "):\n\n> "
      << (orig_marks.empty() ? r.original_text : detail::render(r.original_text, tokens, orig_marks)) << "\n\n";
  out << "Attacked (label: " << r.final_label << "):\n\n> "
      << (new_marks.empty() ? r.final_text : detail::render(r.original_text, tokens, new_marks)) << "\n\n";
}

}  // namespace genrefool
