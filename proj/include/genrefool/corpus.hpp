#pragma once

// Genre-labeled corpora: JSONL/TSV I/O, k-fold assignment and stratified
// splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "genrefool/error.hpp"
#include "genrefool/rng.hpp"
#include "genrefool/text.hpp"

namespace genrefool {

// Ordered, duplicate-free set of genre names. Matching is case-sensitive.
class LabelSet {
 public:
  LabelSet() = default;

  explicit LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) throw Error("label set is empty");
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i].empty()) throw Error("empty label name");
      if (!index_.emplace(names_[i], i).second) throw Error("duplicate label " + names_[i]);
    }
  }

  // The ten functional genres of the FTD scheme.
  static LabelSet ftd() {
    return LabelSet({"Argument", "Fiction", "Instruction", "News", "Legal", "Personal",
                     "Promotion", "Academic", "Information", "Review"});
  }

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(std::string_view name) const { return index_of(name).has_value(); }
  std::size_t size() const noexcept { return names_.size(); }
  const std::string& operator[](std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool operator==(const LabelSet& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Split { train, val, test };

inline const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

struct Document {
  std::string id;
  std::string text;
  std::string label;
  Split split = Split::train;

  bool operator==(const Document&) const = default;
};

struct Corpus {
  LabelSet labels;
  std::vector<Document> docs;

  std::size_t size() const noexcept { return docs.size(); }

  std::size_t label_index(const Document& d) const {
    auto i = labels.index_of(d.label);
    if (!i) throw Error("unknown label " + d.label);
    return *i;
  }

  std::vector<std::size_t> label_counts() const {
    std::vector<std::size_t> counts(labels.size(), 0);
    for (const auto& d : docs) ++counts[label_index(d)];
    return counts;
  }

  Corpus filter(Split s) const {
    Corpus out{labels, {}};
    for (const auto& d : docs)
      if (d.split == s) out.docs.push_back(d);
    return out;
  }

  // Throws on the first invariant violation.
  void validate() const {
    std::unordered_set<std::string> ids;
    for (const auto& d : docs) {
      if (!labels.contains(d.label)) throw Error("unknown label " + d.label);
      if (trim(d.text).empty()) throw Error("document " + d.id + " has empty text");
      if (!ids.insert(d.id).second) throw Error("duplicate document id " + d.id);
    }
  }
};

enum class CorpusFormat { jsonl, tsv };

inline std::optional<CorpusFormat> parse_corpus_format(std::string_view s) {
  if (s == "jsonl") return CorpusFormat::jsonl;
  if (s == "tsv") return CorpusFormat::tsv;
  return std::nullopt;
}

// Reads a corpus. With no label set given, labels are collected from the
// data in order of first appearance.
inline Corpus read_corpus(std::istream& in, CorpusFormat format,
                          std::optional<LabelSet> labels = std::nullopt) {
  std::vector<std::string> seen_labels;
  std::unordered_set<std::string> seen_label_set;
  std::vector<Document> docs;
  std::unordered_set<std::string> ids;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(line_no);

    Document doc;
    if (format == CorpusFormat::jsonl) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(where + ": malformed JSON (" + e.what() + ")");
      }
      if (!j.is_object() || !j.contains("text") || !j["text"].is_string() ||
          !j.contains("label") || !j["label"].is_string())
        throw ParseError(where + ": record needs string fields \"text\" and \"label\"");
      doc.text = j["text"].get<std::string>();
      doc.label = j["label"].get<std::string>();
      if (j.contains("id")) {
        const auto& id = j["id"];
        if (id.is_string()) doc.id = id.get<std::string>();
        else if (id.is_number_integer()) doc.id = std::to_string(id.get<long long>());
        else throw ParseError(where + ": \"id\" must be a string or integer");
      }
      if (j.contains("split") && !j["split"].is_null()) {
        auto s = j["split"].is_string() ? parse_split(j["split"].get<std::string>()) : std::nullopt;
        if (!s) throw ParseError(where + ": bad split value");
        doc.split = *s;
      }
    } else {
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string::npos)
        throw ParseError(where + ": expected id<TAB>label<TAB>text");
      doc.id = line.substr(0, t1);
      doc.label = line.substr(t1 + 1, t2 - t1 - 1);
      doc.text = line.substr(t2 + 1);
    }

    if (doc.id.empty()) doc.id = std::to_string(line_no);
    if (trim(doc.text).empty()) throw ParseError(where + ": empty text");
    if (labels) {
      if (!labels->contains(doc.label)) throw ParseError("unknown label " + doc.label + " (" + where + ")");
    } else if (seen_label_set.insert(doc.label).second) {
      seen_labels.push_back(doc.label);
    }
    if (!ids.insert(doc.id).second) throw ParseError(where + ": duplicate id " + doc.id);
    docs.push_back(std::move(doc));
  }

  Corpus c;
  c.labels = labels ? std::move(*labels) : LabelSet(std::move(seen_labels));
  c.docs = std::move(docs);
  return c;
}

inline Corpus load_corpus(const std::string& path, CorpusFormat format,
                          std::optional<LabelSet> labels = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path);
  return read_corpus(in, format, std::move(labels));
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& d : corpus.docs) {
    nlohmann::json j = {{"id", d.id}, {"text", d.text}, {"label", d.label}, {"split", to_string(d.split)}};
    out << j.dump() << '\n';
  }
}

inline void write_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus " + path);
  write_corpus(out, corpus);
}

struct FoldAssignment {
  std::uint64_t seed = 0;
  std::size_t num_folds = 5;
  std::vector<std::size_t> fold_of_position;  // indexed like corpus.docs
  std::unordered_map<std::string, std::size_t> fold_of;

  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(num_folds, 0);
    for (auto f : fold_of_position) ++sizes[f];
    return sizes;
  }
};

// Seeded shuffle, then contiguous slices: fold i holds shuffled positions
// floor(i*n/k) .. floor((i+1)*n/k)-1.
inline FoldAssignment make_folds(const Corpus& corpus, std::size_t num_folds, std::uint64_t seed) {
  if (num_folds < 2) throw Error("need at least 2 folds");
  const std::size_t n = corpus.size();
  if (num_folds > n)
    throw Error("cannot make " + std::to_string(num_folds) + " folds from " + std::to_string(n) + " documents");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(seed);
  shuffle(std::span<std::size_t>(order), rng);

  FoldAssignment fa;
  fa.seed = seed;
  fa.num_folds = num_folds;
  fa.fold_of_position.assign(n, 0);
  for (std::size_t f = 0; f < num_folds; ++f) {
    const std::size_t lo = f * n / num_folds, hi = (f + 1) * n / num_folds;
    for (std::size_t p = lo; p < hi; ++p) fa.fold_of_position[order[p]] = f;
  }
  for (std::size_t i = 0; i < n; ++i) fa.fold_of.emplace(corpus.docs[i].id, fa.fold_of_position[i]);
  return fa;
}

// Per-label validation counts use largest-remainder rounding so the total is
// round(val_fraction * n) and each label is within one document of its
// exact share. Every label keeps at least one training document.
inline std::pair<Corpus, Corpus> stratified_split(const Corpus& corpus, double val_fraction,
                                                  std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw Error("val_fraction must be in (0, 1)");
  const auto counts = corpus.label_counts();
  for (std::size_t l = 0; l < counts.size(); ++l)
    if (counts[l] > 0 && counts[l] < 2)
      throw Error("label " + corpus.labels[l] + " has fewer than 2 documents");

  const std::size_t L = counts.size();
  std::vector<std::size_t> quota(L, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const double exact = val_fraction * static_cast<double>(counts[l]);
    quota[l] = std::min(static_cast<std::size_t>(std::floor(exact)), counts[l] ? counts[l] - 1 : 0);
    assigned += quota[l];
    remainders.emplace_back(exact - std::floor(exact), l);
  }
  const auto target = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(corpus.size())));
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [rem, l] : remainders) {
    if (assigned >= target) break;
    if (rem > 0.0 && quota[l] + 1 < counts[l]) {
      ++quota[l];
      ++assigned;
    }
  }

  std::vector<std::vector<std::size_t>> by_label(L);
  for (std::size_t i = 0; i < corpus.size(); ++i) by_label[corpus.label_index(corpus.docs[i])].push_back(i);

  std::vector<bool> is_val(corpus.size(), false);
  for (std::size_t l = 0; l < L; ++l) {
    SplitMix64 rng(derive_seed(seed, l));
    shuffle(std::span<std::size_t>(by_label[l]), rng);
    for (std::size_t j = 0; j < quota[l]; ++j) is_val[by_label[l][j]] = true;
  }

  Corpus train{corpus.labels, {}}, val{corpus.labels, {}};
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Document d = corpus.docs[i];
    d.split = is_val[i] ? Split::val : Split::train;
    (is_val[i] ? val : train).docs.push_back(std::move(d));
  }
  return {std::move(train), std::move(val)};
}

}  // namespace genrefool
