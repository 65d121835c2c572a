#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "genrefool/corpus.hpp"
#include "genrefool/error.hpp"
#include "genrefool/fooler.hpp"
#include "genrefool/victim.hpp"

namespace genrefool {

// Even counts average the middle pair.
inline std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Median replacement count over successful attacks, keyed by gold genre.
// Genres without a success are absent.
inline std::map<std::string, double> median_replacements(const std::vector<AttackResult>& archive) {
  std::map<std::string, std::vector<double>> counts;
  for (const auto& r : archive)
    if (r.success()) counts[r.gold_label].push_back(static_cast<double>(r.replacements.size()));
  std::map<std::string, double> out;
  for (auto& [genre, v] : counts) out[genre] = *median(std::move(v));
  return out;
}

struct GenreMetrics {
  std::string genre;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Evaluation {
  std::vector<GenreMetrics> per_genre;  // genres absent from the test set are omitted
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
};

// One-vs-rest P/R/F1 from gold and predicted label indices. Undefined
// ratios (no predictions, no support) count as 0.
inline Evaluation evaluate_predictions(const std::vector<std::string>& labels, const std::vector<std::size_t>& gold,
                                       const std::vector<std::size_t>& predicted) {
  if (gold.size() != predicted.size()) throw Error("gold and predicted lengths differ");
  const std::size_t L = labels.size();
  Evaluation e;
  e.confusion.assign(L, std::vector<std::size_t>(L, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++e.confusion[gold[i]][predicted[i]];
    if (gold[i] == predicted[i]) ++correct;
  }
  e.accuracy = gold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold.size());
  for (std::size_t l = 0; l < L; ++l) {
    std::size_t tp = e.confusion[l][l], support = 0, predicted_l = 0;
    for (std::size_t m = 0; m < L; ++m) {
      support += e.confusion[l][m];
      predicted_l += e.confusion[m][l];
    }
    if (support == 0) continue;
    GenreMetrics g;
    g.genre = labels[l];
    g.support = support;
    g.precision = predicted_l ? static_cast<double>(tp) / static_cast<double>(predicted_l) : 0.0;
    g.recall = static_cast<double>(tp) / static_cast<double>(support);
    g.f1 = g.precision + g.recall > 0.0 ? 2.0 * g.precision * g.recall / (g.precision + g.recall) : 0.0;
    e.per_genre.push_back(g);
  }
  return e;
}

inline Evaluation evaluate(const VictimModel& model, const Corpus& test) {
  const auto& labels = model.labels();
  std::vector<std::size_t> gold, pred;
  std::vector<std::string> texts;
  for (const auto& d : test.docs) {
    auto it = std::find(labels.begin(), labels.end(), d.label);
    if (it == labels.end()) throw Error("model does not know label " + d.label);
    gold.push_back(static_cast<std::size_t>(it - labels.begin()));
    texts.push_back(d.text);
  }
  const auto probs = model.predict_proba(texts);
  for (const auto& p : probs) pred.push_back(argmax(p));
  return evaluate_predictions(labels, gold, pred);
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

// Metrics over several retraining seeds: per-genre values are averaged,
// accuracy is reported as mean and sample std.
struct SeedEvaluation {
  std::vector<GenreMetrics> per_genre;
  MeanStd accuracy;
  std::vector<Evaluation> runs;
};

inline SeedEvaluation summarize_runs(std::vector<Evaluation> runs) {
  SeedEvaluation s;
  if (runs.empty()) return s;
  std::vector<double> acc;
  for (const auto& r : runs) acc.push_back(r.accuracy);
  s.accuracy = mean_std(acc);
  s.per_genre = runs.front().per_genre;
  for (std::size_t g = 0; g < s.per_genre.size(); ++g) {
    double p = 0, r = 0, f = 0;
    for (const auto& run : runs) {
      p += run.per_genre[g].precision;
      r += run.per_genre[g].recall;
      f += run.per_genre[g].f1;
    }
    const double n = static_cast<double>(runs.size());
    s.per_genre[g].precision = p / n;
    s.per_genre[g].recall = r / n;
    s.per_genre[g].f1 = f / n;
  }
  s.runs = std::move(runs);
  return s;
}

}  // namespace genrefool
