#pragma once

// Cross-validated attack campaigns, adversarial retraining and reports.
//
// A campaign shuffles the corpus into folds; for each fold a victim is
// built from the remaining folds and every document of the held-out fold is
// attacked under every grid cell. Documents never meet a victim that saw
// them in training.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "genrefool/corpus.hpp"
#include "genrefool/embeddings.hpp"
#include "genrefool/error.hpp"
#include "genrefool/fooler.hpp"
#include "genrefool/keyword_attack.hpp"
#include "genrefool/metrics.hpp"
#include "genrefool/victim.hpp"

namespace genrefool {

enum class AttackMethod { textfooler, keywords };

inline const char* to_string(AttackMethod m) noexcept { return m == AttackMethod::textfooler ? "textfooler" : "keywords"; }

inline std::optional<AttackMethod> parse_attack_method(std::string_view s) {
  if (s == "textfooler") return AttackMethod::textfooler;
  if (s == "keywords") return AttackMethod::keywords;
  return std::nullopt;
}

// One point of the parameter grid. For keyword campaigns only `percent`
// matters; for textfooler campaigns only `k` and `sent_sim_min`.
struct GridCell {
  std::size_t k = 0;
  double sent_sim_min = 0.0;
  double percent = 0.0;

  bool operator==(const GridCell&) const = default;
};

struct CampaignConfig {
  AttackMethod method = AttackMethod::textfooler;
  AttackMode mode = AttackMode::untargeted;
  std::size_t num_folds = 5;
  std::uint64_t seed = 0;
  std::vector<std::size_t> ks{15};
  std::vector<double> sent_thresholds{0.84};
  std::vector<double> percents{10.0, 50.0, 100.0};
  FilterConfig filter;  // word threshold, POS, stop words, budget
  std::size_t keywords_per_genre = 100;
  SwapUnit swap_unit = SwapUnit::list;
  std::size_t jobs = 1;

  std::vector<GridCell> cells() const {
    std::vector<GridCell> out;
    if (method == AttackMethod::keywords) {
      for (double p : percents) out.push_back({0, 0.0, p});
    } else {
      for (double t : sent_thresholds)
        for (auto k : ks) out.push_back({k, t, 0.0});
    }
    return out;
  }

  void validate() const {
    if (num_folds < 2) throw Error("need at least 2 folds");
    if (cells().empty()) throw Error("attack grid is empty");
    if (method == AttackMethod::keywords && mode == AttackMode::targeted)
      throw Error("keyword swapping only supports untargeted attacks");
    for (double p : percents)
      if (method == AttackMethod::keywords && !(p > 0.0 && p <= 100.0)) throw Error("swap percent must be in (0, 100]");
    filter.validate();
  }
};

// Builds the victim for one fold from its training documents.
using VictimFactory = std::function<std::shared_ptr<const VictimModel>(const Corpus& train, std::size_t fold)>;

// Fold f trains with seed derive_seed(seed, 1000 + f).
inline VictimFactory native_factory(TrainConfig config, std::shared_ptr<const EmbeddingStore> store,
                                    std::uint64_t seed) {
  return [config, store, seed](const Corpus& train, std::size_t fold) -> std::shared_ptr<const VictimModel> {
    auto c = config;
    c.seed = derive_seed(seed, 1000 + fold);
    return std::make_shared<NativeLinearVictim>(train_native(train, c, store));
  };
}

// One pre-built victim for every fold (it may have seen held-out documents).
inline VictimFactory fixed_factory(std::shared_ptr<const VictimModel> victim) {
  return [victim](const Corpus&, std::size_t) { return victim; };
}

// An extra training text derived from a corpus document (e.g. a broken text).
struct Augmentation {
  std::string source_id;
  std::string text;
  std::string label;
};

struct ArchiveEntry {
  std::size_t fold = 0;
  GridCell cell;
  AttackResult result;
};

struct CellStats {
  GridCell cell;
  std::size_t documents = 0;
  std::size_t attackable = 0;
  std::size_t broken = 0;
  std::size_t not_attackable = 0;
  std::size_t queries = 0;
  std::map<std::string, double> median_replacements;

  // Against the attackable population.
  double broken_pct() const noexcept {
    return attackable ? 100.0 * static_cast<double>(broken) / static_cast<double>(attackable) : 0.0;
  }
  double broken_pct_all() const noexcept {
    return documents ? 100.0 * static_cast<double>(broken) / static_cast<double>(documents) : 0.0;
  }
};

struct RobustnessReport {
  AttackMethod method = AttackMethod::textfooler;
  AttackMode mode = AttackMode::untargeted;
  std::vector<CellStats> cells;
};

struct CampaignResult {
  RobustnessReport report;
  std::vector<ArchiveEntry> archive;
  FoldAssignment folds;
  bool partial = false;
  std::string error;

  std::size_t broken(std::size_t cell = 0) const { return report.cells.at(cell).broken; }
};

// Keyword-swap counterpart of attack_document.
inline AttackResult keyword_attack_document(const Document& doc, const VictimModel& victim,
                                            const GenreKeywords& keywords, const KeywordSwapConfig& swap) {
  CountingVictim counted(victim);
  AttackResult r;
  r.doc_id = doc.id;
  r.mode = AttackMode::untargeted;
  r.gold_label = doc.label;
  r.original_text = doc.text;
  r.final_text = doc.text;
  const std::size_t gold = detail::label_position(victim, doc.label);
  const auto base = argmax(counted.predict_one(doc.text));
  r.original_prediction = victim.labels()[base];
  r.final_label = r.original_prediction;
  if (base != gold) {
    r.status = AttackStatus::not_attackable;
    r.victim_queries = counted.queries();
    return r;
  }
  auto swapped = keyword_swap(doc.text, doc.label, keywords, swap);
  for (auto& e : swapped.edits) r.replacements.push_back({e.token_index, e.original, e.replacement, std::nullopt});
  const auto after = argmax(counted.predict_one(swapped.text));
  r.final_text = std::move(swapped.text);
  r.final_label = victim.labels()[after];
  r.status = after != gold ? AttackStatus::success : AttackStatus::failure;
  r.victim_queries = counted.queries();
  return r;
}

inline RobustnessReport aggregate(const CampaignConfig& config, const std::vector<ArchiveEntry>& archive) {
  RobustnessReport rep;
  rep.method = config.method;
  rep.mode = config.mode;
  for (const auto& cell : config.cells()) {
    CellStats s;
    s.cell = cell;
    std::vector<AttackResult> in_cell;
    for (const auto& e : archive) {
      if (!(e.cell == cell)) continue;
      ++s.documents;
      s.queries += e.result.victim_queries;
      if (e.result.status == AttackStatus::not_attackable) {
        ++s.not_attackable;
        continue;
      }
      ++s.attackable;
      if (e.result.success()) ++s.broken;
      in_cell.push_back(e.result);
    }
    s.median_replacements = median_replacements(in_cell);
    rep.cells.push_back(std::move(s));
  }
  return rep;
}

// Runs `fn(i)` for i in [0, n) on `jobs` threads. The first exception is
// rethrown after all workers stop.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!first) first = std::current_exception();
          failed = true;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

inline CampaignResult run_campaign(const Corpus& corpus, const CampaignConfig& config, const VictimFactory& factory,
                                   const AttackResources& resources, const StopWordList& stopwords,
                                   const std::vector<Augmentation>& augmentation = {}) {
  config.validate();
  CampaignResult out;
  out.folds = make_folds(corpus, config.num_folds, config.seed);
  const auto cells = config.cells();

  // slots[position * cells + c]
  std::vector<std::optional<ArchiveEntry>> slots(corpus.size() * cells.size());
  try {
    for (std::size_t fold = 0; fold < config.num_folds; ++fold) {
      Corpus train{corpus.labels, {}};
      std::vector<std::size_t> held_out;
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (out.folds.fold_of_position[i] == fold) held_out.push_back(i);
        else train.docs.push_back(corpus.docs[i]);
      }
      Corpus train_aug = train;
      for (const auto& a : augmentation) {
        auto it = out.folds.fold_of.find(a.source_id);
        if (it != out.folds.fold_of.end() && it->second == fold) continue;
        train_aug.docs.push_back({"aug:" + a.source_id + ":" + std::to_string(train_aug.size()), a.text, a.label, Split::train});
      }
      const auto victim = factory(train_aug, fold);
      if (!victim) throw Error("victim factory returned nothing for fold " + std::to_string(fold));

      std::optional<GenreKeywords> keywords;
      if (config.method == AttackMethod::keywords) keywords = extract_keywords(train, config.keywords_per_genre, stopwords);

      parallel_for(held_out.size(), config.jobs, [&](std::size_t h) {
        const std::size_t pos = held_out[h];
        const Document& doc = corpus.docs[pos];
        for (std::size_t c = 0; c < cells.size(); ++c) {
          ArchiveEntry e;
          e.fold = fold;
          e.cell = cells[c];
          if (config.method == AttackMethod::keywords) {
            e.result = keyword_attack_document(doc, *victim, *keywords,
                                               {cells[c].percent, document_seed(config.seed, doc.id), config.swap_unit});
          } else {
            FilterConfig f = config.filter;
            f.k = cells[c].k;
            f.sent_sim_min = cells[c].sent_sim_min;
            e.result = attack_document(doc, config.mode, *victim, resources, f);
          }
          slots[pos * cells.size() + c] = std::move(e);
        }
      });
    }
  } catch (const std::exception& ex) {
    out.partial = true;
    out.error = ex.what();
  }
  for (auto& s : slots)
    if (s) out.archive.push_back(std::move(*s));
  out.report = aggregate(config, out.archive);
  return out;
}

// Successful attacks become training texts under their gold labels.
// Identical (source, text) pairs are kept once.
inline std::vector<Augmentation> broken_texts(const std::vector<ArchiveEntry>& archive) {
  std::vector<Augmentation> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& e : archive) {
    if (!e.result.success()) continue;
    if (seen.emplace(e.result.doc_id, e.result.final_text).second)
      out.push_back({e.result.doc_id, e.result.final_text, e.result.gold_label});
  }
  return out;
}

struct HardenedModels {
  NativeLinearVictim base;
  NativeLinearVictim robust;
  std::size_t added = 0;
  bool degenerate = false;  // nothing to add: robust == base
};

// Base: the original training corpus. Robust: the same plus every broken
// text under its gold label. Both use the identical config and seed.
inline HardenedModels harden(const Corpus& train, const std::vector<Augmentation>& broken, const TrainConfig& config,
                             std::shared_ptr<const EmbeddingStore> store = nullptr) {
  std::vector<LabeledText> base_data, robust_data;
  for (const auto& d : train.docs) base_data.push_back({d.text, d.label});
  robust_data = base_data;
  for (const auto& b : broken) robust_data.push_back({b.text, b.label});
  auto base = train_native(train.labels, base_data, config, store);
  auto robust = train_native(train.labels, robust_data, config, store);
  return {std::move(base), std::move(robust), broken.size(), broken.empty()};
}

struct HardeningComparison {
  SeedEvaluation base;
  SeedEvaluation robust;
  std::size_t added = 0;
  bool degenerate = false;
};

inline HardeningComparison compare_hardening(const Corpus& train, const std::vector<Augmentation>& broken,
                                             const Corpus& test, TrainConfig config, const std::vector<std::uint64_t>& seeds,
                                             std::shared_ptr<const EmbeddingStore> store = nullptr) {
  if (seeds.empty()) throw Error("need at least one seed");
  std::vector<Evaluation> base_runs, robust_runs;
  HardeningComparison cmp;
  for (auto seed : seeds) {
    config.seed = seed;
    auto models = harden(train, broken, config, store);
    base_runs.push_back(evaluate(models.base, test));
    robust_runs.push_back(evaluate(models.robust, test));
    cmp.added = models.added;
    cmp.degenerate = models.degenerate;
  }
  cmp.base = summarize_runs(std::move(base_runs));
  cmp.robust = summarize_runs(std::move(robust_runs));
  return cmp;
}

// ---- report emission --------------------------------------------------------

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

inline void write_archive_jsonl(std::ostream& out, const std::vector<ArchiveEntry>& archive) {
  for (const auto& e : archive) {
    auto j = to_json(e.result);
    j["fold"] = e.fold;
    j["cell"] = {{"k", e.cell.k}, {"sent_sim_min", e.cell.sent_sim_min}, {"percent", e.cell.percent}};
    out << j.dump() << '\n';
  }
}

inline std::vector<ArchiveEntry> read_archive_jsonl(std::istream& in) {
  std::vector<ArchiveEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ArchiveEntry e;
      e.result = attack_result_from_json(j);
      e.fold = j.value("fold", std::size_t{0});
      if (j.contains("cell")) {
        e.cell.k = j["cell"].value("k", std::size_t{0});
        e.cell.sent_sim_min = j["cell"].value("sent_sim_min", 0.0);
        e.cell.percent = j["cell"].value("percent", 0.0);
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("archive line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

inline void write_report_csv(std::ostream& out, const RobustnessReport& rep) {
  out << "method,mode,k,sent_sim_min,percent,documents,attackable,not_attackable,broken,broken_pct,broken_pct_all,"
         "victim_queries\n";
  for (const auto& c : rep.cells) {
    out << to_string(rep.method) << ',' << to_string(rep.mode) << ',' << c.cell.k << ','
        << detail::fmt("%.2f", c.cell.sent_sim_min) << ',' << detail::fmt("%g", c.cell.percent) << ',' << c.documents
        << ',' << c.attackable << ',' << c.not_attackable << ',' << c.broken << ',' << detail::fmt("%.2f", c.broken_pct())
        << ',' << detail::fmt("%.2f", c.broken_pct_all()) << ',' << c.queries << '\n';
  }
}

inline void write_report_markdown(std::ostream& out, const RobustnessReport& rep) {
  out << "# Attack report (" << to_string(rep.method) << ", " << to_string(rep.mode) << ")\n\n";
  std::size_t attackable = rep.cells.empty() ? 0 : rep.cells.front().attackable;
  if (attackable == 0) out << "0 attackable documents.\n\n";

  out << "## Broken texts\n\n";
  if (rep.method == AttackMethod::keywords) {
    out << "| Replaced | Broken |\n|---|---|\n";
    for (const auto& c : rep.cells)
      out << "| " << detail::fmt("%g", c.cell.percent) << "% | " << c.broken << " ("
          << detail::fmt("%.1f", c.broken_pct()) << "%) |\n";
  } else {
    std::vector<std::size_t> ks;
    std::vector<double> ts;
    for (const auto& c : rep.cells) {
      if (std::find(ks.begin(), ks.end(), c.cell.k) == ks.end()) ks.push_back(c.cell.k);
      if (std::find(ts.begin(), ts.end(), c.cell.sent_sim_min) == ts.end()) ts.push_back(c.cell.sent_sim_min);
    }
    out << "| Sentence threshold |";
    for (auto k : ks) out << " k=" << k << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < ks.size(); ++i) out << "---|";
    out << '\n';
    for (double t : ts) {
      out << "| " << detail::fmt("%.2f", t) << " |";
      for (auto k : ks)
        for (const auto& c : rep.cells)
          if (c.cell.k == k && c.cell.sent_sim_min == t)
            out << ' ' << c.broken << " (" << detail::fmt("%.1f", c.broken_pct()) << "%) |";
      out << '\n';
    }
  }
  out << "\nPercentages are relative to the attackable population";
  if (!rep.cells.empty())
    out << " (" << rep.cells.front().attackable << " of " << rep.cells.front().documents << " documents)";
  out << ".\n\n## Median replacements per successful attack\n\n";
  std::set<std::string> genres;
  for (const auto& c : rep.cells)
    for (const auto& kv : c.median_replacements) genres.insert(kv.first);
  out << "| Genre |";
  for (std::size_t i = 0; i < rep.cells.size(); ++i) out << " cell " << i + 1 << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < rep.cells.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& g : genres) {
    out << "| " << g << " |";
    for (const auto& c : rep.cells) {
      auto it = c.median_replacements.find(g);
      out << ' ' << (it == c.median_replacements.end() ? std::string("-") : detail::fmt("%.1f", it->second)) << " |";
    }
    out << '\n';
  }
}

inline void write_hardening_markdown(std::ostream& out, const HardeningComparison& cmp) {
  out << "# Base vs Robust\n\n";
  out << "Broken texts added: " << cmp.added << (cmp.degenerate ? " (degenerate: robust == base)" : "") << "\n\n";
  out << "| Genre | F1 Base | F1 Robust | Prec Base | Prec Robust | Rec Base | Rec Robust |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (std::size_t g = 0; g < cmp.base.per_genre.size(); ++g) {
    const auto& b = cmp.base.per_genre[g];
    const auto& r = cmp.robust.per_genre[g];
    out << "| " << b.genre << " | " << detail::fmt("%.3f", b.f1) << " | " << detail::fmt("%.3f", r.f1) << " | "
        << detail::fmt("%.3f", b.precision) << " | " << detail::fmt("%.3f", r.precision) << " | "
        << detail::fmt("%.3f", b.recall) << " | " << detail::fmt("%.3f", r.recall) << " |\n";
  }
  out << "\n| Model | Accuracy |\n|---|---|\n";
  out << "| Base | " << detail::fmt("%.3f", cmp.base.accuracy.mean) << " ± " << detail::fmt("%.3f", cmp.base.accuracy.std)
      << " |\n";
  out << "| Robust | " << detail::fmt("%.3f", cmp.robust.accuracy.mean) << " ± "
      << detail::fmt("%.3f", cmp.robust.accuracy.std) << " |\n";
}

inline void write_hardening_csv(std::ostream& out, const HardeningComparison& cmp) {
  out << "genre,model,precision,recall,f1\n";
  for (const auto* side : {&cmp.base, &cmp.robust})
    for (const auto& g : side->per_genre)
      out << g.genre << ',' << (side == &cmp.base ? "base" : "robust") << ',' << detail::fmt("%.6f", g.precision) << ','
          << detail::fmt("%.6f", g.recall) << ',' << detail::fmt("%.6f", g.f1) << '\n';
  out << "accuracy,base," << detail::fmt("%.6f", cmp.base.accuracy.mean) << ',' << detail::fmt("%.6f", cmp.base.accuracy.std)
      << ",\n";
  out << "accuracy,robust," << detail::fmt("%.6f", cmp.robust.accuracy.mean) << ','
      << detail::fmt("%.6f", cmp.robust.accuracy.std) << ",\n";
}

}  // namespace genrefool
