#pragma once

// Classifiers under attack. A victim is anything that maps a batch of texts
// to probability rows over an ordered label list.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "genrefool/corpus.hpp"
#include "genrefool/embeddings.hpp"
#include "genrefool/error.hpp"
#include "genrefool/rng.hpp"
#include "genrefool/text.hpp"

namespace genrefool {

using ProbRow = std::vector<double>;

class VictimModel {
 public:
  virtual ~VictimModel() = default;
  virtual const std::vector<std::string>& labels() const = 0;
  virtual std::vector<ProbRow> predict_proba(std::span<const std::string> texts) const = 0;

  ProbRow predict_one(const std::string& text) const {
    return predict_proba(std::span<const std::string>(&text, 1)).front();
  }
};

// First maximum wins, so ties resolve by label order.
inline std::size_t argmax(const ProbRow& p) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

inline bool is_distribution(const ProbRow& p, double tol = 1e-6) noexcept {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= tol;
}

// Returns the same distribution for every input.
class ConstantVictim final : public VictimModel {
 public:
  ConstantVictim(std::vector<std::string> labels, ProbRow probs)
      : labels_(std::move(labels)), probs_(std::move(probs)) {
    if (probs_.size() != labels_.size() || !is_distribution(probs_))
      throw Error("constant victim needs a distribution over its labels");
  }

  static ConstantVictim uniform(std::vector<std::string> labels) {
    const auto n = labels.size();
    return ConstantVictim(std::move(labels), ProbRow(n, 1.0 / static_cast<double>(n)));
  }

  const std::vector<std::string>& labels() const override { return labels_; }
  std::vector<ProbRow> predict_proba(std::span<const std::string> texts) const override {
    return std::vector<ProbRow>(texts.size(), probs_);
  }

 private:
  std::vector<std::string> labels_;
  ProbRow probs_;
};

// Counts the texts sent to a victim. Thread-safe.
class CountingVictim final : public VictimModel {
 public:
  explicit CountingVictim(const VictimModel& inner) : inner_(inner) {}
  const std::vector<std::string>& labels() const override { return inner_.labels(); }
  std::vector<ProbRow> predict_proba(std::span<const std::string> texts) const override {
    queries_.fetch_add(texts.size(), std::memory_order_relaxed);
    return inner_.predict_proba(texts);
  }
  std::size_t queries() const noexcept { return queries_.load(); }

 private:
  const VictimModel& inner_;
  mutable std::atomic<std::size_t> queries_{0};
};

inline void softmax_inplace(std::vector<double>& z) noexcept {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : z) v /= s;
}

enum class FeatureKind { tfidf, embedding };

inline const char* to_string(FeatureKind k) noexcept { return k == FeatureKind::tfidf ? "tfidf-bow" : "mean-embedding"; }

inline std::optional<FeatureKind> parse_feature_kind(std::string_view s) {
  if (s == "tfidf" || s == "tfidf-bow") return FeatureKind::tfidf;
  if (s == "embed" || s == "embedding" || s == "mean-embedding") return FeatureKind::embedding;
  return std::nullopt;
}

struct TrainConfig {
  FeatureKind features = FeatureKind::tfidf;
  std::size_t epochs = 10;
  double learning_rate = 0.5;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double l2 = 1e-4;
  double momentum = 0.9;
  std::size_t max_vocab = 20000;
  bool lowercase = true;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"features", to_string(c.features)}, {"epochs", c.epochs},       {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},        {"seed", c.seed},           {"l2", c.l2},
          {"momentum", c.momentum},            {"max_vocab", c.max_vocab}, {"lowercase", c.lowercase}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto kind = parse_feature_kind(j.at("features").get<std::string>());
  if (!kind) throw ParseError("bad feature kind in model config");
  c.features = *kind;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.l2 = j.at("l2").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.max_vocab = j.at("max_vocab").get<std::size_t>();
  c.lowercase = j.at("lowercase").get<bool>();
  return c;
}

// Sparse feature vector; indices strictly increasing.
struct Features {
  std::vector<std::uint32_t> index;
  std::vector<double> value;
};

struct Example {
  Features x;
  std::size_t label = 0;
};

// Row-major labels x (features + 1); the last column is the bias.
struct WeightMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  WeightMatrix() = default;
  WeightMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool operator==(const WeightMatrix&) const = default;
};

// Turns text into features. tf-idf: raw term counts times
// log((1+N)/(1+df)) + 1, L2-normalized, over the top-V words by document
// frequency. Embedding: mean of the in-vocabulary word vectors.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;

  static FeatureExtractor fit_tfidf(const std::vector<std::string>& texts, std::size_t max_vocab, bool lowercase) {
    FeatureExtractor fx;
    fx.kind_ = FeatureKind::tfidf;
    fx.lowercase_ = lowercase;
    std::unordered_map<std::string, std::size_t> df;
    for (const auto& t : texts) {
      std::unordered_map<std::string, bool> seen;
      for (auto& w : fx.words_of(t))
        if (seen.emplace(w, true).second) ++df[w];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second > b.second || (a.second == b.second && a.first < b.first);
    });
    if (ranked.size() > max_vocab) ranked.resize(max_vocab);
    const double n = static_cast<double>(texts.size());
    for (const auto& [w, d] : ranked) {
      fx.vocab_index_.emplace(w, fx.vocab_.size());
      fx.vocab_.push_back(w);
      fx.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(d))) + 1.0);
    }
    return fx;
  }

  static FeatureExtractor tfidf(std::vector<std::string> vocab, std::vector<double> idf, bool lowercase) {
    if (vocab.size() != idf.size()) throw Error("vocabulary and idf sizes differ");
    FeatureExtractor fx;
    fx.kind_ = FeatureKind::tfidf;
    fx.lowercase_ = lowercase;
    fx.vocab_ = std::move(vocab);
    fx.idf_ = std::move(idf);
    for (std::size_t i = 0; i < fx.vocab_.size(); ++i) fx.vocab_index_.emplace(fx.vocab_[i], i);
    return fx;
  }

  static FeatureExtractor mean_embedding(std::shared_ptr<const EmbeddingStore> store) {
    if (!store) throw Error("mean-embedding features need an embedding store");
    FeatureExtractor fx;
    fx.kind_ = FeatureKind::embedding;
    fx.store_ = std::move(store);
    return fx;
  }

  FeatureKind kind() const noexcept { return kind_; }
  bool lowercase() const noexcept { return lowercase_; }
  std::size_t size() const noexcept { return kind_ == FeatureKind::tfidf ? vocab_.size() : store_->dim(); }
  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  const std::vector<double>& idf() const noexcept { return idf_; }
  const std::shared_ptr<const EmbeddingStore>& store() const noexcept { return store_; }

  Features operator()(std::string_view text) const {
    Features f;
    if (kind_ == FeatureKind::tfidf) {
      std::map<std::uint32_t, double> counts;
      for (const auto& w : words_of(text))
        if (auto it = vocab_index_.find(w); it != vocab_index_.end()) counts[static_cast<std::uint32_t>(it->second)] += 1.0;
      double norm = 0.0;
      for (auto& [i, c] : counts) {
        c *= idf_[i];
        norm += c * c;
      }
      norm = std::sqrt(norm);
      for (const auto& [i, c] : counts) {
        f.index.push_back(i);
        f.value.push_back(c / norm);
      }
    } else {
      std::vector<double> sum(store_->dim(), 0.0);
      std::size_t hits = 0;
      for (const auto& t : tokenize(text)) {
        if (!t.is_word) continue;
        auto idx = store_->index_of(t.lower);
        if (!idx) continue;
        const auto row = store_->row(*idx);
        for (std::size_t d = 0; d < row.size(); ++d) sum[d] += row[d];
        ++hits;
      }
      if (hits == 0) return f;
      for (std::size_t d = 0; d < sum.size(); ++d) {
        f.index.push_back(static_cast<std::uint32_t>(d));
        f.value.push_back(sum[d] / static_cast<double>(hits));
      }
    }
    return f;
  }

 private:
  std::vector<std::string> words_of(std::string_view text) const {
    std::vector<std::string> out;
    for (auto& t : tokenize(text))
      if (t.is_word) out.push_back(lowercase_ ? std::move(t.lower) : std::move(t.surface));
    return out;
  }

  FeatureKind kind_ = FeatureKind::tfidf;
  bool lowercase_ = true;
  std::vector<std::string> vocab_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::size_t> vocab_index_;
  std::shared_ptr<const EmbeddingStore> store_;
};

// Multinomial logistic regression over tf-idf or mean-embedding features.
class NativeLinearVictim final : public VictimModel {
 public:
  static constexpr int kFormatVersion = 1;

  NativeLinearVictim(std::vector<std::string> labels, FeatureExtractor fx, WeightMatrix w, TrainConfig config)
      : labels_(std::move(labels)), fx_(std::move(fx)), w_(std::move(w)), config_(config) {
    if (w_.rows != labels_.size() || w_.cols != fx_.size() + 1) throw Error("weight matrix shape mismatch");
  }

  const std::vector<std::string>& labels() const override { return labels_; }
  const FeatureExtractor& features() const noexcept { return fx_; }
  const WeightMatrix& weights() const noexcept { return w_; }
  const TrainConfig& config() const noexcept { return config_; }
  double final_loss() const noexcept { return final_loss_; }
  void set_final_loss(double v) noexcept { final_loss_ = v; }

  Features featurize(std::string_view text) const { return fx_(text); }

  ProbRow scores(const Features& x) const {
    ProbRow z(w_.rows, 0.0);
    const std::size_t bias = w_.cols - 1;
    for (std::size_t r = 0; r < w_.rows; ++r) {
      double s = w_.at(r, bias);
      for (std::size_t k = 0; k < x.index.size(); ++k) s += w_.at(r, x.index[k]) * x.value[k];
      z[r] = s;
    }
    return z;
  }

  ProbRow probabilities(const Features& x) const {
    auto z = scores(x);
    softmax_inplace(z);
    return z;
  }

  std::vector<ProbRow> predict_proba(std::span<const std::string> texts) const override {
    std::vector<ProbRow> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(probabilities(fx_(t)));
    return out;
  }

  // Summed cross-entropy over the batch plus (l2/2)*||W||^2, bias excluded.
  double loss(std::span<const Example> batch, double l2) const {
    double total = 0.0;
    for (const auto& ex : batch) total -= std::log(std::max(probabilities(ex.x)[ex.label], 1e-300));
    return total + 0.5 * l2 * penalty();
  }

  // Analytic gradient of loss(batch, l2).
  WeightMatrix gradient(std::span<const Example> batch, double l2) const {
    WeightMatrix g(w_.rows, w_.cols);
    const std::size_t bias = w_.cols - 1;
    for (const auto& ex : batch) {
      auto p = probabilities(ex.x);
      p[ex.label] -= 1.0;
      for (std::size_t r = 0; r < w_.rows; ++r) {
        for (std::size_t k = 0; k < ex.x.index.size(); ++k) g.at(r, ex.x.index[k]) += p[r] * ex.x.value[k];
        g.at(r, bias) += p[r];
      }
    }
    if (l2 != 0.0)
      for (std::size_t r = 0; r < w_.rows; ++r)
        for (std::size_t c = 0; c < bias; ++c) g.at(r, c) += l2 * w_.at(r, c);
    return g;
  }

  WeightMatrix& mutable_weights() noexcept { return w_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["feature_kind"] = to_string(fx_.kind());
    j["labels"] = labels_;
    if (fx_.kind() == FeatureKind::tfidf) {
      j["vocab"] = fx_.vocab();
      j["idf"] = fx_.idf();
    } else {
      j["embedding_dim"] = fx_.size();
    }
    j["lowercase"] = fx_.lowercase();
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < w_.rows; ++r)
      rows.push_back(std::vector<double>(w_.data.begin() + static_cast<std::ptrdiff_t>(r * w_.cols),
                                         w_.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * w_.cols)));
    j["weights"] = std::move(rows);
    j["config"] = genrefool::to_json(config_);
    j["final_loss"] = final_loss_;
    return j;
  }

  static NativeLinearVictim from_json(const nlohmann::json& j, std::shared_ptr<const EmbeddingStore> store = nullptr) {
    if (j.value("format_version", 0) != kFormatVersion) throw ParseError("unsupported model format version");
    auto kind = parse_feature_kind(j.at("feature_kind").get<std::string>());
    if (!kind) throw ParseError("bad feature_kind");
    const bool lowercase = j.value("lowercase", true);
    FeatureExtractor fx;
    if (*kind == FeatureKind::tfidf) {
      fx = FeatureExtractor::tfidf(j.at("vocab").get<std::vector<std::string>>(),
                                   j.at("idf").get<std::vector<double>>(), lowercase);
    } else {
      if (!store) throw Error("mean-embedding model needs --embeddings");
      if (store->dim() != j.at("embedding_dim").get<std::size_t>())
        throw Error("embedding dimension does not match the model");
      fx = FeatureExtractor::mean_embedding(std::move(store));
    }
    auto labels = j.at("labels").get<std::vector<std::string>>();
    const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
    WeightMatrix w(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != w.cols) throw ParseError("ragged weight matrix");
      std::copy(rows[r].begin(), rows[r].end(), w.data.begin() + static_cast<std::ptrdiff_t>(r * w.cols));
    }
    NativeLinearVictim m(std::move(labels), std::move(fx), std::move(w), train_config_from_json(j.at("config")));
    m.final_loss_ = j.value("final_loss", 0.0);
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model " + path);
    out << to_json().dump() << '\n';
  }

  static NativeLinearVictim load(const std::string& path, std::shared_ptr<const EmbeddingStore> store = nullptr) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path + ": " + e.what());
    }
    return from_json(j, std::move(store));
  }

 private:
  double penalty() const {
    double s = 0.0;
    const std::size_t bias = w_.cols - 1;
    for (std::size_t r = 0; r < w_.rows; ++r)
      for (std::size_t c = 0; c < bias; ++c) s += w_.at(r, c) * w_.at(r, c);
    return s;
  }

  std::vector<std::string> labels_;
  FeatureExtractor fx_;
  WeightMatrix w_;
  TrainConfig config_;
  double final_loss_ = 0.0;
};

struct LabeledText {
  std::string text;
  std::string label;
};

// Seeded mini-batch gradient descent with momentum. Each step moves by
// lr * velocity, where velocity accumulates the batch gradient divided by
// the batch size. Zero epochs leave all weights at zero.
inline NativeLinearVictim train_native(const LabelSet& labels, const std::vector<LabeledText>& data,
                                       const TrainConfig& config,
                                       std::shared_ptr<const EmbeddingStore> store = nullptr) {
  if (labels.size() < 2) throw Error("training needs at least 2 labels");
  std::vector<std::size_t> per_label(labels.size(), 0);
  std::vector<std::string> texts;
  texts.reserve(data.size());
  for (const auto& d : data) {
    auto li = labels.index_of(d.label);
    if (!li) throw Error("unknown label " + d.label);
    ++per_label[*li];
    texts.push_back(d.text);
  }
  for (std::size_t l = 0; l < labels.size(); ++l)
    if (per_label[l] == 0) throw Error("label " + labels[l] + " has no training documents");
  if (config.batch_size == 0) throw Error("batch size must be positive");

  FeatureExtractor fx = config.features == FeatureKind::tfidf
                            ? FeatureExtractor::fit_tfidf(texts, config.max_vocab, config.lowercase)
                            : FeatureExtractor::mean_embedding(std::move(store));
  NativeLinearVictim model(labels.names(), fx, WeightMatrix(labels.size(), fx.size() + 1), config);

  std::vector<Example> examples;
  examples.reserve(data.size());
  for (const auto& d : data) examples.push_back({fx(d.text), *labels.index_of(d.label)});

  WeightMatrix velocity(labels.size(), fx.size() + 1);
  std::vector<std::size_t> order(examples.size());
  std::vector<Example> batch;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 rng(derive_seed(config.seed, epoch));
    shuffle(std::span<std::size_t>(order), rng);
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      batch.clear();
      for (std::size_t i = b; i < std::min(b + config.batch_size, order.size()); ++i) batch.push_back(examples[order[i]]);
      const auto g = model.gradient(batch, config.l2);
      const double scale = 1.0 / static_cast<double>(batch.size());
      auto& w = model.mutable_weights();
      for (std::size_t i = 0; i < w.data.size(); ++i) {
        velocity.data[i] = config.momentum * velocity.data[i] + g.data[i] * scale;
        w.data[i] -= config.learning_rate * velocity.data[i];
      }
      ++step;
      for (double v : w.data)
        if (!std::isfinite(v)) throw Error("training diverged (non-finite weights) at step " + std::to_string(step));
    }
  }
  const double loss = examples.empty() ? 0.0 : model.loss(examples, 0.0) / static_cast<double>(examples.size());
  if (!std::isfinite(loss)) throw Error("NaN training loss at step " + std::to_string(step));
  model.set_final_loss(loss);
  return model;
}

inline NativeLinearVictim train_native(const Corpus& corpus, const TrainConfig& config,
                                       std::shared_ptr<const EmbeddingStore> store = nullptr) {
  std::vector<LabeledText> data;
  data.reserve(corpus.size());
  for (const auto& d : corpus.docs) data.push_back({d.text, d.label});
  return train_native(corpus.labels, data, config, std::move(store));
}

}  // namespace genrefool
