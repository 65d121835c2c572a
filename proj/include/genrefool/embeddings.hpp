#pragma once

// Word-vector store with exact nearest-neighbor queries, neighbor-similarity
// diagnostics and the mean-embedding sentence scorer.
//
// Rows are L2-normalized at construction, so dot product == cosine across
// the whole toolkit.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "genrefool/error.hpp"
#include "genrefool/rng.hpp"
#include "genrefool/text.hpp"

namespace genrefool {

class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  // `values` is row-major, words.size() x dim. Words are case-folded and
  // later duplicates dropped. A zero row is an error.
  EmbeddingStore(const std::vector<std::string>& words, std::span<const float> values, std::size_t dim)
      : dim_(dim) {
    if (dim == 0) throw Error("embedding dimension must be positive");
    if (values.size() != words.size() * dim) throw Error("embedding matrix size mismatch");
    words_.reserve(words.size());
    matrix_.reserve(values.size());
    for (std::size_t r = 0; r < words.size(); ++r) {
      std::string key = to_lower(words[r]);
      if (index_.count(key)) continue;
      const auto row = values.subspan(r * dim, dim);
      double sq = 0.0;
      for (float v : row) sq += static_cast<double>(v) * v;
      if (!(sq > 0.0) || !std::isfinite(sq)) throw Error("zero or non-finite vector for word " + words[r]);
      const double inv = 1.0 / std::sqrt(sq);
      for (float v : row) matrix_.push_back(static_cast<float>(v * inv));
      index_.emplace(key, words_.size());
      words_.push_back(std::move(key));
    }
  }

  std::size_t size() const noexcept { return words_.size(); }
  std::size_t dim() const noexcept { return dim_; }

  std::optional<std::size_t> index_of(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& word(std::size_t i) const { return words_.at(i); }
  const std::vector<std::string>& words() const noexcept { return words_; }

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(matrix_).subspan(i * dim_, dim_);
  }

  std::span<const float> matrix() const noexcept { return matrix_; }

  double dot(std::size_t a, std::size_t b) const noexcept {
    const float* x = matrix_.data() + a * dim_;
    const float* y = matrix_.data() + b * dim_;
    double s = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) s += static_cast<double>(x[d]) * y[d];
    return s;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::vector<float> matrix_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Text vector format: header "V D", then "word v1 ... vD" per line.
inline EmbeddingStore read_embeddings(std::istream& in, std::optional<std::size_t> limit = std::nullopt) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: missing header");
  std::size_t declared_rows = 0, dim = 0;
  {
    std::istringstream hs(line);
    if (!(hs >> declared_rows >> dim) || dim == 0) throw ParseError("line 1: expected header \"V D\"");
  }
  const std::size_t want = limit ? std::min(*limit, declared_rows) : declared_rows;

  std::vector<std::string> words;
  std::vector<float> values;
  words.reserve(want);
  values.reserve(want * dim);
  std::size_t line_no = 1;
  while (words.size() < want && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end && *p == ' ') ++p;
    const char* wend = p;
    while (wend < end && *wend != ' ') ++wend;
    if (wend == p) throw ParseError("line " + std::to_string(line_no) + ": missing word");
    std::string word(p, wend);
    p = wend;

    std::size_t got = 0;
    while (true) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) throw ParseError("line " + std::to_string(line_no) + ": bad number");
      if (got < dim) values.push_back(static_cast<float>(v));
      ++got;
      p = next;
    }
    if (got != dim)
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                       " values, got " + std::to_string(got));
    words.push_back(std::move(word));
  }
  return EmbeddingStore(words, values, dim);
}

inline EmbeddingStore load_embeddings(const std::string& path, std::optional<std::size_t> limit = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings " + path);
  return read_embeddings(in, limit);
}

inline void write_embeddings(std::ostream& out, const std::vector<std::string>& words,
                             std::span<const float> values, std::size_t dim, int precision = 6) {
  out << words.size() << ' ' << dim << '\n';
  char buf[64];
  for (std::size_t r = 0; r < words.size(); ++r) {
    out << words[r];
    for (std::size_t d = 0; d < dim; ++d) {
      std::snprintf(buf, sizeof buf, " %.*f", precision, static_cast<double>(values[r * dim + d]));
      out << buf;
    }
    out << '\n';
  }
}

// Binary cache layout (little-endian):
//   8 bytes magic "GFEMB\x01\0\0", u64 rows, u64 dim,
//   rows x { u32 byte length, UTF-8 word }, rows*dim f32 (already normalized).
inline constexpr char kEmbeddingCacheMagic[8] = {'G', 'F', 'E', 'M', 'B', 1, 0, 0};

inline void save_embedding_cache(const std::string& path, const EmbeddingStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write embedding cache " + path);
  out.write(kEmbeddingCacheMagic, 8);
  const std::uint64_t rows = store.size(), dim = store.dim();
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&dim), 8);
  for (const auto& w : store.words()) {
    const auto len = static_cast<std::uint32_t>(w.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(w.data(), len);
  }
  const auto m = store.matrix();
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
}

inline EmbeddingStore load_embedding_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open embedding cache " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kEmbeddingCacheMagic, 8) != 0)
    throw ParseError(path + ": not an embedding cache");
  std::uint64_t rows = 0, dim = 0;
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&dim), 8);
  std::vector<std::string> words(rows);
  for (auto& w : words) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    w.resize(len);
    in.read(w.data(), len);
  }
  std::vector<float> values(rows * dim);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) throw ParseError(path + ": truncated embedding cache");
  return EmbeddingStore(words, values, dim);
}

// Loads through a binary cache kept in `cache_dir` (typically from
// GENREFOOL_CACHE). The cache key covers path, size, mtime and limit.
inline EmbeddingStore load_embeddings_cached(const std::string& path, std::optional<std::size_t> limit,
                                             const std::string& cache_dir) {
  if (cache_dir.empty()) return load_embeddings(path, limit);
  namespace fs = std::filesystem;
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  const auto mtime = fs::last_write_time(path, ec).time_since_epoch().count();
  std::ostringstream key;
  key << fs::absolute(path).string() << '|' << size << '|' << mtime << '|' << (limit ? *limit : 0);
  char name[32];
  std::snprintf(name, sizeof name, "%016llx.gfemb", static_cast<unsigned long long>(fnv1a(key.str())));
  const fs::path cached = fs::path(cache_dir) / name;
  if (fs::exists(cached)) {
    try {
      return load_embedding_cache(cached.string());
    } catch (const Error&) {
      // stale or corrupt: rebuild below
    }
  }
  auto store = load_embeddings(path, limit);
  fs::create_directories(cache_dir, ec);
  save_embedding_cache(cached.string(), store);
  return store;
}

struct Neighbor {
  std::string word;
  std::size_t index = 0;
  double similarity = 0.0;
};

struct NeighborList {
  std::string query;
  std::vector<Neighbor> neighbors;
};

// Exact scan. Neighbors ordered by similarity descending, ties by row
// order; the query row itself is excluded. k is clamped to size()-1.
inline NeighborList top_k_neighbors(const EmbeddingStore& store, std::size_t query, std::size_t k) {
  if (k == 0) throw Error("k must be at least 1");
  const std::size_t n = store.size();
  k = std::min(k, n > 0 ? n - 1 : 0);
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (i != query) scored.emplace_back(store.dot(query, i), i);
  auto better = [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
  NeighborList out;
  out.query = store.word(query);
  out.neighbors.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    out.neighbors.push_back({store.word(scored[i].second), scored[i].second, scored[i].first});
  return out;
}

// nullopt marks an out-of-vocabulary query.
inline std::optional<NeighborList> top_k_neighbors(const EmbeddingStore& store, std::string_view word,
                                                   std::size_t k) {
  auto idx = store.index_of(to_lower(word));
  if (!idx) return std::nullopt;
  return top_k_neighbors(store, *idx, k);
}

// Memoizes neighbor lists by (row, k). Safe for concurrent use.
class NeighborCache {
 public:
  explicit NeighborCache(const EmbeddingStore& store) : store_(store) {}

  std::optional<NeighborList> get(std::string_view word, std::size_t k) const {
    auto idx = store_.index_of(to_lower(word));
    if (!idx) return std::nullopt;
    const auto key = std::make_pair(*idx, k);
    {
      std::shared_lock lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto list = top_k_neighbors(store_, *idx, k);
    std::unique_lock lock(mutex_);
    return cache_.emplace(key, std::move(list)).first->second;
  }

  const EmbeddingStore& store() const noexcept { return store_; }

 private:
  const EmbeddingStore& store_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::pair<std::size_t, std::size_t>, NeighborList> cache_;
};

// Linear interpolation between closest ranks (the common "linear" rule).
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error("percentile of an empty list");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

// Percentiles of neighbor similarity over a seeded sample of words. With
// k == 1 only each word's closest neighbor counts; otherwise all top-k
// similarities are pooled.
inline std::pair<double, double> neighbor_percentiles(const EmbeddingStore& store, std::size_t k, double p_low,
                                                      double p_high, std::size_t sample, std::uint64_t seed) {
  if (k < 1) throw Error("k must be at least 1");
  if (!(p_low >= 0.0 && p_low < p_high && p_high <= 100.0)) throw Error("need 0 <= p_low < p_high <= 100");
  if (store.size() < 2) throw Error("store needs at least 2 words");
  std::vector<std::size_t> rows(store.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  if (sample >= store.size()) {
    if (sample > store.size())
      std::clog << "warning: sample " << sample << " exceeds vocabulary size " << store.size() << ", using all\n";
  } else {
    SplitMix64 rng(seed);
    shuffle(std::span<std::size_t>(rows), rng);
    rows.resize(sample);
  }
  std::vector<double> sims;
  for (auto r : rows) {
    const auto list = top_k_neighbors(store, r, k);
    for (const auto& nb : list.neighbors) sims.push_back(nb.similarity);
  }
  return {percentile(sims, p_low), percentile(sims, p_high)};
}

// Whole-text similarity used to gate substitutions. nullopt means the pair
// could not be scored; callers treat that as passing.
class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;
  virtual std::optional<double> score(std::string_view a, std::string_view b) const = 0;
  virtual std::string kind() const = 0;
};

// Cosine between the unweighted mean vectors of the in-vocabulary word
// tokens of each side (stop words included).
class MeanEmbeddingScorer final : public SentenceScorer {
 public:
  explicit MeanEmbeddingScorer(const EmbeddingStore& store) : store_(store) {}

  std::optional<std::vector<double>> mean_vector(std::string_view text) const {
    std::vector<double> sum(store_.dim(), 0.0);
    std::size_t hits = 0;
    for (const auto& t : tokenize(text)) {
      if (!t.is_word) continue;
      auto idx = store_.index_of(t.lower);
      if (!idx) continue;
      const auto row = store_.row(*idx);
      for (std::size_t d = 0; d < row.size(); ++d) sum[d] += row[d];
      ++hits;
    }
    if (hits == 0) return std::nullopt;
    for (auto& v : sum) v /= static_cast<double>(hits);
    return sum;
  }

  std::optional<double> score(std::string_view a, std::string_view b) const override {
    auto va = mean_vector(a);
    auto vb = mean_vector(b);
    if (!va || !vb) return std::nullopt;
    return cosine(*va, *vb);
  }

  std::string kind() const override { return "mean-embedding-cosine"; }

  static std::optional<double> cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
      dot += a[d] * b[d];
      na += a[d] * a[d];
      nb += b[d] * b[d];
    }
    if (na == 0.0 || nb == 0.0) return std::nullopt;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  }

 private:
  const EmbeddingStore& store_;
};

inline std::optional<double> sentence_similarity(const SentenceScorer& scorer, std::string_view a,
                                                 std::string_view b) {
  return scorer.score(a, b);
}

}  // namespace genrefool
