// genrefool: train victims, run attack campaigns, harden, generate data.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "genrefool/genrefool.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace genrefool;

namespace {

constexpr const char* kVersion = "0.3.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "missing";
  std::ostringstream ss;
  ss << in.rdbuf();
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(fnv1a(ss.str())));
  return buf;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& argv) {
    j_["command"] = std::move(command);
    j_["argv"] = argv;
    j_["tool_version"] = kVersion;
    j_["flags"] = json::object();
    j_["seeds"] = json::object();
    j_["inputs"] = json::object();
    j_["outputs"] = json::array();
  }

  template <typename T>
  void flag(const std::string& name, const T& value) { j_["flags"][name] = value; }
  void seed(const std::string& name, std::uint64_t s) { j_["seeds"][name] = s; }
  void input(const std::string& path) {
    if (!path.empty()) j_["inputs"][path] = file_digest(path);
  }
  void output(const std::string& path) { j_["outputs"].push_back({{"path", path}, {"digest", file_digest(path)}}); }
  void set(const std::string& key, json v) { j_[key] = std::move(v); }

  void write(const std::string& path) {
    j_["timestamp"] = utc_timestamp();
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest " + path);
    out << j_.dump(2) << '\n';
  }

 private:
  json j_;
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  return out;
}

CorpusFormat format_for(const std::string& path, const std::string& flag) {
  if (flag != "auto") {
    auto f = parse_corpus_format(flag);
    if (!f) throw UsageError("--format must be jsonl or tsv");
    return *f;
  }
  return fs::path(path).extension() == ".tsv" ? CorpusFormat::tsv : CorpusFormat::jsonl;
}

std::optional<LabelSet> label_set_for(const std::string& flag) {
  if (flag == "auto") return std::nullopt;
  if (flag == "ftd") return LabelSet::ftd();
  std::vector<std::string> names;
  std::stringstream ss(flag);
  for (std::string item; std::getline(ss, item, ',');)
    if (!trim(item).empty()) names.emplace_back(trim(item));
  if (names.size() < 2) throw UsageError("--labels needs auto, ftd, or a comma list of at least 2 labels");
  return LabelSet(std::move(names));
}

std::string cache_dir() {
  const char* env = std::getenv("GENREFOOL_CACHE");
  return env ? env : "";
}

std::shared_ptr<const EmbeddingStore> load_store(const std::string& path, std::size_t limit) {
  if (path.empty()) return nullptr;
  std::optional<std::size_t> lim;
  if (limit > 0) lim = limit;
  return std::make_shared<const EmbeddingStore>(load_embeddings_cached(path, lim, cache_dir()));
}

// Training flags shared by train, attack and harden.
struct TrainFlags {
  std::string features = "tfidf";
  std::size_t epochs = 10;
  double lr = 0.5;
  double l2 = 1e-4;
  std::size_t batch = 16;
  double momentum = 0.9;
  std::size_t max_vocab = 20000;
  bool no_lowercase = false;

  void add(CLI::App* app) {
    app->add_option("--features", features, "tfidf or embed")->check(CLI::IsMember({"tfidf", "embed"}));
    app->add_option("--epochs", epochs);
    app->add_option("--lr", lr);
    app->add_option("--l2", l2);
    app->add_option("--batch-size", batch);
    app->add_option("--momentum", momentum);
    app->add_option("--max-vocab", max_vocab);
    app->add_flag("--no-lowercase", no_lowercase);
  }

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig c;
    c.features = *parse_feature_kind(features);
    c.epochs = epochs;
    c.learning_rate = lr;
    c.l2 = l2;
    c.batch_size = batch;
    c.momentum = momentum;
    c.max_vocab = max_vocab;
    c.lowercase = !no_lowercase;
    c.seed = seed;
    return c;
  }

  void record(Manifest& m) const {
    m.flag("features", features);
    m.flag("epochs", epochs);
    m.flag("lr", lr);
    m.flag("l2", l2);
    m.flag("batch_size", batch);
    m.flag("momentum", momentum);
    m.flag("max_vocab", max_vocab);
    m.flag("lowercase", !no_lowercase);
  }
};

struct Options {
  std::vector<std::string> argv;

  // train
  std::string corpus, format = "auto", labels = "auto", embeddings, out;
  std::size_t embeddings_limit = 0;
  std::uint64_t seed = 0;
  TrainFlags train;

  // attack
  std::string method = "textfooler", mode = "untargeted", victim = "train:tfidf", out_dir = "out";
  std::vector<std::size_t> ks;
  std::vector<double> sent_thresholds, percents;
  double word_threshold = 0.5, budget = 1.0;
  std::string pos_lexicon, stopwords = "en", swap_unit = "list", augment;
  bool no_attack_stopwords = false;
  std::size_t folds = 5, keywords = 100, jobs = 0;
  double timeout = 30.0;

  // harden
  std::string train_path, archive, test;
  std::vector<std::uint64_t> seeds;

  // synth
  std::size_t genres = 10, docs_per_genre = 60, test_docs_per_genre = 20, dim = 32;
  double bias = 0.9;

  // replay
  std::string manifest;
};

StopWordList stopwords_for(const std::string& flag) {
  if (flag == "en" || flag == "ru") return builtin_stopwords(flag);
  if (flag == "none") return StopWordList({}, "none");
  return load_stopwords(flag);
}

void check_training_features(const Options& o) {
  if (o.train.features == "embed" && o.embeddings.empty())
    throw UsageError("--features embed requires --embeddings");
}

int cmd_train(const Options& o) {
  check_training_features(o);
  if (o.out.empty()) throw UsageError("--out is required");
  const auto corpus = load_corpus(o.corpus, format_for(o.corpus, o.format), label_set_for(o.labels));
  const auto store = load_store(o.embeddings, o.embeddings_limit);
  const auto model = train_native(corpus, o.train.config(o.seed), store);
  if (auto dir = fs::path(o.out).parent_path(); !dir.empty()) fs::create_directories(dir);
  model.save(o.out);

  Manifest m("train", o.argv);
  m.flag("corpus", o.corpus);
  m.flag("labels", corpus.labels.names());
  m.flag("embeddings", o.embeddings);
  o.train.record(m);
  m.seed("seed", o.seed);
  m.input(o.corpus);
  m.input(o.embeddings);
  m.output(o.out);
  m.set("final_loss", model.final_loss());
  m.write(o.out + ".manifest.json");
  std::cout << "trained " << corpus.size() << " documents, final loss " << model.final_loss() << "\n";
  return 0;
}

int cmd_attack(const Options& o) {
  CampaignConfig cfg;
  cfg.method = *parse_attack_method(o.method);
  cfg.mode = *parse_attack_mode(o.mode);
  cfg.num_folds = o.folds;
  cfg.seed = o.seed;
  if (!o.ks.empty()) cfg.ks = o.ks;
  if (!o.sent_thresholds.empty()) cfg.sent_thresholds = o.sent_thresholds;
  if (!o.percents.empty()) cfg.percents = o.percents;
  cfg.filter.word_sim_min = o.word_threshold;
  cfg.filter.max_replaced_fraction = o.budget;
  cfg.filter.attack_stopwords = !o.no_attack_stopwords;
  cfg.filter.pos_filter = !o.pos_lexicon.empty();
  cfg.keywords_per_genre = o.keywords;
  cfg.swap_unit = o.swap_unit == "occurrence" ? SwapUnit::occurrence : SwapUnit::list;
  cfg.jobs = o.jobs ? o.jobs : std::max(1u, std::thread::hardware_concurrency());
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (cfg.method == AttackMethod::textfooler && o.embeddings.empty())
    throw UsageError("--method textfooler requires --embeddings");

  const auto corpus = load_corpus(o.corpus, format_for(o.corpus, o.format), label_set_for(o.labels));
  const auto store = load_store(o.embeddings, o.embeddings_limit);
  const auto stop = stopwords_for(o.stopwords);
  std::optional<PosLexicon> pos;
  if (!o.pos_lexicon.empty()) pos = PosLexicon::load(o.pos_lexicon);
  std::optional<NeighborCache> neighbors;
  std::optional<MeanEmbeddingScorer> scorer;
  if (store) {
    neighbors.emplace(*store);
    scorer.emplace(*store);
  }
  AttackResources res{store.get(), neighbors ? &*neighbors : nullptr, scorer ? &*scorer : nullptr, &stop,
                      pos ? &*pos : nullptr};

  VictimFactory factory;
  const std::string& v = o.victim;
  if (v.rfind("train:", 0) == 0) {
    auto kind = parse_feature_kind(v.substr(6));
    if (!kind) throw UsageError("--victim train:<tfidf|embed>");
    if (*kind == FeatureKind::embedding && !store) throw UsageError("--victim train:embed requires --embeddings");
    auto tc = o.train.config(o.seed);
    tc.features = *kind;
    factory = native_factory(tc, store, o.seed);
  } else if (v.rfind("native:", 0) == 0) {
    std::shared_ptr<const VictimModel> model =
        std::make_shared<NativeLinearVictim>(NativeLinearVictim::load(v.substr(7), store));
    factory = fixed_factory(model);
  } else if (v.rfind("exec:", 0) == 0) {
    ExternalVictimSpec spec;
    spec.command = v.substr(5);
    spec.timeout = std::chrono::milliseconds(static_cast<long long>(o.timeout * 1000));
    spec.expected_labels = corpus.labels.names();
    factory = fixed_factory(std::shared_ptr<const VictimModel>(launch_external(spec)));
  } else {
    throw UsageError("--victim must be train:<kind>, native:<file> or exec:<command>");
  }

  std::vector<Augmentation> augmentation;
  if (!o.augment.empty()) {
    std::ifstream in(o.augment);
    if (!in) throw Error("cannot open archive " + o.augment);
    augmentation = broken_texts(read_archive_jsonl(in));
  }

  const auto result = run_campaign(corpus, cfg, factory, res, stop, augmentation);

  fs::create_directories(o.out_dir);
  const auto dir = fs::path(o.out_dir);
  const std::string archive_path = (dir / "archive.jsonl").string();
  const std::string csv_path = (dir / "report.csv").string();
  const std::string md_path = (dir / "report.md").string();
  const std::string diff_path = (dir / "diffs.md").string();
  {
    auto out = open_out(archive_path);
    write_archive_jsonl(out, result.archive);
  }
  {
    auto out = open_out(csv_path);
    write_report_csv(out, result.report);
  }
  {
    auto out = open_out(md_path);
    write_report_markdown(out, result.report);
  }
  {
    auto out = open_out(diff_path);
    for (const auto& e : result.archive)
      if (e.result.success()) write_diff_markdown(out, e.result);
  }

  Manifest m("attack", o.argv);
  m.flag("corpus", o.corpus);
  m.flag("labels", corpus.labels.names());
  m.flag("method", o.method);
  m.flag("mode", o.mode);
  m.flag("victim", o.victim);
  m.flag("k", cfg.ks);
  m.flag("sent_threshold", cfg.sent_thresholds);
  m.flag("percent", cfg.percents);
  m.flag("word_threshold", cfg.filter.word_sim_min);
  m.flag("budget", cfg.filter.max_replaced_fraction);
  m.flag("attack_stopwords", cfg.filter.attack_stopwords);
  m.flag("pos_lexicon", o.pos_lexicon);
  m.flag("stopwords", o.stopwords);
  m.flag("folds", cfg.num_folds);
  m.flag("keywords", cfg.keywords_per_genre);
  m.flag("swap_unit", o.swap_unit);
  m.flag("jobs", cfg.jobs);
  m.flag("augment", o.augment);
  o.train.record(m);
  m.seed("seed", o.seed);
  m.input(o.corpus);
  m.input(o.embeddings);
  m.input(o.pos_lexicon);
  m.input(o.augment);
  if (v.rfind("native:", 0) == 0) m.input(v.substr(7));
  m.output(archive_path);
  m.output(csv_path);
  m.output(md_path);
  m.output(diff_path);
  m.set("partial", result.partial);
  if (result.partial) m.set("error", result.error);
  m.write((dir / "manifest.json").string());

  for (const auto& c : result.report.cells)
    std::cout << "k=" << c.cell.k << " sent=" << c.cell.sent_sim_min << " percent=" << c.cell.percent
              << ": broken " << c.broken << " of " << c.attackable << " attackable\n";
  if (result.partial) {
    std::cerr << "error: campaign stopped early: " << result.error << "\n";
    return 1;
  }
  return 0;
}

int cmd_harden(const Options& o) {
  check_training_features(o);
  if (o.seeds.empty()) throw UsageError("--seeds needs at least one value");
  auto labels = label_set_for(o.labels);
  const auto train = load_corpus(o.train_path, format_for(o.train_path, o.format), labels);
  const auto test = load_corpus(o.test, format_for(o.test, o.format), train.labels);
  std::vector<Augmentation> broken;
  if (!o.archive.empty()) {
    std::ifstream in(o.archive);
    if (!in) throw Error("cannot open archive " + o.archive);
    broken = broken_texts(read_archive_jsonl(in));
  }
  for (const auto& b : broken)
    if (!train.labels.contains(b.label)) throw Error("archive label " + b.label + " is not a training label");
  const auto store = load_store(o.embeddings, o.embeddings_limit);
  const auto cmp = compare_hardening(train, broken, test, o.train.config(o.seeds.front()), o.seeds, store);
  const auto models = harden(train, broken, o.train.config(o.seeds.front()), store);

  fs::create_directories(o.out_dir);
  const auto dir = fs::path(o.out_dir);
  const std::string base_path = (dir / "base_model.json").string();
  const std::string robust_path = (dir / "robust_model.json").string();
  const std::string md_path = (dir / "comparison.md").string();
  const std::string csv_path = (dir / "comparison.csv").string();
  models.base.save(base_path);
  models.robust.save(robust_path);
  {
    auto out = open_out(md_path);
    write_hardening_markdown(out, cmp);
  }
  {
    auto out = open_out(csv_path);
    write_hardening_csv(out, cmp);
  }

  Manifest m("harden", o.argv);
  m.flag("train", o.train_path);
  m.flag("archive", o.archive);
  m.flag("test", o.test);
  m.flag("embeddings", o.embeddings);
  o.train.record(m);
  m.set("seeds", json{{"seeds", o.seeds}});
  m.input(o.train_path);
  m.input(o.archive);
  m.input(o.test);
  m.input(o.embeddings);
  m.output(base_path);
  m.output(robust_path);
  m.output(md_path);
  m.output(csv_path);
  m.set("broken_texts_added", cmp.added);
  m.write((dir / "manifest.json").string());
  std::cout << "base accuracy " << cmp.base.accuracy.mean << ", robust accuracy " << cmp.robust.accuracy.mean << " ("
            << cmp.added << " broken texts added)\n";
  return 0;
}

int cmd_synth(const Options& o) {
  SyntheticBiasSpec spec;
  spec.genres = o.genres;
  spec.docs_per_genre = o.docs_per_genre;
  spec.test_docs_per_genre = o.test_docs_per_genre;
  spec.bias = o.bias;
  spec.dim = o.dim;
  spec.seed = o.seed;
  try {
    spec.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto data = generate_synthetic(spec);
  fs::create_directories(o.out_dir);
  const auto dir = fs::path(o.out_dir);
  const std::string train_path = (dir / "train.jsonl").string();
  const std::string test_path = (dir / "test.jsonl").string();
  const std::string vec_path = (dir / "embeddings.vec").string();
  const std::string pools_path = (dir / "pools.json").string();
  write_corpus(train_path, data.corpus.filter(Split::train));
  write_corpus(test_path, data.corpus.filter(Split::test));
  {
    auto out = open_out(vec_path);
    write_embeddings(out, data.vocab, data.vectors, data.dim);
  }
  {
    auto out = open_out(pools_path);
    out << json{{"function_words", data.function_words},
                {"style_words", data.style_words},
                {"topic_words", data.topic_words}}
               .dump(1)
        << '\n';
  }
  Manifest m("synth", o.argv);
  m.flag("genres", spec.genres);
  m.flag("docs_per_genre", spec.docs_per_genre);
  m.flag("test_docs_per_genre", spec.test_docs_per_genre);
  m.flag("bias", spec.bias);
  m.flag("dim", spec.dim);
  m.seed("seed", spec.seed);
  m.output(train_path);
  m.output(test_path);
  m.output(vec_path);
  m.output(pools_path);
  m.write((dir / "manifest.json").string());
  std::cout << "wrote " << data.corpus.size() << " documents and " << data.vocab.size() << " vectors to " << o.out_dir
            << "\n";
  return 0;
}

int run(std::vector<std::string> args);

int cmd_replay(const Options& o) {
  std::ifstream in(o.manifest);
  if (!in) throw Error("cannot open manifest " + o.manifest);
  const auto j = json::parse(in);
  auto argv = j.at("argv").get<std::vector<std::string>>();
  if (argv.size() < 2 || argv[1] == "replay") throw Error("manifest does not hold a replayable command");
  return run(argv);
}

int run(std::vector<std::string> args) {
  Options o;
  o.argv = args;
  CLI::App app{"Genre classifier robustness toolkit", "genrefool"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train a native victim");
  train->add_option("--corpus", o.corpus)->required();
  train->add_option("--format", o.format, "jsonl, tsv or auto");
  train->add_option("--labels", o.labels, "auto, ftd or a comma list");
  train->add_option("--embeddings", o.embeddings, ".vec file (needed for --features embed)");
  train->add_option("--embeddings-limit", o.embeddings_limit);
  train->add_option("--seed", o.seed);
  train->add_option("--out", o.out)->required();
  o.train.add(train);

  auto* attack = app.add_subcommand("attack", "run a cross-validated attack campaign");
  attack->add_option("--corpus", o.corpus)->required();
  attack->add_option("--format", o.format);
  attack->add_option("--labels", o.labels);
  attack->add_option("--method", o.method)->check(CLI::IsMember({"textfooler", "keywords"}));
  attack->add_option("--mode", o.mode)->check(CLI::IsMember({"untargeted", "targeted"}));
  attack->add_option("--k", o.ks, "neighbors per word (repeatable)")->check(CLI::PositiveNumber);
  attack->add_option("--sent-threshold", o.sent_thresholds, "sentence similarity floor (repeatable)");
  attack->add_option("--percent", o.percents, "keyword percentage (repeatable)");
  attack->add_option("--word-threshold", o.word_threshold);
  attack->add_option("--pos-lexicon", o.pos_lexicon);
  attack->add_flag("--no-attack-stopwords", o.no_attack_stopwords);
  attack->add_option("--stopwords", o.stopwords, "en, ru, none or a file");
  attack->add_option("--folds", o.folds);
  attack->add_option("--seed", o.seed);
  attack->add_option("--victim", o.victim, "train:tfidf|train:embed|native:<file>|exec:<command>");
  attack->add_option("--budget", o.budget, "max fraction of words replaced");
  attack->add_option("--keywords", o.keywords, "keywords per genre");
  attack->add_option("--swap-unit", o.swap_unit)->check(CLI::IsMember({"list", "occurrence"}));
  attack->add_option("--augment", o.augment, "archive whose broken texts join every fold's training data");
  attack->add_option("--embeddings", o.embeddings);
  attack->add_option("--embeddings-limit", o.embeddings_limit);
  attack->add_option("--jobs", o.jobs);
  attack->add_option("--timeout", o.timeout, "seconds per external victim reply");
  attack->add_option("--out-dir", o.out_dir);
  o.train.add(attack);

  auto* hard = app.add_subcommand("harden", "retrain on broken texts and compare");
  hard->add_option("--train", o.train_path)->required();
  hard->add_option("--archive", o.archive);
  hard->add_option("--test", o.test)->required();
  hard->add_option("--seeds", o.seeds)->expected(1, -1);
  hard->add_option("--format", o.format);
  hard->add_option("--labels", o.labels);
  hard->add_option("--embeddings", o.embeddings);
  hard->add_option("--embeddings-limit", o.embeddings_limit);
  hard->add_option("--out-dir", o.out_dir);
  o.train.add(hard);

  auto* synth = app.add_subcommand("synth", "generate a synthetic biased corpus");
  synth->add_option("--genres", o.genres);
  synth->add_option("--docs-per-genre", o.docs_per_genre);
  synth->add_option("--test-docs-per-genre", o.test_docs_per_genre);
  synth->add_option("--bias", o.bias);
  synth->add_option("--dim", o.dim);
  synth->add_option("--seed", o.seed);
  synth->add_option("--out-dir", o.out_dir);

  auto* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  replay->add_option("manifest", o.manifest)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(o);
    if (*attack) return cmd_attack(o);
    if (*hard) {
      if (o.seeds.empty()) o.seeds = {0, 1, 2, 3, 4};
      return cmd_harden(o);
    }
    if (*synth) return cmd_synth(o);
    if (*replay) return cmd_replay(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  return run(std::vector<std::string>(argv, argv + argc));
}
