#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <signal.h>
#include <thread>

#include "genrefool/external_victim.hpp"

using namespace genrefool;
using namespace std::chrono_literals;

namespace {

ExternalVictimSpec stub(const std::string& args, std::chrono::milliseconds timeout = 5000ms) {
  ExternalVictimSpec s;
  s.command = std::string(FAKE_VICTIM) + " " + args;
  s.timeout = timeout;
  return s;
}

}  // namespace

TEST(ExternalVictim, UniformRows) {
  auto v = launch_external(stub("--labels A,B,C,D"));
  EXPECT_EQ(v->labels(), (std::vector<std::string>{"A", "B", "C", "D"}));
  const std::vector<std::string> texts{"nothing here", "", "more text"};
  for (const auto& p : v->predict_proba(texts)) EXPECT_EQ(p, ProbRow(4, 0.25));
}

TEST(ExternalVictim, ReordersColumnsToCorpusOrder) {
  auto spec = stub("--labels A,B,C");
  spec.expected_labels = std::vector<std::string>{"C", "A", "B"};
  auto v = launch_external(spec);
  EXPECT_EQ(v->labels(), (std::vector<std::string>{"C", "A", "B"}));
  EXPECT_EQ(v->predict_one("label a please"), (ProbRow{0, 1, 0}));
  EXPECT_EQ(v->predict_one("c"), (ProbRow{1, 0, 0}));
}

TEST(ExternalVictim, BatchesAcrossMaxBatch) {
  auto spec = stub("--labels A,B");
  spec.max_batch = 3;
  auto v = launch_external(spec);
  std::vector<std::string> texts;
  for (int i = 0; i < 10; ++i) texts.push_back(i % 2 ? "b" : "a");
  const auto rows = v->predict_proba(texts);
  ASSERT_EQ(rows.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(argmax(rows[static_cast<std::size_t>(i)]), static_cast<std::size_t>(i % 2));
}

TEST(ExternalVictim, LabelMismatchListsBothSets) {
  auto spec = stub("--labels A,B,C,D,E,F,G,H,I");
  spec.expected_labels = std::vector<std::string>{"A", "B", "C", "D", "E", "F", "G", "H", "I", "J"};
  try {
    launch_external(spec);
    FAIL();
  } catch (const VictimError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("label mismatch"), std::string::npos);
    EXPECT_NE(msg.find("A,B,C,D,E,F,G,H,I}"), std::string::npos);
    EXPECT_NE(msg.find("I,J}"), std::string::npos);
  }
}

TEST(ExternalVictim, ChildDeathIsAnErrorNotAHang) {
  auto v = launch_external(stub("--labels A,B --die-after 1"));
  EXPECT_NO_THROW(v->predict_one("x"));
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(v->predict_one("y"), VictimError);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 5s);
}

TEST(ExternalVictim, KilledBetweenRequests) {
  auto v = launch_external(stub("--labels A,B"));
  auto* ext = dynamic_cast<ExternalVictim*>(v.get());
  ASSERT_NE(ext, nullptr);
  EXPECT_NO_THROW(v->predict_one("x"));
  ::kill(-ext->pid(), SIGKILL);
  std::this_thread::sleep_for(50ms);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(v->predict_one("y"), VictimError);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 5s);
}

TEST(ExternalVictim, TimeoutBoundsAHungChild) {
  auto v = launch_external(stub("--labels A,B --hang", 300ms));
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(v->predict_one("x"), VictimError);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 3s);
  EXPECT_THROW(launch_external(stub("--no-hello", 300ms)), VictimError);
}

TEST(ExternalVictim, MalformedRepliesCarryRawLine) {
  auto garbage = launch_external(stub("--labels A,B --garbage"));
  try {
    garbage->predict_one("x");
    FAIL();
  } catch (const VictimError& e) {
    EXPECT_EQ(e.raw(), "this is not json");
  }
  auto bad = launch_external(stub("--labels A,B --bad-probs"));
  EXPECT_THROW(bad->predict_one("x"), VictimError);
  auto err = launch_external(stub("--labels A,B --error"));
  try {
    err->predict_one("x");
    FAIL();
  } catch (const VictimError& e) {
    EXPECT_NE(e.raw().find("model exploded"), std::string::npos);
  }
}

TEST(ExternalVictim, MissingCommandFails) {
  ExternalVictimSpec s;
  s.command = "/nonexistent/victim-binary";
  s.timeout = 2000ms;
  EXPECT_THROW(launch_external(s), VictimError);
}

TEST(ExternalVictim, ModelBackedChildMatchesInProcess) {
  Corpus c{LabelSet({"Legal", "Review", "News"}), {}};
  const char* texts[] = {"the tenant shall pay", "lovely stay, great food", "rain expected today",
                         "parties shall agree",  "would visit again",        "minister said on monday"};
  for (int i = 0; i < 6; ++i)
    c.docs.push_back({std::to_string(i), texts[i], c.labels[static_cast<std::size_t>(i % 3)], Split::train});
  TrainConfig cfg;
  cfg.epochs = 30;
  const auto model = train_native(c, cfg);
  const auto path = (std::filesystem::temp_directory_path() / ("gf-ext-" + std::to_string(::getpid()) + ".json")).string();
  model.save(path);
  auto v = launch_external(stub("--model " + path));
  std::vector<std::string> batch;
  for (int i = 0; i < 50; ++i) batch.push_back(std::string(texts[i % 6]) + (i % 4 ? " and more" : ""));
  const auto remote = v->predict_proba(batch);
  const auto local = model.predict_proba(batch);
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(remote[i][l], local[i][l], 1e-9);
  std::filesystem::remove(path);
}

TEST(ExternalVictim, ConcurrentCallersAreSerialized) {
  auto v = launch_external(stub("--labels A,B"));
  std::vector<std::thread> pool;
  std::atomic<int> wrong{0};
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) {
        const bool b = (i + t) % 2;
        if (argmax(v->predict_one(b ? "b" : "a")) != (b ? 1u : 0u)) ++wrong;
      }
    });
  for (auto& th : pool) th.join();
  EXPECT_EQ(wrong.load(), 0);
}
