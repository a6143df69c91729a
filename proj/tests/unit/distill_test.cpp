#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "../support/fixtures.hpp"
#include "../support/function_client.hpp"
#include "../support/sandbox_support.hpp"
#include "rulesynth/distill.hpp"
#include "rulesynth/error.hpp"

namespace rulesynth {
namespace {

namespace fs = std::filesystem;

std::string use_case_json(int i) {
  return "{\"title\": \"Use case " + std::to_string(i) +
         "\", \"description\": \"Does thing " + std::to_string(i) + ".\"}";
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

class TempDir {
public:
  TempDir() {
    static int n = 0;
    path_ = fs::temp_directory_path() /
            ("rulesynth-distill-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

TEST(Chat, DigestIsStableAndSensitive) {
  ChatRequest a{"m", {{"user", "hi"}}, 1.0, 3};
  ChatRequest b = a;
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_EQ(a.digest().size(), 64u);
  b.seed = 4;
  EXPECT_NE(a.digest(), b.digest());
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Chat, RecordThenReplay) {
  TempDir dir;
  fs::create_directories(dir.path());
  const auto file = dir.path() / "fixtures.jsonl";
  int n = 0;
  testing::FunctionClient live([&](const ChatRequest&) { return "answer " + std::to_string(n++); });
  RecordingClient rec(live, file);
  ChatRequest q1{"m", {{"user", "one"}}, 1.0, 1};
  ChatRequest q2{"m", {{"user", "two"}}, 1.0, 1};
  EXPECT_EQ(rec.complete(q1), "answer 0");
  EXPECT_EQ(rec.complete(q2), "answer 1");
  EXPECT_EQ(rec.complete(q1), "answer 2");

  ReplayClient replay(file);
  EXPECT_EQ(replay.complete(q1), "answer 0");
  EXPECT_EQ(replay.complete(q1), "answer 2");
  EXPECT_EQ(replay.complete(q2), "answer 1");
  EXPECT_EQ(code_of([&] { replay.complete(q1); }), ErrorCode::ClientError);
  EXPECT_EQ(replay.calls(), 4u);
}

TEST(Chat, ScriptedAndLiveConfig) {
  ScriptedClient s({"a", "b"});
  ChatRequest q{"m", {{"user", "x"}}, 1.0, std::nullopt};
  EXPECT_EQ(s.complete(q), "a");
  EXPECT_EQ(s.complete(q), "b");
  EXPECT_EQ(code_of([&] { s.complete(q); }), ErrorCode::ClientError);

  LiveClientConfig cfg;
  cfg.api_key_env = "RULESYNTH_TEST_UNSET_KEY";
  ::unsetenv("RULESYNTH_TEST_UNSET_KEY");
  EXPECT_EQ(code_of([&] { LiveClient c(cfg); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_backend("carrier-pigeon"); }), ErrorCode::ConfigError);
}

TEST(Prompts, RenderAndExtract) {
  EXPECT_EQ(render_template("a {{x}} b", {{"x", "1"}}), "a 1 b");
  EXPECT_EQ(code_of([] { render_template("{{nope}}", {}); }), ErrorCode::ConfigError);
  EXPECT_EQ(extract_code_block("text\n```python\nx = 1\n```\nmore").value(), "x = 1\n");
  EXPECT_EQ(extract_code_block("```\ny = 2```").value(), "y = 2\n");
  EXPECT_FALSE(extract_code_block("no code here"));
  EXPECT_FALSE(extract_code_block("```python\n\n```"));
  EXPECT_TRUE(parse_use_case("```json\n" + use_case_json(1) + "\n```"));
  EXPECT_FALSE(parse_use_case("{\"title\": \"t\"}"));
  EXPECT_FALSE(parse_use_case("garbage"));
}

TEST(Prompts, ImplementationPromptCarriesConstraints) {
  std::string seen;
  testing::FunctionClient c([&](const ChatRequest& r) {
    seen = r.messages.back().content;
    return "```python\nx = 1\n```";
  });
  DistillConfig cfg;
  cfg.implementations = 1;
  UseCase uc{"uc_000", "Title", "Desc"};
  generate_implementations(uc, testing::mini_pair(), c, cfg);
  EXPECT_NE(seen.find("top-level functions"), std::string::npos);
  EXPECT_NE(seen.find("__main__"), std::string::npos);
  EXPECT_NE(seen.find("other than `json`"), std::string::npos);
}

TEST(SampleIndices, DistinctDeterministicAndRoughlyUniform) {
  std::mt19937_64 a(1);
  std::mt19937_64 b(1);
  std::vector<int> hits(10, 0);
  for (int i = 0; i < 3000; ++i) {
    auto s = sample_indices(a, 10, 3);
    EXPECT_EQ(s, sample_indices(b, 10, 3));
    std::set<std::size_t> uniq(s.begin(), s.end());
    EXPECT_EQ(uniq.size(), 3u);
    for (auto k : s) hits[k]++;
  }
  for (int h : hits) EXPECT_NEAR(h, 900, 150);
  EXPECT_EQ(sample_indices(a, 2, 3).size(), 2u);
}

TEST(GenerateUseCases, HundredFromScript) {
  std::vector<std::string> script;
  for (int i = 0; i < 100; ++i) script.push_back(use_case_json(i));
  ScriptedClient client(script);
  DistillConfig cfg;
  auto ucs = generate_use_cases(testing::mini_pair(), client, cfg);
  ASSERT_EQ(ucs.size(), 100u);
  EXPECT_EQ(ucs[0].id, "uc_000");
  EXPECT_EQ(ucs[99].title, "Use case 99");
  EXPECT_EQ(client.calls(), 100u);
}

TEST(GenerateUseCases, SingleSeedNeverLoops) {
  std::vector<std::string> tasks;
  testing::FunctionClient client([&](const ChatRequest& r) {
    tasks.push_back(testing::prompt_task(r));
    return use_case_json(0);
  });
  DistillConfig cfg;
  cfg.use_cases = 1;
  cfg.seed_use_cases = 1;
  EXPECT_EQ(generate_use_cases(testing::mini_pair(), client, cfg).size(), 1u);
  EXPECT_EQ(tasks, std::vector<std::string>{"use-case-seed"});
}

TEST(GenerateUseCases, GarbageSlotIsRetried) {
  ScriptedClient client({use_case_json(0), "not json at all", use_case_json(1), use_case_json(2)});
  DistillConfig cfg;
  cfg.use_cases = 3;
  cfg.seed_use_cases = 1;
  auto ucs = generate_use_cases(testing::mini_pair(), client, cfg);
  ASSERT_EQ(ucs.size(), 3u);
  EXPECT_EQ(ucs[1].title, "Use case 1");
  EXPECT_EQ(client.calls(), 4u);
}

TEST(GenerateUseCases, FewShotPromptsShowPriorUseCases) {
  std::vector<std::string> prompts;
  int i = 0;
  testing::FunctionClient client([&](const ChatRequest& r) {
    prompts.push_back(r.messages.back().content);
    return use_case_json(i++);
  });
  DistillConfig cfg;
  cfg.use_cases = 6;
  cfg.seed_use_cases = 2;
  cfg.few_shot = 3;
  generate_use_cases(testing::mini_pair(), client, cfg);
  ASSERT_EQ(prompts.size(), 6u);
  EXPECT_NE(prompts[1].find("- Use case 0"), std::string::npos);
  // Slot 2 has only two priors to draw from.
  const auto& p2 = prompts[2];
  EXPECT_NE(p2.find("Title: Use case 0"), std::string::npos);
  EXPECT_NE(p2.find("Title: Use case 1"), std::string::npos);
  int shown = 0;
  for (std::size_t at = prompts[5].find("Title: "); at != std::string::npos;
       at = prompts[5].find("Title: ", at + 1)) {
    ++shown;
  }
  EXPECT_EQ(shown, 3);
}

TEST(GenerateUseCases, RetryBudgetExhausted) {
  testing::FunctionClient client([](const ChatRequest&) { return std::string("garbage"); });
  DistillConfig cfg;
  cfg.use_cases = 2;
  cfg.retry_budget = 4;
  EXPECT_EQ(code_of([&] { generate_use_cases(testing::mini_pair(), client, cfg); }),
            ErrorCode::RetryBudgetExhausted);
  EXPECT_EQ(client.calls(), 5u);
}

TEST(GenerateCode, SamplesDiscardsAndKeepsIds) {
  UseCase uc{"uc_000", "T", "D"};
  Artifact impl{"impl_000", "import json\n"};
  DistillConfig cfg;
  ScriptedClient five({"```python\na\n```", "```python\nb\n```", "```python\nc\n```",
                       "```python\nd\n```", "```python\ne\n```"});
  EXPECT_EQ(generate_implementations(uc, testing::mini_pair(), five, cfg).size(), 5u);

  ScriptedClient mixed({"```python\na\n```", "prose only", "```python\n```", "```python\nd\n```",
                        "```python\ne\n```"});
  auto tests = generate_tests(uc, impl, mixed, cfg);
  ASSERT_EQ(tests.size(), 3u);
  EXPECT_EQ(tests[1].id, "test_003");
  EXPECT_EQ(mixed.calls(), 5u);

  cfg.migrations = 1;
  ScriptedClient same({"```python\nimport json\n```"});
  auto migs = generate_migrations(uc, impl, testing::mini_pair(), same, cfg);
  ASSERT_EQ(migs.size(), 1u);
  EXPECT_EQ(migs[0].text, impl.text);
}

// Builds a use case whose implementation and migrations carry fake-runner
// coverage directives.
RawUseCase synthetic(double source_cov, std::vector<std::pair<double, bool>> migrations,
                     int tests = 1) {
  RawUseCase r;
  r.use_case = {"uc_000", "T", "D"};
  r.implementations.push_back(
      {"impl_000", "# fake-runner: coverage=" + std::to_string(source_cov) + "\n"});
  for (int t = 0; t < tests; ++t) {
    r.tests["impl_000"].push_back({"test_00" + std::to_string(t), "def test_ok():\n    pass\n"});
  }
  int i = 0;
  for (auto [cov, pass] : migrations) {
    r.migrations["impl_000"].push_back(
        {"mig_00" + std::to_string(i++),
         "# fake-runner: coverage=" + std::to_string(cov) + (pass ? "" : " fail") + "\n"});
  }
  return r;
}

TEST(ValidateAndSelect, CoverageThresholdBoundary) {
  DistillConfig cfg;
  auto sandbox = testing::fake_runner_config();
  struct Case {
    double src, mig;
    bool kept;
  };
  for (auto c : {Case{0.59, 0.9, false}, Case{0.9, 0.59, false}, Case{0.60, 0.60, true},
                 Case{0.61, 0.70, true}, Case{0.70, 0.70, true}}) {
    auto res = validate_and_select({synthetic(c.src, {{c.mig, true}})}, sandbox, cfg);
    ASSERT_EQ(res.triples.size(), 1u);
    EXPECT_EQ(res.selected().size(), c.kept ? 1u : 0u) << c.src << " " << c.mig;
    EXPECT_EQ(res.triples[0].status, c.kept ? TripleStatus::Selected : TripleStatus::ImplValid);
  }
}

TEST(ValidateAndSelect, FailingStagesDrop) {
  DistillConfig cfg;
  auto sandbox = testing::fake_runner_config();
  auto r = synthetic(0.9, {{0.9, false}});
  auto res = validate_and_select({r}, sandbox, cfg);
  EXPECT_TRUE(res.selected().empty());
  EXPECT_EQ(res.triples[0].status, TripleStatus::ImplValid);

  r = synthetic(0.9, {{0.9, true}});
  r.tests["impl_000"][0].text = "# fake-runner: fail\n";
  res = validate_and_select({r}, sandbox, cfg);
  EXPECT_TRUE(res.triples.empty());
  ASSERT_EQ(res.pairs.size(), 1u);
  EXPECT_FALSE(res.pairs[0].passed);
}

TEST(ValidateAndSelect, BestTriplePerImplementation) {
  DistillConfig cfg;
  auto sandbox = testing::fake_runner_config();
  auto res = validate_and_select({synthetic(0.7, {{0.8, true}, {0.9, true}, {0.85, true}}, 2)},
                                 sandbox, cfg, 4);
  auto sel = res.selected();
  ASSERT_EQ(sel.size(), 1u);
  EXPECT_EQ(sel[0].migration_id, "mig_001");
  EXPECT_EQ(sel[0].test_id, "test_000");  // tie on coverage broken by test id
  EXPECT_DOUBLE_EQ(*sel[0].migration_coverage, 0.9);
  std::size_t valid = 0;
  for (const auto& t : res.triples) valid += t.status >= TripleStatus::Valid ? 1 : 0;
  EXPECT_EQ(valid, 6u);
}

TEST(ValidateAndSelect, EmptyInput) {
  EXPECT_TRUE(validate_and_select({}, testing::fake_runner_config(), DistillConfig{}).triples.empty());
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(RunDistill, MiniReplayIsDeterministic) {
  const auto fixtures = testing::fixture_path("distill_mini/fixtures.jsonl");
  TempDir a;
  TempDir b;
  ReplayClient c1(fixtures);
  auto s1 = run_distill(testing::mini_pair(), c1, testing::mini_config(),
                        testing::fake_runner_config(), a.path(), 4);
  ReplayClient c2(fixtures);
  auto s2 = run_distill(testing::mini_pair(), c2, testing::mini_config(),
                        testing::fake_runner_config(), b.path(), 1);
  const auto m1 = read_all(a.path() / "manifest.jsonl");
  EXPECT_FALSE(m1.empty());
  EXPECT_EQ(m1, read_all(b.path() / "manifest.jsonl"));
  EXPECT_EQ(s1.selected, s2.selected);

  const auto cfg = testing::mini_config();
  EXPECT_LE(c1.calls(), cfg.use_cases * (1 + cfg.implementations +
                                         cfg.implementations * cfg.tests +
                                         cfg.implementations * cfg.migrations) +
                            cfg.retry_budget);
  EXPECT_EQ(s1.use_cases, 3u);
  EXPECT_EQ(s1.implementations, 6u);
  // Pinned from the authored fixture.
  EXPECT_EQ(s1.tests, 10u);
  EXPECT_EQ(s1.selected, 3u);
  EXPECT_EQ(s1.valid_triples, 8u);

  // Selected triples are complete triple directories.
  std::size_t dirs = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (e.path().filename() == "triple.json") {
      ++dirs;
      EXPECT_TRUE(fs::exists(e.path().parent_path() / "source.py"));
      EXPECT_TRUE(fs::exists(e.path().parent_path() / "migration.py"));
      EXPECT_TRUE(fs::exists(e.path().parent_path() / "test.py"));
    }
  }
  EXPECT_EQ(dirs, s1.selected);
}

TEST(RunDistill, RefusesForeignDirectory) {
  TempDir d;
  fs::create_directories(d.path());
  std::ofstream(d.path() / "precious.txt") << "x";
  ReplayClient c(testing::fixture_path("distill_mini/fixtures.jsonl"));
  EXPECT_EQ(code_of([&] {
              run_distill(testing::mini_pair(), c, testing::mini_config(),
                          testing::fake_runner_config(), d.path());
            }),
            ErrorCode::ConfigError);
  EXPECT_TRUE(fs::exists(d.path() / "precious.txt"));
}

TEST(DistillConfigJson, Validation) {
  auto c = DistillConfig::from_json({{"use_cases", 3}});
  EXPECT_EQ(c.use_cases, 3u);
  EXPECT_EQ(c.implementations, 5u);
  EXPECT_DOUBLE_EQ(c.coverage_threshold, 0.60);
  EXPECT_EQ(code_of([] { DistillConfig::from_json({{"tests", 0}}); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { DistillConfig::from_json({{"coverage_threshold", 1.5}}); }),
            ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { DistillConfig::from_json({{"mystery", 1}}); }), ErrorCode::ConfigError);
}

}  // namespace
}  // namespace rulesynth
