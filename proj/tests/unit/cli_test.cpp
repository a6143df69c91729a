#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "../support/function_client.hpp"
#include "../support/sandbox_support.hpp"
#include "rulesynth/cli.hpp"
#include "rulesynth/error.hpp"

namespace rulesynth {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::fixture_path;
using testing::read_fixture;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "rulesynth");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class Scratch {
public:
  Scratch() {
    path_ = fs::temp_directory_path() /
            ("rulesynth-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~Scratch() { fs::remove_all(path_); }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }
  const fs::path& path() const { return path_; }

private:
  static inline int counter_ = 0;
  fs::path path_;
};

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json mini_config_doc() {
  auto d = testing::mini_config().to_json();
  return {{"pair", testing::mini_pair().to_json()},
          {"distill", d},
          {"sandbox", testing::fake_runner_config().to_json()},
          {"backend", "replay"},
          {"fixtures", fixture_path("distill_mini").string()},
          {"seed", 7}};
}

fs::path write_config(const Scratch& s, const json& doc) {
  auto p = s / "config.json";
  write(p, doc.dump(2));
  return p;
}

TEST(CliConfig, RejectsUnknownKeys) {
  EXPECT_THROW(RunConfig::from_json({{"sed", 1}}, "/"), Error);
  EXPECT_THROW(RunConfig::from_json({{"limits", {{"max_rewrite", 3}}}}, "/"), Error);
}

TEST(CliConfig, ResolvesRelativePaths) {
  auto c = RunConfig::from_json({{"fixtures", "fx"}, {"paths", {{"scripts", "out/s"}}}}, "/base");
  EXPECT_EQ(c.fixtures, fs::path("/base/fx"));
  EXPECT_EQ(c.scripts_dir, fs::path("/base/out/s"));
  EXPECT_EQ(c.iteration_cap, 10u);
  EXPECT_EQ(c.distill.use_cases, 100u);
}

TEST(CliDistill, MiniReplayRunPrintsCounts) {
  Scratch s;
  auto cfg = write_config(s, mini_config_doc());
  auto r = run({"distill", "--config", cfg.string(), "--out", (s / "a").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("use cases: 3\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("selected: 3\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("valid triples: 8\n"), std::string::npos) << r.out;

  auto again = run({"distill", "--config", cfg.string(), "--out", (s / "b").string(), "--parallelism", "1"});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(s / "a/manifest.jsonl"), slurp(s / "b/manifest.jsonl"));
}

TEST(CliDistill, EmptySelectionIsAWarning) {
  Scratch s;
  auto doc = mini_config_doc();
  doc["distill"]["coverage_threshold"] = 1.0;
  auto cfg = write_config(s, doc);
  auto r = run({"distill", "--config", cfg.string(), "--out", (s / "a").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("selected: 0\n"), std::string::npos) << r.out;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  auto strict = run({"distill", "--config", cfg.string(), "--out", (s / "b").string(), "--fail-on-empty"});
  EXPECT_EQ(strict.code, 3);
}

TEST(CliDistill, MissingApiKeyFails) {
  Scratch s;
  auto doc = mini_config_doc();
  doc["backend"] = "live";
  doc["live"] = {{"api_key_env", "RULESYNTH_TEST_SURELY_UNSET_KEY"}};
  auto cfg = write_config(s, doc);
  auto r = run({"distill", "--config", cfg.string(), "--out", (s / "a").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("RULESYNTH_TEST_SURELY_UNSET_KEY"), std::string::npos) << r.err;
}

TEST(CliDistill, SeedIsMandatory) {
  Scratch s;
  auto doc = mini_config_doc();
  doc.erase("seed");
  auto cfg = write_config(s, doc);
  auto r = run({"distill", "--config", cfg.string(), "--out", (s / "a").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("seed"), std::string::npos);
}

void make_pair_dir(const fs::path& dir, const std::string& source, const std::string& migration) {
  write(dir / "source.py", source);
  write(dir / "migration.py", migration);
}

TEST(CliInfer, Fig1GivesThreeSeedRules) {
  Scratch s;
  make_pair_dir(s / "t", read_fixture("fig1/source.py"), read_fixture("fig1/migrated.py"));
  auto r = run({"infer", (s / "t").string(), "--out", (s / "r0.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto g = load_graph(slurp(s / "r0.json"));
  EXPECT_GE(g.rules().size(), 3u);
  for (const auto& rule : g.rules()) EXPECT_TRUE(rule.is_seed);
}

TEST(CliInfer, IdenticalAndAddOnlyPairsAreEmpty) {
  Scratch s;
  const std::string src = "import os\n\n\ndef f():\n    return os.getcwd()\n";
  make_pair_dir(s / "same", src, src);
  make_pair_dir(s / "add", src, src + "\n\ndef g():\n    return 1\n");
  for (auto name : {"same", "add"}) {
    auto r = run({"infer", (s / name).string(), "--out", (s / (std::string(name) + ".json")).string()});
    EXPECT_EQ(r.code, 0) << name;
    EXPECT_TRUE(load_graph(slurp(s / (std::string(name) + ".json")), false).rules().empty()) << name;
    EXPECT_EQ(run({"infer", (s / name).string(), "--fail-on-empty"}).code, 3) << name;
  }
}

class CliSandbox : public ::testing::Test {
protected:
  void SetUp() override {
    if (!testing::have_pytest()) GTEST_SKIP() << "pytest not available";
  }
};

json pytest_config_doc() {
  return {{"sandbox", testing::pytest_config().to_json()}};
}

TEST_F(CliSandbox, SynthesizeScriptedSuccess) {
  Scratch s;
  auto cfg = write_config(s, pytest_config_doc());
  auto r = run({"synthesize", fixture_path("agent_logging").string(), "--config", cfg.string(),
                "--backend", "scripted", "--fixtures", fixture_path("agent_logging").string(),
                "--seed", "3", "--out", (s / "out").string()});
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("outcome: success"), std::string::npos);
  auto g = load_graph(slurp(s / "out/script.json"));
  EXPECT_EQ(g.rules().size(), 3u);
  EXPECT_FALSE(slurp(s / "out/transcript.jsonl").empty());
}

TEST_F(CliSandbox, SynthesizeExhaustedExitsTwo) {
  Scratch s;
  write(s / "fx/script.jsonl", read_fixture("agent_logging/never_test.jsonl"));
  auto cfg = write_config(s, pytest_config_doc());
  auto r = run({"synthesize", fixture_path("agent_logging").string(), "--config", cfg.string(),
                "--backend", "scripted", "--fixtures", (s / "fx").string(), "--seed", "3", "--out",
                (s / "out").string()});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.out.find("iterations: 10\n"), std::string::npos);
}

TEST_F(CliSandbox, SynthesizeMalformedR0) {
  Scratch s;
  write(s / "r0.json", "{\"rules\": [{\"name\": \"x\", \"match\": \"f(:[a\"}]}");
  auto r = run({"synthesize", fixture_path("agent_logging").string(), "--r0", (s / "r0.json").string(),
                "--backend", "scripted", "--fixtures", fixture_path("agent_logging").string(),
                "--seed", "3", "--out", (s / "out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(CliApply, Fig1ScriptRewritesFile) {
  Scratch s;
  auto r = run({"apply", fixture_path("fig1/graph.toml").string(), fixture_path("fig1/source.py").string(),
                "--out", (s / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rewrites: 3\n"), std::string::npos) << r.out;
  EXPECT_EQ(slurp(s / "out/source.py"), read_fixture("fig1/migrated.py"));
}

TEST(CliApply, NoMatchAndBudget) {
  Scratch s;
  write(s / "none.json", R"J({"rules": [{"name": "a", "match": "Blowfish()", "replace": "x", "seed": true}], "edges": []})J");
  auto r = run({"apply", (s / "none.json").string(), fixture_path("fig1").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rewrites: 0\n"), std::string::npos) << r.out;

  write(s / "cycle.json", R"J({"rules": [{"name": "a", "match": "cipher", "replace": "(cipher)", "seed": true}], "edges": []})J");
  auto b = run({"apply", (s / "cycle.json").string(), fixture_path("fig1/source.py").string(),
                "--max-rewrites", "100"});
  EXPECT_EQ(b.code, 1);
  EXPECT_NE(b.err.find("RewriteBudgetExceeded"), std::string::npos) << b.err;
}

TEST(CliApply, DoesNotTouchInputWithoutInPlace) {
  Scratch s;
  write(s / "src/a.py", read_fixture("fig1/source.py"));
  EXPECT_EQ(run({"apply", fixture_path("fig1/graph.toml").string(), (s / "src").string()}).code, 0);
  EXPECT_EQ(slurp(s / "src/a.py"), read_fixture("fig1/source.py"));
  EXPECT_EQ(run({"apply", fixture_path("fig1/graph.toml").string(), (s / "src").string(), "--in-place"}).code, 0);
  EXPECT_EQ(slurp(s / "src/a.py"), read_fixture("fig1/migrated.py"));
}

TEST_F(CliSandbox, EvalSiblings) {
  Scratch s;
  auto cfg = write_config(s, pytest_config_doc());
  auto r = run({"eval-siblings", fixture_path("agent_logging/solution.json").string(),
                fixture_path("siblings_uc").string(), "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("impl_002: fail (markers remain: logging)"), std::string::npos) << r.out;
  EXPECT_TRUE(r.out.ends_with("2/3\n")) << r.out;

  fs::create_directories(s / "empty_uc");
  auto z = run({"eval-siblings", fixture_path("agent_logging/solution.json").string(),
                (s / "empty_uc").string(), "--config", cfg.string()});
  EXPECT_EQ(z.code, 0);
  EXPECT_EQ(z.out, "0/0\n");
}

TEST(CliUsage, BadArgumentsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"apply"}).code, 1);
  EXPECT_EQ(run({"distill", "--backend", "carrier-pigeon"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

}  // namespace
}  // namespace rulesynth
