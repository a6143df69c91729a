#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulesynth/chat.hpp"
#include "rulesynth/distill.hpp"
#include "rulesynth/error.hpp"
#include "rulesynth/inference.hpp"
#include "rulesynth/profile.hpp"
#include "rulesynth/rulegraph.hpp"
#include "rulesynth/sandbox.hpp"

namespace rulesynth {

/// A selected triple together with the library pair it migrates between.
struct SynthesisTask {
  std::string id;
  MigrationTriple triple;
  LibraryPair pair;
};

/// Reads a selected-triple directory (source.py, test.py, migration.py,
/// triple.json). Throws IoError / ParseError.
SynthesisTask load_task(const std::filesystem::path& dir);

enum class ActionKind { RefineRule, AddRules, ReviseGraph, TestMigration };

std::string_view to_string(ActionKind kind);
std::optional<ActionKind> parse_action_kind(std::string_view name);

struct AgentAction {
  ActionKind kind = ActionKind::TestMigration;
  nlohmann::json payload = nlohmann::json::object();

  [[nodiscard]] nlohmann::json to_json() const;
};

/// The action carried by a completion: exactly one fenced block holding
/// {"action", "payload"}. Other fenced blocks are ignored.
std::optional<AgentAction> parse_action(std::string_view completion);

enum class ObservationKind { RewriteResult, EngineError, NoChange, TestResult };

std::string_view to_string(ObservationKind kind);

struct Observation {
  ObservationKind kind = ObservationKind::NoChange;
  std::string payload;
  std::vector<std::string> hints;
  /// Set for test_result only.
  std::optional<bool> tests_passed;
  std::optional<bool> success;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Text sent back to the model.
  [[nodiscard]] std::string render() const;
};

struct HintContext {
  std::optional<ErrorCode> error;
  std::string message;
  std::string detail;
  std::optional<std::size_t> position;
  bool no_change = false;
  bool has_seed = true;
  /// Graph has Function or Class edges.
  bool scoped_edges = false;
  bool tests_failed = false;
  std::set<std::string> remaining_markers;
};

/// Deterministic lookup in the bundled hint catalog.
std::vector<std::string> render_hints(const HintContext& context);

struct AgentEnv {
  SandboxConfig sandbox;
  /// Tighter than the execute default so runaway drafts fail fast.
  ExecutionLimits limits{.max_rewrites = 1000};
  const LanguageProfile* profile = &LanguageProfile::python();
  std::string model = "gpt-4.1";
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;
  std::size_t cap = 10;
  /// Where the final graph is written for re-verification; a temporary file
  /// when unset.
  std::optional<std::filesystem::path> script_path;
};

/// Runs one action against `graph`. An isolated refine_rule is a single
/// rewrite pass of that rule alone. Engine errors become engine_error
/// observations; the graph is only changed when the action succeeds.
/// Sandbox failures (RunnerNotFound) propagate.
Observation execute_action(const AgentAction& action, RuleGraph& graph, const SynthesisTask& task,
                           const AgentEnv& env);

/// Line diff of `before` against `after` in unified-diff hunk notation
/// without context lines.
std::string unified_diff(std::string_view before, std::string_view after);

enum class Outcome { Success, Exhausted, Aborted };

std::string_view to_string(Outcome outcome);

struct AgentIteration {
  std::size_t index = 0;
  std::string prompt_digest;
  std::string completion;
  AgentAction action;
  Observation observation;
  nlohmann::json graph;
};

struct AgentTranscript {
  std::string triple_id;
  std::vector<AgentIteration> iterations;
  nlohmann::json final_graph;
  Outcome outcome = Outcome::Exhausted;
  std::string reason;

  [[nodiscard]] std::size_t iteration_count() const { return iterations.size(); }
  /// One record per iteration followed by a result record.
  [[nodiscard]] std::string to_jsonl() const;
};

struct SynthesisResult {
  RuleGraph graph;
  AgentTranscript transcript;
};

std::string system_prompt();
std::string task_prompt(const SynthesisTask& task, const RuleGraph& initial);

/// Conversation loop starting from the graph of `r0`. Client and protocol
/// failures end the run as aborted. Throws ConfigError when the triple is not
/// selected or cap is zero.
SynthesisResult synthesize(const SynthesisTask& task, const std::vector<AtomicRule>& r0,
                           ChatClient& client, const AgentEnv& env);
/// Same loop starting from an explicit (possibly seedless) draft graph.
SynthesisResult synthesize(const SynthesisTask& task, RuleGraph initial, ChatClient& client,
                           const AgentEnv& env);

/// Loads a rule file and checks it against the task: executes it on the
/// source, runs the tests and the marker check.
struct Verification {
  bool success = false;
  TestReport report;
  std::set<std::string> remaining_markers;
  std::string migrated;
};

Verification verify_script(const std::filesystem::path& script, const SynthesisTask& task,
                           const AgentEnv& env);

}  // namespace rulesynth
