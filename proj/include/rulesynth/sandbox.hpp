#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace rulesynth {

/// Outcome of one test-file run. `passed` holds exactly when exit_code == 0.
struct TestReport {
  bool passed = false;
  int exit_code = -1;
  std::string output;
  std::optional<double> coverage;
  std::chrono::milliseconds wall_time{0};
  bool timed_out = false;
  /// Set when the run could not be performed or the coverage artifact was
  /// unreadable; the report itself stays usable.
  std::optional<std::string> error;
};

inline constexpr std::string_view kTimeoutMarker = "[sandbox] timed out";

struct SandboxConfig {
  /// Shell command run inside the work directory. Placeholders: {impl},
  /// {tests}, {module}, {coverage}, {workdir}.
  std::string runner =
      "python3 -m pytest -q -p no:cacheprovider {tests} --cov={module} "
      "--cov-report=json:{coverage}";
  /// Optional wrapper with a {command} placeholder receiving the
  /// shell-quoted runner command, e.g. "docker run --rm -v {workdir}:/w -w /w img sh -c {command}".
  std::optional<std::string> container;
  double timeout_seconds = 60.0;
  std::string coverage_file = "coverage.json";
  std::size_t output_limit = 16 * 1024;
  std::string implementation_file = "solution.py";
  std::string test_file = "test_solution.py";
  std::vector<std::string> env_allowlist = {"PATH", "HOME", "LANG", "LC_ALL", "PYTHONPATH",
                                            "VIRTUAL_ENV", "TMPDIR"};
  /// Parent directory for per-run work directories (system temp when empty).
  std::filesystem::path temp_root;
  bool keep_workdirs = false;

  static SandboxConfig from_json(const nlohmann::json& doc);
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Materializes the implementation and test file in a fresh directory, runs
/// the configured runner with a timeout and reads line coverage for the
/// implementation file. Throws Error(RunnerNotFound) when the runner command
/// cannot be executed.
TestReport run_tests(const std::string& implementation, const std::string& tests,
                     const SandboxConfig& config);

struct TestJob {
  std::string implementation;
  std::string tests;
};

/// Order-preserving batch over a bounded pool of `parallelism` workers.
/// Per-item failures land in that report's `error`; other items are unaffected.
std::vector<TestReport> run_tests_batch(const std::vector<TestJob>& jobs,
                                        const SandboxConfig& config, std::size_t parallelism);

/// Line-coverage fraction for `file_name` in a coverage.py JSON report.
std::optional<double> parse_coverage_report(const nlohmann::json& report,
                                            const std::string& file_name);

}  // namespace rulesynth
