#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "rulesynth/chat.hpp"
#include "rulesynth/distill.hpp"
#include "rulesynth/rulegraph.hpp"
#include "rulesynth/sandbox.hpp"

namespace rulesynth {

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitExhausted = 2, kExitEmpty = 3 };

/// Shared settings for every command, read from one JSON file. Relative
/// paths are resolved against the file's directory.
struct RunConfig {
  std::optional<LibraryPair> pair;
  DistillConfig distill;
  SandboxConfig sandbox;
  Backend backend = Backend::Live;
  std::filesystem::path fixtures;
  LiveClientConfig live;
  std::filesystem::path dataset_dir = "dataset";
  std::filesystem::path scripts_dir = "scripts";
  std::filesystem::path transcripts_dir = "transcripts";
  std::optional<std::uint64_t> seed;
  ExecutionLimits limits;
  std::size_t iteration_cap = 10;
  std::size_t parallelism = 4;
  std::string agent_model = "gpt-4.1";
  double agent_temperature = 0.0;

  /// Throws ConfigError on unknown keys or ill-typed values.
  static RunConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& file);
};

/// Entry point of the `rulesynth` executable. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rulesynth
