#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulesynth/chat.hpp"
#include "rulesynth/sandbox.hpp"

namespace rulesynth {

struct LibraryPair {
  std::string source;
  std::string target;
  std::set<std::string> source_markers;
  std::set<std::string> target_markers;

  static LibraryPair from_json(const nlohmann::json& doc);
  [[nodiscard]] nlohmann::json to_json() const;
};

struct UseCase {
  std::string id;
  std::string title;
  std::string description;
};

struct DistillConfig {
  std::size_t use_cases = 100;        ///< N
  std::size_t seed_use_cases = 5;     ///< p_seed
  std::size_t few_shot = 3;           ///< k
  std::size_t implementations = 5;    ///< n
  std::size_t tests = 5;              ///< p
  std::size_t migrations = 5;         ///< q
  double coverage_threshold = 0.60;
  std::size_t retry_budget = 20;      ///< extra use-case attempts over the whole run
  std::string model = "gpt-4o-mini";
  double temperature = 1.0;
  std::uint64_t seed = 0;

  /// Keys absent from `doc` keep the value from `base`.
  static DistillConfig from_json(const nlohmann::json& doc, DistillConfig base);
  static DistillConfig from_json(const nlohmann::json& doc);
  [[nodiscard]] nlohmann::json to_json() const;
  /// Throws Error(ConfigError) unless all counts are >= 1 and the threshold is in (0, 1].
  void validate() const;
};

enum class TripleStatus { Raw, ImplValid, Valid, Selected };
std::string_view to_string(TripleStatus status);

struct Artifact {
  std::string id;
  std::string text;
};

/// Everything sampled for one use case. Tests and migrations are keyed by
/// implementation id.
struct RawUseCase {
  UseCase use_case;
  std::vector<Artifact> implementations;
  std::map<std::string, std::vector<Artifact>> tests;
  std::map<std::string, std::vector<Artifact>> migrations;
};

struct MigrationTriple {
  std::string use_case_id;
  std::string impl_id;
  std::string test_id;
  std::string migration_id;
  std::string source;
  std::string tests;
  std::string migration;
  std::optional<double> source_coverage;
  std::optional<double> migration_coverage;
  TripleStatus status = TripleStatus::Raw;
};

/// Result of one implementation/test run (Stage A).
struct PairResult {
  std::string use_case_id;
  std::string impl_id;
  std::string test_id;
  bool passed = false;
  std::optional<double> coverage;
};

struct ValidationResult {
  std::vector<PairResult> pairs;
  std::vector<MigrationTriple> triples;  ///< every Stage B candidate with its final status
  [[nodiscard]] std::vector<MigrationTriple> selected() const;
};

/// Shared by the generators: model, sampling and a per-request seed.
class Sampler {
public:
  Sampler(ChatClient& client, const DistillConfig& cfg) : client_(client), cfg_(cfg) {}
  /// One completion; `key` feeds the request seed so samples differ.
  std::string ask(const std::string& prompt, const std::string& key);

private:
  ChatClient& client_;
  const DistillConfig& cfg_;
};

/// Fills {{name}} placeholders; throws Error(ConfigError) for unknown ones.
std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& vars);

/// First fenced code block (```python or bare ```); nothing when absent or blank.
std::optional<std::string> extract_code_block(std::string_view completion);

/// Parses {"title", "description"} from a completion (fenced or bare JSON).
std::optional<UseCase> parse_use_case(std::string_view completion);

/// Uniform k-subset (without replacement) of [0, n), in draw order.
std::vector<std::size_t> sample_indices(std::mt19937_64& rng, std::size_t n, std::size_t k);

std::vector<UseCase> generate_use_cases(const LibraryPair& pair, ChatClient& client,
                                        const DistillConfig& cfg);
std::vector<Artifact> generate_implementations(const UseCase& uc, const LibraryPair& pair,
                                               ChatClient& client, const DistillConfig& cfg);
std::vector<Artifact> generate_tests(const UseCase& uc, const Artifact& implementation,
                                     ChatClient& client, const DistillConfig& cfg);
std::vector<Artifact> generate_migrations(const UseCase& uc, const Artifact& implementation,
                                          const LibraryPair& pair, ChatClient& client,
                                          const DistillConfig& cfg);

/// Stages A-C plus best-triple selection.
ValidationResult validate_and_select(const std::vector<RawUseCase>& raw,
                                     const SandboxConfig& sandbox, const DistillConfig& cfg,
                                     std::size_t parallelism = 1);

struct DistillSummary {
  std::size_t use_cases = 0;
  std::size_t implementations = 0;
  std::size_t tests = 0;
  std::size_t migrations = 0;
  std::size_t impl_valid_pairs = 0;
  std::size_t valid_triples = 0;
  std::size_t use_cases_implemented = 0;  ///< with at least one passing implementation
  std::size_t use_cases_migrated = 0;     ///< with at least one valid triple
  std::size_t selected = 0;
};

/// Generation for every use case, validation, and the dataset on disk
/// (one directory per use case plus manifest.jsonl).
DistillSummary run_distill(const LibraryPair& pair, ChatClient& client, const DistillConfig& cfg,
                           const SandboxConfig& sandbox, const std::filesystem::path& out_dir,
                           std::size_t parallelism = 1);

}  // namespace rulesynth
