#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulesynth/pattern.hpp"
#include "rulesynth/profile.hpp"
#include "rulesynth/sandbox.hpp"

namespace rulesynth {

struct Rule {
  std::string name;
  Pattern match;
  std::optional<Pattern> replace;  ///< absent: anchor-only rule
  bool is_seed = false;
};

struct Edge {
  std::string from;
  ScopeLabel scope = ScopeLabel::File;
  std::string to;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// A migration program: rules plus scope-labelled edges. Draft graphs built
/// by the agent may lack a seed; validate(true) enforces the full invariants.
class RuleGraph {
public:
  /// Throws DuplicateRuleName.
  void add_rule(Rule rule);
  /// Replaces the rule with the same name, or appends it.
  void upsert_rule(Rule rule);
  bool remove_rule(std::string_view name);
  void add_edge(Edge edge);
  bool remove_edge(const Edge& edge);

  [[nodiscard]] const std::vector<Rule>& rules() const { return rules_; }
  [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }
  [[nodiscard]] const Rule* find(std::string_view name) const;
  [[nodiscard]] Rule* find(std::string_view name);
  [[nodiscard]] std::vector<const Edge*> outgoing(std::string_view name) const;
  [[nodiscard]] bool has_seed() const;

  /// Throws DanglingEdge, and NoSeedRule when `require_seed`.
  void validate(bool require_seed = true) const;

  /// Canonical JSON rendering (sorted keys, two-space indent, trailing LF).
  [[nodiscard]] std::string to_json_text() const;
  [[nodiscard]] nlohmann::json to_json() const;
  /// Sectioned-text rendering ([[rules]] / [[edges]] tables).
  [[nodiscard]] std::string to_sectioned_text() const;

private:
  std::vector<Rule> rules_;
  std::vector<Edge> edges_;
};

/// Parses a rule file in either rendering (JSON when the first significant
/// character is '{'). Throws ParseError, DuplicateRuleName, DanglingEdge,
/// NoSeedRule (when `require_seed`) and pattern errors.
RuleGraph load_graph(std::string_view document, bool require_seed = true);
RuleGraph graph_from_json(const nlohmann::json& doc, bool require_seed = true);

/// Single rule / edge records of the rule file. Throw ParseError and
/// pattern errors.
Rule rule_from_json(const nlohmann::json& record);
Edge edge_from_json(const nlohmann::json& record);
nlohmann::json rule_to_json(const Rule& rule);
nlohmann::json edge_to_json(const Edge& edge);

using FileMap = std::map<std::string, std::string>;

struct RewriteEntry {
  std::string rule;
  std::string file;
  Span site;         ///< replaced range in the file text right after the edit
  Span region;       ///< scope the rule was restricted to
  std::string replacement;
};

struct RewriteLog {
  std::vector<RewriteEntry> entries;
  std::size_t passes = 0;
  [[nodiscard]] std::size_t count() const { return entries.size(); }
};

struct ExecutionLimits {
  std::size_t max_rewrites = 10000;
  /// Bound on nested edge activations; guards cycles of anchor-only rules.
  std::size_t max_depth = 1000;
};

struct ExecutionResult {
  FileMap files;
  RewriteLog log;
};

/// Runs the graph to fixpoint: seed rules at Global scope, depth-first edge
/// activation at each match site, repeated until a pass rewrites nothing.
/// Throws Error(RewriteBudgetExceeded) past limits.max_rewrites.
ExecutionResult execute(const RuleGraph& graph, FileMap files, const LanguageProfile& profile,
                        const ExecutionLimits& limits = {});

/// Markers found at identifier boundaries outside strings and comments.
std::set<std::string> remaining_markers(const FileMap& files,
                                        const std::set<std::string>& markers,
                                        const LanguageProfile& profile);

bool check_success(const FileMap& migrated, const std::set<std::string>& markers,
                   const TestReport& outcome,
                   const LanguageProfile& profile = LanguageProfile::python());

}  // namespace rulesynth
