#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace rulesynth {

/// Where a triggered rule may match. Closed set; Global and File need no
/// language support, Class and Function are resolved by a profile's finders.
enum class ScopeLabel { Global, File, Class, Function };

std::string_view to_string(ScopeLabel label);
std::optional<ScopeLabel> parse_scope_label(std::string_view text);

/// Indentation-structured block finder: a block starts at a logical line
/// whose first significant tokens are `[prefix] keyword <identifier>` and
/// extends over following lines that are blank or indented strictly deeper.
struct ScopeFinder {
  std::vector<std::string> keywords;
  std::vector<std::string> prefixes;
};

struct LanguageProfile {
  std::string name;
  /// Opening delimiters, matched longest first. Each closes with itself.
  std::vector<std::string> string_delimiters;
  /// Identifier runs allowed immediately before a string delimiter (r"", b'').
  std::vector<std::string> string_prefixes;
  std::string line_comment;
  std::optional<std::pair<std::string, std::string>> block_comment;
  std::set<std::string> keywords;
  /// Multi-character operators, matched longest first.
  std::vector<std::string> operators;
  std::vector<std::string> file_extensions;
  std::map<ScopeLabel, ScopeFinder> scope_finders;
  /// Columns per tab when comparing indentation.
  int tab_width = 8;

  [[nodiscard]] bool is_keyword(std::string_view word) const {
    return keywords.count(std::string(word)) != 0;
  }

  /// Built-in reference profile for Python sources.
  static const LanguageProfile& python();

  /// Throws Error(ConfigError) when the document violates the profile
  /// invariants (empty keywords, missing Class/Function finders).
  static LanguageProfile from_json(const nlohmann::json& doc);
  [[nodiscard]] nlohmann::json to_json() const;

  void validate() const;
};

}  // namespace rulesynth
