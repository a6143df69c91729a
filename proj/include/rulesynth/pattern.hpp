#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rulesynth/tokentree.hpp"

namespace rulesynth {

enum class HoleMode {
  Optional,  ///< `:[x]`, may bind empty text
  Plus,      ///< `:[x+]`, binds at least one non-space token
};

struct Literal {
  std::string text;
  friend bool operator==(const Literal&, const Literal&) = default;
};

struct Hole {
  std::string name;
  HoleMode mode = HoleMode::Optional;
  friend bool operator==(const Hole&, const Hole&) = default;
};

using Segment = std::variant<Literal, Hole>;

/// Concrete-syntax pattern: literal text interleaved with named holes.
class Pattern {
public:
  Pattern() = default;
  explicit Pattern(std::vector<Segment> segments) : segments_(std::move(segments)) {}

  [[nodiscard]] const std::vector<Segment>& segments() const { return segments_; }
  [[nodiscard]] bool empty() const { return segments_.empty(); }

  /// Hole names in order of first appearance.
  [[nodiscard]] std::vector<std::string> hole_names() const;
  [[nodiscard]] bool has_hole(std::string_view name) const;
  [[nodiscard]] std::size_t hole_count() const { return hole_names().size(); }

  /// Inverse of parse: `:[name]` / `:[name+]` for holes, literals verbatim.
  [[nodiscard]] std::string to_string() const;

  friend bool operator==(const Pattern&, const Pattern&) = default;

private:
  std::vector<Segment> segments_;
};

struct BoundText {
  std::string text;
  Span span;
  friend bool operator==(const BoundText&, const BoundText&) = default;
};

using Bindings = std::map<std::string, BoundText>;

struct Match {
  Span site;
  Bindings bindings;
};

/// Parses a match pattern. Throws MalformedHole, EmptyPattern (no
/// non-space text) or AllHolesPattern.
Pattern parse_pattern(std::string_view text);

/// Parses a replacement pattern; unlike match patterns it may be empty or
/// consist solely of holes. Throws MalformedHole.
Pattern parse_replacement(std::string_view text);

/// Replaces every hole named in `bindings` by a literal holding the bound
/// text; other holes stay. Adjacent literals are merged.
Pattern bind_holes(const Pattern& pattern, const Bindings& bindings);

/// All non-overlapping matches, leftmost first, restricted to tokens lying
/// entirely inside `region` (whole tree when absent).
std::vector<Match> find_matches(const Pattern& pattern, const TokenTree& tree,
                                std::optional<Span> region = std::nullopt);

/// Leftmost match whose site starts at or after byte `from` and ends
/// inside `region`.
std::optional<Match> find_first_match(const Pattern& pattern, const TokenTree& tree,
                                      std::size_t from, Span region);

/// Literals verbatim, holes replaced by bound text. Unbound optional holes
/// become empty; an unbound plus hole throws Error(UnboundHole).
std::string substitute(const Pattern& pattern, const Bindings& bindings);

/// Like substitute, but every newline inside a literal segment is followed
/// by `indent` (blank lines stay blank), re-indenting multi-line
/// replacements to the site's line.
std::string substitute_indented(const Pattern& pattern, const Bindings& bindings,
                                std::string_view indent);

/// Leading whitespace of the line containing byte `offset`.
std::string line_indent(std::string_view source, std::size_t offset);

struct RewriteResult {
  std::string text;
  std::size_t count = 0;
  std::vector<Span> sites;  ///< replaced ranges in the output text
};

/// Single left-to-right pass replacing every match of `match` inside
/// `region` (whole source when absent).
RewriteResult apply_rewrite(const Pattern& match, const Pattern& replace, std::string_view source,
                            const LanguageProfile& profile,
                            std::optional<Span> region = std::nullopt);

}  // namespace rulesynth
